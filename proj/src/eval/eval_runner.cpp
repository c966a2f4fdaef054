#include "eval/eval_runner.hpp"

#include "io/image_io.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <set>
#include <thread>

namespace rganet {
namespace eval {

namespace fs = std::filesystem;

namespace {

std::set<std::string> list_mask_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) names.insert(e.path().filename().string());
    return names;
}

ImageRow score_pair(const std::string& name, const SegMask& pred, const SegMask& gt,
                    const EvalOptions& opt, const metrics::MgridConfig& mcfg) {
    ImageRow row;
    row.name = name;
    const metrics::Confusion c = metrics::confusion(pred, gt, opt.positive_class);
    row.classic = metrics::classic_metrics(c);
    row.accuracy_fbeta = metrics::fbeta(c, opt.beta);
    row.mgrid = metrics::mgrid(pred, gt, opt.positive_class, mcfg);
    return row;
}

} // namespace

EvalReport evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir,
                         const EvalOptions& opt) {
    const metrics::MgridConfig mcfg =
        metrics::MgridConfig::make(opt.beta, opt.cell_h, opt.cell_w, opt.f_m, opt.c_m);
    const auto preds = list_mask_files(pred_dir);
    const auto gts = list_mask_files(gt_dir);

    EvalReport report;
    std::vector<std::string> matched;
    for (const auto& n : preds)
        (gts.count(n) ? matched : report.unmatched).push_back(n);
    for (const auto& n : gts)
        if (!preds.count(n)) report.unmatched.push_back(n);
    if (matched.empty()) throw IoError("no matching filenames between " + pred_dir + " and " + gt_dir);

    std::map<int, int> label_map;
    if (!opt.label_map.empty()) label_map = io::parse_label_map(opt.label_map);

    report.rows.resize(matched.size());
    const int workers = std::max(1, std::min<int>(opt.threads, int(matched.size())));
    auto work = [&](int w) {
        for (size_t i = size_t(w); i < matched.size(); i += size_t(workers)) {
            const SegMask pred =
                io::read_mask((fs::path(pred_dir) / matched[i]).string(), label_map);
            const SegMask gt = io::read_mask((fs::path(gt_dir) / matched[i]).string(), label_map);
            report.rows[i] = score_pair(matched[i], pred, gt, opt, mcfg);
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }

    ImageRow& mean = report.mean;
    mean.name = "mean";
    double mgrid_sum = 0;
    size_t mgrid_n = 0;
    for (const auto& r : report.rows) {
        mean.classic.accuracy += r.classic.accuracy;
        mean.classic.precision += r.classic.precision;
        mean.classic.recall += r.classic.recall;
        mean.classic.jaccard += r.classic.jaccard;
        mean.classic.dice += r.classic.dice;
        mean.classic.mcc += r.classic.mcc;
        mean.accuracy_fbeta += r.accuracy_fbeta;
        if (r.mgrid) {
            mgrid_sum += *r.mgrid;
            ++mgrid_n;
        } else if (opt.mgrid_empty_as_one) {
            mgrid_sum += 1.0;
            ++mgrid_n;
        }
    }
    const double n = double(report.rows.size());
    mean.classic.accuracy /= n;
    mean.classic.precision /= n;
    mean.classic.recall /= n;
    mean.classic.jaccard /= n;
    mean.classic.dice /= n;
    mean.classic.mcc /= n;
    mean.accuracy_fbeta /= n;
    if (mgrid_n > 0) mean.mgrid = mgrid_sum / double(mgrid_n);
    return report;
}

namespace {

void write_row(std::ostream& os, const ImageRow& r) {
    os << r.name << "," << r.classic.accuracy << "," << r.classic.precision << ","
       << r.classic.recall << "," << r.classic.jaccard << "," << r.classic.dice << ","
       << r.classic.mcc << "," << r.accuracy_fbeta << ",";
    if (r.mgrid)
        os << *r.mgrid;
    else
        os << "NA";
    os << "\n";
}

} // namespace

void write_csv(const EvalReport& report, std::ostream& os) {
    os << std::setprecision(12);
    os << "filename,accuracy,precision,recall,jaccard,dice,mcc,fbeta,mgrid\n";
    for (const auto& r : report.rows) write_row(os, r);
    write_row(os, report.mean);
}

void write_records(const EvalReport& report, std::ostream& os) {
    os << std::setprecision(12);
    auto one = [&os](const ImageRow& r) {
        os << "image=" << r.name << " accuracy=" << r.classic.accuracy
           << " precision=" << r.classic.precision << " recall=" << r.classic.recall
           << " jaccard=" << r.classic.jaccard << " dice=" << r.classic.dice
           << " mcc=" << r.classic.mcc << " fbeta=" << r.accuracy_fbeta << " mgrid=";
        if (r.mgrid)
            os << *r.mgrid;
        else
            os << "NA";
        os << "\n";
    };
    for (const auto& r : report.rows) one(r);
    one(report.mean);
}

void dump_regulator_curve(const metrics::MgridConfig& cfg, std::ostream& os) {
    os << std::setprecision(12);
    os << "f,gamma\n";
    for (int i = 0; i <= 1000; ++i) {
        const double f = i * 1e-3;
        os << f << "," << metrics::regulator(f, cfg) << "\n";
    }
}

} // namespace eval
} // namespace rganet
