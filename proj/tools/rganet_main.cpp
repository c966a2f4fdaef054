#include "CLI11.hpp"

#include "data/dataset.hpp"
#include "eval/eval_runner.hpp"
#include "io/image_io.hpp"
#include "rganet/profile.hpp"
#include "train/trainer.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

using namespace rganet;
namespace fs = std::filesystem;

namespace {

// exit codes: 0 ok, 1 usage, 2 data, 3 numerical
constexpr int kOk = 0, kUsage = 1, kData = 2, kNumeric = 3;

int default_threads() {
    int n = int(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("RGANET_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1 && cap < n) n = cap;
    }
    return n;
}

void parse_size(const std::string& s, Index& h, Index& w) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw CLI::ValidationError("size must look like 48x64");
    h = std::stoll(s.substr(0, x));
    w = std::stoll(s.substr(x + 1));
}

void parse_range(const std::string& s, double& lo, double& hi) {
    auto sep = s.find(':');
    if (sep == std::string::npos) sep = s.find("..");
    if (sep == std::string::npos) throw CLI::ValidationError("range must look like lo:hi");
    lo = std::stod(s.substr(0, sep));
    hi = std::stod(s.substr(s[sep] == ':' ? sep + 1 : sep + 2));
}

int cmd_train(const std::string& config_path) {
    io::TrainFileConfig cfg = io::parse_train_config(config_path);
    std::vector<data::SegSample> samples;
    if (cfg.use_synth) {
        samples = data::synth_dataset(cfg.synth, cfg.seed);
        std::cerr << "training on " << samples.size() << " synthetic images (" << cfg.synth.h
                  << "x" << cfg.synth.w << ")\n";
    } else {
        data::Dataset ds = data::load_dataset_dir(cfg.data_dir, cfg.label_map);
        samples = std::move(ds.samples);
        std::cerr << "training on " << samples.size() << " images from " << cfg.data_dir << "\n";
    }
    for (const auto& s : samples)
        check(s.image.shape().h == cfg.model.input_h && s.image.shape().w == cfg.model.input_w,
              "sample extents do not match model.input_h/input_w");

    train::TrainResult res = train::run_training(cfg, samples, &std::cerr);
    const auto cm = metrics::classic_metrics(train::dataset_confusion(res.model, samples, 2));
    std::cout << "final train loss " << res.curve.back().loss << ", train IoU(suction) "
              << cm.jaccard << "\n";
    std::cout << "checkpoint: " << cfg.out_checkpoint << "\nlog: " << cfg.out_log << "\n";
    return kOk;
}

int cmd_infer(const std::string& checkpoint, const std::string& image_path,
              const std::string& out_path, const std::string& probs_dir) {
    auto m = model::load_checkpoint<float>(checkpoint);
    io::ImageU8 raw = io::read_image(image_path);
    if (raw.h != m.cfg.input_h || raw.w != m.cfg.input_w)
        throw ShapeError("image is " + std::to_string(raw.h) + "x" + std::to_string(raw.w) +
                         " but the checkpoint expects " + std::to_string(m.cfg.input_h) + "x" +
                         std::to_string(m.cfg.input_w));
    Tensor<float> input = io::image_to_tensor(raw);
    Tensor<float> probs = model::forward(m, input, Mode::eval);
    io::write_mask(out_path, argmax_mask(probs, 0));
    if (!probs_dir.empty()) {
        fs::create_directories(probs_dir);
        for (Index c = 0; c < probs.shape().c; ++c) {
            io::ImageU8 img;
            img.h = probs.shape().h;
            img.w = probs.shape().w;
            img.channels = 1;
            img.data.resize(size_t(img.h * img.w));
            for (Index y = 0; y < img.h; ++y)
                for (Index x = 0; x < img.w; ++x)
                    img.data[size_t(y * img.w + x)] =
                        std::uint8_t(probs(0, c, y, x) * 255.0f + 0.5f);
            io::write_gray((fs::path(probs_dir) / ("class" + std::to_string(c) + ".png")).string(),
                           img);
        }
    }
    std::cout << "wrote " << out_path << "\n";
    return kOk;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const eval::EvalOptions& opt,
             const std::string& csv_path, const std::string& records_path,
             const std::string& regulator_path) {
    if (!regulator_path.empty()) {
        std::ofstream f(regulator_path);
        if (!f) throw IoError("cannot open for writing: " + regulator_path);
        eval::dump_regulator_curve(
            metrics::MgridConfig::make(opt.beta, opt.cell_h, opt.cell_w, opt.f_m, opt.c_m), f);
        std::cerr << "regulator curve: " << regulator_path << "\n";
    }
    eval::EvalReport report = eval::evaluate_dirs(pred_dir, gt_dir, opt);
    for (const auto& u : report.unmatched)
        std::cerr << "warning: " << u << " has no counterpart, skipped\n";
    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        if (!f) throw IoError("cannot open for writing: " + csv_path);
        eval::write_csv(report, f);
        std::cerr << "csv: " << csv_path << "\n";
    } else {
        eval::write_csv(report, std::cout);
    }
    if (!records_path.empty()) {
        std::ofstream f(records_path);
        if (!f) throw IoError("cannot open for writing: " + records_path);
        eval::write_records(report, f);
        std::cerr << "records: " << records_path << "\n";
    }
    return kOk;
}

int cmd_report(const std::string& checkpoint, const std::string& config_path, bool csv) {
    model::ModelConfig cfg;
    model::RganetModel<float> m;
    if (!checkpoint.empty()) {
        m = model::load_checkpoint<float>(checkpoint);
    } else {
        if (!config_path.empty()) cfg = io::model_config_from_kv(io::parse_kv_file(config_path));
        m = model::build_model<float>(cfg, 0);
    }
    auto prof = model::count_params_flops(m);
    if (csv) {
        std::cout << "module,params,flops\n";
        for (const auto& r : prof.rows)
            std::cout << r.name << "," << r.params << "," << r.flops << "\n";
        std::cout << "total," << prof.total_params << "," << prof.total_flops << "\n";
    } else {
        std::printf("%-16s %12s %16s\n", "module", "params", "flops");
        for (const auto& r : prof.rows)
            std::printf("%-16s %12ld %16ld\n", r.name.c_str(), long(r.params), long(r.flops));
        std::printf("%-16s %12ld %16ld\n", "total", long(prof.total_params),
                    long(prof.total_flops));
        std::printf("total: %.3fM params, %.3fG flops at %ldx%ld\n", prof.total_params / 1e6,
                    prof.total_flops / 1e9, long(m.cfg.input_h), long(m.cfg.input_w));
    }
    return kOk;
}

int cmd_synth(const std::string& out_dir, int count, const std::string& size,
              const std::string& objects, const std::string& frac, std::uint64_t seed) {
    io::SynthSpec spec;
    spec.count = count;
    if (!size.empty()) parse_size(size, spec.h, spec.w);
    if (!objects.empty()) {
        double lo, hi;
        parse_range(objects, lo, hi);
        spec.min_objects = int(lo);
        spec.max_objects = int(hi);
    }
    if (!frac.empty()) parse_range(frac, spec.frac_lo, spec.frac_hi);
    data::write_synth_dataset(spec, seed, out_dir);
    std::cout << "wrote " << spec.count << " image/mask pairs under " << out_dir << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"RGANet segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
    train_cmd->add_option("--config", config_path, "key = value training config")->required();

    std::string checkpoint, image_path, out_path, probs_dir;
    auto* infer_cmd = app.add_subcommand("infer", "predict a mask for one image");
    infer_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    infer_cmd->add_option("--image", image_path, "input image (PNG/PNM)")->required();
    infer_cmd->add_option("--out", out_path, "output mask file")->required();
    infer_cmd->add_option("--probs", probs_dir, "also write per-class probability rasters here");

    std::string pred_dir, gt_dir, csv_path, records_path, regulator_path, cell = "12x12";
    std::string mgrid_empty = "skip";
    eval::EvalOptions eopt;
    eopt.threads = default_threads();
    auto* eval_cmd = app.add_subcommand(
        "eval", "score predicted masks against ground truth (CSV columns: filename, accuracy, "
                "precision, recall, jaccard, dice, mcc, fbeta, mgrid; mgrid prints NA for images "
                "with no evidential cells)");
    eval_cmd->add_option("--pred", pred_dir, "directory of predicted masks")->required();
    eval_cmd->add_option("--gt", gt_dir, "directory of ground-truth masks")->required();
    eval_cmd->add_option("--beta", eopt.beta, "F-beta weighting (default 0.5)");
    eval_cmd->add_option("--cell", cell, "grid cell size, e.g. 12x12");
    eval_cmd->add_option("--fm", eopt.f_m, "regulator F_m (default 0.5)");
    eval_cmd->add_option("--cm", eopt.c_m, "regulator C_m (default 0.525)");
    eval_cmd->add_option("--mgrid-empty", mgrid_empty,
                         "skip|one: how no-evidence images enter the mgrid mean");
    eval_cmd->add_option("--positive-class", eopt.positive_class, "class index to score (default 2)");
    eval_cmd->add_option("--label-map", eopt.label_map, "grayscale remap, e.g. 0:0,128:1,255:2");
    eval_cmd->add_option("--csv", csv_path, "write the CSV here instead of stdout");
    eval_cmd->add_option("--records", records_path, "also write line-delimited key=value records");
    eval_cmd->add_option("--dump-regulator", regulator_path,
                         "write the regulator curve (f,gamma) at 1e-3 resolution");

    std::string rep_checkpoint, rep_config;
    bool rep_csv = false;
    auto* report_cmd = app.add_subcommand("report", "parameter and FLOPs accounting");
    report_cmd->add_option("--checkpoint", rep_checkpoint, "load the model from a checkpoint");
    report_cmd->add_option("--config", rep_config, "build from a config file (model.* keys)");
    report_cmd->add_flag("--csv", rep_csv, "machine-readable output");

    std::string synth_out, synth_size = "48x64", synth_objects = "1:3", synth_frac;
    int synth_count = 4;
    std::uint64_t synth_seed = 1;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic image/mask dataset");
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--count", synth_count, "number of samples");
    synth_cmd->add_option("--size", synth_size, "image size HxW");
    synth_cmd->add_option("--objects", synth_objects, "object count range lo:hi");
    synth_cmd->add_option("--frac", synth_frac, "class-2 area fraction range lo:hi");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*train_cmd) return cmd_train(config_path);
        if (*infer_cmd) return cmd_infer(checkpoint, image_path, out_path, probs_dir);
        if (*eval_cmd) {
            parse_size(cell, eopt.cell_h, eopt.cell_w);
            if (mgrid_empty != "skip" && mgrid_empty != "one")
                throw std::invalid_argument("--mgrid-empty must be skip or one");
            eopt.mgrid_empty_as_one = mgrid_empty == "one";
            return cmd_eval(pred_dir, gt_dir, eopt, csv_path, records_path, regulator_path);
        }
        if (*report_cmd) return cmd_report(rep_checkpoint, rep_config, rep_csv);
        if (*synth_cmd)
            return cmd_synth(synth_out, synth_count, synth_size, synth_objects, synth_frac,
                             synth_seed);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
