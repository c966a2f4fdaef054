#pragma once

#include "rganet/metrics.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rganet {
namespace eval {

struct EvalOptions {
    double beta = 0.5;
    Index cell_h = 12, cell_w = 12;
    double f_m = 0.5, c_m = 0.525;
    bool mgrid_empty_as_one = false; // NoEvidence images count as 1.0 instead of being skipped
    int positive_class = 2;
    std::string label_map;
    int threads = 1;
};

struct ImageRow {
    std::string name;
    metrics::ClassicMetrics classic;
    double accuracy_fbeta = 0; // fbeta column
    std::optional<double> mgrid;
};

struct EvalReport {
    std::vector<ImageRow> rows;
    std::vector<std::string> unmatched; // present in one directory only
    ImageRow mean;                      // name "mean"
};

/// Pairs files by name across the two directories, scores each pair, and
/// appends the dataset mean. Rows keep directory-listing order regardless
/// of the worker count.
EvalReport evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir,
                         const EvalOptions& opt);

void write_csv(const EvalReport& report, std::ostream& os);
void write_records(const EvalReport& report, std::ostream& os);
void dump_regulator_curve(const metrics::MgridConfig& cfg, std::ostream& os);

} // namespace eval
} // namespace rganet
