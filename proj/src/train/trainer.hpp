#pragma once

#include "data/dataset.hpp"
#include "io/config_file.hpp"
#include "rganet/metrics.hpp"
#include "rganet/model.hpp"

#include <iosfwd>
#include <stdexcept>

namespace rganet {

/// Non-finite loss or other numeric breakdown during training.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace train {

struct EpochStats {
    int epoch = 0;
    double loss = 0;
    double jaccard = 0, precision = 0, recall = 0; // positive class, pooled over the epoch
};

struct TrainResult {
    model::RganetModel<float> model;
    std::vector<EpochStats> curve;
};

/// Full training run: seeded shuffling/augmentation, one optimizer step per
/// batch, per-epoch loss and online metrics, periodic + final checkpoints,
/// CSV log. Deterministic for a fixed config and seed.
TrainResult run_training(const io::TrainFileConfig& cfg, const std::vector<data::SegSample>& samples,
                         std::ostream* progress);

/// Pooled confusion of eval-mode predictions against the sample masks.
metrics::Confusion dataset_confusion(model::RganetModel<float>& m,
                                     const std::vector<data::SegSample>& samples,
                                     int positive_class);

} // namespace train
} // namespace rganet
