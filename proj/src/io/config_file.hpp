#pragma once

#include "rganet/model.hpp"
#include "rganet/optim.hpp"

#include <map>
#include <string>
#include <vector>

namespace rganet {
namespace io {

/// `key = value` lines, `#` comments, dotted keys for nesting.
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv_text(const std::string& text);
KvMap parse_kv_file(const std::string& path);

std::string kv_get(const KvMap& kv, const std::string& key, const std::string& fallback);
long kv_get_int(const KvMap& kv, const std::string& key, long fallback);
double kv_get_double(const KvMap& kv, const std::string& key, double fallback);
bool kv_get_bool(const KvMap& kv, const std::string& key, bool fallback);

/// Synthetic-set shape: object count range plus a target class-2 area band.
struct SynthSpec {
    int count = 4;
    Index h = 48, w = 64;
    int min_objects = 1, max_objects = 3;
    double frac_lo = 0.08, frac_hi = 0.25;
};

struct TrainFileConfig {
    model::ModelConfig model;
    optim::LossConfig loss;
    optim::AdamWConfig<float> opt;

    int epochs = 300;
    int batch_size = 4;
    std::uint64_t seed = 1;
    int checkpoint_every = 0;    // 0: only at the end
    double target_iou = 0.0;     // > 0: stop once the online train IoU reaches this
    int bn_recalibrate = 20;     // forward-only passes that refresh BN running stats
    bool aug_hflip = false, aug_shift = false, aug_rotate90 = false;

    std::string data_dir;  // expects <dir>/images and <dir>/masks
    std::string label_map; // optional grayscale-level remap for foreign masks
    bool use_synth = false;
    SynthSpec synth;

    std::string out_checkpoint = "model.rgan";
    std::string out_log = "train_log.csv";
};

TrainFileConfig parse_train_config(const std::string& path);
model::ModelConfig model_config_from_kv(const KvMap& kv);

} // namespace io
} // namespace rganet
