#pragma once

#include "data/synth.hpp"
#include "rganet/engine/init.hpp"

#include <string>
#include <vector>

namespace rganet {
namespace data {

struct Dataset {
    std::vector<SegSample> samples;
    std::vector<std::string> names;
};

/// Loads <dir>/images/* with matching <dir>/masks/* (same filename).
Dataset load_dataset_dir(const std::string& dir, const std::string& label_map_spec);

struct AugmentFlags {
    bool hflip = false;
    bool shift = false;
    bool rotate90 = false;
};

/// Applies one random spatial transform set to image and mask alike.
/// Shift fills vacated image pixels with 0 and mask pixels with class 0;
/// rotate90 requires square extents.
SegSample augment_sample(const SegSample& in, const AugmentFlags& flags, Rng& rng);

/// Stacks samples (optionally augmented) into one batch tensor + targets.
struct Batch {
    Tensor<float> images; // (N, 3, H, W)
    std::vector<SegMask> targets;
};
Batch make_batch(const std::vector<SegSample>& samples, const std::vector<size_t>& indices,
                 const AugmentFlags& flags, Rng& rng);

} // namespace data
} // namespace rganet
