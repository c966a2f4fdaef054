#pragma once

#include "io/config_file.hpp"
#include "rganet/mask.hpp"

#include <string>
#include <vector>

namespace rganet {
namespace data {

/// One training sample: [0,1]-normalized color image and its class mask.
struct SegSample {
    Tensor<float> image; // (1, 3, H, W)
    SegMask mask;
};

/// Random rectangles/ellipses on a textured background. Object interiors
/// are class 2, their one-pixel rims class 1, everything else class 0.
/// Deterministic for a fixed spec and seed.
std::vector<SegSample> synth_dataset(const io::SynthSpec& spec, std::uint64_t seed);

/// Render to <out_dir>/images/synth_NNN.png and <out_dir>/masks/synth_NNN.png.
void write_synth_dataset(const io::SynthSpec& spec, std::uint64_t seed,
                         const std::string& out_dir);

} // namespace data
} // namespace rganet
