#pragma once

#include "rganet/engine/serialize.hpp"
#include "rganet/mask.hpp"

#include <map>
#include <string>
#include <vector>

namespace rganet {
namespace io {

/// Interleaved 8-bit raster, 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
    Index h = 0, w = 0, channels = 0;
    std::vector<std::uint8_t> data; // row-major, interleaved

    std::uint8_t at(Index y, Index x, Index c) const {
        return data[static_cast<size_t>((y * w + x) * channels + c)];
    }
};

/// PNG or PNM, chosen by file magic on read and by extension on write
/// (.pgm/.ppm produce PNM, everything else PNG).
ImageU8 read_image(const std::string& path);
void write_gray(const std::string& path, const ImageU8& img);
void write_rgb(const std::string& path, const ImageU8& img);

/// Mask files hold literal class indices as 8-bit gray. An optional
/// level map ("0:0,128:1,255:2") adapts foreign label conventions.
SegMask read_mask(const std::string& path, const std::map<int, int>& label_map = {});
void write_mask(const std::string& path, const SegMask& mask);

std::map<int, int> parse_label_map(const std::string& spec);

/// 3-channel image -> (1,3,H,W) tensor scaled to [0,1].
Tensor<float> image_to_tensor(const ImageU8& img);
/// One batch item of a [0,1] tensor -> interleaved 8-bit RGB.
ImageU8 tensor_to_image(const Tensor<float>& t, Index item);

} // namespace io
} // namespace rganet
