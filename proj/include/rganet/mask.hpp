#pragma once

#include "rganet/engine/tensor.hpp"

#include <cstdint>
#include <vector>

namespace rganet {

/// Integer class-index image: 0 background, 1 negative sample, 2 suction.
struct SegMask {
    Index h = 0, w = 0;
    std::vector<std::uint8_t> v;

    SegMask() = default;
    SegMask(Index h_, Index w_, std::uint8_t fill = 0)
        : h(h_), w(w_), v(static_cast<size_t>(h_ * w_), fill) {}

    std::uint8_t& at(Index y, Index x) { return v[static_cast<size_t>(y * w + x)]; }
    std::uint8_t at(Index y, Index x) const { return v[static_cast<size_t>(y * w + x)]; }

    bool same_shape(const SegMask& o) const { return h == o.h && w == o.w; }
    Index pixels() const { return h * w; }
};

/// Argmax over channels of one batch item of a probability tensor.
template <typename Scalar>
SegMask argmax_mask(const Tensor<Scalar>& probs, Index item) {
    const Shape4& s = probs.shape();
    SegMask m(s.h, s.w);
    for (Index y = 0; y < s.h; ++y)
        for (Index x = 0; x < s.w; ++x) {
            Index best = 0;
            Scalar bv = probs(item, 0, y, x);
            for (Index c = 1; c < s.c; ++c) {
                const Scalar v = probs(item, c, y, x);
                if (v > bv) {
                    bv = v;
                    best = c;
                }
            }
            m.at(y, x) = static_cast<std::uint8_t>(best);
        }
    return m;
}

} // namespace rganet
