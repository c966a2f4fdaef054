#pragma once

#include "rganet/engine/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace rganet {

/// Deterministic uniform draws on top of mt19937_64. Distributions from
/// <random> vary across standard libraries; this scaling does not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { // [0,1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t integer(std::uint64_t n) { // [0,n)
        return n == 0 ? 0 : gen_() % n;
    }

    std::uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
};

/// Kaiming-uniform fill: bound = sqrt(6 / fan_in).
template <typename Scalar>
Tensor<Scalar> kaiming_uniform(Shape4 s, Index fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor<Scalar> t(s);
    auto& d = t.raw();
    for (Index i = 0; i < s.numel(); ++i)
        d(i) = static_cast<Scalar>(rng.uniform(-bound, bound));
    return t;
}

} // namespace rganet
