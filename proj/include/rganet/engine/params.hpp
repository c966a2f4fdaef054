#pragma once

#include "rganet/engine/init.hpp"
#include "rganet/engine/ops.hpp"

#include <string>
#include <vector>

namespace rganet {

/// Named handle to one trainable tensor inside a parameter tree.
template <typename Scalar>
struct ParamRef {
    std::string name;
    Tensor<Scalar>* value = nullptr;
};

/// Named handle to non-trainable state (batch-norm running statistics).
template <typename Scalar>
struct StateRef {
    std::string name;
    typename Tensor<Scalar>::Storage* value = nullptr;
};

template <typename Scalar>
struct ParamLists {
    std::vector<ParamRef<Scalar>> trainable;
    std::vector<StateRef<Scalar>> state;

    void add(const std::string& name, Tensor<Scalar>& t) { trainable.push_back({name, &t}); }
    void add_state(const std::string& name, typename Tensor<Scalar>::Storage& s) {
        state.push_back({name, &s});
    }

    Index trainable_count() const {
        Index n = 0;
        for (const auto& p : trainable) n += p.value->numel();
        return n;
    }
};

template <typename Scalar>
void collect_bn(BnParams<Scalar>& bn, const std::string& prefix, ParamLists<Scalar>& out) {
    out.add(prefix + ".scale", bn.scale);
    out.add(prefix + ".shift", bn.shift);
    out.add_state(prefix + ".running_mean", bn.running_mean);
    out.add_state(prefix + ".running_var", bn.running_var);
}

/// Convolution weight with optional bias.
template <typename Scalar>
struct ConvParams {
    Tensor<Scalar> weight; // (C_out, C_in, kH, kW)
    Tensor<Scalar> bias;   // (1, C_out, 1, 1) when has_bias
    bool has_bias = false;

    ConvParams() = default;
    ConvParams(Index c_out, Index c_in, Index kh, Index kw, bool with_bias, Rng& rng)
        : weight(kaiming_uniform<Scalar>(Shape4{c_out, c_in, kh, kw}, c_in * kh * kw, rng)),
          has_bias(with_bias) {
        if (with_bias) bias = Tensor<Scalar>::zeros(Shape4{1, c_out, 1, 1});
    }

    void collect(const std::string& prefix, ParamLists<Scalar>& out) {
        out.add(prefix + ".weight", weight);
        if (has_bias) out.add(prefix + ".bias", bias);
    }
};

template <typename Scalar>
Tensor<Scalar> apply_conv(const Tensor<Scalar>& x, const ConvParams<Scalar>& p, Index stride,
                          Index padding) {
    return conv2d(x, p.weight, p.has_bias ? &p.bias : nullptr, stride, padding);
}

} // namespace rganet
