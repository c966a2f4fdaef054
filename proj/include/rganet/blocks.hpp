#pragma once

#include "rganet/engine/params.hpp"

namespace rganet {
namespace blocks {

/// One bottleneck: 1x1 expand to s*k channels, 3x3 squeeze back to k.
/// Convolutions carry no bias; BN follows each.
template <typename Scalar>
struct BottleneckParams {
    ConvParams<Scalar> expand;  // 1x1, c_in -> s*k
    BnParams<Scalar> bn_expand;
    ConvParams<Scalar> squeeze; // 3x3 pad 1, s*k -> k
    BnParams<Scalar> bn_squeeze;

    BottleneckParams() = default;
    BottleneckParams(Index c_in, Index s, Index k, Rng& rng)
        : expand(s * k, c_in, 1, 1, false, rng),
          bn_expand(s * k),
          squeeze(k, s * k, 3, 3, false, rng),
          bn_squeeze(k) {}

    void collect(const std::string& prefix, ParamLists<Scalar>& out) {
        expand.collect(prefix + ".expand", out);
        collect_bn(bn_expand, prefix + ".expand_bn", out);
        squeeze.collect(prefix + ".squeeze", out);
        collect_bn(bn_squeeze, prefix + ".squeeze_bn", out);
    }
};

template <typename Scalar>
Tensor<Scalar> bottleneck_forward(const Tensor<Scalar>& x, BottleneckParams<Scalar>& p, Mode mode) {
    Tensor<Scalar> y = apply_conv(x, p.expand, 1, 0);
    y = batchnorm(y, p.bn_expand, mode);
    y = activation(y, Act::swish);
    y = apply_conv(y, p.squeeze, 1, 1);
    y = batchnorm(y, p.bn_squeeze, mode);
    return activation(y, Act::swish);
}

/// Densely stacked bottlenecks. Input must arrive with k channels; each of
/// the n bottlenecks reads the running concatenation and appends k more,
/// so the output carries (n+1)*k channels with the raw input as its first
/// k channels.
template <typename Scalar>
struct EssParams {
    Index n = 0, k = 0, s = 0;
    std::vector<BottleneckParams<Scalar>> bottlenecks;

    EssParams() = default;
    EssParams(Index n_, Index k_, Index s_, Rng& rng) : n(n_), k(k_), s(s_) {
        for (Index j = 1; j <= n_; ++j)
            bottlenecks.emplace_back(j * k_, s_, k_, rng);
    }

    void collect(const std::string& prefix, ParamLists<Scalar>& out) {
        for (size_t j = 0; j < bottlenecks.size(); ++j)
            bottlenecks[j].collect(prefix + ".bnk" + std::to_string(j + 1), out);
    }

    Index out_channels() const { return (n + 1) * k; }
};

/// Closed-form trainable-scalar count of an ESS-n block.
inline Index ess_param_count(Index n, Index k, Index s) {
    Index total = 0;
    for (Index j = 1; j <= n; ++j) {
        const Index c_in = j * k;
        total += c_in * s * k + 2 * s * k + s * k * k * 9 + 2 * k;
    }
    return total;
}

template <typename Scalar>
Tensor<Scalar> ess_forward(const Tensor<Scalar>& x, EssParams<Scalar>& p, Mode mode) {
    check(x.shape().c == p.k, "ess_forward: expected " + std::to_string(p.k) +
                                  " input channels, got " + std::to_string(x.shape().c));
    Tensor<Scalar> state = x;
    for (auto& bnk : p.bottlenecks) {
        Tensor<Scalar> fresh = bottleneck_forward(state, bnk, mode);
        state = concat_channels<Scalar>({state, fresh}); // earlier features first
    }
    return state;
}

/// Vote & upsample: bias-free 1x1 vote over the (optionally concatenated)
/// inputs, then 2x upsampling — nearest interpolation by default, or a
/// learnable 2x2 stride-2 transposed convolution.
template <typename Scalar>
struct VuParams {
    ConvParams<Scalar> vote;  // 1x1, c_deep (+ c_highway) -> k, no bias
    Tensor<Scalar> deconv;    // (k, k, 2, 2) when use_deconv
    bool use_deconv = false;

    VuParams() = default;
    VuParams(Index c_in, Index k, bool deconv_upsample, Rng& rng)
        : vote(k, c_in, 1, 1, false, rng), use_deconv(deconv_upsample) {
        if (use_deconv) deconv = kaiming_uniform<Scalar>(Shape4{k, k, 2, 2}, k * 4, rng);
    }

    void collect(const std::string& prefix, ParamLists<Scalar>& out) {
        vote.collect(prefix + ".vote", out);
        if (use_deconv) out.add(prefix + ".deconv", deconv);
    }
};

template <typename Scalar>
Tensor<Scalar> vu_forward(const Tensor<Scalar>& deep, const Tensor<Scalar>* highway,
                          VuParams<Scalar>& p) {
    Tensor<Scalar> merged;
    if (highway) {
        check(deep.shape().h == highway->shape().h && deep.shape().w == highway->shape().w &&
                  deep.shape().n == highway->shape().n,
              "vu_forward: spatial mismatch " + deep.shape().str() + " vs " +
                  highway->shape().str());
        merged = concat_channels<Scalar>({deep, *highway});
    } else {
        merged = deep;
    }
    Tensor<Scalar> voted = apply_conv(merged, p.vote, 1, 0);
    return p.use_deconv ? deconv2x2(voted, p.deconv) : upsample_nearest2x(voted);
}

} // namespace blocks
} // namespace rganet
