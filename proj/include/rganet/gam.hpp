#pragma once

#include "rganet/engine/params.hpp"

namespace rganet {
namespace gam {

/// Global attention module parameters for a fixed input extent (h, w, c).
///
/// Four banks of depth-wise long kernels encode the rotated query/key views:
///   wq_h — w kernels of length h (query, collapses the height axis)
///   wq_c — w kernels of length c (query, collapses the channel axis)
///   wk_w — h kernels of length w (key, collapses the width axis)
///   wk_c — h kernels of length c (key, collapses the channel axis)
/// Their per-slice outer products are concatenated (2c channels),
/// batch-normed, fused back to c channels by a 1x1 convolution, passed
/// through swish, and mapped into [0,1] by sigmoid or channel softmax.
template <typename Scalar>
struct GamParams {
    Index h = 0, w = 0, c = 0;
    Tensor<Scalar> wq_h, wq_c, wk_w, wk_c;
    BnParams<Scalar> bn;     // over the concatenated 2c channels
    ConvParams<Scalar> fuse; // 1x1, 2c -> c, with bias
    Act out_map = Act::sigmoid;

    GamParams() = default;

    GamParams(Index h_, Index w_, Index c_, Act out, Rng& rng)
        : h(h_), w(w_), c(c_),
          wq_h(kaiming_uniform<Scalar>(Shape4{1, w_, 1, h_}, h_, rng)),
          wq_c(kaiming_uniform<Scalar>(Shape4{1, w_, 1, c_}, c_, rng)),
          wk_w(kaiming_uniform<Scalar>(Shape4{1, h_, 1, w_}, w_, rng)),
          wk_c(kaiming_uniform<Scalar>(Shape4{1, h_, 1, c_}, c_, rng)),
          bn(2 * c_),
          fuse(c_, 2 * c_, 1, 1, true, rng),
          out_map(out) {}

    void collect(const std::string& prefix, ParamLists<Scalar>& out) {
        out.add(prefix + ".wq_h", wq_h);
        out.add(prefix + ".wq_c", wq_c);
        out.add(prefix + ".wk_w", wk_w);
        out.add(prefix + ".wk_c", wk_c);
        collect_bn(bn, prefix + ".bn", out);
        fuse.collect(prefix + ".fuse", out);
    }

    /// Enumerated long-kernel scalars (the aux-free count).
    Index depthwise_param_count() const {
        return wq_h.numel() + wq_c.numel() + wk_w.numel() + wk_c.numel();
    }
};

/// Closed-form trainable-parameter count: 2hw + cw + hc for the long
/// kernels; include_aux adds the fuse conv (2c*c + c) and BN (2*2c).
inline Index gam_param_count(Index h, Index w, Index c, bool include_aux) {
    Index n = 2 * h * w + c * w + h * c;
    if (include_aux) n += 2 * c * c + c + 4 * c;
    return n;
}

template <typename Scalar>
struct GamOut {
    Tensor<Scalar> lambda; // weights volume in [0,1], same shape as x
    Tensor<Scalar> f_out;  // lambda .* x
};

/// Forward pass over an (N, c, h, w) feature volume.
template <typename Scalar>
GamOut<Scalar> gam_forward(const Tensor<Scalar>& x, GamParams<Scalar>& params, Mode mode) {
    const Shape4& s = x.shape();
    check(s.c == params.c && s.h == params.h && s.w == params.w,
          "gam_forward: params built for (h,w,c)=(" + std::to_string(params.h) + "," +
              std::to_string(params.w) + "," + std::to_string(params.c) + "), input is " + s.str());

    // Query view: w slices of c-by-h matrices.
    Tensor<Scalar> xq = permute(x, {0, 3, 1, 2}); // (N, w, c, h)
    Tensor<Scalar> qh = depthwise_long_conv(xq, params.wq_h, CollapseAxis::cols); // (N, w, c, 1)
    Tensor<Scalar> qc = depthwise_long_conv(xq, params.wq_c, CollapseAxis::rows); // (N, w, 1, h)
    Tensor<Scalar> aq = slice_outer_product(qh, qc);                              // (N, w, c, h)
    aq = permute(aq, {0, 2, 3, 1});                                               // (N, c, h, w)

    // Key view: h slices of w-by-c matrices.
    Tensor<Scalar> xk = permute(x, {0, 2, 3, 1}); // (N, h, w, c)
    Tensor<Scalar> kcol = depthwise_long_conv(xk, params.wk_c, CollapseAxis::cols); // (N, h, w, 1)
    Tensor<Scalar> krow = depthwise_long_conv(xk, params.wk_w, CollapseAxis::rows); // (N, h, 1, c)
    Tensor<Scalar> ak = slice_outer_product(kcol, krow);                            // (N, h, w, c)
    ak = permute(ak, {0, 3, 1, 2});                                                 // (N, c, h, w)

    // Fuse: concat -> BN -> 1x1 (2c -> c) -> swish -> [0,1] map.
    Tensor<Scalar> cat = concat_channels<Scalar>({aq, ak});
    Tensor<Scalar> z = batchnorm(cat, params.bn, mode);
    z = apply_conv(z, params.fuse, 1, 0);
    z = activation(z, Act::swish);
    Tensor<Scalar> lambda = activation(z, params.out_map);

    return GamOut<Scalar>{lambda, mul(lambda, x)};
}

/// Residual application (1 + lambda) .* x.
template <typename Scalar>
Tensor<Scalar> gam_residual(const Tensor<Scalar>& x, const Tensor<Scalar>& lambda) {
    check(x.shape() == lambda.shape(),
          "gam_residual: shape mismatch " + x.shape().str() + " vs " + lambda.shape().str());
    return add(x, mul(lambda, x));
}

} // namespace gam
} // namespace rganet
