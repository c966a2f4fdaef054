#pragma once

#include "rganet/engine/tape.hpp"
#include "rganet/engine/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace rganet {

enum class Mode { train, eval };
enum class Act { swish, sigmoid, relu, softmax_channels };
enum class CollapseAxis { rows, cols };

namespace detail {

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ColMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
void track(Tensor<Scalar>& out, Tape<Scalar>* tape) {
    if (!tape) return;
    out.tape = tape;
    out.node = tape->alloc_node(out.numel());
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar v) {
    if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
    Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
}

} // namespace detail

// ---------------------------------------------------------------------------
// conv2d: standard cross-correlation, NCHW, zero padding.
// Kernel shape (C_out, C_in, kH, kW); optional bias of C_out entries.
// 1x1 stride-1 kernels reduce to a channel-mixing GEMM; larger kernels go
// through im2col + GEMM; tiny non-1x1 kernels fall back to direct loops.
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
void im2col(const Tensor<Scalar>& x, Index item, Index kh, Index kw, Index stride, Index pad,
            Index oh, Index ow, ColMat<Scalar>& col) {
    const Shape4& s = x.shape();
    const Scalar* src = x.array().data() + item * s.c * s.h * s.w;
    col.setZero(s.c * kh * kw, oh * ow);
    for (Index ci = 0; ci < s.c; ++ci)
        for (Index a = 0; a < kh; ++a)
            for (Index b = 0; b < kw; ++b) {
                const Index row = (ci * kh + a) * kw + b;
                for (Index y = 0; y < oh; ++y) {
                    const Index iy = y * stride + a - pad;
                    if (iy < 0 || iy >= s.h) continue;
                    for (Index xo = 0; xo < ow; ++xo) {
                        const Index ix = xo * stride + b - pad;
                        if (ix < 0 || ix >= s.w) continue;
                        col(row, y * ow + xo) = src[(ci * s.h + iy) * s.w + ix];
                    }
                }
            }
}

template <typename Scalar>
void col2im_add(const ColMat<Scalar>& col, Index item, const Shape4& s, Index kh, Index kw,
                Index stride, Index pad, Index oh, Index ow,
                typename Tensor<Scalar>::Storage& dx) {
    Scalar* dst = dx.data() + item * s.c * s.h * s.w;
    for (Index ci = 0; ci < s.c; ++ci)
        for (Index a = 0; a < kh; ++a)
            for (Index b = 0; b < kw; ++b) {
                const Index row = (ci * kh + a) * kw + b;
                for (Index y = 0; y < oh; ++y) {
                    const Index iy = y * stride + a - pad;
                    if (iy < 0 || iy >= s.h) continue;
                    for (Index xo = 0; xo < ow; ++xo) {
                        const Index ix = xo * stride + b - pad;
                        if (ix < 0 || ix >= s.w) continue;
                        dst[(ci * s.h + iy) * s.w + ix] += col(row, y * ow + xo);
                    }
                }
            }
}

} // namespace detail

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>* bias, Index stride, Index padding) {
    const Shape4& xs = x.shape();
    const Shape4& ws = weight.shape();
    check(xs.numel() > 0, "conv2d: zero-extent input " + xs.str());
    check(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
    check(padding >= 0, "conv2d: negative padding");
    check(ws.c == xs.c, "conv2d: kernel expects " + std::to_string(ws.c) +
                            " input channels, tensor has " + std::to_string(xs.c));
    if (bias)
        check(bias->numel() == ws.n, "conv2d: bias length " + std::to_string(bias->numel()) +
                                         " != output channels " + std::to_string(ws.n));
    const Index oh = (xs.h + 2 * padding - ws.h) / stride + 1;
    const Index ow = (xs.w + 2 * padding - ws.w) / stride + 1;
    check(oh >= 1 && ow >= 1, "conv2d: kernel " + ws.str() + " larger than padded input " + xs.str());

    Tensor<Scalar> out(Shape4{xs.n, ws.n, oh, ow});
    const Index k = ws.c * ws.h * ws.w;
    const Index p = oh * ow;
    Eigen::Map<const detail::RowMat<Scalar>> wmat(weight.array().data(), ws.n, k);

    const bool pointwise = (ws.h == 1 && ws.w == 1 && stride == 1 && padding == 0);
    const bool use_im2col = !pointwise && ws.h * ws.w >= 4;

    for (Index item = 0; item < xs.n; ++item) {
        Eigen::Map<detail::RowMat<Scalar>> ymat(out.raw().data() + item * ws.n * p, ws.n, p);
        if (pointwise) {
            Eigen::Map<const detail::RowMat<Scalar>> xmat(
                x.array().data() + item * xs.c * p, xs.c, p);
            ymat.noalias() = wmat * xmat;
        } else if (use_im2col) {
            detail::ColMat<Scalar> col;
            detail::im2col(x, item, ws.h, ws.w, stride, padding, oh, ow, col);
            ymat.noalias() = wmat * col;
        } else {
            for (Index o = 0; o < ws.n; ++o)
                for (Index y = 0; y < oh; ++y)
                    for (Index xo = 0; xo < ow; ++xo) {
                        Scalar acc = 0;
                        for (Index ci = 0; ci < xs.c; ++ci)
                            for (Index a = 0; a < ws.h; ++a)
                                for (Index b = 0; b < ws.w; ++b) {
                                    const Index iy = y * stride + a - padding;
                                    const Index ix = xo * stride + b - padding;
                                    if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                                    acc += x(item, ci, iy, ix) * weight(o, ci, a, b);
                                }
                        ymat(o, y * ow + xo) = acc;
                    }
        }
        if (bias)
            for (Index o = 0; o < ws.n; ++o) ymat.row(o).array() += bias->array()(o);
    }

    Tape<Scalar>* tape = tape_of<Scalar>({&x, &weight, bias});
    detail::track(out, tape);
    if (tape) {
        const int xn = x.node, wn = weight.node, bn = bias ? bias->node : -1, on = out.node;
        auto xsp = x.storage();
        auto wsp = weight.storage();
        const Index s_ = stride, pad_ = padding;
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go) return;
            const Index kk = ws.c * ws.h * ws.w, pp = oh * ow;
            Eigen::Map<const detail::RowMat<Scalar>> w_(wsp->data(), ws.n, kk);
            for (Index item = 0; item < xs.n; ++item) {
                Eigen::Map<const detail::RowMat<Scalar>> gy(go->data() + item * ws.n * pp, ws.n, pp);
                detail::ColMat<Scalar> col;
                const bool pw = (ws.h == 1 && ws.w == 1 && s_ == 1 && pad_ == 0);
                if (pw) {
                    if (wn >= 0) {
                        Eigen::Map<const detail::RowMat<Scalar>> xm(xsp->data() + item * xs.c * pp,
                                                                    xs.c, pp);
                        Eigen::Map<detail::RowMat<Scalar>> gw(t.grad_buf(wn).data(), ws.n, kk);
                        gw.noalias() += gy * xm.transpose();
                    }
                    if (xn >= 0) {
                        Eigen::Map<detail::RowMat<Scalar>> gx(
                            t.grad_buf(xn).data() + item * xs.c * pp, xs.c, pp);
                        gx.noalias() += w_.transpose() * gy;
                    }
                } else {
                    Tensor<Scalar> xview(xs, xsp);
                    detail::im2col(xview, item, ws.h, ws.w, s_, pad_, oh, ow, col);
                    if (wn >= 0) {
                        Eigen::Map<detail::RowMat<Scalar>> gw(t.grad_buf(wn).data(), ws.n, kk);
                        gw.noalias() += gy * col.transpose();
                    }
                    if (xn >= 0) {
                        detail::ColMat<Scalar> gcol = w_.transpose() * gy;
                        detail::col2im_add<Scalar>(gcol, item, xs, ws.h, ws.w, s_, pad_, oh, ow,
                                                   t.grad_buf(xn));
                    }
                }
                if (bn >= 0) {
                    auto& gb = t.grad_buf(bn);
                    for (Index o = 0; o < ws.n; ++o) gb(o) += gy.row(o).sum();
                }
            }
        });
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, Index stride,
                      Index padding) {
    return conv2d(x, weight, static_cast<const Tensor<Scalar>*>(nullptr), stride, padding);
}

// ---------------------------------------------------------------------------
// Transposed 2x2 stride-2 convolution (the learnable upsampling variant).
// Kernel shape (C_in, C_out, 2, 2), no bias. Output is exactly 2H x 2W.
// ---------------------------------------------------------------------------
template <typename Scalar>
Tensor<Scalar> deconv2x2(const Tensor<Scalar>& x, const Tensor<Scalar>& weight) {
    const Shape4& xs = x.shape();
    const Shape4& ws = weight.shape();
    check(ws.n == xs.c, "deconv2x2: kernel expects " + std::to_string(ws.n) +
                            " input channels, tensor has " + std::to_string(xs.c));
    check(ws.h == 2 && ws.w == 2, "deconv2x2: kernel must be 2x2");
    const Index co = ws.c;
    Tensor<Scalar> out(Shape4{xs.n, co, xs.h * 2, xs.w * 2});
    auto& o = out.raw();
    for (Index n = 0; n < xs.n; ++n)
        for (Index ci = 0; ci < xs.c; ++ci)
            for (Index h = 0; h < xs.h; ++h)
                for (Index w = 0; w < xs.w; ++w) {
                    const Scalar v = x(n, ci, h, w);
                    for (Index c = 0; c < co; ++c)
                        for (Index a = 0; a < 2; ++a)
                            for (Index b = 0; b < 2; ++b)
                                o(out.offset(n, c, 2 * h + a, 2 * w + b)) +=
                                    v * weight(ci, c, a, b);
                }

    Tape<Scalar>* tape = tape_of<Scalar>({&x, &weight});
    detail::track(out, tape);
    if (tape) {
        const int xn = x.node, wn = weight.node, on = out.node;
        auto xsp = x.storage();
        auto wsp = weight.storage();
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go) return;
            Tensor<Scalar> gov(Shape4{xs.n, co, xs.h * 2, xs.w * 2},
                               std::make_shared<typename Tensor<Scalar>::Storage>(*go));
            Tensor<Scalar> xv(xs, xsp), wv(ws, wsp);
            for (Index n = 0; n < xs.n; ++n)
                for (Index ci = 0; ci < xs.c; ++ci)
                    for (Index h = 0; h < xs.h; ++h)
                        for (Index w = 0; w < xs.w; ++w)
                            for (Index c = 0; c < co; ++c)
                                for (Index a = 0; a < 2; ++a)
                                    for (Index b = 0; b < 2; ++b) {
                                        const Scalar g = gov(n, c, 2 * h + a, 2 * w + b);
                                        if (xn >= 0)
                                            t.grad_buf(xn)(xv.offset(n, ci, h, w)) +=
                                                g * wv(ci, c, a, b);
                                        if (wn >= 0)
                                            t.grad_buf(wn)(wv.offset(ci, c, a, b)) +=
                                                g * xv(n, ci, h, w);
                                    }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Depth-wise long-kernel convolution. The input is read as D slices of RxS
// matrices (shape (N, D, R, S)); one kernel per slice spans the collapsed
// axis completely, so that axis shrinks to extent 1 (valid convolution).
// Kernels are stored as a (1, D, 1, L) tensor. Trainable parameters: D*L.
// ---------------------------------------------------------------------------
template <typename Scalar>
Tensor<Scalar> depthwise_long_conv(const Tensor<Scalar>& view, const Tensor<Scalar>& kernels,
                                   CollapseAxis axis) {
    const Shape4& vs = view.shape();
    const Shape4& ks = kernels.shape();
    check(ks.n == 1 && ks.h == 1, "depthwise_long_conv: kernels must be shaped (1,D,1,L)");
    check(ks.c == vs.c, "depthwise_long_conv: kernel count " + std::to_string(ks.c) +
                            " != depth " + std::to_string(vs.c));
    const Index want = axis == CollapseAxis::cols ? vs.w : vs.h;
    check(ks.w == want, "depthwise_long_conv: kernel length " + std::to_string(ks.w) +
                            " != collapsed extent " + std::to_string(want));

    const bool cols = axis == CollapseAxis::cols;
    Tensor<Scalar> out(cols ? Shape4{vs.n, vs.c, vs.h, 1} : Shape4{vs.n, vs.c, 1, vs.w});
    auto& o = out.raw();
    for (Index n = 0; n < vs.n; ++n)
        for (Index d = 0; d < vs.c; ++d) {
            if (cols) {
                for (Index r = 0; r < vs.h; ++r) {
                    Scalar acc = 0;
                    for (Index s = 0; s < vs.w; ++s) acc += view(n, d, r, s) * kernels(0, d, 0, s);
                    o(out.offset(n, d, r, 0)) = acc;
                }
            } else {
                for (Index s = 0; s < vs.w; ++s) {
                    Scalar acc = 0;
                    for (Index r = 0; r < vs.h; ++r) acc += view(n, d, r, s) * kernels(0, d, 0, r);
                    o(out.offset(n, d, 0, s)) = acc;
                }
            }
        }

    Tape<Scalar>* tape = tape_of<Scalar>({&view, &kernels});
    detail::track(out, tape);
    if (tape) {
        const int xn = view.node, kn = kernels.node, on = out.node;
        auto xsp = view.storage();
        auto ksp = kernels.storage();
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go) return;
            Tensor<Scalar> xv(vs, xsp), kv(ks, ksp);
            Tensor<Scalar> gov(cols ? Shape4{vs.n, vs.c, vs.h, 1} : Shape4{vs.n, vs.c, 1, vs.w},
                               std::make_shared<typename Tensor<Scalar>::Storage>(*go));
            for (Index n = 0; n < vs.n; ++n)
                for (Index d = 0; d < vs.c; ++d)
                    for (Index r = 0; r < vs.h; ++r)
                        for (Index s = 0; s < vs.w; ++s) {
                            const Scalar g = cols ? gov(n, d, r, 0) : gov(n, d, 0, s);
                            const Index ki = cols ? s : r;
                            if (xn >= 0)
                                t.grad_buf(xn)(xv.offset(n, d, r, s)) += g * kv(0, d, 0, ki);
                            if (kn >= 0)
                                t.grad_buf(kn)(kv.offset(0, d, 0, ki)) += g * xv(n, d, r, s);
                        }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-slice outer product: (N,D,R,1) x (N,D,1,S) -> (N,D,R,S).
// ---------------------------------------------------------------------------
template <typename Scalar>
Tensor<Scalar> slice_outer_product(const Tensor<Scalar>& cols, const Tensor<Scalar>& rows) {
    const Shape4& as = cols.shape();
    const Shape4& bs = rows.shape();
    check(as.w == 1, "slice_outer_product: first operand must have width 1, got " + as.str());
    check(bs.h == 1, "slice_outer_product: second operand must have height 1, got " + bs.str());
    check(as.n == bs.n, "slice_outer_product: batch mismatch");
    check(as.c == bs.c, "slice_outer_product: depth mismatch " + std::to_string(as.c) + " vs " +
                            std::to_string(bs.c));

    Tensor<Scalar> out(Shape4{as.n, as.c, as.h, bs.w});
    auto& o = out.raw();
    for (Index n = 0; n < as.n; ++n)
        for (Index d = 0; d < as.c; ++d)
            for (Index r = 0; r < as.h; ++r)
                for (Index s = 0; s < bs.w; ++s)
                    o(out.offset(n, d, r, s)) = cols(n, d, r, 0) * rows(n, d, 0, s);

    Tape<Scalar>* tape = tape_of<Scalar>({&cols, &rows});
    detail::track(out, tape);
    if (tape) {
        const int an = cols.node, bn = rows.node, on = out.node;
        auto asp = cols.storage();
        auto bsp = rows.storage();
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go) return;
            Tensor<Scalar> av(as, asp), bv(bs, bsp);
            Tensor<Scalar> gov(Shape4{as.n, as.c, as.h, bs.w},
                               std::make_shared<typename Tensor<Scalar>::Storage>(*go));
            for (Index n = 0; n < as.n; ++n)
                for (Index d = 0; d < as.c; ++d)
                    for (Index r = 0; r < as.h; ++r)
                        for (Index s = 0; s < bs.w; ++s) {
                            const Scalar g = gov(n, d, r, s);
                            if (an >= 0) t.grad_buf(an)(av.offset(n, d, r, 0)) += g * bv(n, d, 0, s);
                            if (bn >= 0) t.grad_buf(bn)(bv.offset(n, d, 0, s)) += g * av(n, d, r, 0);
                        }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batch normalization over (N,H,W) per channel.
// ---------------------------------------------------------------------------
template <typename Scalar>
struct BnParams {
    using Storage = typename Tensor<Scalar>::Storage;
    Tensor<Scalar> scale; // gamma, trainable
    Tensor<Scalar> shift; // beta, trainable
    Storage running_mean; // updated in train mode, never differentiated
    Storage running_var;

    BnParams() = default;
    explicit BnParams(Index channels)
        : scale(Tensor<Scalar>::full(Shape4{1, channels, 1, 1}, Scalar(1))),
          shift(Tensor<Scalar>::zeros(Shape4{1, channels, 1, 1})),
          running_mean(Storage::Zero(channels)),
          running_var(Storage::Ones(channels)) {}

    Index channels() const { return scale.shape().c; }
};

template <typename Scalar>
Tensor<Scalar> batchnorm(const Tensor<Scalar>& x, BnParams<Scalar>& params, Mode mode,
                         Scalar momentum = Scalar(0.1), Scalar eps = Scalar(1e-5)) {
    using Storage = typename Tensor<Scalar>::Storage;
    const Shape4& xs = x.shape();
    check(params.channels() == xs.c, "batchnorm: params sized for " +
                                         std::to_string(params.channels()) + " channels, input has " +
                                         std::to_string(xs.c));
    const Index m = xs.n * xs.h * xs.w;
    const Index plane = xs.h * xs.w;

    Storage mean(xs.c), inv_std(xs.c);
    if (mode == Mode::train) {
        for (Index c = 0; c < xs.c; ++c) {
            Scalar mu = 0;
            for (Index n = 0; n < xs.n; ++n) {
                const Scalar* p = x.array().data() + (n * xs.c + c) * plane;
                for (Index i = 0; i < plane; ++i) mu += p[i];
            }
            mu /= Scalar(m);
            Scalar var = 0;
            for (Index n = 0; n < xs.n; ++n) {
                const Scalar* p = x.array().data() + (n * xs.c + c) * plane;
                for (Index i = 0; i < plane; ++i) var += (p[i] - mu) * (p[i] - mu);
            }
            var /= Scalar(m); // biased, kept consistent with the running estimate
            mean(c) = mu;
            inv_std(c) = Scalar(1) / std::sqrt(var + eps);
            params.running_mean(c) = (Scalar(1) - momentum) * params.running_mean(c) + momentum * mu;
            params.running_var(c) = (Scalar(1) - momentum) * params.running_var(c) + momentum * var;
        }
    } else {
        for (Index c = 0; c < xs.c; ++c) {
            mean(c) = params.running_mean(c);
            inv_std(c) = Scalar(1) / std::sqrt(params.running_var(c) + eps);
        }
    }

    Tensor<Scalar> out(xs);
    auto& o = out.raw();
    for (Index n = 0; n < xs.n; ++n)
        for (Index c = 0; c < xs.c; ++c) {
            const Scalar g = params.scale.array()(c), b = params.shift.array()(c);
            const Scalar mu = mean(c), is = inv_std(c);
            const Scalar* p = x.array().data() + (n * xs.c + c) * plane;
            Scalar* q = o.data() + (n * xs.c + c) * plane;
            for (Index i = 0; i < plane; ++i) q[i] = g * (p[i] - mu) * is + b;
        }

    Tape<Scalar>* tape = tape_of<Scalar>({&x, &params.scale, &params.shift});
    detail::track(out, tape);
    if (tape) {
        const int xn = x.node, gn = params.scale.node, bn = params.shift.node, on = out.node;
        auto xsp = x.storage();
        auto gsp = params.scale.storage();
        const bool train = mode == Mode::train;
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go) return;
            for (Index c = 0; c < xs.c; ++c) {
                const Scalar mu = mean(c), is = inv_std(c), gam = (*gsp)(c);
                Scalar sum_gy = 0, sum_gy_xhat = 0;
                for (Index n = 0; n < xs.n; ++n) {
                    const Scalar* p = xsp->data() + (n * xs.c + c) * plane;
                    const Scalar* gy = go->data() + (n * xs.c + c) * plane;
                    for (Index i = 0; i < plane; ++i) {
                        sum_gy += gy[i];
                        sum_gy_xhat += gy[i] * (p[i] - mu) * is;
                    }
                }
                if (gn >= 0) t.grad_buf(gn)(c) += sum_gy_xhat;
                if (bn >= 0) t.grad_buf(bn)(c) += sum_gy;
                if (xn >= 0) {
                    auto& gx = t.grad_buf(xn);
                    const Scalar inv_m = Scalar(1) / Scalar(m);
                    for (Index n = 0; n < xs.n; ++n) {
                        const Scalar* p = xsp->data() + (n * xs.c + c) * plane;
                        const Scalar* gy = go->data() + (n * xs.c + c) * plane;
                        Scalar* gxp = gx.data() + (n * xs.c + c) * plane;
                        for (Index i = 0; i < plane; ++i) {
                            const Scalar xhat = (p[i] - mu) * is;
                            if (train)
                                gxp[i] += gam * is *
                                          (gy[i] - sum_gy * inv_m - xhat * sum_gy_xhat * inv_m);
                            else
                                gxp[i] += gam * is * gy[i];
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Activations. softmax_channels normalizes over the channel axis per pixel
// with max subtraction; everything else is elementwise.
// ---------------------------------------------------------------------------
template <typename Scalar>
Tensor<Scalar> activation(const Tensor<Scalar>& x, Act kind) {
    const Shape4& xs = x.shape();
    Tensor<Scalar> out(xs);
    auto& o = out.raw();
    const auto& in = x.array();

    if (kind == Act::softmax_channels) {
        check(xs.c >= 1, "softmax_channels: need at least one channel");
        const Index plane = xs.h * xs.w;
        for (Index n = 0; n < xs.n; ++n)
            for (Index i = 0; i < plane; ++i) {
                Scalar mx = in(x.offset(n, 0, 0, 0) + i);
                for (Index c = 1; c < xs.c; ++c)
                    mx = std::max(mx, in((n * xs.c + c) * plane + i));
                Scalar denom = 0;
                for (Index c = 0; c < xs.c; ++c) {
                    const Scalar e = std::exp(in((n * xs.c + c) * plane + i) - mx);
                    o((n * xs.c + c) * plane + i) = e;
                    denom += e;
                }
                for (Index c = 0; c < xs.c; ++c) o((n * xs.c + c) * plane + i) /= denom;
            }
    } else {
        for (Index i = 0; i < xs.numel(); ++i) {
            const Scalar v = in(i);
            switch (kind) {
                case Act::swish: o(i) = v * detail::stable_sigmoid(v); break;
                case Act::sigmoid: o(i) = detail::stable_sigmoid(v); break;
                case Act::relu: o(i) = v > Scalar(0) ? v : Scalar(0); break;
                default: break;
            }
        }
    }

    Tape<Scalar>* tape = tape_of<Scalar>({&x});
    detail::track(out, tape);
    if (tape) {
        const int xn = x.node, on = out.node;
        auto xsp = x.storage();
        auto osp = out.storage();
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go || xn < 0) return;
            auto& gx = t.grad_buf(xn);
            if (kind == Act::softmax_channels) {
                const Index plane = xs.h * xs.w;
                for (Index n = 0; n < xs.n; ++n)
                    for (Index i = 0; i < plane; ++i) {
                        Scalar dot = 0;
                        for (Index c = 0; c < xs.c; ++c) {
                            const Index idx = (n * xs.c + c) * plane + i;
                            dot += (*go)(idx) * (*osp)(idx);
                        }
                        for (Index c = 0; c < xs.c; ++c) {
                            const Index idx = (n * xs.c + c) * plane + i;
                            gx(idx) += (*osp)(idx) * ((*go)(idx)-dot);
                        }
                    }
            } else {
                for (Index i = 0; i < xs.numel(); ++i) {
                    const Scalar v = (*xsp)(i);
                    Scalar d = 0;
                    switch (kind) {
                        case Act::swish: {
                            const Scalar s = detail::stable_sigmoid(v);
                            d = s * (Scalar(1) + v * (Scalar(1) - s));
                            break;
                        }
                        case Act::sigmoid: {
                            const Scalar s = (*osp)(i);
                            d = s * (Scalar(1) - s);
                            break;
                        }
                        case Act::relu: d = v > Scalar(0) ? Scalar(1) : Scalar(0); break;
                        default: break;
                    }
                    gx(i) += (*go)(i)*d;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour 2x upsampling; backward sums each 2x2 block.
// ---------------------------------------------------------------------------
template <typename Scalar>
Tensor<Scalar> upsample_nearest2x(const Tensor<Scalar>& x) {
    const Shape4& xs = x.shape();
    Tensor<Scalar> out(Shape4{xs.n, xs.c, xs.h * 2, xs.w * 2});
    auto& o = out.raw();
    for (Index n = 0; n < xs.n; ++n)
        for (Index c = 0; c < xs.c; ++c)
            for (Index h = 0; h < xs.h; ++h)
                for (Index w = 0; w < xs.w; ++w) {
                    const Scalar v = x(n, c, h, w);
                    o(out.offset(n, c, 2 * h, 2 * w)) = v;
                    o(out.offset(n, c, 2 * h, 2 * w + 1)) = v;
                    o(out.offset(n, c, 2 * h + 1, 2 * w)) = v;
                    o(out.offset(n, c, 2 * h + 1, 2 * w + 1)) = v;
                }

    Tape<Scalar>* tape = tape_of<Scalar>({&x});
    detail::track(out, tape);
    if (tape) {
        const int xn = x.node, on = out.node;
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go || xn < 0) return;
            auto& gx = t.grad_buf(xn);
            Tensor<Scalar> gov(Shape4{xs.n, xs.c, xs.h * 2, xs.w * 2},
                               std::make_shared<typename Tensor<Scalar>::Storage>(*go));
            Tensor<Scalar> xref(xs); // offsets only
            for (Index n = 0; n < xs.n; ++n)
                for (Index c = 0; c < xs.c; ++c)
                    for (Index h = 0; h < xs.h; ++h)
                        for (Index w = 0; w < xs.w; ++w)
                            gx(xref.offset(n, c, h, w)) +=
                                gov(n, c, 2 * h, 2 * w) + gov(n, c, 2 * h, 2 * w + 1) +
                                gov(n, c, 2 * h + 1, 2 * w) + gov(n, c, 2 * h + 1, 2 * w + 1);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Axis permutation (generalized transpose). perm[i] names the input axis
// that lands on output axis i; backward applies the inverse permutation.
// ---------------------------------------------------------------------------
template <typename Scalar>
Tensor<Scalar> permute(const Tensor<Scalar>& x, std::array<int, 4> perm) {
    const Shape4& xs = x.shape();
    const std::array<Index, 4> ext{xs.n, xs.c, xs.h, xs.w};
    Shape4 os{ext[perm[0]], ext[perm[1]], ext[perm[2]], ext[perm[3]]};
    Tensor<Scalar> out(os);
    auto& o = out.raw();
    std::array<Index, 4> idx{};
    for (idx[0] = 0; idx[0] < ext[0]; ++idx[0])
        for (idx[1] = 0; idx[1] < ext[1]; ++idx[1])
            for (idx[2] = 0; idx[2] < ext[2]; ++idx[2])
                for (idx[3] = 0; idx[3] < ext[3]; ++idx[3])
                    o(out.offset(idx[perm[0]], idx[perm[1]], idx[perm[2]], idx[perm[3]])) =
                        x(idx[0], idx[1], idx[2], idx[3]);

    Tape<Scalar>* tape = tape_of<Scalar>({&x});
    detail::track(out, tape);
    if (tape) {
        std::array<int, 4> inv{};
        for (int i = 0; i < 4; ++i) inv[perm[i]] = i;
        const int xn = x.node, on = out.node;
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go || xn < 0) return;
            Tensor<Scalar> gov(os, std::make_shared<typename Tensor<Scalar>::Storage>(*go));
            auto& gx = t.grad_buf(xn);
            Tensor<Scalar> xref(xs);
            std::array<Index, 4> oext{os.n, os.c, os.h, os.w};
            std::array<Index, 4> j{};
            for (j[0] = 0; j[0] < oext[0]; ++j[0])
                for (j[1] = 0; j[1] < oext[1]; ++j[1])
                    for (j[2] = 0; j[2] < oext[2]; ++j[2])
                        for (j[3] = 0; j[3] < oext[3]; ++j[3])
                            gx(xref.offset(j[inv[0]], j[inv[1]], j[inv[2]], j[inv[3]])) +=
                                gov(j[0], j[1], j[2], j[3]);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Channel concatenation; backward slices the gradient back apart.
// ---------------------------------------------------------------------------
template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<Tensor<Scalar>>& xs) {
    check(!xs.empty(), "concat_channels: no inputs");
    const Shape4& s0 = xs.front().shape();
    Index ctot = 0;
    for (const auto& t : xs) {
        const Shape4& s = t.shape();
        check(s.n == s0.n && s.h == s0.h && s.w == s0.w,
              "concat_channels: spatial/batch mismatch " + s.str() + " vs " + s0.str());
        ctot += s.c;
    }
    Tensor<Scalar> out(Shape4{s0.n, ctot, s0.h, s0.w});
    auto& o = out.raw();
    const Index plane = s0.h * s0.w;
    for (Index n = 0; n < s0.n; ++n) {
        Index coff = 0;
        for (const auto& t : xs) {
            const Index tc = t.shape().c;
            std::copy_n(t.array().data() + n * tc * plane, tc * plane,
                        o.data() + (n * ctot + coff) * plane);
            coff += tc;
        }
    }

    std::vector<const Tensor<Scalar>*> ptrs;
    for (const auto& t : xs) ptrs.push_back(&t);
    Tape<Scalar>* tape = nullptr;
    for (const auto* p : ptrs)
        if (p->tape) { tape = p->tape; break; }
    detail::track(out, tape);
    if (tape) {
        std::vector<int> in_nodes;
        std::vector<Index> in_ch;
        for (const auto& t : xs) {
            in_nodes.push_back(t.node);
            in_ch.push_back(t.shape().c);
        }
        const int on = out.node;
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go) return;
            for (Index n = 0; n < s0.n; ++n) {
                Index coff = 0;
                for (size_t k = 0; k < in_nodes.size(); ++k) {
                    const Index tc = in_ch[k];
                    if (in_nodes[k] >= 0) {
                        auto& gi = t.grad_buf(in_nodes[k]);
                        for (Index i = 0; i < tc * plane; ++i)
                            gi(n * tc * plane + i) += (*go)((n * ctot + coff) * plane + i);
                    }
                    coff += tc;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise add / multiply and full-sum reduction.
// ---------------------------------------------------------------------------
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    check(a.shape() == b.shape(), "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor<Scalar> out(a.shape());
    out.raw() = a.array() + b.array();
    Tape<Scalar>* tape = tape_of<Scalar>({&a, &b});
    detail::track(out, tape);
    if (tape) {
        const int an = a.node, bn = b.node, on = out.node;
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go) return;
            if (an >= 0) t.grad_buf(an) += *go;
            if (bn >= 0) t.grad_buf(bn) += *go;
        });
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    check(a.shape() == b.shape(), "mul: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor<Scalar> out(a.shape());
    out.raw() = a.array() * b.array();
    Tape<Scalar>* tape = tape_of<Scalar>({&a, &b});
    detail::track(out, tape);
    if (tape) {
        const int an = a.node, bn = b.node, on = out.node;
        auto asp = a.storage();
        auto bsp = b.storage();
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go) return;
            if (an >= 0) t.grad_buf(an) += *go * *bsp;
            if (bn >= 0) t.grad_buf(bn) += *go * *asp;
        });
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> sum_all(const Tensor<Scalar>& x) {
    Tensor<Scalar> out(Shape4{1, 1, 1, 1});
    out.raw()(0) = x.array().sum();
    Tape<Scalar>* tape = tape_of<Scalar>({&x});
    detail::track(out, tape);
    if (tape) {
        const int xn = x.node, on = out.node;
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go || xn < 0) return;
            t.grad_buf(xn) += (*go)(0);
        });
    }
    return out;
}

} // namespace rganet
