#pragma once

#include "rganet/model.hpp"

namespace rganet {
namespace model {

struct ProfileRow {
    std::string name;
    Index params = 0;   // trainable scalars, enumerated from the live tensors
    Index flops = 0;    // one forward pass at batch 1; 2 FLOPs per MAC
};

struct Profile {
    std::vector<ProfileRow> rows;
    Index total_params = 0;
    Index total_flops = 0;

    const ProfileRow* find(const std::string& name) const {
        for (const auto& r : rows)
            if (r.name == name) return &r;
        return nullptr;
    }
};

namespace detail {

inline Index conv_flops(Index oh, Index ow, Index c_out, Index c_in, Index kh, Index kw, bool bias) {
    Index f = 2 * oh * ow * c_out * c_in * kh * kw;
    if (bias) f += oh * ow * c_out;
    return f;
}

inline Index bn_flops(Index c, Index h, Index w) { return 2 * c * h * w; }

constexpr Index kSwish = 5, kSigmoid = 4, kSoftmax = 6;

template <typename Scalar>
Index tensor_params(const ConvParams<Scalar>& c) {
    return c.weight.numel() + (c.has_bias ? c.bias.numel() : 0);
}

template <typename Scalar>
Index bn_params(const BnParams<Scalar>& b) {
    return b.scale.numel() + b.shift.numel();
}

template <typename Scalar>
Index ess_params(blocks::EssParams<Scalar>& e) {
    Index p = 0;
    for (auto& bnk : e.bottlenecks)
        p += tensor_params(bnk.expand) + bn_params(bnk.bn_expand) + tensor_params(bnk.squeeze) +
             bn_params(bnk.bn_squeeze);
    return p;
}

template <typename Scalar>
Index ess_flops(const blocks::EssParams<Scalar>& e, Index h, Index w) {
    Index f = 0;
    const Index sk = e.s * e.k;
    for (Index j = 1; j <= e.n; ++j) {
        f += conv_flops(h, w, sk, j * e.k, 1, 1, false);
        f += bn_flops(sk, h, w) + kSwish * sk * h * w;
        f += conv_flops(h, w, e.k, sk, 3, 3, false);
        f += bn_flops(e.k, h, w) + kSwish * e.k * h * w;
    }
    return f;
}

template <typename Scalar>
Index gam_params(gam::GamParams<Scalar>& g) {
    return g.depthwise_param_count() + bn_params(g.bn) + tensor_params(g.fuse);
}

inline Index gam_flops(Index h, Index w, Index c, Act out_map, bool residual) {
    const Index chw = c * h * w;
    Index f = 2 * 4 * chw;        // four long-kernel branches
    f += 2 * 2 * chw;             // two banks of per-slice outer products
    f += bn_flops(2 * c, h, w);
    f += conv_flops(h, w, c, 2 * c, 1, 1, true);
    f += kSwish * chw;
    f += (out_map == Act::softmax_channels ? kSoftmax : kSigmoid) * chw;
    f += chw;                     // lambda .* x
    if (residual) f += 2 * chw;   // (1 + lambda) .* x
    return f;
}

} // namespace detail

/// Parameter and FLOPs accounting for one forward pass at the configured
/// input size. Parameter counts are exact enumerations of the live tensors;
/// FLOPs count 2 per multiply-accumulate plus elementwise op costs.
template <typename Scalar>
Profile count_params_flops(RganetModel<Scalar>& m) {
    using namespace detail;
    Profile out;
    const ModelConfig& cfg = m.cfg;
    auto push = [&out](const std::string& name, Index params, Index flops) {
        out.rows.push_back({name, params, flops});
        out.total_params += params;
        out.total_flops += flops;
    };

    Index c_prev = 3;
    for (Index i = 1; i <= cfg.scales; ++i) {
        IbParams<Scalar>& ib = m.ibs[static_cast<size_t>(i - 1)];
        const Index h = cfg.ib_h(i), w = cfg.ib_w(i);
        const std::string p = "ib" + std::to_string(i);
        push(p + ".stem", tensor_params(ib.stem) + bn_params(ib.stem_bn),
             conv_flops(h, w, cfg.k, c_prev, 3, 3, false) + bn_flops(cfg.k, h, w) +
                 kSwish * cfg.k * h * w);
        push(p + ".ess", ess_params(ib.ess), ess_flops(ib.ess, h, w));
        const Index c_ess = ib.ess.out_channels();
        push(p + ".gam", gam_params(ib.gam), gam_flops(h, w, c_ess, Act::sigmoid, true));
        push(p + ".squeeze", tensor_params(ib.squeeze),
             conv_flops(h, w, cfg.k, c_ess, 1, 1, true));
        c_prev = cfg.k;
    }

    // Decoder: entry lift, then one VU (plus optional ESS refinement) per
    // highway, finest stage ending at full resolution.
    {
        const Index h = cfg.ib_h(cfg.scales - 1), w = cfg.ib_w(cfg.scales - 1);
        push("decoder.lift", 0, cfg.k * h * w);
    }
    for (auto& st : m.decoder) {
        const Index h = cfg.ib_h(st.highway), w = cfg.ib_w(st.highway); // resolution at the concat
        const Index c_in = cfg.highway_blocked(st.highway) ? cfg.k : 2 * cfg.k;
        Index f = conv_flops(h, w, cfg.k, c_in, 1, 1, false);
        Index pr = tensor_params(st.vu.vote);
        if (st.vu.use_deconv) {
            pr += st.vu.deconv.numel();
            f += 2 * cfg.k * cfg.k * 4 * h * w;
        } else {
            f += cfg.k * (2 * h) * (2 * w);
        }
        push("vu" + std::to_string(st.highway), pr, f);
        if (st.has_ess) {
            const Index eh = 2 * h, ew = 2 * w; // refinement runs after the upsample
            push("dec" + std::to_string(st.highway),
                 ess_params(st.ess) + tensor_params(st.ess_squeeze),
                 ess_flops(st.ess, eh, ew) +
                     conv_flops(eh, ew, cfg.k, st.ess.out_channels(), 1, 1, true));
        }
    }

    const Index H = cfg.input_h, W = cfg.input_w;
    const Index head_in = cfg.with_du ? cfg.k + 3 : cfg.k;
    push("du.head", tensor_params(m.head), conv_flops(H, W, cfg.num_classes, head_in, 1, 1, true));
    if (cfg.with_du)
        push("du.gam", gam_params(m.du_gam),
             gam_flops(H, W, cfg.num_classes, Act::softmax_channels, false));
    else
        push("du.softmax", 0, kSoftmax * cfg.num_classes * H * W);

    return out;
}

} // namespace model
} // namespace rganet
