#pragma once

#include "rganet/blocks.hpp"
#include "rganet/engine/serialize.hpp"
#include "rganet/gam.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace rganet {
namespace model {

enum class VuMode { nearest, deconv };

struct ModelConfig {
    Index scales = 5;
    Index k = 15;
    std::vector<Index> ess_sizes = {3, 3, 6, 12, 24};
    Index s = 8; // bottleneck expansion scaler
    std::set<Index> blocked_highways; // subset of {1..scales-1}
    bool with_du = true;
    Index num_classes = 3;
    Index input_h = 480;
    Index input_w = 640;
    VuMode vu_mode = VuMode::nearest;
    bool decoder_ess = true; // the two ESS refinement stages after the finest VUs
    Index decoder_ess_n = 3;

    void validate() const {
        check(scales >= 1, "config: scales must be >= 1");
        check(k >= 1, "config: k must be >= 1");
        check(s >= 1, "config: s must be >= 1");
        check(num_classes >= 2, "config: num_classes must be >= 2");
        check(static_cast<Index>(ess_sizes.size()) == scales,
              "config: ess_sizes has " + std::to_string(ess_sizes.size()) + " entries, expected " +
                  std::to_string(scales));
        for (Index n : ess_sizes) check(n >= 1, "config: ess sizes must be >= 1");
        const Index div = Index(1) << scales;
        check(input_h % div == 0 && input_w % div == 0,
              "config: input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                  " not divisible by 2^scales = " + std::to_string(div));
        for (Index b : blocked_highways)
            check(b >= 1 && b <= scales - 1,
                  "config: blocked highway " + std::to_string(b) + " outside {1.." +
                      std::to_string(scales - 1) + "}");
    }

    bool highway_blocked(Index i) const { return blocked_highways.count(i) != 0; }

    /// Preset B<m>: block the m deepest highways (B1 blocks H_{scales-1}).
    static std::set<Index> blocked_preset(Index scales, Index m) {
        std::set<Index> out;
        for (Index j = 0; j < m && scales - 1 - j >= 1; ++j) out.insert(scales - 1 - j);
        return out;
    }

    Index ib_h(Index i) const { return input_h >> i; } // i in 1..scales
    Index ib_w(Index i) const { return input_w >> i; }
};

/// One encoder stage: stride-2 stem, dense ESS stack, attention residual,
/// 1x1 squeeze back to k channels.
template <typename Scalar>
struct IbParams {
    ConvParams<Scalar> stem; // 3x3 stride 2, no bias
    BnParams<Scalar> stem_bn;
    blocks::EssParams<Scalar> ess;
    gam::GamParams<Scalar> gam;
    ConvParams<Scalar> squeeze; // 1x1, (n+1)k -> k, bias

    void collect(const std::string& prefix, ParamLists<Scalar>& out) {
        stem.collect(prefix + ".stem", out);
        collect_bn(stem_bn, prefix + ".stem_bn", out);
        ess.collect(prefix + ".ess", out);
        gam.collect(prefix + ".gam", out);
        squeeze.collect(prefix + ".squeeze", out);
    }
};

/// One decoder stage: the vote & upsample block for highway i, optionally
/// followed by an ESS refinement squeezed back to k channels.
template <typename Scalar>
struct DecoderStage {
    Index highway = 0; // which IB output this stage merges (0 = none possible)
    blocks::VuParams<Scalar> vu;
    bool has_ess = false;
    blocks::EssParams<Scalar> ess;
    ConvParams<Scalar> ess_squeeze;

    void collect(ParamLists<Scalar>& out) {
        vu.collect("vu" + std::to_string(highway), out);
        if (has_ess) {
            const std::string p = "dec" + std::to_string(highway);
            ess.collect(p + ".ess", out);
            ess_squeeze.collect(p + ".squeeze", out);
        }
    }
};

template <typename Scalar>
struct RganetModel {
    ModelConfig cfg;
    std::vector<IbParams<Scalar>> ibs;          // index i-1 holds IB i
    std::vector<DecoderStage<Scalar>> decoder;  // coarse to fine: VU_{scales-1} .. VU_1
    ConvParams<Scalar> head;                    // 1x1 -> num_classes, bias
    gam::GamParams<Scalar> du_gam;              // softmax attention over class maps

    ParamLists<Scalar> params() {
        ParamLists<Scalar> out;
        for (size_t i = 0; i < ibs.size(); ++i)
            ibs[i].collect("ib" + std::to_string(i + 1), out);
        for (auto& d : decoder) d.collect(out);
        head.collect("du.head", out);
        if (cfg.with_du) du_gam.collect("du.gam", out);
        return out;
    }
};

/// Deterministic construction: the same config and seed always produce
/// bit-identical parameters.
template <typename Scalar>
RganetModel<Scalar> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    RganetModel<Scalar> m;
    m.cfg = cfg;

    Index c_prev = 3;
    for (Index i = 1; i <= cfg.scales; ++i) {
        IbParams<Scalar> ib;
        ib.stem = ConvParams<Scalar>(cfg.k, c_prev, 3, 3, false, rng);
        ib.stem_bn = BnParams<Scalar>(cfg.k);
        ib.ess = blocks::EssParams<Scalar>(cfg.ess_sizes[static_cast<size_t>(i - 1)], cfg.k, cfg.s, rng);
        const Index c_ess = ib.ess.out_channels();
        ib.gam = gam::GamParams<Scalar>(cfg.ib_h(i), cfg.ib_w(i), c_ess, Act::sigmoid, rng);
        ib.squeeze = ConvParams<Scalar>(cfg.k, c_ess, 1, 1, true, rng);
        m.ibs.push_back(std::move(ib));
        c_prev = cfg.k;
    }

    // Decoder trunk: IB-n enters through a plain 2x nearest lift, then each
    // VU_i merges highway i at its native resolution. The two finest stages
    // append an ESS refinement squeezed back to k channels; VU_1's trailing
    // upsample is the final lift to full resolution.
    const bool deconv = cfg.vu_mode == VuMode::deconv;
    for (Index i = cfg.scales - 1; i >= 1; --i) {
        DecoderStage<Scalar> st;
        st.highway = i;
        const Index c_in = cfg.highway_blocked(i) ? cfg.k : 2 * cfg.k;
        st.vu = blocks::VuParams<Scalar>(c_in, cfg.k, deconv, rng);
        st.has_ess = cfg.decoder_ess && i <= 2;
        if (st.has_ess) {
            st.ess = blocks::EssParams<Scalar>(cfg.decoder_ess_n, cfg.k, cfg.s, rng);
            st.ess_squeeze = ConvParams<Scalar>(cfg.k, st.ess.out_channels(), 1, 1, true, rng);
        }
        m.decoder.push_back(std::move(st));
    }

    const Index head_in = cfg.with_du ? cfg.k + 3 : cfg.k;
    m.head = ConvParams<Scalar>(cfg.num_classes, head_in, 1, 1, true, rng);
    if (cfg.with_du)
        m.du_gam = gam::GamParams<Scalar>(cfg.input_h, cfg.input_w, cfg.num_classes,
                                          Act::softmax_channels, rng);
    return m;
}

/// Full forward pass: per-pixel class probabilities, shape
/// (N, num_classes, H, W) with channel sums of 1.
template <typename Scalar>
Tensor<Scalar> forward(RganetModel<Scalar>& m, const Tensor<Scalar>& image, Mode mode) {
    const Shape4& s = image.shape();
    check(s.c == 3, "forward: expected a 3-channel image, got " + s.str());
    check(s.h == m.cfg.input_h && s.w == m.cfg.input_w,
          "forward: model built for " + std::to_string(m.cfg.input_h) + "x" +
              std::to_string(m.cfg.input_w) + ", image is " + std::to_string(s.h) + "x" +
              std::to_string(s.w));

    std::vector<Tensor<Scalar>> highway(static_cast<size_t>(m.cfg.scales) + 1);
    Tensor<Scalar> t = image;
    for (Index i = 1; i <= m.cfg.scales; ++i) {
        IbParams<Scalar>& ib = m.ibs[static_cast<size_t>(i - 1)];
        t = apply_conv(t, ib.stem, 2, 1);
        t = batchnorm(t, ib.stem_bn, mode);
        t = activation(t, Act::swish);
        t = blocks::ess_forward(t, ib.ess, mode);
        gam::GamOut<Scalar> att = gam::gam_forward(t, ib.gam, mode);
        t = gam::gam_residual(t, att.lambda);
        t = apply_conv(t, ib.squeeze, 1, 0);
        highway[static_cast<size_t>(i)] = t;
    }

    t = upsample_nearest2x(t); // entry lift to highway_{scales-1} resolution
    for (auto& st : m.decoder) {
        const Tensor<Scalar>* hw =
            m.cfg.highway_blocked(st.highway) ? nullptr : &highway[static_cast<size_t>(st.highway)];
        t = blocks::vu_forward(t, hw, st.vu);
        if (st.has_ess) {
            t = blocks::ess_forward(t, st.ess, mode);
            t = apply_conv(t, st.ess_squeeze, 1, 0);
        }
    }

    if (m.cfg.with_du) {
        t = concat_channels<Scalar>({t, image});
        t = apply_conv(t, m.head, 1, 0);
        return gam::gam_forward(t, m.du_gam, mode).lambda;
    }
    t = apply_conv(t, m.head, 1, 0);
    return activation(t, Act::softmax_channels);
}

// ---------------------------------------------------------------------------
// Config text form (used for the checkpoint header).
// ---------------------------------------------------------------------------

inline std::string config_to_text(const ModelConfig& c) {
    std::ostringstream os;
    os << "scales = " << c.scales << "\n";
    os << "k = " << c.k << "\n";
    os << "s = " << c.s << "\n";
    os << "ess_sizes = ";
    for (size_t i = 0; i < c.ess_sizes.size(); ++i) os << (i ? "," : "") << c.ess_sizes[i];
    os << "\n";
    os << "blocked_highways = ";
    bool first = true;
    for (Index b : c.blocked_highways) {
        os << (first ? "" : ",") << b;
        first = false;
    }
    os << "\n";
    os << "with_du = " << (c.with_du ? 1 : 0) << "\n";
    os << "num_classes = " << c.num_classes << "\n";
    os << "input_h = " << c.input_h << "\n";
    os << "input_w = " << c.input_w << "\n";
    os << "vu_mode = " << (c.vu_mode == VuMode::deconv ? "deconv" : "nearest") << "\n";
    os << "decoder_ess = " << (c.decoder_ess ? 1 : 0) << "\n";
    os << "decoder_ess_n = " << c.decoder_ess_n << "\n";
    return os.str();
}

inline std::vector<Index> parse_index_list(const std::string& s) {
    std::vector<Index> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        out.push_back(std::stoll(item));
    }
    return out;
}

inline ModelConfig config_from_text(const std::string& text) {
    ModelConfig c;
    c.ess_sizes.clear();
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string v) {
            const auto a = v.find_first_not_of(" \t\r");
            const auto b = v.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : v.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "scales") c.scales = std::stoll(val);
        else if (key == "k") c.k = std::stoll(val);
        else if (key == "s") c.s = std::stoll(val);
        else if (key == "ess_sizes") c.ess_sizes = parse_index_list(val);
        else if (key == "blocked_highways") {
            for (Index b : parse_index_list(val)) c.blocked_highways.insert(b);
        } else if (key == "with_du") c.with_du = val == "1" || val == "true";
        else if (key == "num_classes") c.num_classes = std::stoll(val);
        else if (key == "input_h") c.input_h = std::stoll(val);
        else if (key == "input_w") c.input_w = std::stoll(val);
        else if (key == "vu_mode") c.vu_mode = val == "deconv" ? VuMode::deconv : VuMode::nearest;
        else if (key == "decoder_ess") c.decoder_ess = val == "1" || val == "true";
        else if (key == "decoder_ess_n") c.decoder_ess_n = std::stoll(val);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Checkpoints: every trainable tensor and BN running statistic, plus the
// config header under "__config__".
// ---------------------------------------------------------------------------

template <typename Scalar>
void save_checkpoint(RganetModel<Scalar>& m, const std::string& path) {
    ParamContainer c;
    ParamLists<Scalar> lists = m.params();
    for (const auto& p : lists.trainable) c.put_tensor(p.name, *p.value);
    for (const auto& st : lists.state) c.put_vector(st.name, *st.value);
    c.put_text("__config__", config_to_text(m.cfg));
    c.save(path);
}

template <typename Scalar>
RganetModel<Scalar> load_checkpoint(const std::string& path) {
    ParamContainer c = ParamContainer::load(path);
    ModelConfig cfg = config_from_text(c.get_text("__config__"));
    RganetModel<Scalar> m = build_model<Scalar>(cfg, 0);
    ParamLists<Scalar> lists = m.params();
    for (auto& p : lists.trainable) {
        Tensor<Scalar> loaded = c.get_tensor<Scalar>(p.name);
        check(loaded.shape() == p.value->shape(),
              "checkpoint entry '" + p.name + "' has shape " + loaded.shape().str() +
                  ", model expects " + p.value->shape().str());
        *p.value = loaded;
    }
    for (auto& st : lists.state) *st.value = c.get_vector<Scalar>(st.name);
    return m;
}

} // namespace model
} // namespace rganet
