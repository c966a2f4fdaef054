#pragma once

#include "rganet/engine/params.hpp"
#include "rganet/mask.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace rganet {
namespace optim {

enum class LossKind { focal, ce };

struct LossConfig {
    LossKind kind = LossKind::focal;
    double gamma = 1.3;
    std::vector<double> alphas = {0.25, 0.25, 0.5};

    void validate() const {
        check(gamma > 0, "loss config: gamma must be positive");
        double sum = 0;
        for (double a : alphas) {
            check(a >= 0, "loss config: class weights must be non-negative");
            sum += a;
        }
        check(std::abs(sum - 1.0) <= 1e-9,
              "loss config: class weights sum to " + std::to_string(sum) + ", expected 1");
    }
};

namespace detail {

constexpr double kLogClamp = 1e-12;

/// Shared core of the focal and cross-entropy losses: mean over all pixels
/// of -alpha_c * (1-y)^gamma * log(y) with the target-class probability y
/// (gamma = 0 recovers plain weighted cross-entropy). Gradients flow only
/// into the target channel of `probs`.
template <typename Scalar>
Tensor<Scalar> pixel_loss(const Tensor<Scalar>& probs, const std::vector<SegMask>& targets,
                          const LossConfig& cfg, bool focal) {
    cfg.validate();
    const Shape4& s = probs.shape();
    check(static_cast<Index>(targets.size()) == s.n,
          "loss: got " + std::to_string(targets.size()) + " target masks for batch " +
              std::to_string(s.n));
    check(static_cast<Index>(cfg.alphas.size()) >= s.c,
          "loss: " + std::to_string(cfg.alphas.size()) + " class weights for " +
              std::to_string(s.c) + " channels");
    for (const auto& t : targets)
        check(t.h == s.h && t.w == s.w, "loss: mask extents do not match predictions");

    const double gamma = focal ? cfg.gamma : 0.0;
    const Index m = s.n * s.h * s.w;
    double total = 0;
    for (Index n = 0; n < s.n; ++n)
        for (Index y = 0; y < s.h; ++y)
            for (Index x = 0; x < s.w; ++x) {
                const int cls = targets[static_cast<size_t>(n)].at(y, x);
                check(cls < s.c, "loss: class index " + std::to_string(cls) +
                                     " out of range for " + std::to_string(s.c) + " channels");
                const double p = static_cast<double>(probs(n, cls, y, x));
                const double ph = std::max(p, kLogClamp);
                const double q = std::max(1.0 - p, 0.0);
                const double w = focal ? std::pow(q, gamma) : 1.0;
                total -= cfg.alphas[static_cast<size_t>(cls)] * w * std::log(ph);
            }

    Tensor<Scalar> out(Shape4{1, 1, 1, 1});
    out.raw()(0) = static_cast<Scalar>(total / static_cast<double>(m));

    Tape<Scalar>* tape = tape_of<Scalar>({&probs});
    rganet::detail::track(out, tape);
    if (tape) {
        const int pn = probs.node, on = out.node;
        auto psp = probs.storage();
        auto tgt = targets; // copy; masks are small
        tape->record([=](Tape<Scalar>& t) {
            const auto* go = t.maybe_grad(on);
            if (!go || pn < 0) return;
            const double g0 = static_cast<double>((*go)(0)) / static_cast<double>(m);
            auto& gp = t.grad_buf(pn);
            Tensor<Scalar> pv(s, psp);
            for (Index n = 0; n < s.n; ++n)
                for (Index y = 0; y < s.h; ++y)
                    for (Index x = 0; x < s.w; ++x) {
                        const int cls = tgt[static_cast<size_t>(n)].at(y, x);
                        const double a = cfg.alphas[static_cast<size_t>(cls)];
                        const double p = static_cast<double>(pv(n, cls, y, x));
                        const double ph = std::max(p, kLogClamp);
                        const double q = std::max(1.0 - p, 0.0);
                        double d;
                        if (focal) {
                            const double qg1 = q > 0.0 ? std::pow(q, gamma - 1.0) : 0.0;
                            d = a * gamma * qg1 * std::log(ph);
                            if (p > kLogClamp) d -= a * qg1 * q / ph;
                        } else {
                            d = p > kLogClamp ? -a / ph : 0.0;
                        }
                        gp(pv.offset(n, cls, y, x)) += static_cast<Scalar>(g0 * d);
                    }
        });
    }
    return out;
}

} // namespace detail

template <typename Scalar>
Tensor<Scalar> focal_loss(const Tensor<Scalar>& probs, const std::vector<SegMask>& targets,
                          const LossConfig& cfg) {
    return detail::pixel_loss(probs, targets, cfg, true);
}

template <typename Scalar>
Tensor<Scalar> ce_loss(const Tensor<Scalar>& probs, const std::vector<SegMask>& targets,
                       const LossConfig& cfg) {
    return detail::pixel_loss(probs, targets, cfg, false);
}

template <typename Scalar>
Tensor<Scalar> compute_loss(const Tensor<Scalar>& probs, const std::vector<SegMask>& targets,
                            const LossConfig& cfg) {
    return cfg.kind == LossKind::focal ? focal_loss(probs, targets, cfg)
                                       : ce_loss(probs, targets, cfg);
}

// ---------------------------------------------------------------------------
// AdamW with the AMSGrad maximum on the second moment. Weight decay is
// decoupled from the gradient path; bias correction is applied to the
// running maximum.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct AdamWConfig {
    Scalar lr = Scalar(1.5e-4);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar eps = Scalar(1e-8);
    Scalar weight_decay = Scalar(0);
};

template <typename Scalar>
class AdamW {
public:
    using Storage = typename Tensor<Scalar>::Storage;

    struct Moments {
        Storage m, v, v_max;
    };

    explicit AdamW(AdamWConfig<Scalar> cfg = {}) : cfg_(cfg) {}

    const AdamWConfig<Scalar>& config() const { return cfg_; }
    std::size_t step_count() const { return step_; }

    const Moments* moments(const std::string& name) const {
        auto it = state_.find(name);
        return it == state_.end() ? nullptr : &it->second;
    }

    void step(std::vector<ParamRef<Scalar>>& params, const std::vector<const Storage*>& grads) {
        check(params.size() == grads.size(), "optimizer: params/grads count mismatch");
        ++step_;
        const Scalar bc1 = Scalar(1) - std::pow(cfg_.beta1, Scalar(step_));
        const Scalar bc2 = Scalar(1) - std::pow(cfg_.beta2, Scalar(step_));
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor<Scalar>& theta = *params[i].value;
            const Storage& g = *grads[i];
            check(g.size() == theta.numel(),
                  "optimizer: gradient size mismatch for '" + params[i].name + "'");
            Moments& mo = state_[params[i].name];
            if (mo.m.size() == 0) {
                mo.m = Storage::Zero(g.size());
                mo.v = Storage::Zero(g.size());
                mo.v_max = Storage::Zero(g.size());
            }
            mo.m = cfg_.beta1 * mo.m + (Scalar(1) - cfg_.beta1) * g;
            mo.v = cfg_.beta2 * mo.v + (Scalar(1) - cfg_.beta2) * g.square();
            mo.v_max = mo.v_max.max(mo.v);

            Tensor<Scalar> updated(theta.shape());
            updated.raw() = theta.array() -
                            cfg_.lr * (mo.m / bc1) / ((mo.v_max / bc2).sqrt() + cfg_.eps) -
                            cfg_.lr * cfg_.weight_decay * theta.array();
            theta = updated;
        }
    }

private:
    AdamWConfig<Scalar> cfg_;
    std::map<std::string, Moments> state_;
    std::size_t step_ = 0;
};

} // namespace optim
} // namespace rganet
