#pragma once

#include "rganet/mask.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace rganet {
namespace metrics {

constexpr double kEps = 1e-31;

/// Pixel counts for one class treated as positive.
struct Confusion {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    bool evidential() const { return tp + fp + fn > 0; }

    Confusion& operator+=(const Confusion& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
};

inline Confusion confusion(const SegMask& pred, const SegMask& gt, int positive_class) {
    if (!pred.same_shape(gt))
        throw ShapeError("confusion: mask shapes differ (" + std::to_string(pred.h) + "x" +
                         std::to_string(pred.w) + " vs " + std::to_string(gt.h) + "x" +
                         std::to_string(gt.w) + ")");
    Confusion c;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        const bool p = pred.v[i] == positive_class;
        const bool g = gt.v[i] == positive_class;
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

/// F-beta score: (1+b^2)*TP / (b^2*(TP+FN) + TP + FP + eps).
/// Exactly zero whenever TP is zero.
inline double fbeta(const Confusion& c, double beta, double eps = kEps) {
    const double b2 = beta * beta;
    const double tp = static_cast<double>(c.tp);
    return (1.0 + b2) * tp /
           (b2 * (tp + static_cast<double>(c.fn)) + tp + static_cast<double>(c.fp) + eps);
}

struct ClassicMetrics {
    double accuracy = 0, precision = 0, recall = 0, jaccard = 0, dice = 0, mcc = 0;
};

inline ClassicMetrics classic_metrics(const Confusion& c, double eps = kEps) {
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
    ClassicMetrics m;
    m.accuracy = (tp + tn) / (tp + tn + fp + fn + eps);
    m.precision = tp / (tp + fp + eps);
    m.recall = tp / (tp + fn + eps);
    m.jaccard = tp / (tp + fp + fn + eps);
    m.dice = 2.0 * tp / (2.0 * tp + fp + fn + eps);
    m.mcc = (tp * tn - fp * fn) /
            (std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)) + eps);
    return m;
}

/// Grid/regulator configuration. Construction enforces the validity
/// interval T/(1+T) < C_m < (F_m+T)/(1+T) with T = (F_m/(1-F_m))^3, which
/// guarantees the zero-side intercept B lands strictly inside (0, F_m).
class MgridConfig {
public:
    static MgridConfig make(double beta = 0.5, Index cell_h = 12, Index cell_w = 12,
                            double f_m = 0.5, double c_m = 0.525) {
        if (!(beta > 0)) throw std::invalid_argument("mgrid config: beta must be positive");
        if (cell_h < 1 || cell_w < 1)
            throw std::invalid_argument("mgrid config: cell extents must be >= 1 pixel");
        if (!(f_m > 0.0 && f_m < 1.0))
            throw std::invalid_argument("mgrid config: F_m must lie in (0,1), got " +
                                        std::to_string(f_m));
        const double t = std::pow(f_m / (1.0 - f_m), 3.0);
        const double lo = t / (1.0 + t);
        const double hi = (f_m + t) / (1.0 + t);
        if (!(c_m > lo && c_m < hi))
            throw std::invalid_argument("mgrid config: C_m=" + std::to_string(c_m) +
                                        " outside the valid interval (" + std::to_string(lo) +
                                        ", " + std::to_string(hi) + ") for F_m=" +
                                        std::to_string(f_m));
        MgridConfig c;
        c.beta_ = beta;
        c.cell_h_ = cell_h;
        c.cell_w_ = cell_w;
        c.f_m_ = f_m;
        c.c_m_ = c_m;
        c.s_coef_ = (1.0 - c_m) / std::pow(1.0 - f_m, 3.0);
        c.t_ = t;
        c.b_ = c_m * (1.0 + t) - t;
        return c;
    }

    double beta() const { return beta_; }
    Index cell_h() const { return cell_h_; }
    Index cell_w() const { return cell_w_; }
    double f_m() const { return f_m_; }
    double c_m() const { return c_m_; }
    double s_coef() const { return s_coef_; }
    double t() const { return t_; }
    double b() const { return b_; } // limit of the regulator as F -> 0+

private:
    MgridConfig() = default;
    double beta_ = 0.5, f_m_ = 0.5, c_m_ = 0.525, s_coef_ = 3.8, t_ = 1.0, b_ = 0.05;
    Index cell_h_ = 12, cell_w_ = 12;
};

/// Cubic regulator: 0 at F=0, else S*(F-F_m)^3 + C_m.
inline double regulator(double f, const MgridConfig& cfg) {
    if (f == 0.0) return 0.0;
    const double d = f - cfg.f_m();
    return cfg.s_coef() * d * d * d + cfg.c_m();
}

/// Mean-grid score: partition into cell_h x cell_w cells (edge cells
/// truncated, weighted equally), regulate the F-beta of every evidential
/// cell, and average. No evidential cell anywhere -> nullopt, so callers
/// can skip the image when averaging over a dataset.
inline std::optional<double> mgrid(const SegMask& pred, const SegMask& gt, int positive_class,
                                   const MgridConfig& cfg) {
    if (!pred.same_shape(gt))
        throw ShapeError("mgrid: mask shapes differ");
    double sum = 0.0;
    Index cells = 0;
    for (Index y0 = 0; y0 < gt.h; y0 += cfg.cell_h())
        for (Index x0 = 0; x0 < gt.w; x0 += cfg.cell_w()) {
            Confusion c;
            const Index y1 = std::min(gt.h, y0 + cfg.cell_h());
            const Index x1 = std::min(gt.w, x0 + cfg.cell_w());
            for (Index y = y0; y < y1; ++y)
                for (Index x = x0; x < x1; ++x) {
                    const bool p = pred.at(y, x) == positive_class;
                    const bool g = gt.at(y, x) == positive_class;
                    if (p && g) ++c.tp;
                    else if (p) ++c.fp;
                    else if (g) ++c.fn;
                    else ++c.tn;
                }
            if (!c.evidential()) continue;
            sum += regulator(fbeta(c, cfg.beta()), cfg);
            ++cells;
        }
    if (cells == 0) return std::nullopt;
    return sum / static_cast<double>(cells);
}

} // namespace metrics
} // namespace rganet
