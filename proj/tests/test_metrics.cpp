#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rganet/metrics.hpp"
#include "support/reference.hpp"

#include <cmath>
#include <random>

using namespace rganet;
using metrics::Confusion;

TEST_CASE("confusion: degenerate all-positive cases") {
    SegMask all2(4, 4, 2);
    Confusion c = metrics::confusion(all2, all2, 2);
    CHECK(c.tp == 16);
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);
    CHECK(c.tn == 0);

    SegMask none(4, 4, 0);
    Confusion c2 = metrics::confusion(all2, none, 2);
    CHECK(c2.fp == 16);
    CHECK(c2.tp == 0);
}

TEST_CASE("confusion: random masks match the brute-force recount") {
    std::mt19937 gen(7);
    for (int trial = 0; trial < 20; ++trial) {
        SegMask pred(16, 16), gt(16, 16);
        for (auto& v : pred.v) v = static_cast<std::uint8_t>(gen() % 3);
        for (auto& v : gt.v) v = static_cast<std::uint8_t>(gen() % 3);
        Confusion a = metrics::confusion(pred, gt, 2);
        Confusion b = test::brute_confusion(pred, gt, 2);
        CHECK(a.tp == b.tp);
        CHECK(a.fp == b.fp);
        CHECK(a.fn == b.fn);
        CHECK(a.tn == b.tn);
        CHECK(a.total() == 256);
    }
    SegMask small(4, 5);
    SegMask big(5, 4);
    CHECK_THROWS_AS(metrics::confusion(small, big, 2), ShapeError);
}

TEST_CASE("fbeta: fixed points") {
    CHECK(metrics::fbeta({10, 0, 0, 5}, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::fbeta({0, 3, 4, 5}, 0.5) == 0.0);
    CHECK(metrics::fbeta({5, 5, 5, 0}, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("fbeta: matches a direct re-evaluation; dice is fbeta at beta 1") {
    std::mt19937 gen(11);
    for (int trial = 0; trial < 10000; ++trial) {
        Confusion c{gen() % 1000, gen() % 1000, gen() % 1000, gen() % 1000};
        const double beta = 0.1 + (gen() % 30) * 0.1;
        const double b2 = beta * beta;
        const double direct = (1.0 + b2) * double(c.tp) /
                              (b2 * (double(c.tp) + double(c.fn)) + double(c.tp) + double(c.fp) +
                               1e-31);
        CHECK(std::abs(metrics::fbeta(c, beta) - direct) <= 1e-12);
        CHECK(metrics::classic_metrics(c).dice == metrics::fbeta(c, 1.0));
    }
}

TEST_CASE("classic metrics: perfect prediction scores 1.0 across the board") {
    Confusion c{37, 0, 0, 63};
    metrics::ClassicMetrics m = metrics::classic_metrics(c);
    CHECK(m.accuracy == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.precision == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.jaccard == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.dice == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.mcc == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("classic metrics: balanced random confusion has zero mcc") {
    Confusion c{25, 25, 25, 25};
    CHECK(metrics::classic_metrics(c).mcc == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("regulator: anchor points at the default configuration") {
    auto cfg = metrics::MgridConfig::make();
    CHECK(cfg.s_coef() == doctest::Approx(3.8).epsilon(1e-12));
    CHECK(cfg.t() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::regulator(0.0, cfg) == 0.0);
    CHECK(metrics::regulator(0.5, cfg) == doctest::Approx(0.525).epsilon(1e-12));
    CHECK(metrics::regulator(1.0, cfg) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::regulator(0.25, cfg) == doctest::Approx(0.465625).epsilon(1e-12));
    CHECK(cfg.b() == doctest::Approx(0.05).epsilon(1e-12)); // limit as F -> 0+
    CHECK(cfg.b() > 0.0);
    CHECK(cfg.b() < cfg.f_m());
}

TEST_CASE("regulator: strictly increasing on a 1000-point grid") {
    auto cfg = metrics::MgridConfig::make();
    double prev = metrics::regulator(0.001, cfg);
    for (int i = 2; i <= 1000; ++i) {
        const double cur = metrics::regulator(i * 0.001, cfg);
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("mgrid config: validity interval enforcement") {
    CHECK_THROWS_AS(metrics::MgridConfig::make(0.5, 12, 12, 0.5, 0.49), std::invalid_argument);
    CHECK_THROWS_AS(metrics::MgridConfig::make(0.5, 12, 12, 0.5, 0.76), std::invalid_argument);
    CHECK_NOTHROW(metrics::MgridConfig::make(0.5, 12, 12, 0.5, 0.525));
    CHECK_NOTHROW(metrics::MgridConfig::make(0.5, 12, 12, 0.5, 0.74));
    CHECK_THROWS_AS(metrics::MgridConfig::make(0.0, 12, 12, 0.5, 0.525), std::invalid_argument);
    CHECK_THROWS_AS(metrics::MgridConfig::make(0.5, 12, 12, 1.0, 0.525), std::invalid_argument);
}

TEST_CASE("mgrid: exact match with positives scores 1.0") {
    auto cfg = metrics::MgridConfig::make();
    SegMask m(30, 30);
    for (Index y = 5; y < 12; ++y)
        for (Index x = 3; x < 20; ++x) m.at(y, x) = 2;
    auto score = metrics::mgrid(m, m, 2, cfg);
    REQUIRE(score.has_value());
    CHECK(*score == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mgrid: one perfect and one empty cell average to 0.5") {
    // 24x12 masks, 12x12 cells: top cell predicted perfectly, bottom cell
    // has ground truth but no prediction.
    auto cfg = metrics::MgridConfig::make();
    SegMask gt(24, 12), pred(24, 12);
    for (Index y = 2; y < 8; ++y)
        for (Index x = 2; x < 8; ++x) {
            gt.at(y, x) = 2;
            pred.at(y, x) = 2;
            gt.at(y + 12, x) = 2;
        }
    auto score = metrics::mgrid(pred, gt, 2, cfg);
    REQUIRE(score.has_value());
    CHECK(*score == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("mgrid: no evidential cells yields the distinguished empty value") {
    auto cfg = metrics::MgridConfig::make();
    SegMask zero(24, 24);
    CHECK_FALSE(metrics::mgrid(zero, zero, 2, cfg).has_value());
}

TEST_CASE("mgrid: single whole-image cell equals regulated global fbeta") {
    auto cfg = metrics::MgridConfig::make(0.5, 64, 64, 0.5, 0.525);
    std::mt19937 gen(13);
    for (int trial = 0; trial < 10; ++trial) {
        SegMask pred(20, 20), gt(20, 20);
        for (auto& v : pred.v) v = static_cast<std::uint8_t>(gen() % 3);
        for (auto& v : gt.v) v = static_cast<std::uint8_t>(gen() % 3);
        auto score = metrics::mgrid(pred, gt, 2, cfg);
        const double direct =
            metrics::regulator(metrics::fbeta(metrics::confusion(pred, gt, 2), 0.5), cfg);
        REQUIRE(score.has_value());
        CHECK(*score == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("mgrid: stays in [0,1] and matches the brute-force oracle") {
    auto cfg = metrics::MgridConfig::make();
    std::mt19937 gen(17);
    for (int trial = 0; trial < 25; ++trial) {
        SegMask pred(37, 29), gt(37, 29); // truncated edge cells included
        for (auto& v : pred.v) v = static_cast<std::uint8_t>(gen() % 4 == 0 ? 2 : 0);
        for (auto& v : gt.v) v = static_cast<std::uint8_t>(gen() % 4 == 0 ? 2 : 0);
        auto got = metrics::mgrid(pred, gt, 2, cfg);
        auto want = test::brute_mgrid(pred, gt, 2, 0.5, 12, 12, 0.5, 0.525);
        REQUIRE(got.has_value() == want.has_value());
        if (got) {
            CHECK(*got == doctest::Approx(*want).epsilon(1e-12));
            CHECK(*got >= 0.0);
            CHECK(*got <= 1.0);
        }
    }
}

TEST_CASE("mgrid: splitting the same confusion across objects scores higher") {
    // Two 6x6 ground-truth objects in opposite grid cells. Prediction A
    // covers only the first object (24 TP, 12 FP); prediction B spreads the
    // same totals over both objects. Global dice/fbeta tie, mgrid must not.
    auto cfg = metrics::MgridConfig::make();
    SegMask gt(24, 24);
    for (Index y = 2; y < 8; ++y)
        for (Index x = 2; x < 8; ++x) gt.at(y, x) = 2; // object 1, cell (0,0)
    for (Index y = 14; y < 20; ++y)
        for (Index x = 14; x < 20; ++x) gt.at(y, x) = 2; // object 2, cell (1,1)

    SegMask a(24, 24);
    for (Index y = 2; y < 8; ++y)
        for (Index x = 2; x < 6; ++x) a.at(y, x) = 2; // 24 TP on object 1
    for (Index y = 9; y < 12; ++y)
        for (Index x = 0; x < 4; ++x) a.at(y, x) = 2; // 12 FP in cell (0,0)

    SegMask b(24, 24);
    for (Index y = 2; y < 8; ++y)
        for (Index x = 2; x < 4; ++x) b.at(y, x) = 2; // 12 TP on object 1
    for (Index y = 9; y < 12; ++y)
        for (Index x = 0; x < 2; ++x) b.at(y, x) = 2; // 6 FP in cell (0,0)
    for (Index y = 14; y < 20; ++y)
        for (Index x = 14; x < 16; ++x) b.at(y, x) = 2; // 12 TP on object 2
    for (Index y = 21; y < 24; ++y)
        for (Index x = 12; x < 14; ++x) b.at(y, x) = 2; // 6 FP in cell (1,1)

    Confusion ca = metrics::confusion(a, gt, 2);
    Confusion cb = metrics::confusion(b, gt, 2);
    REQUIRE(ca.tp == cb.tp);
    REQUIRE(ca.fp == cb.fp);
    REQUIRE(ca.fn == cb.fn);
    CHECK(std::abs(metrics::classic_metrics(ca).dice - metrics::classic_metrics(cb).dice) <=
          1e-12);
    CHECK(std::abs(metrics::fbeta(ca, 0.5) - metrics::fbeta(cb, 0.5)) <= 1e-12);

    auto ma = metrics::mgrid(a, gt, 2, cfg);
    auto mb = metrics::mgrid(b, gt, 2, cfg);
    REQUIRE(ma.has_value());
    REQUIRE(mb.has_value());
    CHECK(*mb > *ma);

    // And both agree with the independent per-cell oracle.
    CHECK(*ma == doctest::Approx(*test::brute_mgrid(a, gt, 2, 0.5, 12, 12, 0.5, 0.525))
                     .epsilon(1e-12));
    CHECK(*mb == doctest::Approx(*test::brute_mgrid(b, gt, 2, 0.5, 12, 12, 0.5, 0.525))
                     .epsilon(1e-12));
}
