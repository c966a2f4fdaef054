#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rganet/gam.hpp"
#include "support/gradcheck.hpp"

using namespace rganet;
using test::fill_random;
using test::finite_difference_check;

namespace {

gam::GamParams<double> make_params(Index h, Index w, Index c, Act out, std::uint64_t seed) {
    Rng rng(seed);
    return gam::GamParams<double>(h, w, c, out, rng);
}

} // namespace

TEST_CASE("gam_forward: zero kernels with sigmoid give lambda = 0.5") {
    const Index h = 4, w = 5, c = 3;
    gam::GamParams<double> p = make_params(h, w, c, Act::sigmoid, 1);
    p.wq_h.raw().setZero();
    p.wq_c.raw().setZero();
    p.wk_w.raw().setZero();
    p.wk_c.raw().setZero();
    p.fuse.weight.raw().setZero();
    p.fuse.bias.raw().setZero();

    Tensor<double> x(Shape4{2, c, h, w});
    fill_random(x, 42);
    gam::GamOut<double> out = gam::gam_forward(x, p, Mode::eval);
    for (Index i = 0; i < x.numel(); ++i) {
        CHECK(out.lambda.array()(i) == doctest::Approx(0.5));
        CHECK(out.f_out.array()(i) == doctest::Approx(0.5 * x.array()(i)));
    }
}

TEST_CASE("gam_forward: output shape equals input shape") {
    const Index h = 8, w = 10, c = 6;
    gam::GamParams<double> p = make_params(h, w, c, Act::sigmoid, 2);
    Tensor<double> x(Shape4{1, c, h, w});
    fill_random(x, 7);
    gam::GamOut<double> out = gam::gam_forward(x, p, Mode::train);
    CHECK(out.lambda.shape() == x.shape());
    CHECK(out.f_out.shape() == x.shape());
}

TEST_CASE("gam_forward: every parameter gradient matches finite differences") {
    const Index h = 5, w = 7, c = 4;
    gam::GamParams<double> p = make_params(h, w, c, Act::sigmoid, 3);
    Tensor<double> x(Shape4{1, c, h, w});
    fill_random(x, 11);

    Tensor<double> probe(Shape4{1, c, h, w});
    fill_random(probe, 12);

    std::vector<std::pair<std::string, Tensor<double>*>> params = {
        {"wq_h", &p.wq_h},          {"wq_c", &p.wq_c},         {"wk_w", &p.wk_w},
        {"wk_c", &p.wk_c},          {"bn.scale", &p.bn.scale}, {"bn.shift", &p.bn.shift},
        {"fuse.w", &p.fuse.weight}, {"fuse.b", &p.fuse.bias},  {"x", &x},
    };

    std::vector<Eigen::ArrayXd> analytic;
    {
        Tape<double> tape;
        for (auto& [n, t] : params) tape.watch(*t);
        gam::GamOut<double> out = gam::gam_forward(x, p, Mode::train);
        Tensor<double> loss = sum_all(mul(out.f_out, probe));
        tape.backward(loss);
        for (auto& [n, t] : params) analytic.push_back(tape.grad(*t));
        for (auto& [n, t] : params) {
            t->tape = nullptr;
            t->node = -1;
        }
    }
    auto eval = [&]() {
        gam::GamOut<double> out = gam::gam_forward(x, p, Mode::train);
        return (out.f_out.array() * probe.array()).sum();
    };
    auto res = finite_difference_check(params, analytic, eval);
    INFO("worst ", res.worst_param, " analytic ", res.worst_analytic, " numeric ",
         res.worst_numeric);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("gam_param_count: closed form") {
    CHECK(gam::gam_param_count(8, 10, 6, false) == 268);
    CHECK(gam::gam_param_count(1, 1, 1, false) == 4);
    CHECK(gam::gam_param_count(8, 10, 6, true) == 370);
}

TEST_CASE("gam params: enumerated scalars equal the closed form") {
    const Index shapes[][3] = {{8, 10, 6}, {5, 7, 4}, {12, 12, 12}, {3, 9, 2}, {6, 2, 11}, {1, 1, 1}};
    for (const auto& s : shapes) {
        gam::GamParams<double> p = make_params(s[0], s[1], s[2], Act::sigmoid, 99);
        CHECK(p.depthwise_param_count() == gam::gam_param_count(s[0], s[1], s[2], false));
        ParamLists<double> lists;
        p.collect("gam", lists);
        CHECK(lists.trainable_count() == gam::gam_param_count(s[0], s[1], s[2], true));
    }
}

TEST_CASE("gam_forward: lambda stays in [0,1]; softmax sums to one") {
    const Index h = 6, w = 4, c = 5;
    for (Act out_map : {Act::sigmoid, Act::softmax_channels}) {
        gam::GamParams<double> p = make_params(h, w, c, out_map, 17);
        Tensor<double> x(Shape4{2, c, h, w});
        fill_random(x, 23, -10.0, 10.0);
        gam::GamOut<double> out = gam::gam_forward(x, p, Mode::train);
        for (Index i = 0; i < out.lambda.numel(); ++i) {
            CHECK(out.lambda.array()(i) >= 0.0);
            CHECK(out.lambda.array()(i) <= 1.0);
        }
        if (out_map == Act::softmax_channels) {
            for (Index n = 0; n < 2; ++n)
                for (Index y = 0; y < h; ++y)
                    for (Index xx = 0; xx < w; ++xx) {
                        double sum = 0;
                        for (Index ch = 0; ch < c; ++ch) sum += out.lambda(n, ch, y, xx);
                        CHECK(std::abs(sum - 1.0) < 1e-6);
                    }
        }
    }
}

TEST_CASE("gam_forward: no NaN gradients over 1000 random trials") {
    const Index h = 3, w = 4, c = 2;
    bool all_finite = true;
    for (int trial = 0; trial < 1000 && all_finite; ++trial) {
        gam::GamParams<double> p = make_params(h, w, c, Act::sigmoid, 1000 + trial);
        Tensor<double> x(Shape4{1, c, h, w});
        fill_random(x, 5000 + trial, -10.0, 10.0);
        Tape<double> tape;
        std::vector<Tensor<double>*> ts = {&p.wq_h,     &p.wq_c,     &p.wk_w,        &p.wk_c,
                                           &p.bn.scale, &p.bn.shift, &p.fuse.weight, &p.fuse.bias};
        for (auto* t : ts) tape.watch(*t);
        gam::GamOut<double> out = gam::gam_forward(x, p, Mode::train);
        Tensor<double> loss = sum_all(out.f_out);
        tape.backward(loss);
        for (auto* t : ts)
            if (!tape.grad(*t).isFinite().all()) all_finite = false;
    }
    CHECK(all_finite);
}

TEST_CASE("long kernels beat same-extent vanilla convolution in parameters") {
    for (Index h = 2; h <= 12; ++h)
        for (Index w = 2; w <= 12; w += 2)
            for (Index c = 2; c <= 10; c += 3) {
                const Index ours = gam::gam_param_count(h, w, c, false);
                const Index vanilla = h * w * w + w * h * h + c * w * w + c * h * h;
                CHECK(ours < vanilla);
            }
}

TEST_CASE("gam_residual: identity at lambda 0, doubling at lambda 1, bounded between") {
    Tensor<double> x(Shape4{1, 2, 3, 4});
    fill_random(x, 31, 0.0, 5.0); // non-negative input
    Tensor<double> zero = Tensor<double>::zeros(x.shape());
    Tensor<double> one = Tensor<double>::full(x.shape(), 1.0);
    Tensor<double> lam(x.shape());
    fill_random(lam, 33, 0.0, 1.0);

    Tensor<double> r0 = gam::gam_residual(x, zero);
    Tensor<double> r1 = gam::gam_residual(x, one);
    Tensor<double> rl = gam::gam_residual(x, lam);
    for (Index i = 0; i < x.numel(); ++i) {
        CHECK(r0.array()(i) == doctest::Approx(x.array()(i)));
        CHECK(r1.array()(i) == doctest::Approx(2.0 * x.array()(i)));
        CHECK(rl.array()(i) >= x.array()(i) - 1e-12);
        CHECK(rl.array()(i) <= 2.0 * x.array()(i) + 1e-12);
    }

    Tensor<double> bad(Shape4{1, 2, 4, 3});
    CHECK_THROWS_AS(gam::gam_residual(x, bad), ShapeError);
}

TEST_CASE("gam_forward: input shaped for different params is rejected") {
    gam::GamParams<double> p = make_params(4, 5, 3, Act::sigmoid, 8);
    Tensor<double> wrong(Shape4{1, 3, 5, 4});
    CHECK_THROWS_AS(gam::gam_forward(wrong, p, Mode::train), ShapeError);
}
