#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rganet/engine/ops.hpp"
#include "rganet/engine/serialize.hpp"
#include "support/gradcheck.hpp"
#include "support/reference.hpp"

#include <cstdio>

using namespace rganet;
using test::fill_random;
using test::finite_difference_check;

namespace {

void untrack(Tensor<double>& t) {
    t.tape = nullptr;
    t.node = -1;
}

/// Analytic-vs-numeric gradient comparison for a forward closure. The
/// closure must rebuild its output from the current tensor contents.
double gradcheck(std::vector<std::pair<std::string, Tensor<double>*>> params,
                 const std::function<Tensor<double>()>& fwd, std::uint64_t seed) {
    Tensor<double> probe; // fixed weights make the scalar loss generic
    {
        Tape<double> tape;
        for (auto& [name, t] : params) tape.watch(*t);
        Tensor<double> out = fwd();
        probe = Tensor<double>(out.shape());
        fill_random(probe, seed ^ 0xabcdef, -1.0, 1.0);
        Tensor<double> loss = sum_all(mul(out, probe));
        tape.backward(loss);
        std::vector<Eigen::ArrayXd> analytic;
        for (auto& [name, t] : params) analytic.push_back(tape.grad(*t));
        for (auto& [name, t] : params) untrack(*t);
        auto eval = [&]() { return (fwd().array() * probe.array()).sum(); };
        auto res = finite_difference_check(params, analytic, eval);
        return res.max_rel_err;
    }
}

} // namespace

TEST_CASE("conv2d: all-ones 3x3 kernel counts overlaps") {
    Tensor<double> x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    Tensor<double> w = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    Tensor<double> y = conv2d(x, w, 1, 1);
    CHECK(y.shape() == Shape4{1, 1, 3, 3});
    CHECK(y(0, 0, 1, 1) == doctest::Approx(9.0));
    CHECK(y(0, 0, 0, 0) == doctest::Approx(4.0));
    CHECK(y(0, 0, 0, 2) == doctest::Approx(4.0));
    CHECK(y(0, 0, 2, 0) == doctest::Approx(4.0));
    CHECK(y(0, 0, 2, 2) == doctest::Approx(4.0));
    CHECK(y(0, 0, 0, 1) == doctest::Approx(6.0));
}

TEST_CASE("conv2d: stride-2 output extents") {
    Tensor<double> x(Shape4{1, 1, 4, 4});
    Tensor<double> w(Shape4{1, 1, 3, 3});
    Tensor<double> y = conv2d(x, w, 2, 1);
    CHECK(y.shape() == Shape4{1, 1, 2, 2});
}

TEST_CASE("conv2d: identity 1x1 kernel is the identity map") {
    Tensor<double> x(Shape4{2, 1, 4, 5});
    fill_random(x, 7);
    Tensor<double> w = Tensor<double>::full({1, 1, 1, 1}, 1.0);
    Tensor<double> y = conv2d(x, w, 1, 0);
    for (Index i = 0; i < x.numel(); ++i) CHECK(y.array()(i) == x.array()(i));
}

TEST_CASE("conv2d: matches the naive reference on every path") {
    struct Case {
        Shape4 xs, ws;
        Index stride, pad;
    };
    // 1x1 GEMM path, im2col path, direct small-kernel path, strides, padding
    const Case cases[] = {
        {{2, 3, 5, 6}, {4, 3, 1, 1}, 1, 0},
        {{1, 2, 7, 5}, {3, 2, 3, 3}, 1, 1},
        {{2, 4, 8, 8}, {5, 4, 3, 3}, 2, 1},
        {{1, 3, 6, 6}, {2, 3, 1, 1}, 2, 0},
        {{1, 2, 5, 5}, {2, 2, 2, 2}, 1, 1},
        {{1, 1, 9, 7}, {1, 1, 5, 5}, 2, 2},
    };
    for (const auto& c : cases) {
        Tensor<double> x(c.xs), w(c.ws);
        Tensor<double> b(Shape4{1, c.ws.n, 1, 1});
        fill_random(x, 11);
        fill_random(w, 13);
        fill_random(b, 17);
        Tensor<double> got = conv2d(x, w, &b, c.stride, c.pad);
        Tensor<double> want = test::naive_conv2d(x, w, &b, c.stride, c.pad);
        REQUIRE(got.shape() == want.shape());
        for (Index i = 0; i < got.numel(); ++i)
            CHECK(got.array()(i) == doctest::Approx(want.array()(i)).epsilon(1e-12));
    }
}

TEST_CASE("conv2d: gradients match finite differences on three shapes") {
    struct Case {
        Shape4 xs, ws;
        Index stride, pad;
    };
    const Case cases[] = {
        {{1, 2, 4, 4}, {3, 2, 3, 3}, 1, 1},
        {{2, 1, 5, 4}, {2, 1, 1, 1}, 1, 0},
        {{1, 3, 6, 6}, {2, 3, 3, 3}, 2, 1},
    };
    int seed = 100;
    for (const auto& c : cases) {
        Tensor<double> x(c.xs), w(c.ws), b(Shape4{1, c.ws.n, 1, 1});
        fill_random(x, seed++);
        fill_random(w, seed++);
        fill_random(b, seed++);
        const double err = gradcheck({{"x", &x}, {"w", &w}, {"b", &b}},
                                     [&]() { return conv2d(x, w, &b, c.stride, c.pad); }, seed);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("conv2d: dimension errors are descriptive") {
    Tensor<double> x(Shape4{1, 2, 4, 4});
    Tensor<double> w(Shape4{1, 3, 3, 3});
    CHECK_THROWS_AS(conv2d(x, w, 1, 1), ShapeError);
    Tensor<double> empty(Shape4{1, 0, 4, 4});
    Tensor<double> w2(Shape4{1, 0, 1, 1});
    CHECK_THROWS_AS(conv2d(empty, w2, 1, 0), ShapeError);
    Tensor<double> w3(Shape4{1, 2, 3, 3});
    CHECK_THROWS_AS(conv2d(x, w3, 3, 1), ShapeError); // unsupported stride
}

TEST_CASE("depthwise_long_conv: row sums via an all-ones kernel") {
    Tensor<double> v = Tensor<double>::from_values({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> k = Tensor<double>::from_values({1, 1, 1, 3}, {1, 1, 1});
    Tensor<double> y = depthwise_long_conv(v, k, CollapseAxis::cols);
    CHECK(y.shape() == Shape4{1, 1, 2, 1});
    CHECK(y(0, 0, 0, 0) == doctest::Approx(6.0));
    CHECK(y(0, 0, 1, 0) == doctest::Approx(15.0));
}

TEST_CASE("depthwise_long_conv: signed kernel collapsing rows") {
    Tensor<double> v = Tensor<double>::from_values({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> k = Tensor<double>::from_values({1, 1, 1, 2}, {1, -1});
    Tensor<double> y = depthwise_long_conv(v, k, CollapseAxis::rows);
    CHECK(y.shape() == Shape4{1, 1, 1, 3});
    for (Index s = 0; s < 3; ++s) CHECK(y(0, 0, 0, s) == doctest::Approx(-3.0));
}

TEST_CASE("depthwise_long_conv: kernel tensor holds exactly D*L parameters") {
    const Index d = 7, r = 4, s = 5;
    Tensor<double> kc(Shape4{1, d, 1, s});
    CHECK(kc.numel() == d * s);
    Tensor<double> kr(Shape4{1, d, 1, r});
    CHECK(kr.numel() == d * r);
}

TEST_CASE("depthwise_long_conv: kernel mismatch errors") {
    Tensor<double> v(Shape4{1, 4, 3, 5});
    Tensor<double> wrong_count(Shape4{1, 3, 1, 5});
    CHECK_THROWS_AS(depthwise_long_conv(v, wrong_count, CollapseAxis::cols), ShapeError);
    Tensor<double> wrong_len(Shape4{1, 4, 1, 4});
    CHECK_THROWS_AS(depthwise_long_conv(v, wrong_len, CollapseAxis::cols), ShapeError);
}

TEST_CASE("depthwise_long_conv: gradients on three shapes, both axes") {
    const Shape4 shapes[] = {{1, 2, 3, 4}, {2, 3, 2, 5}, {1, 5, 4, 3}};
    int seed = 300;
    for (const auto& s : shapes) {
        for (CollapseAxis ax : {CollapseAxis::cols, CollapseAxis::rows}) {
            Tensor<double> v(s);
            Tensor<double> k(Shape4{1, s.c, 1, ax == CollapseAxis::cols ? s.w : s.h});
            fill_random(v, seed++);
            fill_random(k, seed++);
            const double err = gradcheck({{"view", &v}, {"kernels", &k}},
                                         [&]() { return depthwise_long_conv(v, k, ax); }, seed);
            CHECK(err < 1e-6);
        }
    }
}

TEST_CASE("slice_outer_product: small example and annihilation") {
    Tensor<double> a = Tensor<double>::from_values({1, 1, 2, 1}, {1, 2});
    Tensor<double> b = Tensor<double>::from_values({1, 1, 1, 3}, {3, 4, 5});
    Tensor<double> y = slice_outer_product(a, b);
    CHECK(y.shape() == Shape4{1, 1, 2, 3});
    const double want[2][3] = {{3, 4, 5}, {6, 8, 10}};
    for (Index r = 0; r < 2; ++r)
        for (Index s = 0; s < 3; ++s) CHECK(y(0, 0, r, s) == doctest::Approx(want[r][s]));

    Tensor<double> zrow = Tensor<double>::zeros({1, 1, 1, 3});
    Tensor<double> z = slice_outer_product(a, zrow);
    for (Index i = 0; i < z.numel(); ++i) CHECK(z.array()(i) == 0.0);

    Tensor<double> bad(Shape4{1, 2, 1, 3});
    CHECK_THROWS_AS(slice_outer_product(a, bad), ShapeError);
}

TEST_CASE("slice_outer_product: gradients on three shapes") {
    const Index dims[][3] = {{2, 3, 4}, {5, 2, 3}, {1, 6, 2}}; // (D, R, S)
    int seed = 400;
    for (const auto& d : dims) {
        Tensor<double> a(Shape4{2, d[0], d[1], 1});
        Tensor<double> b(Shape4{2, d[0], 1, d[2]});
        fill_random(a, seed++);
        fill_random(b, seed++);
        const double err = gradcheck({{"cols", &a}, {"rows", &b}},
                                     [&]() { return slice_outer_product(a, b); }, seed);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("batchnorm: zero-mean unit-variance channel passes through") {
    // Large enough sample that the batch variance is essentially 1.
    const Index n = 1, c = 1, h = 20, w = 20;
    Tensor<double> x(Shape4{n, c, h, w});
    // symmetric +-1 pattern: mean 0, variance 1 exactly
    for (Index i = 0; i < x.numel(); ++i) x.raw()(i) = (i % 2 == 0) ? 1.0 : -1.0;
    BnParams<double> bn(c);
    Tensor<double> y = batchnorm(x, bn, Mode::train);
    for (Index i = 0; i < x.numel(); ++i)
        CHECK(std::abs(y.array()(i) - x.array()(i)) < 1e-5);
}

TEST_CASE("batchnorm: constant channel collapses to the shift value") {
    Tensor<double> x = Tensor<double>::full({2, 3, 4, 4}, 7.25);
    BnParams<double> bn(3);
    bn.shift.raw().setConstant(0.37);
    Tensor<double> y = batchnorm(x, bn, Mode::train);
    for (Index i = 0; i < y.numel(); ++i) CHECK(y.array()(i) == doctest::Approx(0.37));
}

TEST_CASE("batchnorm: eval converges to train output over repeated batches") {
    Tensor<double> x(Shape4{2, 3, 5, 5});
    fill_random(x, 55);
    BnParams<double> bn(3);
    bn.scale.raw().setConstant(1.3);
    bn.shift.raw().setConstant(-0.2);
    Tensor<double> train_out;
    for (int i = 0; i < 100; ++i) train_out = batchnorm(x, bn, Mode::train);
    Tensor<double> eval_out = batchnorm(x, bn, Mode::eval);
    for (Index i = 0; i < x.numel(); ++i)
        CHECK(std::abs(eval_out.array()(i) - train_out.array()(i)) < 1e-3);
}

TEST_CASE("batchnorm: channel mismatch errors") {
    Tensor<double> x(Shape4{1, 4, 3, 3});
    BnParams<double> bn(3);
    CHECK_THROWS_AS(batchnorm(x, bn, Mode::train), ShapeError);
}

TEST_CASE("batchnorm: gradients in train and eval mode, three shapes") {
    const Shape4 shapes[] = {{2, 3, 4, 4}, {1, 2, 5, 6}, {3, 1, 3, 7}};
    int seed = 500;
    for (const auto& s : shapes) {
        for (Mode mode : {Mode::train, Mode::eval}) {
            Tensor<double> x(s);
            fill_random(x, seed++);
            BnParams<double> bn(s.c);
            fill_random(bn.scale, seed++, 0.5, 1.5);
            fill_random(bn.shift, seed++, -0.5, 0.5);
            if (mode == Mode::eval) {
                for (Index c = 0; c < s.c; ++c) {
                    bn.running_mean(c) = 0.1 * double(c);
                    bn.running_var(c) = 1.0 + 0.2 * double(c);
                }
            }
            const double err = gradcheck(
                {{"x", &x}, {"scale", &bn.scale}, {"shift", &bn.shift}},
                [&]() { return batchnorm(x, bn, mode); }, seed);
            CHECK(err < 1e-4);
        }
    }
}

TEST_CASE("activation: fixed points") {
    Tensor<double> zero = Tensor<double>::zeros({1, 1, 1, 1});
    CHECK(activation(zero, Act::swish).scalar() == doctest::Approx(0.0));
    CHECK(activation(zero, Act::sigmoid).scalar() == doctest::Approx(0.5));

    Tensor<double> z3 = Tensor<double>::zeros({1, 3, 1, 1});
    Tensor<double> sm = activation(z3, Act::softmax_channels);
    for (Index c = 0; c < 3; ++c) CHECK(sm(0, c, 0, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("activation: softmax_channels sums to one and stays non-negative") {
    Tensor<double> x(Shape4{2, 5, 4, 3});
    fill_random(x, 77, -30.0, 30.0); // wide range exercises the max-subtraction
    Tensor<double> y = activation(x, Act::softmax_channels);
    for (Index n = 0; n < 2; ++n)
        for (Index h = 0; h < 4; ++h)
            for (Index w = 0; w < 3; ++w) {
                double sum = 0;
                for (Index c = 0; c < 5; ++c) {
                    CHECK(y(n, c, h, w) >= 0.0);
                    sum += y(n, c, h, w);
                }
                CHECK(std::abs(sum - 1.0) < 1e-6);
            }
    CHECK(y.all_finite());
}

TEST_CASE("activation: gradients for every kind, three shapes") {
    const Shape4 shapes[] = {{1, 3, 2, 2}, {2, 4, 3, 3}, {1, 2, 5, 4}};
    int seed = 600;
    for (const auto& s : shapes)
        for (Act kind : {Act::swish, Act::sigmoid, Act::relu, Act::softmax_channels}) {
            Tensor<double> x(s);
            fill_random(x, seed++, -2.0, 2.0);
            // keep relu inputs away from the kink
            if (kind == Act::relu)
                for (Index i = 0; i < x.numel(); ++i)
                    if (std::abs(x.array()(i)) < 1e-3) x.raw()(i) = 0.5;
            const double err =
                gradcheck({{"x", &x}}, [&]() { return activation(x, kind); }, seed);
            CHECK(err < 1e-4);
        }
}

TEST_CASE("upsample_nearest2x: replication and checkerboard") {
    Tensor<double> one = Tensor<double>::full({1, 1, 1, 1}, 7.0);
    Tensor<double> up = upsample_nearest2x(one);
    CHECK(up.shape() == Shape4{1, 1, 2, 2});
    for (Index i = 0; i < 4; ++i) CHECK(up.array()(i) == doctest::Approx(7.0));

    Tensor<double> cb = Tensor<double>::from_values({1, 1, 2, 2}, {1, 0, 0, 1});
    Tensor<double> up2 = upsample_nearest2x(cb);
    CHECK(up2.shape() == Shape4{1, 1, 4, 4});
    for (Index y = 0; y < 4; ++y)
        for (Index x = 0; x < 4; ++x)
            CHECK(up2(0, 0, y, x) == doctest::Approx(cb(0, 0, y / 2, x / 2)));
}

TEST_CASE("upsample_nearest2x: gradients") {
    const Shape4 shapes[] = {{1, 2, 2, 3}, {2, 1, 3, 3}, {1, 3, 1, 4}};
    int seed = 700;
    for (const auto& s : shapes) {
        Tensor<double> x(s);
        fill_random(x, seed++);
        const double err = gradcheck({{"x", &x}}, [&]() { return upsample_nearest2x(x); }, seed);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("deconv2x2: doubles extents and matches finite differences") {
    Tensor<double> x(Shape4{1, 2, 3, 4});
    Tensor<double> w(Shape4{2, 3, 2, 2});
    fill_random(x, 801);
    fill_random(w, 802);
    Tensor<double> y = deconv2x2(x, w);
    CHECK(y.shape() == Shape4{1, 3, 6, 8});
    const double err =
        gradcheck({{"x", &x}, {"w", &w}}, [&]() { return deconv2x2(x, w); }, 803);
    CHECK(err < 1e-6);
}

TEST_CASE("permute and concat_channels: gradients") {
    Tensor<double> x(Shape4{2, 3, 4, 5});
    fill_random(x, 901);
    const double perr =
        gradcheck({{"x", &x}}, [&]() { return permute(x, {0, 3, 1, 2}); }, 902);
    CHECK(perr < 1e-6);

    Tensor<double> a(Shape4{1, 2, 3, 3}), b(Shape4{1, 4, 3, 3});
    fill_random(a, 903);
    fill_random(b, 904);
    const double cerr = gradcheck({{"a", &a}, {"b", &b}},
                                  [&]() { return concat_channels<double>({a, b}); }, 905);
    CHECK(cerr < 1e-6);

    Tensor<double> bad(Shape4{1, 1, 2, 3});
    CHECK_THROWS_AS(concat_channels<double>({a, bad}), ShapeError);
}

TEST_CASE("backward: sum of a tensor gives an all-ones gradient") {
    Tape<double> tape;
    Tensor<double> x(Shape4{2, 3, 2, 2});
    fill_random(x, 1000);
    tape.watch(x);
    Tensor<double> loss = sum_all(x);
    tape.backward(loss);
    Eigen::ArrayXd g = tape.grad(x);
    for (Index i = 0; i < x.numel(); ++i) CHECK(g(i) == doctest::Approx(1.0));
}

TEST_CASE("backward: elementwise product swaps operands") {
    Tape<double> tape;
    Tensor<double> a(Shape4{1, 2, 3, 2}), b(Shape4{1, 2, 3, 2});
    fill_random(a, 1001);
    fill_random(b, 1002);
    tape.watch(a);
    tape.watch(b);
    Tensor<double> loss = sum_all(mul(a, b));
    tape.backward(loss);
    Eigen::ArrayXd ga = tape.grad(a), gb = tape.grad(b);
    for (Index i = 0; i < a.numel(); ++i) {
        CHECK(ga(i) == doctest::Approx(b.array()(i)));
        CHECK(gb(i) == doctest::Approx(a.array()(i)));
    }
}

TEST_CASE("backward: rejects non-scalar losses") {
    Tape<double> tape;
    Tensor<double> x(Shape4{1, 1, 2, 2});
    tape.watch(x);
    Tensor<double> y = add(x, x);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("backward: unreachable parameters receive zero gradients") {
    Tape<double> tape;
    Tensor<double> used(Shape4{1, 1, 2, 2}), unused(Shape4{1, 1, 3, 3});
    fill_random(used, 1003);
    fill_random(unused, 1004);
    tape.watch(used);
    tape.watch(unused);
    Tensor<double> loss = sum_all(used);
    tape.backward(loss);
    Eigen::ArrayXd g = tape.grad(unused);
    for (Index i = 0; i < unused.numel(); ++i) CHECK(g(i) == 0.0);
}

TEST_CASE("backward: gradients accumulate across multiple consumers") {
    Tape<double> tape;
    Tensor<double> x(Shape4{1, 1, 2, 2});
    fill_random(x, 1005);
    tape.watch(x);
    // loss = sum(x*x) + sum(x)  ->  dx = 2x + 1
    Tensor<double> loss = add(sum_all(mul(x, x)), sum_all(x));
    tape.backward(loss);
    Eigen::ArrayXd g = tape.grad(x);
    for (Index i = 0; i < x.numel(); ++i)
        CHECK(g(i) == doctest::Approx(2.0 * x.array()(i) + 1.0));
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
    Tensor<float> x(Shape4{2, 3, 8, 8});
    Tensor<float> w(Shape4{4, 3, 3, 3});
    for (Index i = 0; i < x.numel(); ++i) x.raw()(i) = std::sin(float(i));
    for (Index i = 0; i < w.numel(); ++i) w.raw()(i) = std::cos(float(i));
    Tensor<float> y1 = conv2d(x, w, 1, 1);
    Tensor<float> y2 = conv2d(x, w, 1, 1);
    for (Index i = 0; i < y1.numel(); ++i) CHECK(y1.array()(i) == y2.array()(i));
    Tensor<float> s1 = activation(y1, Act::swish);
    Tensor<float> s2 = activation(y2, Act::swish);
    for (Index i = 0; i < s1.numel(); ++i) CHECK(s1.array()(i) == s2.array()(i));
}

TEST_CASE("forward ops keep finite inputs finite") {
    Tensor<double> x(Shape4{2, 4, 6, 5});
    fill_random(x, 1100, -50.0, 50.0);
    CHECK(activation(x, Act::sigmoid).all_finite());
    CHECK(activation(x, Act::swish).all_finite());
    CHECK(activation(x, Act::softmax_channels).all_finite());
    BnParams<double> bn(4);
    CHECK(batchnorm(x, bn, Mode::train).all_finite());
}

TEST_CASE("parameter container: round trip and bad magic") {
    ParamContainer c;
    Tensor<float> t(Shape4{2, 3, 4, 5});
    for (Index i = 0; i < t.numel(); ++i) t.raw()(i) = float(i) * 0.25f - 3.0f;
    c.put_tensor("layer.weight", t);
    Eigen::ArrayXf v(4);
    v << 1.f, 2.f, 3.f, 4.f;
    c.put_vector("layer.running_mean", v);
    c.put_text("__config__", "k = 15\nscales = 5\n");

    const std::string path = "test_container.rgan";
    c.save(path);
    ParamContainer loaded = ParamContainer::load(path);
    Tensor<float> t2 = loaded.get_tensor<float>("layer.weight");
    REQUIRE(t2.shape() == t.shape());
    for (Index i = 0; i < t.numel(); ++i) CHECK(t2.array()(i) == t.array()(i));
    CHECK(loaded.get_text("__config__") == "k = 15\nscales = 5\n");
    CHECK(loaded.get_vector<float>("layer.running_mean")(2) == 3.f);
    CHECK_THROWS_AS(loaded.get("missing"), IoError);

    std::FILE* f = std::fopen("bad_magic.bin", "wb");
    std::fputs("NOPE....", f);
    std::fclose(f);
    CHECK_THROWS_AS(ParamContainer::load("bad_magic.bin"), IoError);
    std::remove(path.c_str());
    std::remove("bad_magic.bin");
}
