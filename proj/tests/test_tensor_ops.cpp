#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "radiomamba/gradcheck.hpp"
#include "radiomamba/ops.hpp"
#include "radiomamba/rng.hpp"
#include "radiomamba/tensor.hpp"
#include "support.hpp"

using namespace radiomamba;
using testsupport::max_abs;
using testsupport::max_abs_diff;
using testsupport::random_tensor;

namespace {

// Wraps "scalar function of one tensor input" for the finite-difference
// oracle: loss = mean(op(x) * c) with a fixed random weighting c so every
// output element influences the objective.
template <typename Fn>
GradcheckReport check_op(Fn&& op, std::vector<Parameter<double>> params, double eps = 1e-3,
                         double tol = 1e-4) {
    return gradcheck([&]() { return op(); }, params, eps, tol);
}

Tensor<double> weighted_mean(const Tensor<double>& y, Rng& rng) {
    auto c = random_tensor<double>(y.shape(), rng, -1.0, 1.0);
    return ops::mean(ops::mul(y, c));
}

}  // namespace

TEST_CASE("linear matches hand examples") {
    // identity weights
    auto x = Tensor<double>::from_data({1, 2}, {1.0, 2.0});
    auto w = Tensor<double>::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
    auto y = ops::linear(x, w);
    CHECK(y.values()[0] == doctest::Approx(1.0));
    CHECK(y.values()[1] == doctest::Approx(2.0));

    // summation plus bias
    auto x2 = Tensor<double>::from_data({1, 2}, {1.0, 1.0});
    auto w2 = Tensor<double>::from_data({2, 1}, {1.0, 1.0});
    auto b2 = Tensor<double>::from_data({1}, {0.5});
    auto y2 = ops::linear(x2, w2, &b2);
    CHECK(y2.item() == doctest::Approx(2.5));
}

TEST_CASE("linear shape mismatch reports both shapes") {
    auto x = Tensor<double>::zeros({2, 3});
    auto w = Tensor<double>::zeros({4, 2});
    CHECK_THROWS_WITH_AS(ops::linear(x, w), doctest::Contains("[2,3]"), DimensionError);
}

TEST_CASE("linear gradient matches central differences (seed 7)") {
    Rng rng(7);
    auto x = random_tensor<double>({3, 4}, rng, -1, 1, true);
    auto w = random_tensor<double>({4, 2}, rng, -1, 1, true);
    auto b = random_tensor<double>({2}, rng, -1, 1, true);
    Rng crng(77);
    auto c = random_tensor<double>({3, 2}, crng);
    std::vector<Parameter<double>> params{{"x", x}, {"w", w}, {"b", b}};
    auto rep = gradcheck([&]() { return ops::mean(ops::mul(ops::linear(x, w, &b), c)); },
                         params, 1e-3, 1e-4);
    CHECK_MESSAGE(rep.passed, rep.summary());
}

TEST_CASE("conv2d identity kernel, depthwise window sums, strided shapes") {
    // K=1, w=1: per-channel identity
    Rng rng(3);
    auto x = random_tensor<double>({2, 3, 4, 5}, rng);
    auto w1 = Tensor<double>::full({3, 1, 1, 1}, 1.0);
    auto y1 = ops::conv2d(x, w1, nullptr, {1, 0, 3});
    CHECK(max_abs_diff(x, y1) == 0.0);

    // depthwise 3x3 all-ones on all-ones 5x5 input, padding 1:
    // interior = 9, corners = 4 (direct summation of the window)
    auto ones = Tensor<double>::full({1, 1, 5, 5}, 1.0);
    auto wk = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    auto y2 = ops::conv2d(ones, wk, nullptr, {1, 1, 1});
    auto v = y2.values();
    CHECK(v[2 * 5 + 2] == doctest::Approx(9.0));
    CHECK(v[0] == doctest::Approx(4.0));
    CHECK(v[4] == doctest::Approx(4.0));
    CHECK(v[20] == doctest::Approx(4.0));
    CHECK(v[24] == doctest::Approx(4.0));
    CHECK(v[1] == doctest::Approx(6.0));  // edge

    // stride 2, padding 1, K=3 on 64x64 -> 32x32
    auto x3 = Tensor<double>::zeros({1, 2, 64, 64});
    auto w3 = Tensor<double>::zeros({4, 2, 3, 3});
    auto y3 = ops::conv2d(x3, w3, nullptr, {2, 1, 1});
    CHECK(y3.shape() == Shape{1, 4, 32, 32});
}

TEST_CASE("conv2d rejects non-divisible groups and even kernels") {
    auto x = Tensor<double>::zeros({1, 3, 8, 8});
    auto w = Tensor<double>::zeros({4, 1, 3, 3});
    CHECK_THROWS_AS(ops::conv2d(x, w, nullptr, {1, 1, 2}), ConfigError);
    auto we = Tensor<double>::zeros({4, 3, 2, 2});
    CHECK_THROWS_AS(ops::conv2d(x, we, nullptr, {1, 0, 1}), ConfigError);
}

TEST_CASE("conv2d gradients match central differences on 3 seeds") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        Rng rng(seed);
        auto x = random_tensor<double>({2, 4, 5, 5}, rng, -1, 1, true);
        auto w = random_tensor<double>({6, 2, 3, 3}, rng, -1, 1, true);
        auto b = random_tensor<double>({6}, rng, -1, 1, true);
        auto c = random_tensor<double>({2, 6, 3, 3}, rng);
        std::vector<Parameter<double>> params{{"x", x}, {"w", w}, {"b", b}};
        auto rep = gradcheck(
            [&]() {
                return ops::mean(ops::mul(ops::conv2d(x, w, &b, {2, 1, 2}), c));
            },
            params, 1e-3, 1e-4);
        CHECK_MESSAGE(rep.passed, "seed ", seed, ": ", rep.summary());
    }
}

TEST_CASE("conv2d_transposed doubles extents and is the conv adjoint") {
    Rng rng(21);
    auto x = random_tensor<double>({1, 4, 16, 16}, rng);
    auto w = random_tensor<double>({4, 2, 2, 2}, rng);
    auto y = ops::conv2d_transposed(x, w, nullptr);
    CHECK(y.shape() == Shape{1, 2, 32, 32});

    // zero input -> zero output
    auto z = ops::conv2d_transposed(Tensor<double>::zeros({1, 4, 3, 3}), w, nullptr);
    CHECK(max_abs(z) == 0.0);

    // <transposed(x), z> == <x, corr(z)> where corr is an independent
    // brute-force stride-2 2x2 correlation with the same kernel.
    for (std::uint64_t seed : {31u, 32u, 33u}) {
        Rng r2(seed);
        const std::size_t ci = 3, co = 2, h = 5, wd = 4;
        auto xs = random_tensor<double>({2, ci, h, wd}, r2);
        auto ws = random_tensor<double>({ci, co, 2, 2}, r2);
        auto zs = random_tensor<double>({2, co, 2 * h, 2 * wd}, r2);
        auto up = ops::conv2d_transposed(xs, ws, nullptr);
        double lhs = 0;
        for (std::size_t i = 0; i < up.size(); ++i) lhs += up.values()[i] * zs.values()[i];

        double rhs = 0;
        auto xv = xs.values();
        auto wv = ws.values();
        auto zv = zs.values();
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t ic = 0; ic < ci; ++ic)
                for (std::size_t ih = 0; ih < h; ++ih)
                    for (std::size_t iw = 0; iw < wd; ++iw) {
                        double corr = 0;
                        for (std::size_t oc = 0; oc < co; ++oc)
                            for (std::size_t kh = 0; kh < 2; ++kh)
                                for (std::size_t kw = 0; kw < 2; ++kw)
                                    corr += zv[((b * co + oc) * (2 * h) + 2 * ih + kh) * (2 * wd) +
                                               2 * iw + kw] *
                                            wv[((ic * co + oc) * 2 + kh) * 2 + kw];
                        rhs += xv[((b * ci + ic) * h + ih) * wd + iw] * corr;
                    }
        CHECK(std::abs(lhs - rhs) < 1e-8);
    }
}

TEST_CASE("conv2d_transposed rejects non-doubling configurations") {
    auto x = Tensor<double>::zeros({1, 2, 4, 4});
    auto w3 = Tensor<double>::zeros({2, 2, 3, 3});
    CHECK_THROWS_AS(ops::conv2d_transposed(x, w3, nullptr), ConfigError);
    auto w2 = Tensor<double>::zeros({2, 2, 2, 2});
    CHECK_THROWS_AS(ops::conv2d_transposed(x, w2, nullptr, 1), ConfigError);
}

TEST_CASE("conv2d_transposed gradients match central differences") {
    Rng rng(41);
    auto x = random_tensor<double>({1, 3, 4, 4}, rng, -1, 1, true);
    auto w = random_tensor<double>({3, 2, 2, 2}, rng, -1, 1, true);
    auto b = random_tensor<double>({2}, rng, -1, 1, true);
    auto c = random_tensor<double>({1, 2, 8, 8}, rng);
    std::vector<Parameter<double>> params{{"x", x}, {"w", w}, {"b", b}};
    auto rep = gradcheck(
        [&]() { return ops::mean(ops::mul(ops::conv2d_transposed(x, w, &b), c)); }, params,
        1e-3, 1e-4);
    CHECK_MESSAGE(rep.passed, rep.summary());
}

TEST_CASE("elementwise analytic values") {
    auto z = Tensor<double>::scalar(0.0);
    CHECK(ops::softplus(z).item() == doctest::Approx(std::log(2.0)));
    CHECK(ops::gelu(z).item() == 0.0);

    // exact Gaussian-CDF gelu at +-1
    const double phi1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    CHECK(ops::gelu(Tensor<double>::scalar(1.0)).item() == doctest::Approx(phi1));
    CHECK(ops::gelu(Tensor<double>::scalar(-1.0)).item() == doctest::Approx(-(1.0 - phi1)));

    // monotone on the nonnegative axis (gelu dips slightly for x < ~-0.75,
    // so monotonicity holds only from 0 upward)
    double prev = -1;
    for (int i = 0; i <= 50; ++i) {
        const double x = 5.0 * i / 50.0;
        const double y = ops::gelu(Tensor<double>::scalar(x)).item();
        CHECK(y >= prev);
        prev = y;
    }

    // softplus overflow branch
    CHECK(ops::softplus(Tensor<double>::scalar(40.0)).item() == doctest::Approx(40.0));
    CHECK(std::isfinite(ops::softplus(Tensor<double>::scalar(500.0)).item()));
}

TEST_CASE("exp backward at x=1 equals e against finite differences") {
    auto x = Tensor<double>::from_data({1}, {1.0}, true);
    std::vector<Parameter<double>> params{{"x", x}};
    auto rep = gradcheck([&]() { return ops::sum(ops::exp(x)); }, params, 1e-3, 1e-4);
    CHECK_MESSAGE(rep.passed, rep.summary());
    auto y = ops::sum(ops::exp(x));
    y.backward();
    CHECK(x.grad()[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("unary and binary backward rules pass the finite-difference oracle") {
    for (std::uint64_t seed : {51u, 52u, 53u}) {
        Rng rng(seed);
        auto x = random_tensor<double>({2, 5}, rng, -2, 2, true);
        std::vector<Parameter<double>> px{{"x", x}};
        Rng crng(seed + 100);

        auto check_unary = [&](const char* name, auto opfn) {
            Rng local = crng;
            auto rep = gradcheck(
                [&]() {
                    Rng wr(seed + 999);
                    auto c = random_tensor<double>({2, 5}, wr);
                    return ops::mean(ops::mul(opfn(x), c));
                },
                px, 1e-4, 1e-4);
            CHECK_MESSAGE(rep.passed, name, " seed ", seed, ": ", rep.summary());
        };
        check_unary("gelu", [](auto& t) { return ops::gelu(t); });
        check_unary("softplus", [](auto& t) { return ops::softplus(t); });
        check_unary("exp", [](auto& t) { return ops::exp(t); });
        check_unary("sigmoid", [](auto& t) { return ops::sigmoid(t); });
        check_unary("neg", [](auto& t) { return ops::neg(t); });

        // abs: keep inputs away from the kink
        auto xa = random_tensor<double>({8}, rng, 0.5, 2.0, true);
        auto xn = ops::neg(xa);
        std::vector<Parameter<double>> pa{{"xa", xa}};
        auto rep = gradcheck([&]() { return ops::sum(ops::abs(ops::neg(xa))); }, pa, 1e-4, 1e-4);
        CHECK_MESSAGE(rep.passed, rep.summary());

        auto a = random_tensor<double>({3, 4}, rng, 0.5, 2.0, true);
        auto b = random_tensor<double>({3, 4}, rng, 0.5, 2.0, true);
        auto bias = random_tensor<double>({4}, rng, 0.5, 2.0, true);
        std::vector<Parameter<double>> pab{{"a", a}, {"b", b}, {"bias", bias}};
        auto rep2 = gradcheck(
            [&]() {
                auto s = ops::add(a, bias);     // prefix broadcast
                auto d = ops::div(s, b);
                auto m = ops::mul(d, ops::sub(a, b));
                return ops::mean(m);
            },
            pab, 1e-4, 1e-4);
        CHECK_MESSAGE(rep2.passed, rep2.summary());
    }
}

TEST_CASE("broadcasting is limited to leading-1 dimensions") {
    auto big = Tensor<double>::zeros({2, 3, 4});
    CHECK_NOTHROW(ops::add(big, Tensor<double>::zeros({4})));
    CHECK_NOTHROW(ops::add(big, Tensor<double>::zeros({3, 4})));
    CHECK_NOTHROW(ops::add(big, Tensor<double>::zeros({1, 3, 4})));
    CHECK_THROWS_AS(ops::add(big, Tensor<double>::zeros({2, 1, 4})), DimensionError);
    CHECK_THROWS_AS(ops::add(big, Tensor<double>::zeros({3, 1})), DimensionError);
}

TEST_CASE("layernorm hand cases") {
    auto gain = Tensor<double>::full({3}, 1.0);
    auto bias = Tensor<double>::zeros({3});

    // constant input -> zeros (zero variance handled by eps)
    auto c = Tensor<double>::full({2, 3}, 5.0);
    auto yc = ops::layernorm(c, gain, bias);
    CHECK(max_abs(yc) == 0.0);

    // two-point case: mean 2, biased std 1
    auto g2 = Tensor<double>::full({2}, 1.0);
    auto b2 = Tensor<double>::zeros({2});
    auto x = Tensor<double>::from_data({1, 2}, {1.0, 3.0});
    auto y = ops::layernorm(x, g2, b2);
    const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y.values()[0] == doctest::Approx(-expect).epsilon(1e-12));
    CHECK(y.values()[1] == doctest::Approx(expect).epsilon(1e-12));

    // defining property: per-position channel mean ~ 0
    Rng rng(61);
    auto xr = random_tensor<double>({4, 7, 5}, rng);
    auto g5 = Tensor<double>::full({5}, 1.0);
    auto b5 = Tensor<double>::zeros({5});
    auto yr = ops::layernorm(xr, g5, b5);
    for (std::size_t m = 0; m < 28; ++m) {
        double mu = 0;
        for (std::size_t i = 0; i < 5; ++i) mu += yr.values()[m * 5 + i];
        CHECK(std::abs(mu / 5.0) < 1e-6);
    }

    CHECK_THROWS_AS(ops::layernorm(Tensor<double>::zeros({2, 0}), gain, bias), DimensionError);
}

TEST_CASE("layernorm gradient matches central differences") {
    Rng rng(71);
    auto x = random_tensor<double>({2, 3, 4}, rng, -1, 1, true);
    auto g = random_tensor<double>({4}, rng, 0.5, 1.5, true);
    auto b = random_tensor<double>({4}, rng, -0.5, 0.5, true);
    auto c = random_tensor<double>({2, 3, 4}, rng);
    std::vector<Parameter<double>> params{{"x", x}, {"g", g}, {"b", b}};
    auto rep = gradcheck([&]() { return ops::mean(ops::mul(ops::layernorm(x, g, b), c)); },
                         params, 1e-4, 1e-4);
    CHECK_MESSAGE(rep.passed, rep.summary());
}

TEST_CASE("concat_channels layout, round-trip and gradient") {
    auto a = Tensor<double>::from_data({1, 1, 2, 2}, {1, 2, 3, 4}, true);
    auto b = Tensor<double>::from_data({1, 1, 2, 2}, {5, 6, 7, 8}, true);
    auto y = ops::concat_channels(a, b);
    CHECK(y.shape() == Shape{1, 2, 2, 2});
    CHECK(y.values()[0] == 1.0);
    CHECK(y.values()[4] == 5.0);

    auto [sa, sb] = ops::split_channels(y, 1);
    CHECK(max_abs_diff(sa, a) == 0.0);
    CHECK(max_abs_diff(sb, b) == 0.0);

    auto s = ops::sum(ops::concat_channels(a, b));
    s.backward();
    for (double g : a.grad()) CHECK(g == 1.0);
    for (double g : b.grad()) CHECK(g == 1.0);

    CHECK_THROWS_AS(ops::concat_channels(a, Tensor<double>::zeros({1, 1, 3, 2})),
                    DimensionError);
}

TEST_CASE("reverse_sequence involution, definition and backward") {
    auto x = Tensor<double>::from_data({1, 3, 1}, {1, 2, 3});
    auto r = ops::reverse_sequence(x);
    CHECK(r.values()[0] == 3.0);
    CHECK(r.values()[1] == 2.0);
    CHECK(r.values()[2] == 1.0);
    CHECK(max_abs_diff(ops::reverse_sequence(r), x) == 0.0);

    Rng rng(81);
    auto xr = random_tensor<double>({2, 4, 3}, rng, -1, 1, true);
    auto c = random_tensor<double>({2, 4, 3}, rng);
    std::vector<Parameter<double>> params{{"x", xr}};
    auto rep = gradcheck([&]() { return ops::mean(ops::mul(ops::reverse_sequence(xr), c)); },
                         params, 1e-4, 1e-4);
    CHECK_MESSAGE(rep.passed, rep.summary());
}

TEST_CASE("raster flatten/unflatten and reflect_pad2d") {
    auto x = Tensor<double>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    auto seq = ops::raster_flatten(x);
    CHECK(seq.shape() == Shape{1, 4, 1});
    CHECK(seq.values()[0] == 1.0);
    CHECK(seq.values()[1] == 2.0);
    CHECK(seq.values()[2] == 3.0);
    CHECK(seq.values()[3] == 4.0);
    auto back = ops::raster_unflatten(seq, 2, 2);
    CHECK(max_abs_diff(back, x) == 0.0);
    CHECK_THROWS_AS(ops::raster_unflatten(seq, 3, 2), DimensionError);

    Rng rng(91);
    auto xr = random_tensor<double>({2, 3, 3, 5}, rng, -1, 1, true);
    auto c = random_tensor<double>({2, 3, 5, 3}, rng);
    std::vector<Parameter<double>> params{{"x", xr}};
    auto rep = gradcheck(
        [&]() {
            auto f = ops::raster_flatten(xr);
            return ops::mean(ops::mul(ops::raster_unflatten(f, 5, 3), c));
        },
        params, 1e-4, 1e-4);
    CHECK_MESSAGE(rep.passed, rep.summary());

    auto pad = ops::reflect_pad2d(Tensor<double>::from_data({1, 1, 2, 2}, {1, 2, 3, 4}), 1);
    CHECK(pad.shape() == Shape{1, 1, 4, 4});
    // row -1 reflects to row 1, col -1 reflects to col 1
    CHECK(pad.values()[0] == 4.0);
    CHECK(pad.values()[5] == 1.0);

    auto cp = random_tensor<double>({2, 3, 5, 7}, rng);
    auto xp = random_tensor<double>({2, 3, 3, 5}, rng, -1, 1, true);
    std::vector<Parameter<double>> pp{{"x", xp}};
    auto repp = gradcheck([&]() { return ops::mean(ops::mul(ops::reflect_pad2d(xp, 1), cp)); },
                          pp, 1e-4, 1e-4);
    CHECK_MESSAGE(repp.passed, repp.summary());
}

TEST_CASE("linearity of the linear ops family") {
    Rng rng(101);
    const double alpha = 0.7, beta = -1.3;
    auto x = random_tensor<double>({1, 3, 4, 4}, rng);
    auto y = random_tensor<double>({1, 3, 4, 4}, rng);
    std::vector<double> mixed(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        mixed[i] = alpha * x.values()[i] + beta * y.values()[i];
    auto xy = Tensor<double>::from_data(x.shape(), std::move(mixed));

    auto combine = [&](const Tensor<double>& fx, const Tensor<double>& fy,
                       const Tensor<double>& fxy) {
        double worst = 0;
        for (std::size_t i = 0; i < fxy.size(); ++i)
            worst = std::max(worst,
                             std::abs(fxy.values()[i] - (alpha * fx.values()[i] +
                                                         beta * fy.values()[i])));
        return worst;
    };

    auto w = random_tensor<double>({5, 3, 3, 3}, rng);
    CHECK(combine(ops::conv2d(x, w, nullptr, {1, 1, 1}), ops::conv2d(y, w, nullptr, {1, 1, 1}),
                  ops::conv2d(xy, w, nullptr, {1, 1, 1})) < 1e-6);

    auto wt = random_tensor<double>({3, 2, 2, 2}, rng);
    CHECK(combine(ops::conv2d_transposed(x, wt, nullptr), ops::conv2d_transposed(y, wt, nullptr),
                  ops::conv2d_transposed(xy, wt, nullptr)) < 1e-6);

    auto seqx = ops::raster_flatten(x);
    auto seqy = ops::raster_flatten(y);
    auto seqxy = ops::raster_flatten(xy);
    CHECK(combine(ops::reverse_sequence(seqx), ops::reverse_sequence(seqy),
                  ops::reverse_sequence(seqxy)) < 1e-6);

    auto wl = random_tensor<double>({4, 6}, rng);
    auto lx = ops::linear(seqx, wl);
    auto ly = ops::linear(seqy, wl);
    auto lxy = ops::linear(seqxy, wl);
    CHECK(combine(lx, ly, lxy) < 1e-6);

    auto other = random_tensor<double>({1, 2, 4, 4}, rng);
    CHECK(combine(ops::concat_channels(x, other), ops::concat_channels(y, other),
                  ops::concat_channels(xy, ops::scale(other, alpha + beta))) < 1e-6);
}

TEST_CASE("sum gradient is exactly ones; diamond graphs accumulate once") {
    Rng rng(111);
    auto x = random_tensor<double>({3, 3}, rng, -1, 1, true);
    auto s = ops::sum(x);
    s.backward();
    for (double g : x.grad()) CHECK(g == 1.0);

    // f = sum(x*x + x) -> df/dx = 2x + 1; x feeds two consumers
    auto x2 = random_tensor<double>({5}, rng, -1, 1, true);
    auto f = ops::sum(ops::add(ops::mul(x2, x2), x2));
    f.backward();
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(x2.grad()[i] == doctest::Approx(2.0 * x2.values()[i] + 1.0).epsilon(1e-12));
}

TEST_CASE("repeated backward without reset raises") {
    auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
    auto s = ops::sum(x);
    s.backward();
    CHECK_THROWS_AS(s.backward(), GraphError);

    // a shared subgraph consumed by a previous sweep is also rejected
    auto y = ops::mul(x, x);
    auto s1 = ops::sum(y);
    s1.backward();
    auto s2 = ops::mean(y);
    CHECK_THROWS_AS(s2.backward(), GraphError);
}

TEST_CASE("gradcheck negative control: corrupted backward rule is caught") {
    Rng rng(121);
    auto x = random_tensor<double>({4}, rng, -1, 1, true);
    std::vector<Parameter<double>> params{{"x", x}};
    radiomamba::testing::corrupt_backward = true;
    auto rep = gradcheck([&]() { return ops::sum(ops::gelu(x)); }, params, 1e-4, 1e-4);
    radiomamba::testing::corrupt_backward = false;
    CHECK_FALSE(rep.passed);
    CHECK(rep.worst.size() > 0);
}

TEST_CASE("backward requires scalar root and finite objective checks work") {
    auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
    auto y = ops::mul(x, x);
    CHECK_THROWS_AS(y.backward(), DimensionError);

    auto bad = Tensor<double>::from_data({1}, {std::numeric_limits<double>::infinity()}, true);
    std::vector<Parameter<double>> params{{"bad", bad}};
    CHECK_THROWS_AS(gradcheck([&]() { return ops::sum(bad); }, params, 1e-4, 1e-4),
                    NumericError);
}
