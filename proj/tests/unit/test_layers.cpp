#include <doctest.h>

#include "helpers.hpp"

using namespace vtok;
using testutil::numeric_grad;
using testutil::randn;
using testutil::rel_error;

namespace {

constexpr double kGradTol = 1e-4;

ConvGeometry geom3(int ci, int co) {
    ConvGeometry g;
    g.in_channels = ci;
    g.out_channels = co;
    g.kt = g.kh = g.kw = 3;
    return g;
}

void randomize(Param<double>& p, std::uint64_t seed, double scale = 0.5) { p.value = randn<double>(p.value.shape(), seed, scale); }

}  // namespace

TEST_CASE("mean-free group norm values") {
    MeanFreeGroupNorm<double> n("n", 4, 2, 0);
    Tensor<double> x({1, 4, 1, 1});
    x[0] = 3;
    x[1] = 4;
    x[2] = 1;
    x[3] = -1;
    const auto y = n.forward(x);
    const double r0 = std::sqrt((9.0 + 16.0) / 2 + 1e-6), r1 = std::sqrt(1.0 + 1e-6);
    CHECK(y[0] == doctest::Approx(3 / r0).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(4 / r0).epsilon(1e-14));
    CHECK(y[2] == doctest::Approx(1 / r1).epsilon(1e-14));
    CHECK(y[3] == doctest::Approx(-1 / r1).epsilon(1e-14));
}

TEST_CASE("mean-free group norm keeps the mean direction") {
    MeanFreeGroupNorm<double> n("n", 8, 8, 0);
    Tensor<double> x({2, 8, 3, 3});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = 5.0;
    const auto y = n.forward(x);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("group norm statistics are per frame") {
    MeanFreeGroupNorm<double> n("n", 4, 2, 0);
    auto x = randn<double>({3, 4, 2, 2}, 1);
    const auto y = n.forward(x);
    for (int i = 0; i < 16; ++i) x.frame_ptr(2)[i] *= 7.0;
    const auto y2 = n.forward(x);
    CHECK(bitwise_equal(slice_frames(y, 0, 2), slice_frames(y2, 0, 2)));
}

TEST_CASE("finite differences: mean-free group norm") {
    MeanFreeGroupNorm<double> n("n", 4, 2, 0);
    randomize(n.gain(), 11);
    auto x = randn<double>({3, 4, 5, 5}, 2);
    const auto probe = randn<double>(x.shape(), 3);
    MeanFreeGroupNorm<double>::Cache c;
    n.forward(x, &c);
    n.gain().zero_grad();
    const auto dx = n.backward(probe, c);
    CHECK(rel_error(dx, numeric_grad(x, probe, [&] { return n.forward(x); })) < kGradTol);
    const auto dg = n.gain().grad;
    CHECK(rel_error(dg, numeric_grad(n.gain().value, probe, [&] { return n.forward(x); })) < kGradTol);
}

TEST_CASE("finite differences: AdaNorm") {
    Rng rng(4);
    AdaNorm<double> a("ada", 4, 3, 8, rng);
    randomize(a.projection().weight(), 12);
    randomize(a.projection().bias(), 13);
    randomize(a.norm().gain(), 14);
    auto x = randn<double>({5, 4, 3, 3}, 5);
    auto cond = randn<double>({3, 3, 3, 3}, 6);
    const auto probe = randn<double>(x.shape(), 7);
    AdaNorm<double>::Cache c;
    a.forward(x, cond, &c);
    for (auto* p : std::vector<Param<double>*>{&a.projection().weight(), &a.projection().bias(), &a.norm().gain()})
        p->zero_grad();
    Tensor<double> dcond;
    const auto dx = a.backward(probe, c, &dcond);
    auto f = [&] { return a.forward(x, cond); };
    CHECK(rel_error(dx, numeric_grad(x, probe, f)) < kGradTol);
    CHECK(rel_error(dcond, numeric_grad(cond, probe, f)) < kGradTol);
    CHECK(rel_error(a.projection().weight().grad, numeric_grad(a.projection().weight().value, probe, f)) < kGradTol);
    CHECK(rel_error(a.norm().gain().grad, numeric_grad(a.norm().gain().value, probe, f)) < kGradTol);
}

TEST_CASE("AdaNorm starts as plain mean-free norm") {
    Rng rng(4);
    AdaNorm<double> a("ada", 4, 3, 8, rng);
    MeanFreeGroupNorm<double> n("n", 4, MeanFreeGroupNorm<double>::default_groups(4), 0);
    const auto x = randn<double>({5, 4, 3, 3}, 5);
    const auto cond = randn<double>({3, 3, 3, 3}, 6);
    CHECK(bitwise_equal(a.forward(x, cond), n.forward(x)));
}

TEST_CASE("AdaNorm frame map") {
    CHECK(ada_norm_frame_map(5, 3) == std::vector<int>{0, 1, 1, 2, 2});
    CHECK(ada_norm_frame_map(9, 3) == std::vector<int>{0, 1, 1, 1, 1, 2, 2, 2, 2});
    CHECK(ada_norm_frame_map(1, 1) == std::vector<int>{0});
    CHECK_THROWS(ada_norm_frame_map(6, 3));
}

TEST_CASE("finite differences: causal conv3d") {
    Rng rng(5);
    ConvGeometry g = geom3(3, 4);
    g.st = 2;
    CausalConv3d<double> conv("c", g, 0, rng);
    auto x = randn<double>({5, 3, 5, 5}, 8);
    CausalConv3d<double>::Cache c;
    const auto y = conv.forward(x, &c);
    const auto probe = randn<double>(y.shape(), 9);
    conv.weight().zero_grad();
    conv.bias().zero_grad();
    const auto dx = conv.backward(probe, c);
    auto f = [&] { return conv.forward(x); };
    CHECK(rel_error(dx, numeric_grad(x, probe, f)) < kGradTol);
    CHECK(rel_error(conv.weight().grad, numeric_grad(conv.weight().value, probe, f)) < kGradTol);
    CHECK(rel_error(conv.bias().grad, numeric_grad(conv.bias().value, probe, f)) < kGradTol);
}

TEST_CASE("finite differences: efficient upsample block") {
    Rng rng(6);
    UpsampleBlock<double> up("up", 3, 4, true, 2, 3, 0, rng);
    auto x = randn<double>({3, 3, 2, 3}, 10);
    UpsampleBlock<double>::Cache c;
    const auto y = up.forward(x, &c);
    CHECK(y.shape() == Shape{5, 4, 4, 6});
    const auto probe = randn<double>(y.shape(), 11);
    std::vector<Param<double>*> ps;
    up.collect(ps);
    for (auto* p : ps) p->zero_grad();
    const auto dx = up.backward(probe, c);
    auto f = [&] { return up.forward(x); };
    CHECK(rel_error(dx, numeric_grad(x, probe, f)) < kGradTol);
    CHECK(rel_error(ps[0]->grad, numeric_grad(ps[0]->value, probe, f)) < kGradTol);
}

TEST_CASE("efficient upsample drops exactly the padding frame") {
    Rng rng(7);
    UpsampleBlock<double> up("up", 2, 2, true, 1, 3, 0, rng);
    for (int t : {1, 2, 3, 5}) {
        const auto x = randn<double>({t, 2, 3, 3}, 12);
        CHECK(up.forward(x).frames() == 2 * t - 1);
    }
}

TEST_CASE("finite differences: residual and temporal downsample blocks") {
    Rng rng(8);
    TemporalDownsampleBlock<double> down("d", 4, 0, rng);
    std::vector<Param<double>*> ps;
    down.collect(ps);
    for (std::size_t i = 0; i < ps.size(); ++i) randomize(*ps[i], 20 + i, 0.3);
    auto x = randn<double>({5, 4, 3, 3}, 13);
    TemporalDownsampleBlock<double>::Cache c;
    const auto y = down.forward(x, &c);
    CHECK(y.frames() == 3);
    const auto probe = randn<double>(y.shape(), 14);
    for (auto* p : ps) p->zero_grad();
    const auto dx = down.backward(probe, c);
    CHECK(rel_error(dx, numeric_grad(x, probe, [&] { return down.forward(x); })) < kGradTol);
    CHECK_THROWS(down.forward(randn<double>({4, 4, 3, 3}, 1)));
}

TEST_CASE("frozen parameters receive no gradient") {
    Rng rng(9);
    CausalConv3d<double> conv("c", geom3(2, 2), 0, rng);
    conv.weight().frozen = true;
    conv.weight().zero_grad();
    auto x = randn<double>({3, 2, 4, 4}, 15);
    CausalConv3d<double>::Cache c;
    const auto y = conv.forward(x, &c);
    conv.backward(randn<double>(y.shape(), 16), c);
    for (std::size_t i = 0; i < conv.weight().grad.numel(); ++i) CHECK(conv.weight().grad[i] == 0.0);
}
