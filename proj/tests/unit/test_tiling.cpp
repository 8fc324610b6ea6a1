#include <doctest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "vtok/tiling.hpp"

using namespace vtok;
using testutil::randn;

namespace {

template <typename R>
CausalConv3d<R> conv3x3(int ci, int co, int kt = 1, std::uint64_t seed = 1) {
    ConvGeometry g;
    g.in_channels = ci;
    g.out_channels = co;
    g.kt = kt;
    g.kh = g.kw = 3;
    Rng rng(seed);
    return CausalConv3d<R>("c", g, 0, rng);
}

bool partition_of_unity(const TileLayout& l) {
    const std::size_t nc = l.cols.spans.size();
    for (int y = 0; y < l.height; ++y)
        for (int x = 0; x < l.width; ++x) {
            std::int64_t s = 0;
            for (std::size_t i = 0; i < l.count(); ++i) s += l.numerator(i / nc, i % nc, y, x);
            if (s != l.denominator(y, x) || s <= 0) return false;
        }
    return true;
}

}  // namespace

TEST_CASE("plan_tiles examples") {
    SUBCASE("single tile") {
        const TileLayout l = plan_tiles(64, 64, 64, 0);
        CHECK(l.count() == 1);
        for (int y = 0; y < 64; y += 7)
            for (int x = 0; x < 64; x += 5) CHECK(l.weight(0, 0, y, x) == 1.0);
    }
    SUBCASE("64x120 with tile 64 overlap 8") {
        const TileLayout l = plan_tiles(64, 120, 64, 8);
        REQUIRE(l.rows.spans.size() == 1);
        REQUIRE(l.cols.spans.size() == 2);
        CHECK(l.cols.spans[0].start == 0);
        CHECK(l.cols.spans[0].end == 64);
        CHECK(l.cols.spans[1].start == 56);
        CHECK(l.cols.spans[1].end == 120);
        // Independent construction: descending and ascending ramps over columns 56..63.
        for (int x = 0; x < 120; ++x) {
            double a = 0, b = 0;
            if (x < 56) a = 1;
            else if (x < 64) a = double(64 - x) / 9.0;
            if (x >= 64) b = 1;
            else if (x >= 56) b = double(x - 56 + 1) / 9.0;
            CHECK(l.weight(0, 0, 10, x) == doctest::Approx(a).epsilon(1e-15));
            CHECK(l.weight(0, 1, 10, x) == doctest::Approx(b).epsilon(1e-15));
            CHECK(a + b == doctest::Approx(1.0).epsilon(1e-15));
        }
        CHECK(partition_of_unity(l));
    }
    CHECK_THROWS_AS(plan_tiles(64, 64, 8, 8), ConfigError);
    CHECK_THROWS_AS(plan_tiles(64, 64, 8, -1), ConfigError);
}

TEST_CASE("partition of unity holds for arbitrary layouts") {
    for (int h : {5, 17, 64, 100})
        for (int tile : {4, 9, 16, 64})
            for (int o : {0, 1, 3}) {
                if (o >= tile) continue;
                CHECK(partition_of_unity(plan_tiles(h, h + 7, tile, o)));
            }
}

TEST_CASE("identity 1x1 conv tiles to the input exactly") {
    ConvGeometry g;
    g.in_channels = g.out_channels = 3;
    Rng rng(1);
    CausalConv3d<float> id("id", g, 0, rng, 0.0);
    for (int c = 0; c < 3; ++c) id.weight().value[std::size_t(c * 3 + c)] = 1.f;
    const auto x = randn<float>({2, 3, 20, 30}, 2);
    CHECK(bitwise_equal(layerwise_tiled_apply(id, x, plan_tiles(20, 30, 8, 2)), x));
}

TEST_CASE("random 3x3 conv: tiled equals untiled") {
    const auto conv = conv3x3<float>(4, 4);
    const auto x = randn<float>({1, 4, 64, 120}, 3);
    const auto full = conv.forward(x);
    CHECK(max_abs_diff(layerwise_tiled_apply(conv, x, plan_tiles(64, 120, 64, 8)), full) <= 1e-5);
    CHECK(max_abs_diff(layerwise_tiled_apply(conv, x, plan_tiles(64, 120, 20, 4)), full) <= 1e-5);
}

TEST_CASE("float64 tiling is exact to 1e-12") {
    const auto conv = conv3x3<double>(3, 5, 3);
    const auto x = randn<double>({4, 3, 33, 41}, 4);
    CHECK(max_abs_diff(layerwise_tiled_apply(conv, x, plan_tiles(33, 41, 12, 3)), conv.forward(x)) <= 1e-12);
}

TEST_CASE("one tile is bitwise the untiled layer") {
    const auto conv = conv3x3<float>(3, 3, 3);
    const auto x = randn<float>({3, 3, 16, 16}, 5);
    CHECK(bitwise_equal(layerwise_tiled_apply(conv, x, plan_tiles(16, 16, 64, 8)), conv.forward(x)));
}

TEST_CASE("overlap below twice the kernel radius is rejected") {
    const auto conv = conv3x3<float>(1, 1);
    const auto x = randn<float>({1, 1, 16, 16}, 6);
    CHECK_THROWS_AS(layerwise_tiled_apply(conv, x, plan_tiles(16, 16, 8, 1)), ConfigError);
}

TEST_CASE("tiled decode matches full decode") {
    const TokenizerModel m = testutil::tiny_model(8);
    const auto z = randn<float>({2, 4, 6, 10}, 7);
    const auto full = m.decode(z);
    CHECK(max_abs_diff(tiled_decode(m, z, 4, 2), full) <= 1e-4);
    CHECK(bitwise_equal(tiled_decode(m, z, 64, 8), full));
}

TEST_CASE("tiled decode does not depend on tile order") {
    const TokenizerModel m = testutil::tiny_model(4);
    const auto z = randn<float>({2, 4, 6, 6}, 8);
    const auto a = tiled_decode(m, z, 4, 2);
    // Latent layers have a 2x2 tile grid; process it backwards.
    TileOptions o;
    o.order = {3, 2, 1, 0};
    CHECK(bitwise_equal(tiled_decode(m, z, 4, 2, o), a));
    std::vector<std::size_t> shuffled(plan_tiles(6, 6, 4, 2).count());
    std::iota(shuffled.begin(), shuffled.end(), std::size_t{0});
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937(3));
    const auto conv = conv3x3<float>(2, 2);
    const auto x = randn<float>({1, 2, 30, 30}, 9);
    TileOptions o2;
    o2.order = std::vector<std::size_t>(plan_tiles(30, 30, 8, 2).count());
    std::iota(o2.order.rbegin(), o2.order.rend(), std::size_t{0});
    CHECK(bitwise_equal(layerwise_tiled_apply(conv, x, plan_tiles(30, 30, 8, 2), o2),
                        layerwise_tiled_apply(conv, x, plan_tiles(30, 30, 8, 2))));
}

TEST_CASE("per-conv tile footprint is bounded by (tile + 2r)^2") {
    const auto conv = conv3x3<float>(6, 6, 3);
    const auto x = randn<float>({5, 6, 40, 40}, 10);
    TileStats s;
    TileOptions o;
    o.stats = &s;
    layerwise_tiled_apply(conv, x, plan_tiles(40, 40, 12, 4), o);
    CHECK(s.layers == 1);
    CHECK(s.tiles == 25);  // starts 0, 8, 16, 24, 28 per axis
    CHECK(s.peak_tile_elements <= std::size_t(5) * 6 * (12 + 2) * (12 + 2));
    CHECK(s.peak_full_elements == x.numel());

    const TokenizerModel m = testutil::tiny_model(4);
    TileStats d;
    o.stats = &d;
    tiled_decode(m, randn<float>({2, 4, 12, 12}, 11), 4, 2, o);
    CHECK(d.layers > 0);
    CHECK(d.peak_tile_elements < d.peak_full_elements);
}

TEST_CASE("stitch ramps") {
    ChunkPlan plan = plan_chunks(30, 17, 4);
    Tensor<float> a({17, 1, 1, 1}), b({17, 1, 1, 1});
    for (int i = 0; i < 17; ++i) {
        a[i] = 1.f;
        b[i] = -1.f;
    }
    const auto s = stitch_chunks({a, b}, plan);
    REQUIRE(s.frames() == 30);
    CHECK(s[13] == 0.6f);
    CHECK(s[14] == 0.2f);
    CHECK(s[15] == -0.2f);
    CHECK(s[16] == -0.6f);
    for (int t = 0; t < 13; ++t) CHECK(s[t] == 1.f);
    for (int t = 17; t < 30; ++t) CHECK(s[t] == -1.f);
    CHECK(stitch_weight(0, 4) == 0.8);
    CHECK(stitch_weight(3, 4) == doctest::Approx(0.2));
}

TEST_CASE("stitching equal overlaps and zero overlap") {
    const auto a = randn<float>({17, 2, 3, 3}, 11);
    auto b = randn<float>({17, 2, 3, 3}, 12);
    for (int t = 0; t < 4; ++t) std::copy_n(a.frame_ptr(13 + t), a.frame_numel(), b.frame_ptr(t));
    const auto s = stitch_chunks({a, b}, plan_chunks(30, 17, 4));
    for (int t = 13; t < 17; ++t)
        CHECK(std::equal(s.frame_ptr(t), s.frame_ptr(t) + s.frame_numel(), a.frame_ptr(t)));

    const auto c = stitch_chunks({a, b}, plan_chunks(34, 17, 0));
    CHECK(bitwise_equal(slice_frames(c, 0, 17), a));
    CHECK(bitwise_equal(slice_frames(c, 17, 34), b));
    CHECK_THROWS_AS(stitch_chunks({a}, plan_chunks(34, 17, 0)), ShapeError);
    CHECK_THROWS_AS(stitch_chunks({a, slice_frames(b, 0, 16)}, plan_chunks(34, 17, 0)), ShapeError);
}
