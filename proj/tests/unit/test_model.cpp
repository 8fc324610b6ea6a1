#include <doctest.h>

#include "helpers.hpp"
#include "vtok/checkpoint.hpp"

using namespace vtok;
using testutil::randn;
using testutil::tiny_model;
using testutil::tiny_plan;

TEST_CASE("encode maps 1 + kN frames to 1 + N latents and decode inverts it") {
    for (int k : {4, 8, 16}) {
        const TokenizerModel m = tiny_model(k);
        for (int n : {0, 1, 2}) {
            const auto v = randn<float>({1 + k * n, 3, 8, 8}, 100 + n);
            const LatentGrid g = m.encode(v);
            CHECK(g.mean.shape() == Shape{1 + n, 4, 2, 2});
            CHECK(g.logvar.shape() == g.mean.shape());
            CHECK(m.decode(g.mean).shape() == v.shape());
        }
    }
}

TEST_CASE("incompatible frame counts are rejected") {
    const TokenizerModel m = tiny_model(8);
    CHECK_THROWS_AS(m.encode(randn<float>({10, 3, 8, 8}, 1)), DivisibilityError);
    CHECK(m.latent_frames(17) == 3);
    CHECK(m.decoded_frames(3) == 17);
}

TEST_CASE("latent frames never see the future") {
    for (int k : {4, 8}) {
        const TokenizerModel m = tiny_model(k);
        auto v = randn<float>({1 + 2 * k, 3, 8, 8}, 7);
        const LatentGrid base = m.encode(v);
        for (int p = 1; p < v.frames(); ++p) {
            auto w = v;
            for (std::size_t i = 0; i < w.frame_numel(); ++i) w.frame_ptr(p)[i] += 0.5f;
            const LatentGrid g = m.encode(w);
            const int safe = (p - 1) / k;  // latents 0..safe cover frames < p
            CHECK(bitwise_equal(slice_frames(g.mean, 0, safe + 1), slice_frames(base.mean, 0, safe + 1)));
        }
    }
}

TEST_CASE("logvar is clamped") {
    Tensor<float> moments({1, 4, 1, 1});
    moments[2] = 100.f;
    moments[3] = -100.f;
    const LatentGrid g = split_moments(moments);
    CHECK(g.logvar[0] == kLogvarMax);
    CHECK(g.logvar[1] == kLogvarMin);
}

TEST_CASE("grow freezes the parent and adds a fresh stage") {
    const TokenizerModel parent = tiny_model(4);
    const TokenizerModel child = TokenizerModel::grow(parent, tiny_plan(8), 5);
    CHECK(child.k() == 8);
    for (const auto* p : parent.parameters()) {
        const Param<Real>* q = child.find(p->name);
        REQUIRE(q != nullptr);
        CHECK(q->frozen);
        CHECK(bitwise_equal(q->value, p->value));
    }
    bool has_ada = false, has_new_trainable = false;
    for (const auto* p : child.parameters()) {
        if (p->name.find("growth8.ada") != std::string::npos) has_ada = true;
        if (!p->frozen) {
            has_new_trainable = true;
            CHECK(p->stage == 8);
            CHECK(parent.find(p->name) == nullptr);
        }
    }
    CHECK(has_ada);
    CHECK(has_new_trainable);
    CHECK_THROWS_AS(TokenizerModel::grow(parent, tiny_plan(16), 5), ConfigError);
}

TEST_CASE("ablation growth has no AdaNorm parameters") {
    const TokenizerModel m = tiny_model(16, false);
    for (const auto* p : m.parameters()) CHECK(p->name.find(".ada") == std::string::npos);
    CHECK(growth_mixing(m) == std::vector<bool>{false, false});
}

TEST_CASE("key embedding equals the parent trunk on the subsampled video") {
    const TokenizerModel parent = tiny_model(4);
    const TokenizerModel child = TokenizerModel::grow(parent, tiny_plan(8), 5);
    const auto v = randn<float>({17, 3, 8, 8}, 21);
    const auto key = child.key_embedding(v);
    const auto ref = parent.features(0, subsample_time(v, 2));
    CHECK(max_abs_diff(key, ref) <= 1e-6);
}

TEST_CASE("16x key path runs the frozen 8x encoder") {
    const TokenizerModel m8 = tiny_model(8);
    const TokenizerModel m16 = TokenizerModel::grow(m8, tiny_plan(16), 9);
    const auto v = randn<float>({33, 3, 8, 8}, 22);
    CHECK(max_abs_diff(m16.key_embedding(v), m8.features(1, subsample_time(v, 2))) <= 1e-6);
}

TEST_CASE("the image encoder is frozen in every build") {
    const TokenizerModel m = TokenizerModel::build(tiny_plan(8), 3);
    for (const auto* p : m.parameters()) {
        if (p->name.rfind("image_encoder.", 0) == 0)
            CHECK(p->frozen);
        else
            CHECK_FALSE(p->frozen);
    }
}

TEST_CASE("adopting a trained image encoder copies its weights") {
    ImageAutoencoder img = ImageAutoencoder::build(tiny_plan(4), 77);
    TokenizerModel m = TokenizerModel::build(tiny_plan(4), 3);
    m.adopt_image_encoder(img);
    for (const auto* p : std::as_const(img).parameters()) {
        if (p->name.rfind("image_encoder.", 0) != 0) continue;
        const Param<Real>* q = m.find(p->name);
        REQUIRE(q);
        CHECK(bitwise_equal(q->value, p->value));
    }
    StagePlan other = tiny_plan(4);
    other.widths = {4, 8, 16};
    CHECK_THROWS_AS(TokenizerModel::build(other, 1).adopt_image_encoder(img), ConfigError);
}

TEST_CASE("frame 0 is reconstructed from frame 0 alone") {
    const TokenizerModel m = tiny_model(4);
    auto v = randn<float>({9, 3, 8, 8}, 30);
    const auto z = m.encode(v).mean;
    const auto x = m.decode(z);
    for (std::size_t i = 0; i < v.frame_numel(); ++i) v.frame_ptr(5)[i] = 0.f;
    const auto x2 = m.decode(m.encode(v).mean);
    CHECK(bitwise_equal(slice_frames(x, 0, 1), slice_frames(x2, 0, 1)));
}

TEST_CASE("subsample keeps frames 0, f, 2f") {
    Tensor<float> v({9, 1, 1, 1});
    for (int t = 0; t < 9; ++t) v[t] = float(t);
    const auto s = subsample_time(v, 4);
    REQUIRE(s.frames() == 3);
    CHECK(s[0] == 0.f);
    CHECK(s[1] == 4.f);
    CHECK(s[2] == 8.f);
    CHECK_THROWS_AS(subsample_time(Tensor<float>({8, 1, 1, 1}), 2), DivisibilityError);
}
