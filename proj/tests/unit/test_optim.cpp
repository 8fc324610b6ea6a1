#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "vtok/optim.hpp"

using namespace vtok;

namespace {

Param<float> make(const std::string& name, std::initializer_list<float> v, std::initializer_list<float> g) {
    Param<float> p;
    p.name = name;
    p.value = Tensor<float>({int(v.size())});
    p.grad = Tensor<float>({int(g.size())});
    std::copy(v.begin(), v.end(), p.value.data());
    std::copy(g.begin(), g.end(), p.grad.data());
    return p;
}

}  // namespace

TEST_CASE("first AdamW step moves each weight by about lr") {
    Param<float> p = make("w", {1.f, -2.f}, {0.5f, -0.25f});
    OptimConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;
    cfg.clip_norm = 0.0;
    ParamList<float> ps{&p};
    AdamW opt(cfg, ps);
    opt.step(ps);
    // Bias-corrected first step: m_hat / sqrt(v_hat) = sign(g).
    CHECK(p.value[0] == doctest::Approx(1.f - 0.01f).epsilon(1e-6));
    CHECK(p.value[1] == doctest::Approx(-2.f + 0.01f).epsilon(1e-6));
}

TEST_CASE("decoupled weight decay") {
    Param<float> p = make("w", {2.f}, {0.f});
    OptimConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    ParamList<float> ps{&p};
    AdamW opt(cfg, ps);
    opt.step(ps);
    CHECK(p.value[0] == doctest::Approx(2.f - 0.1f * 0.5f * 2.f));
}

TEST_CASE("frozen parameters are never written") {
    Param<float> a = make("a", {1.f, 2.f}, {3.f, 4.f});
    Param<float> b = make("b", {5.f}, {6.f});
    b.frozen = true;
    ParamList<float> ps{&a, &b};
    AdamW opt(OptimConfig{}, ps);
    for (int i = 0; i < 5; ++i) opt.step(ps);
    CHECK(b.value[0] == 5.f);
    CHECK(a.value[0] != 1.f);
}

TEST_CASE("gradient norm ignores frozen parameters and drives clipping") {
    Param<float> a = make("a", {0.f, 0.f}, {3.f, 4.f});
    Param<float> b = make("b", {0.f}, {100.f});
    b.frozen = true;
    ParamList<float> ps{&a, &b};
    CHECK(grad_norm(ps) == doctest::Approx(5.0));
    OptimConfig cfg;
    cfg.clip_norm = 1.0;
    AdamW opt(cfg, ps);
    CHECK(opt.step(ps) == doctest::Approx(5.0));
}

TEST_CASE("non-finite gradients abort the step") {
    Param<float> a = make("a", {0.f}, {std::nanf("")});
    ParamList<float> ps{&a};
    AdamW opt(OptimConfig{}, ps);
    CHECK_THROWS(opt.step(ps));
    CHECK(a.value[0] == 0.f);
}

TEST_CASE("optimizer state export and import") {
    Param<float> a = make("a", {1.f, 2.f}, {0.3f, -0.1f});
    ParamList<float> ps{&a};
    AdamW opt(OptimConfig{}, ps);
    opt.step(ps);
    std::vector<ArchiveTensor> t;
    opt.export_state("opt.", t);
    AdamW other(OptimConfig{}, ps);
    other.import_state("opt.", opt.state_json(), t);
    Param<float> a2 = a;
    ParamList<float> ps2{&a2};
    opt.step(ps);
    other.step(ps2);
    CHECK(bitwise_equal(a.value, a2.value));
    CHECK(other.steps() == 2);
}
