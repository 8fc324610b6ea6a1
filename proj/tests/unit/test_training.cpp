#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "vtok/eval.hpp"
#include "vtok/trainer.hpp"

using namespace vtok;
namespace fs = std::filesystem;

namespace {

Corpus corpus(const std::string& name, int clips = 6) {
    const auto dir = testutil::scratch_dir(name);
    SynthSpec s;
    s.num_clips = clips;
    s.frames_per_clip = 17;
    s.height = s.width = 8;
    generate_synthetic(s, dir);
    return Corpus::open(dir);
}

TrainOptions quick(int k, std::int64_t steps) {
    TrainOptions o;
    o.steps = steps;
    o.batch = 1;
    o.optim.lr = 1e-3;
    o.weights = LossWeights::for_stage(k);
    o.disc_widths = {4};
    o.eval_clips = 1;
    o.log_every = 0;
    o.eval_every = 0;
    return o;
}

struct NanPerceptual : PerceptualLoss {
    double operator()(const Tensor<Real>& x, const Tensor<Real>&, Tensor<Real>* grad) const override {
        if (grad) *grad = Tensor<Real>(x.shape());
        return std::numeric_limits<double>::quiet_NaN();
    }
};

Config tiny_config(const fs::path& corpus_dir) {
    Config c;
    c.data.corpus = corpus_dir.string();
    c.data.held_out = 2;
    c.model = testutil::tiny_plan(4);
    c.optim.batch = 1;
    c.stage.image_steps = 0;
    c.stage.budgets = {0, 0, 0};
    c.logging.eval_clips = 1;
    c.losses.disc_widths = {4};
    return c;
}

}  // namespace

TEST_CASE("a growth step leaves every frozen parameter bit-identical") {
    const Corpus c = corpus("train_freeze");
    const TokenizerModel parent = testutil::tiny_model(4);
    TokenizerModel m = TokenizerModel::grow(parent, testutil::tiny_plan(8), 3);
    const std::string before = frozen_hash(m);
    const auto res = train_stage(m, c, c, quick(8, 2));
    CHECK(frozen_hash(m) == before);
    CHECK(res.frozen_hash == before);
    bool moved = false;
    for (const auto* p : parent.parameters()) CHECK(bitwise_equal(m.find(p->name)->value, p->value));
    for (const auto* p : std::as_const(m).parameters())
        if (!p->frozen && !parent.find(p->name)) {
            const auto fresh = TokenizerModel::grow(parent, testutil::tiny_plan(8), 3);
            moved |= !bitwise_equal(fresh.find(p->name)->value, p->value);
        }
    CHECK(moved);
}

TEST_CASE("zero-step training saves the input model") {
    const Corpus c = corpus("train_zero");
    const auto dir = testutil::scratch_dir("train_zero_out");
    TokenizerModel m = testutil::tiny_model(8);
    const TokenizerModel orig = m;
    TrainOptions o = quick(8, 0);
    o.checkpoint = dir / "m.vtck";
    train_stage(m, c, c, o);
    const TokenizerModel back = load_tokenizer(o.checkpoint);
    const auto a = orig.parameters(), b = back.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(a[i]->value, b[i]->value));
}

TEST_CASE("fixed seed gives an identical loss trajectory") {
    const Corpus c = corpus("train_det");
    auto run = [&] {
        TokenizerModel m = testutil::tiny_model(4);
        return train_stage(m, c, c, quick(4, 10)).history;
    };
    const auto a = run(), b = run();
    REQUIRE(a.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(a[i].terms.total == b[i].terms.total);
        CHECK(a[i].d_loss == b[i].d_loss);
    }
}

TEST_CASE("resuming from a checkpoint continues the same trajectory") {
    const Corpus c = corpus("train_resume");
    const auto dir = testutil::scratch_dir("train_resume_out");
    TokenizerModel full = testutil::tiny_model(4);
    const auto ref = train_stage(full, c, c, quick(4, 6)).history;

    TokenizerModel part = testutil::tiny_model(4);
    TrainOptions o = quick(4, 3);
    o.checkpoint = dir / "p.vtck";
    train_stage(part, c, c, o);
    CheckpointInfo info;
    TokenizerModel resumed = load_tokenizer(o.checkpoint, &info);
    CHECK(info.step == 3);
    o.steps = 6;
    const auto rest = train_stage(resumed, c, c, o, &info).history;
    REQUIRE(rest.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(rest[i].terms.total == ref[i + 3].terms.total);
}

TEST_CASE("training lowers the reconstruction loss") {
    const Corpus c = corpus("train_fit", 3);
    TokenizerModel m = testutil::tiny_model(4);
    TrainOptions o = quick(4, 40);
    o.weights.gan = 0;
    const auto h = train_stage(m, c, c, o).history;
    double first = 0, last = 0;
    for (int i = 0; i < 5; ++i) {
        first += h[std::size_t(i)].terms.rec;
        last += h[h.size() - 1 - std::size_t(i)].terms.rec;
    }
    CHECK(last < first);
}

TEST_CASE("non-finite loss aborts with a snapshot") {
    const Corpus c = corpus("train_nan");
    const auto dir = testutil::scratch_dir("train_nan_out");
    TokenizerModel m = testutil::tiny_model(4);
    TrainOptions o = quick(4, 3);
    NanPerceptual nan_loss;
    o.perceptual = &nan_loss;
    o.weights.perceptual = 1.0;
    o.run_dir = dir;
    CHECK_THROWS_AS(train_stage(m, c, c, o), TrainingError);
    CHECK(fs::exists(dir / "nan_snapshot.vtck"));
}

TEST_CASE("GAN weight on a grown stage is refused") {
    const Corpus c = corpus("train_gan8");
    TokenizerModel m = testutil::tiny_model(8);
    TrainOptions o = quick(8, 1);
    o.weights.gan = 0.1;
    CHECK_THROWS_AS(train_stage(m, c, c, o), ConfigError);
}

TEST_CASE("generator pass gives the critic no gradient; critic pass gives the model none") {
    Discriminator d(3, {4}, 1);
    TokenizerModel m = testutil::tiny_model(4);
    const auto x = testutil::randn<float>({5, 3, 8, 8}, 2);
    Rng rng(1);
    TokenizerModel::TrainCache cache;
    LatentGrid g;
    const auto x_hat = m.forward_train(x, rng, g, cache);

    auto dps = d.parameters();
    zero_grads(dps);
    Discriminator::Cache dc;
    const auto s = d.forward(x_hat, &dc);
    const auto dx = d.backward(hinge_generator_grad(s), dc, false);
    for (const auto* p : dps) CHECK(grad_norm({const_cast<Param<Real>*>(p)}) == 0.0);
    CHECK(max_abs_diff(dx, Tensor<Real>(dx.shape())) > 0);

    auto mps = m.parameters();
    zero_grads(mps);
    const Tensor<Real> detached = x_hat;
    Discriminator::Cache rc, fc;
    Tensor<Real> dr, df;
    const auto rs = d.forward(x, &rc), fs_ = d.forward(detached, &fc);
    hinge_discriminator_grads(rs, fs_, dr, df);
    d.backward(dr, rc, true);
    d.backward(df, fc, true);
    CHECK(grad_norm(dps) > 0);
    CHECK(grad_norm(mps) == 0.0);
}

TEST_CASE("image stage trains the frame autoencoder") {
    const Corpus c = corpus("train_img", 3);
    ImageAutoencoder img = ImageAutoencoder::build(testutil::tiny_plan(4), 1);
    TrainOptions o = quick(4, 20);
    o.batch = 4;
    const auto r = train_image(img, c, c, o);
    CHECK(r.history.size() == 20);
    CHECK(r.final_psnr > 0);
}

TEST_CASE("pipeline with zero budgets chains lineage") {
    const Corpus c = corpus("pipe_zero");
    const auto dir = testutil::scratch_dir("pipe_zero_out");
    const Config cfg = tiny_config(c.root);
    const PipelinePaths p = run_pipeline(cfg, dir);
    CheckpointInfo i4, i8, i16;
    const auto m4 = load_tokenizer(p.k4, &i4);
    const auto m8 = load_tokenizer(p.k8, &i8);
    const auto m16 = load_tokenizer(p.k16, &i16);
    CHECK(m4.k() == 4);
    CHECK(m8.k() == 8);
    CHECK(m16.k() == 16);
    CHECK(i4.parent_hash == hash_file(p.image));
    CHECK(i8.parent_hash == hash_file(p.k4));
    CHECK(i16.parent_hash == hash_file(p.k8));
    for (const auto* q : m4.parameters()) {
        const Param<Real>* r = m16.find(q->name);
        REQUIRE(r);
        CHECK(r->frozen);
        CHECK(bitwise_equal(r->value, q->value));
    }
}

TEST_CASE("pipeline resume skips finished stages") {
    const Corpus c = corpus("pipe_resume");
    const auto dir = testutil::scratch_dir("pipe_resume_out");
    Config cfg = tiny_config(c.root);
    const PipelinePaths p = run_pipeline(cfg, dir);
    fs::remove(p.k4);
    fs::remove(p.image);
    fs::remove(p.k16);
    const std::string h8 = hash_file(p.k8);
    run_pipeline(cfg, dir);
    CHECK_FALSE(fs::exists(p.k4));
    CHECK(fs::exists(p.k16));
    CHECK(hash_file(p.k8) == h8);
    CheckpointInfo i16;
    load_tokenizer(p.k16, &i16);
    CHECK(i16.parent_hash == h8);
}

TEST_CASE("ablation pipeline grows without AdaNorm") {
    const Corpus c = corpus("pipe_ablation");
    const auto dir = testutil::scratch_dir("pipe_ablation_out");
    Config cfg = tiny_config(c.root);
    cfg.stage.ablation = true;
    const PipelinePaths p = run_pipeline(cfg, dir);
    const auto m8 = load_tokenizer(p.k8);
    for (const auto* q : m8.parameters()) CHECK(q->name.find(".ada") == std::string::npos);
    CHECK(p.k8.filename() == "k8_noskip.vtck");
}

TEST_CASE("growth stage without its parent fails") {
    const Corpus c = corpus("pipe_orphan");
    const auto dir = testutil::scratch_dir("pipe_orphan_out");
    Config cfg = tiny_config(c.root);
    run_pipeline(cfg, dir);
    const PipelinePaths p = pipeline_paths(dir, false);
    fs::remove(p.k8);
    fs::remove(p.k16);
    fs::remove(p.k4);
    // Only the image stage is left, so the pipeline rebuilds 4x first.
    CHECK_NOTHROW(run_pipeline(cfg, dir));
    fs::remove(p.k8);
    fs::remove(p.k16);
    fs::remove(p.k4);
    fs::remove(p.image);
    cfg.data.corpus = (dir / "missing").string();
    CHECK_THROWS_AS(run_pipeline(cfg, dir), IoError);
}
