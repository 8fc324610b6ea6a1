#include "vtok/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "vtok/eval.hpp"

namespace vtok {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string rng_state(const Rng& r) {
    std::ostringstream os;
    os << r;
    return os.str();
}

void set_rng_state(Rng& r, const std::string& s) {
    std::istringstream is(s);
    is >> r;
    if (!is) throw FormatError("corrupt RNG state in checkpoint");
}

template <typename Params>
std::string hash_frozen(const Params& params) {
    std::vector<const Param<Real>*> ps(params.begin(), params.end());
    return parameter_hash(ps, [](const Param<Real>& p) { return p.frozen; });
}

class MetricsSink {
  public:
    MetricsSink(const fs::path& dir, std::ostream* console) : console_(console) {
        if (dir.empty()) return;
        fs::create_directories(dir);
        const fs::path csv = dir / "metrics.csv";
        const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
        csv_.open(csv, std::ios::app);
        log_.open(dir / "train.log", std::ios::app);
        if (!csv_ || !log_) throw IoError("cannot open metrics files in " + dir.string());
        if (fresh) csv_ << "step,rec,kl,gan_g,gan_d,total,grad_norm,psnr\n";
    }

    void row(const StepRecord& r) {
        if (!csv_.is_open()) return;
        csv_ << r.step << ',' << r.terms.rec << ',' << r.terms.kl << ',' << r.terms.gan << ',' << r.d_loss << ','
             << r.terms.total << ',' << r.grad_norm << ',';
        if (r.psnr >= 0) csv_ << r.psnr;
        csv_ << '\n';
        csv_.flush();
    }

    void line(const std::string& text) {
        if (log_.is_open()) log_ << text << '\n' << std::flush;
        if (console_) *console_ << text << '\n' << std::flush;
    }

  private:
    std::ofstream csv_;
    std::ofstream log_;
    std::ostream* console_;
};

std::string describe(const StepRecord& r) {
    std::ostringstream os;
    os << "step " << r.step << "  rec " << std::setprecision(5) << r.terms.rec << "  kl " << r.terms.kl;
    if (r.terms.gan != 0 || r.d_loss != 0) os << "  g " << r.terms.gan << "  d " << r.d_loss;
    os << "  total " << r.terms.total << "  |g| " << r.grad_norm;
    if (r.psnr >= 0) os << "  psnr " << std::setprecision(4) << r.psnr << " dB";
    return os.str();
}

Tensor<Real> stack_frames(const std::vector<Tensor<Real>>& frames) {
    Shape s = frames.front().shape();
    s[0] = static_cast<int>(frames.size());
    Tensor<Real> out(s);
    const std::size_t n = frames.front().numel();
    for (std::size_t i = 0; i < frames.size(); ++i) std::copy_n(frames[i].data(), n, out.data() + i * n);
    return out;
}

Tensor<Real> frame_of(const Tensor<Real>& v, int t) { return slice_frames(v, t, t + 1); }

void scale(Tensor<Real>& t, double s) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<Real>(t[i] * s);
}

void add_scaled(Tensor<Real>& a, const Tensor<Real>& b, double s) {
    require_same_shape(a, b, "add_scaled");
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = static_cast<Real>(a[i] + s * b[i]);
}

}  // namespace

std::string frozen_hash(const TokenizerModel& model) { return hash_frozen(model.parameters()); }

TrainResult train_stage(TokenizerModel& model, const Corpus& train, const Corpus& held_out,
                        const TrainOptions& o, const CheckpointInfo* resume) {
    if (train.size() == 0) throw ConfigError("training corpus is empty");
    if (o.batch < 1) throw ConfigError("batch must be >= 1");
    const int k = model.k();
    o.weights.validate(k);
    const bool use_gan = o.weights.gan > 0;

    ParamList<Real> params = model.parameters();
    AdamW opt(o.optim, params);
    Discriminator disc;
    ParamList<Real> dparams;
    AdamW dopt;
    if (use_gan) {
        disc = Discriminator(train.load(0).frames.channels(), o.disc_widths, o.seed ^ 0x5eedd15cULL);
        dparams = disc.parameters();
        dopt = AdamW(o.disc_optim, dparams);
    }
    Rng rng(o.seed);
    std::int64_t step = 0;
    if (resume && resume->trainer.contains("step")) {
        const json& st = resume->trainer;
        step = st.at("step").get<std::int64_t>();
        set_rng_state(rng, st.at("rng").get<std::string>());
        opt.import_state("opt.", st.at("optim"), resume->extra_tensors);
        if (use_gan && st.contains("disc_optim")) {
            dopt.import_state("dopt.", st.at("disc_optim"), resume->extra_tensors);
            for (auto* p : dparams)
                for (const auto& t : resume->extra_tensors)
                    if (t.name == p->name) p->value = t.value;
        }
    }

    const std::string frozen_before = hash_frozen(params);
    MetricsSink sink(o.run_dir, o.console);
    TrainResult result;
    result.frozen_hash = frozen_before;

    auto save = [&](const fs::path& path) {
        CheckpointInfo info;
        info.parent_hash = o.parent_hash;
        info.step = step;
        info.trainer = {{"step", step}, {"rng", rng_state(rng)}, {"optim", opt.state_json()}, {"k", k}};
        opt.export_state("opt.", info.extra_tensors);
        if (use_gan) {
            info.trainer["disc_optim"] = dopt.state_json();
            dopt.export_state("dopt.", info.extra_tensors);
            for (const auto* p : dparams) info.extra_tensors.push_back({p->name, p->value, 0, false});
        }
        save_tokenizer(path, model, info);
    };

    auto held_out_psnr = [&]() {
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, o.eval_clips)), held_out.size());
        if (n == 0) return -1.0;
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) sum += reconstruction_psnr(model, held_out.load(i).frames);
        return sum / double(n);
    };

    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    while (step < o.steps) {
        zero_grads(params);
        StepRecord rec;
        rec.step = step + 1;
        std::vector<Tensor<Real>> reals, fakes;
        const double inv_b = 1.0 / o.batch;
        for (int b = 0; b < o.batch; ++b) {
            const Tensor<Real> x = crop_to_stage(train.load(pick(rng)).frames, k);
            TokenizerModel::TrainCache cache;
            LatentGrid grid;
            const Tensor<Real> x_hat = model.forward_train(x, rng, grid, cache);
            LossTerms t;
            Tensor<Real> g_rec, d_mean, d_logvar;
            t.rec = rec_loss(x, x_hat, &g_rec);
            t.kl = kl_loss(grid, &d_mean, &d_logvar);
            scale(g_rec, o.weights.rec * inv_b);
            scale(d_mean, o.weights.kl * inv_b);
            scale(d_logvar, o.weights.kl * inv_b);
            if (use_gan) {
                Discriminator::Cache dc;
                const Tensor<Real> fake_scores = disc.forward(x_hat, &dc);
                t.gan = hinge_losses(fake_scores, fake_scores).g_loss;
                // Generator pass: gradients flow into x_hat only, never into the critic.
                const Tensor<Real> dx = disc.backward(hinge_generator_grad(fake_scores), dc, false);
                add_scaled(g_rec, dx, o.weights.gan * inv_b);
                reals.push_back(x);
                fakes.push_back(x_hat);
            }
            if (o.weights.perceptual > 0 && o.perceptual) {
                Tensor<Real> gp;
                t.perceptual = (*o.perceptual)(x, x_hat, &gp);
                add_scaled(g_rec, gp, o.weights.perceptual * inv_b);
            }
            combine_losses(k, o.weights, t);
            if (!std::isfinite(t.total)) {
                std::ostringstream msg;
                msg << "non-finite loss at step " << rec.step << " (rec " << t.rec << ", kl " << t.kl << ", gan "
                    << t.gan << ")";
                if (!o.run_dir.empty()) {
                    save(o.run_dir / "nan_snapshot.vtck");
                    msg << "; snapshot written to " << (o.run_dir / "nan_snapshot.vtck").string();
                }
                sink.line(msg.str());
                throw TrainingError(msg.str());
            }
            rec.terms.rec += t.rec * inv_b;
            rec.terms.kl += t.kl * inv_b;
            rec.terms.gan += t.gan * inv_b;
            rec.terms.perceptual += t.perceptual * inv_b;
            rec.terms.total += t.total * inv_b;
            model.backward_train(g_rec, d_mean, d_logvar, cache);
        }
        rec.grad_norm = opt.step(params);

        if (use_gan) {
            zero_grads(dparams);
            for (std::size_t b = 0; b < reals.size(); ++b) {
                Discriminator::Cache rc, fc;
                const Tensor<Real> rs = disc.forward(reals[b], &rc);
                const Tensor<Real> fs_ = disc.forward(fakes[b], &fc);  // detached: no path back to the model
                Tensor<Real> dr, df;
                hinge_discriminator_grads(rs, fs_, dr, df);
                scale(dr, inv_b);
                scale(df, inv_b);
                disc.backward(dr, rc, true);
                disc.backward(df, fc, true);
                rec.d_loss += hinge_losses(rs, fs_).d_loss * inv_b;
            }
            dopt.step(dparams);
        }
        ++step;

        if (o.verify_frozen && hash_frozen(params) != frozen_before)
            throw TrainingError("frozen parameters changed at step " + std::to_string(step));
        if (o.eval_every > 0 && step % o.eval_every == 0 && step < o.steps) rec.psnr = held_out_psnr();
        if (step == o.steps) rec.psnr = held_out_psnr();
        if (rec.psnr >= 0) result.final_psnr = rec.psnr;
        sink.row(rec);
        if ((o.log_every > 0 && step % o.log_every == 0) || rec.psnr >= 0 || step == o.steps)
            sink.line("[k" + std::to_string(k) + "] " + describe(rec));
        result.history.push_back(rec);
        if (o.save_every > 0 && !o.checkpoint.empty() && step % o.save_every == 0 && step < o.steps)
            save(o.checkpoint);
        if (o.on_step) o.on_step(step);
    }
    result.steps = step;
    if (!o.checkpoint.empty()) save(o.checkpoint);
    return result;
}

TrainResult train_image(ImageAutoencoder& model, const Corpus& train, const Corpus& held_out,
                        const TrainOptions& o, const CheckpointInfo* resume) {
    if (train.size() == 0) throw ConfigError("training corpus is empty");
    ParamList<Real> params = model.parameters();
    AdamW opt(o.optim, params);
    Rng rng(o.seed);
    std::int64_t step = 0;
    if (resume && resume->trainer.contains("step")) {
        step = resume->trainer.at("step").get<std::int64_t>();
        set_rng_state(rng, resume->trainer.at("rng").get<std::string>());
        opt.import_state("opt.", resume->trainer.at("optim"), resume->extra_tensors);
    }
    MetricsSink sink(o.run_dir, o.console);
    TrainResult result;

    auto save = [&](const fs::path& path) {
        CheckpointInfo info;
        info.kind = "image";
        info.step = step;
        info.trainer = {{"step", step}, {"rng", rng_state(rng)}, {"optim", opt.state_json()}};
        opt.export_state("opt.", info.extra_tensors);
        save_image_model(path, model, info);
    };
    auto held_out_psnr = [&]() {
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, o.eval_clips)), held_out.size());
        if (n == 0) return -1.0;
        std::vector<Tensor<Real>> frames;
        for (std::size_t i = 0; i < n; ++i) frames.push_back(frame_of(held_out.load(i).frames, 0));
        const Tensor<Real> x = stack_frames(frames);
        return psnr(x, model.decode(model.encode(x).mean));
    };

    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    while (step < o.steps) {
        zero_grads(params);
        StepRecord rec;
        rec.step = step + 1;
        std::vector<Tensor<Real>> frames;
        for (int b = 0; b < o.batch; ++b) {
            const Tensor<Real> v = train.load(pick(rng)).frames;
            std::uniform_int_distribution<int> which(0, v.frames() - 1);
            frames.push_back(frame_of(v, which(rng)));
        }
        const Tensor<Real> x = stack_frames(frames);
        ImageAutoencoder::Cache cache;
        LatentGrid grid;
        const Tensor<Real> x_hat = model.forward_train(x, rng, grid, cache);
        Tensor<Real> g_rec, d_mean, d_logvar;
        rec.terms.rec = rec_loss(x, x_hat, &g_rec);
        rec.terms.kl = kl_loss(grid, &d_mean, &d_logvar);
        scale(g_rec, o.weights.rec);
        scale(d_mean, o.weights.kl);
        scale(d_logvar, o.weights.kl);
        LossWeights w = o.weights;
        w.gan = 0;
        combine_losses(4, w, rec.terms);
        if (!std::isfinite(rec.terms.total)) {
            std::string msg = "non-finite loss at image step " + std::to_string(rec.step);
            if (!o.run_dir.empty()) {
                save(o.run_dir / "nan_snapshot.vtck");
                msg += "; snapshot written to " + (o.run_dir / "nan_snapshot.vtck").string();
            }
            sink.line(msg);
            throw TrainingError(msg);
        }
        model.backward_train(g_rec, d_mean, d_logvar, cache);
        rec.grad_norm = opt.step(params);
        ++step;
        if ((o.eval_every > 0 && step % o.eval_every == 0) || step == o.steps) rec.psnr = held_out_psnr();
        if (rec.psnr >= 0) result.final_psnr = rec.psnr;
        sink.row(rec);
        if ((o.log_every > 0 && step % o.log_every == 0) || rec.psnr >= 0)
            sink.line("[image] " + describe(rec));
        result.history.push_back(rec);
        if (o.save_every > 0 && !o.checkpoint.empty() && step % o.save_every == 0 && step < o.steps)
            save(o.checkpoint);
        if (o.on_step) o.on_step(step);
    }
    result.steps = step;
    if (!o.checkpoint.empty()) save(o.checkpoint);
    return result;
}

TrainOptions options_from_config(const Config& cfg, int k, std::int64_t steps) {
    TrainOptions o;
    o.steps = steps;
    o.batch = cfg.optim.batch;
    o.optim = cfg.optim.generator;
    o.disc_optim = cfg.optim.discriminator;
    o.weights = cfg.losses.weights(k);
    o.disc_widths = cfg.losses.disc_widths;
    o.seed = cfg.seed;
    o.log_every = cfg.logging.log_every;
    o.eval_every = cfg.logging.eval_every;
    o.eval_clips = cfg.logging.eval_clips;
    o.save_every = cfg.logging.save_every;
    return o;
}

PipelinePaths pipeline_paths(const fs::path& dir, bool ablation) {
    const std::string suffix = ablation ? "_noskip" : "";
    return {dir / "image.vtck", dir / "k4.vtck", dir / ("k8" + suffix + ".vtck"), dir / ("k16" + suffix + ".vtck")};
}

namespace {

bool complete(const fs::path& p, std::int64_t budget, CheckpointInfo* info = nullptr) {
    if (!fs::exists(p)) return false;
    CheckpointInfo i;
    if (read_archive(p).header.value("kind", "") == "image")
        load_image_model(p, &i);
    else
        load_tokenizer(p, &i);
    if (info) *info = i;
    return i.step >= budget;
}

}  // namespace

PipelinePaths run_pipeline(const Config& cfg, const fs::path& dir, std::ostream* console) {
    fs::create_directories(dir);
    const PipelinePaths paths = pipeline_paths(dir, cfg.stage.ablation);
    const Corpus all = Corpus::open(cfg.data.corpus);
    const auto [train, held] = all.split(static_cast<std::size_t>(std::max(0, cfg.data.held_out)));
    const bool mixing = !cfg.stage.ablation;
    const auto& budgets = cfg.stage.budgets;
    auto say = [&](const std::string& s) {
        if (console) *console << s << '\n';
    };

    // Latest finished stage wins; earlier stages are not revisited.
    int start = 0;
    if (complete(paths.k16, budgets[2]))
        start = 4;
    else if (complete(paths.k8, budgets[1]))
        start = 3;
    else if (complete(paths.k4, budgets[0]))
        start = 2;
    else if (complete(paths.image, cfg.stage.image_steps))
        start = 1;

    if (start <= 0) {
        CheckpointInfo info;
        const bool partial = fs::exists(paths.image) && !complete(paths.image, cfg.stage.image_steps, &info);
        ImageAutoencoder img = partial ? load_image_model(paths.image) : ImageAutoencoder::build(cfg.plan(4), cfg.seed);
        TrainOptions o = options_from_config(cfg, 4, cfg.stage.image_steps);
        o.batch = cfg.optim.batch * 4;
        o.run_dir = dir / "image";
        o.checkpoint = paths.image;
        o.console = console;
        say("== image stage");
        train_image(img, train, held, o, partial ? &info : nullptr);
    }
    if (start <= 1) {
        CheckpointInfo info;
        const bool partial = fs::exists(paths.k4) && !complete(paths.k4, budgets[0], &info);
        TokenizerModel m;
        if (partial) {
            m = load_tokenizer(paths.k4);
        } else {
            m = TokenizerModel::build(cfg.plan(4), cfg.seed + 4);
            m.adopt_image_encoder(load_image_model(paths.image));
        }
        TrainOptions o = options_from_config(cfg, 4, budgets[0]);
        o.run_dir = dir / "k4";
        o.checkpoint = paths.k4;
        o.parent_hash = hash_file(paths.image);
        o.console = console;
        say("== 4x stage");
        train_stage(m, train, held, o, partial ? &info : nullptr);
    }
    const fs::path parents[] = {paths.k4, paths.k8};
    const fs::path outs[] = {paths.k8, paths.k16};
    for (int s = 0; s < 2; ++s) {
        if (start > s + 2) continue;
        const int k = 8 << s;
        if (!fs::exists(parents[s])) throw ConfigError("missing parent checkpoint " + parents[s].string());
        CheckpointInfo info;
        const bool partial = fs::exists(outs[s]) && !complete(outs[s], budgets[s + 1], &info);
        TokenizerModel m = partial ? load_tokenizer(outs[s])
                                   : TokenizerModel::grow(load_tokenizer(parents[s]), cfg.plan(k, mixing), cfg.seed + k);
        TrainOptions o = options_from_config(cfg, k, budgets[s + 1]);
        o.run_dir = dir / fs::path(outs[s]).stem();
        o.checkpoint = outs[s];
        o.parent_hash = hash_file(parents[s]);
        o.console = console;
        say("== " + std::to_string(k) + "x growth stage" + (mixing ? "" : " (no skip)"));
        train_stage(m, train, held, o, partial ? &info : nullptr);
    }
    return paths;
}

}  // namespace vtok
