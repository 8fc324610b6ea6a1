// vtok: command-line front end for the progressive video tokenizer.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "vtok/checkpoint.hpp"
#include "vtok/config.hpp"
#include "vtok/eval.hpp"
#include "vtok/tiling.hpp"
#include "vtok/trainer.hpp"
#include "vtok/video.hpp"

namespace fs = std::filesystem;
using namespace vtok;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("-c,--config", c.config, "JSON config file");
    sub->add_option("--seed", c.seed, "RNG seed (overrides config)");
}

Config load_config(const Common& c) {
    Config cfg = c.config.empty() ? Config{} : Config::load(c.config);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

template <typename T>
void override_if(const std::optional<T>& v, T& dst) {
    if (v) dst = *v;
}

Corpus open_split(const Config& cfg, bool held_out_only, Corpus* train_out = nullptr) {
    const Corpus all = Corpus::open(cfg.data.corpus);
    auto [train, held] = all.split(static_cast<std::size_t>(std::max(0, cfg.data.held_out)));
    if (train_out) *train_out = train;
    return held_out_only ? held : all;
}

void write_latents(const fs::path& path, const std::vector<LatentGrid>& grids,
                   const ChunkPlan& plan, int k, const std::string& ckpt_hash) {
    Archive ar;
    ar.header = {{"kind", "latent"},
                 {"k", k},
                 {"frames", plan.total_frames},
                 {"chunk_frames", plan.chunk_length},
                 {"chunk_overlap", plan.overlap},
                 {"checkpoint", ckpt_hash}};
    for (std::size_t i = 0; i < grids.size(); ++i) {
        ar.tensors.push_back({"chunk" + std::to_string(i) + ".mean", grids[i].mean, 0, false});
        ar.tensors.push_back({"chunk" + std::to_string(i) + ".logvar", grids[i].logvar, 0, false});
    }
    write_archive(path, ar);
}

void print_report(const EvalReport& r) {
    std::printf("clips %zu  skipped %d  k %d  factor %d  mean PSNR %.3f dB (8-bit %.3f dB)  latent %s\n",
                r.clips.size(), r.skipped, r.k, r.factor, r.mean_psnr, r.mean_psnr_u8, r.latent_shape.c_str());
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"vtok: causal video tokenizer with progressive temporal compression", "vtok"};
    app.require_subcommand(1);

    // gen-data
    Common gen_c;
    std::optional<std::string> gen_out;
    std::optional<int> gen_clips, gen_frames, gen_h, gen_w;
    auto* gen = app.add_subcommand("gen-data", "write a synthetic NVT1 corpus");
    add_common(gen, gen_c);
    gen->add_option("-o,--out", gen_out, "corpus directory");
    gen->add_option("--clips", gen_clips);
    gen->add_option("--frames", gen_frames);
    gen->add_option("--height", gen_h);
    gen->add_option("--width", gen_w);

    // train-image
    Common ti_c;
    std::optional<std::int64_t> ti_steps;
    std::string ti_out = "image.vtck", ti_run;
    std::optional<std::string> ti_corpus;
    auto* ti = app.add_subcommand("train-image", "train the single-frame autoencoder");
    add_common(ti, ti_c);
    ti->add_option("--steps", ti_steps);
    ti->add_option("--corpus", ti_corpus);
    ti->add_option("-o,--out", ti_out);
    ti->add_option("--run-dir", ti_run, "metrics directory");

    // train-base
    Common tb_c;
    std::optional<std::int64_t> tb_steps;
    std::optional<std::string> tb_image, tb_corpus;
    std::string tb_out = "k4.vtck", tb_run;
    bool tb_resume = false;
    auto* tb = app.add_subcommand("train-base", "train the 4x tokenizer");
    add_common(tb, tb_c);
    tb->add_option("--image", tb_image, "trained image-model checkpoint");
    tb->add_option("--steps", tb_steps);
    tb->add_option("--corpus", tb_corpus);
    tb->add_option("-o,--out", tb_out);
    tb->add_option("--run-dir", tb_run);
    tb->add_flag("--resume", tb_resume, "continue from --out if it exists");

    // grow
    Common gr_c;
    std::string gr_parent, gr_out;
    bool gr_noskip = false;
    auto* gr = app.add_subcommand("grow", "add a temporal growth step to a checkpoint");
    add_common(gr, gr_c);
    gr->add_option("--parent", gr_parent)->required();
    gr->add_option("-o,--out", gr_out)->required();
    gr->add_flag("--no-skip", gr_noskip, "ablation: no key-frame skip or AdaNorm mixing");

    // train-growth
    Common tg_c;
    std::string tg_ckpt, tg_out, tg_run;
    std::optional<std::int64_t> tg_steps;
    std::optional<std::string> tg_corpus;
    auto* tg = app.add_subcommand("train-growth", "train the newly added blocks of a grown checkpoint");
    add_common(tg, tg_c);
    tg->add_option("--ckpt", tg_ckpt)->required();
    tg->add_option("-o,--out", tg_out, "defaults to --ckpt");
    tg->add_option("--steps", tg_steps);
    tg->add_option("--corpus", tg_corpus);
    tg->add_option("--run-dir", tg_run);

    // pipeline
    Common pl_c;
    std::string pl_dir = "runs/pipeline";
    bool pl_ablation = false;
    std::vector<std::int64_t> pl_budgets;
    auto* pl = app.add_subcommand("pipeline", "image, 4x, 8x and 16x stages end to end");
    add_common(pl, pl_c);
    pl->add_option("-o,--out", pl_dir, "output directory");
    pl->add_flag("--ablation", pl_ablation, "grow without the skip path");
    pl->add_option("--budgets", pl_budgets, "steps for 4x 8x 16x")->expected(3);

    // encode
    Common en_c;
    std::string en_ckpt, en_in, en_out;
    std::optional<int> en_cf, en_co;
    auto* en = app.add_subcommand("encode", "encode a clip to latent chunks");
    add_common(en, en_c);
    en->add_option("--ckpt", en_ckpt)->required();
    en->add_option("-i,--input", en_in)->required();
    en->add_option("-o,--out", en_out)->required();
    en->add_option("--chunk-frames", en_cf);
    en->add_option("--chunk-overlap", en_co);

    // decode
    Common de_c;
    std::string de_ckpt, de_in, de_out;
    std::optional<int> de_tile, de_overlap;
    auto* de = app.add_subcommand("decode", "decode latent chunks to a clip");
    add_common(de, de_c);
    de->add_option("--ckpt", de_ckpt)->required();
    de->add_option("-i,--input", de_in)->required();
    de->add_option("-o,--out", de_out)->required();
    de->add_option("--tile", de_tile, "tile size in latent pixels (0 = untiled)");
    de->add_option("--overlap", de_overlap);

    // reconstruct
    Common rc_c;
    std::string rc_ckpt, rc_in, rc_out;
    std::optional<int> rc_cf, rc_co, rc_tile, rc_overlap;
    auto* rc = app.add_subcommand("reconstruct", "encode, decode and score one clip");
    add_common(rc, rc_c);
    rc->add_option("--ckpt", rc_ckpt)->required();
    rc->add_option("-i,--input", rc_in)->required();
    rc->add_option("-o,--out", rc_out);
    rc->add_option("--chunk-frames", rc_cf);
    rc->add_option("--chunk-overlap", rc_co);
    rc->add_option("--tile", rc_tile);
    rc->add_option("--overlap", rc_overlap);

    // eval
    Common ev_c;
    std::string ev_ckpt, ev_dir = ".";
    std::optional<std::string> ev_corpus;
    std::optional<int> ev_cf, ev_co, ev_tile, ev_overlap;
    int ev_factor = 1;
    std::size_t ev_max = 0;
    bool ev_all = false, ev_no_timing = false;
    auto* ev = app.add_subcommand("eval", "held-out reconstruction PSNR report");
    add_common(ev, ev_c);
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--corpus", ev_corpus);
    ev->add_option("-o,--out-dir", ev_dir);
    ev->add_option("--factor", ev_factor, "temporal subsampling (4x model baseline)");
    ev->add_option("--max-clips", ev_max);
    ev->add_flag("--all", ev_all, "score the whole corpus, not just the held-out split");
    ev->add_flag("--no-timing", ev_no_timing, "write 0 seconds so reports are byte-stable");
    ev->add_option("--chunk-frames", ev_cf);
    ev->add_option("--chunk-overlap", ev_co);
    ev->add_option("--tile", ev_tile);
    ev->add_option("--overlap", ev_overlap);

    // budget
    int bu_frames = 68, bu_k = 4, bu_chunk = 17;
    Common bu_c;
    auto* bu = app.add_subcommand("budget", "latent-frame count for a clip length");
    add_common(bu, bu_c);
    bu->add_option("--frames", bu_frames);
    bu->add_option("--k", bu_k);
    bu->add_option("--chunk", bu_chunk);

    // tile-check
    Common tc_c;
    std::string tc_ckpt;
    std::optional<int> tc_tile, tc_overlap;
    int tc_k = 4, tc_lat_frames = 2, tc_lat_h = 72, tc_lat_w = 72;
    auto* tc = app.add_subcommand("tile-check", "compare tiled and full decoding on random latents");
    add_common(tc, tc_c);
    tc->add_option("--ckpt", tc_ckpt, "checkpoint (random weights if omitted)");
    tc->add_option("--k", tc_k, "stage for random weights");
    tc->add_option("--tile", tc_tile);
    tc->add_option("--overlap", tc_overlap);
    tc->add_option("--latent-frames", tc_lat_frames);
    tc->add_option("--latent-height", tc_lat_h);
    tc->add_option("--latent-width", tc_lat_w);

    if (argc < 2) {
        std::cerr << app.help();
        return 2;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (*gen) {
        Config cfg = load_config(gen_c);
        SynthSpec s = cfg.data.synth;
        s.seed = cfg.seed;
        override_if(gen_clips, s.num_clips);
        override_if(gen_frames, s.frames_per_clip);
        override_if(gen_h, s.height);
        override_if(gen_w, s.width);
        const fs::path dir = gen_out ? fs::path(*gen_out) : fs::path(cfg.data.corpus);
        const auto paths = generate_synthetic(s, dir);
        std::printf("wrote %zu clips to %s\n", paths.size(), dir.string().c_str());
    } else if (*ti) {
        Config cfg = load_config(ti_c);
        override_if(ti_corpus, cfg.data.corpus);
        Corpus train;
        const Corpus held = open_split(cfg, true, &train);
        TrainOptions o = options_from_config(cfg, 4, ti_steps.value_or(cfg.stage.image_steps));
        o.batch = cfg.optim.batch * 4;
        o.checkpoint = ti_out;
        o.run_dir = ti_run;
        o.console = &std::cout;
        ImageAutoencoder m = ImageAutoencoder::build(cfg.plan(4), cfg.seed);
        train_image(m, train, held, o);
    } else if (*tb) {
        Config cfg = load_config(tb_c);
        override_if(tb_corpus, cfg.data.corpus);
        override_if(tb_image, cfg.stage.image_checkpoint);
        Corpus train;
        const Corpus held = open_split(cfg, true, &train);
        TrainOptions o = options_from_config(cfg, 4, tb_steps.value_or(cfg.stage.steps));
        o.checkpoint = tb_out;
        o.run_dir = tb_run;
        o.console = &std::cout;
        CheckpointInfo info;
        TokenizerModel m;
        const bool resume = tb_resume && fs::exists(tb_out);
        if (resume) {
            m = load_tokenizer(tb_out, &info);
            o.parent_hash = info.parent_hash;
        } else {
            if (cfg.stage.image_checkpoint.empty()) throw ConfigError("train-base needs --image or stage.image_checkpoint");
            m = TokenizerModel::build(cfg.plan(4), cfg.seed + 4);
            m.adopt_image_encoder(load_image_model(cfg.stage.image_checkpoint));
            o.parent_hash = hash_file(cfg.stage.image_checkpoint);
        }
        train_stage(m, train, held, o, resume ? &info : nullptr);
    } else if (*gr) {
        Config cfg = load_config(gr_c);
        const TokenizerModel parent = load_tokenizer(gr_parent);
        if (parent.k() >= 16) throw ConfigError("checkpoint is already at 16x");
        StagePlan next = parent.plan();
        next.k = parent.k() * 2;
        next.mixing = !gr_noskip;
        const TokenizerModel child = TokenizerModel::grow(parent, next, cfg.seed + static_cast<std::uint64_t>(next.k));
        CheckpointInfo info;
        info.parent_hash = hash_file(gr_parent);
        save_tokenizer(gr_out, child, info);
        std::printf("grew %dx -> %dx%s: %zu parameters, frozen hash %s\n", parent.k(), next.k,
                    next.mixing ? "" : " (no skip)", child.parameter_count(), frozen_hash(child).c_str());
    } else if (*tg) {
        Config cfg = load_config(tg_c);
        override_if(tg_corpus, cfg.data.corpus);
        Corpus train;
        const Corpus held = open_split(cfg, true, &train);
        CheckpointInfo info;
        TokenizerModel m = load_tokenizer(tg_ckpt, &info);
        if (m.k() == 4) throw ConfigError("train-growth expects a grown (8x or 16x) checkpoint; use train-base for 4x");
        TrainOptions o = options_from_config(cfg, m.k(), tg_steps.value_or(cfg.stage.steps));
        o.checkpoint = tg_out.empty() ? tg_ckpt : tg_out;
        o.run_dir = tg_run;
        o.parent_hash = info.parent_hash;
        o.console = &std::cout;
        train_stage(m, train, held, o, &info);
    } else if (*pl) {
        Config cfg = load_config(pl_c);
        if (!pl_budgets.empty()) cfg.stage.budgets = pl_budgets;
        if (pl_ablation) cfg.stage.ablation = true;
        const PipelinePaths p = run_pipeline(cfg, pl_dir, &std::cout);
        std::printf("%s\n%s\n%s\n", p.k4.string().c_str(), p.k8.string().c_str(), p.k16.string().c_str());
    } else if (*en) {
        Config cfg = load_config(en_c);
        override_if(en_cf, cfg.inference.chunk_frames);
        override_if(en_co, cfg.inference.chunk_overlap);
        const TokenizerModel m = load_tokenizer(en_ckpt);
        const VideoClip clip = load_clip(en_in);
        const ChunkPlan plan = plan_chunks(clip.length(), cfg.inference.chunk_frames, cfg.inference.chunk_overlap);
        std::vector<LatentGrid> grids;
        for (const auto& [s, e] : plan.spans) grids.push_back(m.encode(slice_frames(clip.frames, s, e)));
        write_latents(en_out, grids, plan, m.k(), hash_file(en_ckpt));
        std::printf("%zu chunk(s), latent %s per chunk\n", grids.size(), shape_str(grids[0].mean.shape()).c_str());
    } else if (*de) {
        Config cfg = load_config(de_c);
        override_if(de_tile, cfg.inference.tile);
        override_if(de_overlap, cfg.inference.overlap);
        if (!de_tile) cfg.inference.tile = 0;
        const TokenizerModel m = load_tokenizer(de_ckpt);
        const Archive ar = read_archive(de_in);
        if (ar.header.value("kind", "") != "latent") throw FormatError(de_in + ": not a latent file");
        if (ar.header.value("k", 0) != m.k()) throw ConfigError("latent k does not match the checkpoint");
        const ChunkPlan plan = plan_chunks(ar.header.at("frames").get<int>(), ar.header.at("chunk_frames").get<int>(),
                                           ar.header.at("chunk_overlap").get<int>());
        std::vector<Tensor<Real>> chunks;
        for (std::size_t i = 0; i < plan.spans.size(); ++i) {
            const ArchiveTensor* z = ar.find("chunk" + std::to_string(i) + ".mean");
            if (!z) throw FormatError("latent file is missing chunk " + std::to_string(i));
            chunks.push_back(cfg.inference.tile > 0
                                 ? tiled_decode(m, z->value, cfg.inference.tile, cfg.inference.overlap)
                                 : m.decode(z->value));
        }
        VideoClip out;
        out.frames = stitch_chunks(chunks, plan);
        save_clip(out, de_out);
        std::printf("decoded %d frames to %s\n", out.length(), de_out.c_str());
    } else if (*rc) {
        Config cfg = load_config(rc_c);
        override_if(rc_cf, cfg.inference.chunk_frames);
        override_if(rc_co, cfg.inference.chunk_overlap);
        override_if(rc_overlap, cfg.inference.overlap);
        const int tile = rc_tile.value_or(0);
        const TokenizerModel m = load_tokenizer(rc_ckpt);
        const VideoClip clip = load_clip(rc_in);
        ModelCodec codec(m, tile, cfg.inference.overlap);
        const Reconstruction r =
            reconstruct_video(codec, clip.frames, cfg.inference.chunk_frames, cfg.inference.chunk_overlap);
        std::printf("frames %d  latents %d  PSNR %.3f dB\n", clip.length(), r.latents, psnr(clip.frames, r.video));
        if (!rc_out.empty()) save_clip(VideoClip{r.video, clip.fps}, rc_out);
    } else if (*ev) {
        Config cfg = load_config(ev_c);
        override_if(ev_corpus, cfg.data.corpus);
        EvalOptions o;
        o.chunk_frames = ev_cf.value_or(cfg.inference.chunk_frames);
        o.chunk_overlap = ev_co.value_or(cfg.inference.chunk_overlap);
        o.tile = ev_tile.value_or(0);
        o.overlap = ev_overlap.value_or(cfg.inference.overlap);
        o.max_clips = ev_max;
        o.timing = !ev_no_timing;
        o.config_fingerprint = cfg.fingerprint();
        o.checkpoint_hash = hash_file(ev_ckpt);
        const TokenizerModel m = load_tokenizer(ev_ckpt);
        const Corpus corpus = open_split(cfg, !ev_all);
        const EvalReport r = ev_factor == 1 ? eval_reconstruction(m, corpus, o)
                                            : eval_subsampled_baseline(m, corpus, ev_factor, o);
        fs::create_directories(ev_dir);
        r.write(fs::path(ev_dir) / "eval.csv", fs::path(ev_dir) / "summary.json");
        print_report(r);
    } else if (*bu) {
        const BudgetReport b = latent_budget(bu_frames, bu_k, bu_chunk);
        std::printf("frames %d  k %d  chunk %d  chunks %d  latents %d  ratio vs 4x %.4g\n", b.frames, b.k, b.chunk,
                    b.chunks, b.latents, b.ratio_vs_4x);
    } else if (*tc) {
        Config cfg = load_config(tc_c);
        override_if(tc_tile, cfg.inference.tile);
        override_if(tc_overlap, cfg.inference.overlap);
        TokenizerModel m;
        if (!tc_ckpt.empty()) {
            m = load_tokenizer(tc_ckpt);
        } else {
            TokenizerModel base = TokenizerModel::build(cfg.plan(4), cfg.seed);
            m = base;
            for (int k = 8; k <= tc_k; k *= 2) m = TokenizerModel::grow(m, cfg.plan(k), cfg.seed + k);
        }
        Rng rng(cfg.seed + 1);
        std::normal_distribution<float> nd(0.0f, 1.0f);
        Tensor<Real> z({tc_lat_frames, m.plan().latent_channels, tc_lat_h, tc_lat_w});
        for (std::size_t i = 0; i < z.numel(); ++i) z[i] = nd(rng);
        TileStats stats;
        TileOptions topt;
        topt.stats = &stats;
        const Tensor<Real> full = m.decode(z);
        const Tensor<Real> tiled = tiled_decode(m, z, cfg.inference.tile, cfg.inference.overlap, topt);
        const double dev = max_abs_diff(full, tiled);
        const bool ok = dev <= 1e-4;
        std::printf("tile %d overlap %d  latent %s  tiles %zu over %zu convs  peak tile %zu / full %zu elements\n",
                    cfg.inference.tile, cfg.inference.overlap, shape_str(z.shape()).c_str(), stats.tiles,
                    stats.layers, stats.peak_tile_elements, stats.peak_full_elements);
        std::printf("max |tiled - full| = %.3e  %s (1e-4)\n", dev, ok ? "PASS" : "FAIL");
        return ok ? 0 : 1;
    }
    return 0;
}

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const DivisibilityError& e) {
        std::cerr << "frame-count error: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
