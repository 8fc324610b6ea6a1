#include "vtok/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "vtok/hash.hpp"

namespace vtok {

double psnr(const Tensor<Real>& x, const Tensor<Real>& x_hat, double peak) {
    require_same_shape(x, x_hat, "psnr");
    if (x.numel() == 0) throw ShapeError("psnr on empty tensors");
    double se = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double d = double(x[i]) - double(x_hat[i]);
        se += d * d;
    }
    const double mse = se / double(x.numel());
    if (mse == 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double psnr_u8(const Tensor<Real>& x, const Tensor<Real>& x_hat) {
    require_same_shape(x, x_hat, "psnr_u8");
    double se = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double d = double(quantize_pixel(x[i])) - double(quantize_pixel(x_hat[i]));
        se += d * d;
    }
    const double mse = se / double(x.numel());
    if (mse == 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

BudgetReport latent_budget(int frames, int k, int chunk) {
    if (k < 1 || chunk < 1 || frames < 1) throw ConfigError("latent_budget: frames, k and chunk must be positive");
    if ((chunk - 1) % k != 0)
        throw DivisibilityError("chunk of " + std::to_string(chunk) + " frames is not 1 mod " + std::to_string(k));
    if (frames % chunk != 0)
        throw DivisibilityError(std::to_string(frames) + " frames is not a whole number of " + std::to_string(chunk) +
                                "-frame chunks");
    BudgetReport r;
    r.frames = frames;
    r.k = k;
    r.chunk = chunk;
    r.chunks = frames / chunk;
    r.latents = r.chunks * (1 + (chunk - 1) / k);
    r.latents_4x = (chunk - 1) % 4 == 0 ? r.chunks * (1 + (chunk - 1) / 4) : 0;
    r.ratio_vs_4x = r.latents_4x > 0 ? double(r.latents) / double(r.latents_4x) : 0.0;
    return r;
}

Tensor<Real> ModelCodec::reconstruct(const Tensor<Real>& chunk, Shape* latent_shape) const {
    LatentGrid g = model_.encode(chunk);
    if (latent_shape) *latent_shape = g.mean.shape();
    if (tile_ > 0) return tiled_decode(model_, g.mean, tile_, overlap_);
    return model_.decode(g.mean);
}

Reconstruction reconstruct_video(const ChunkCodec& codec, const Tensor<Real>& video, int chunk_frames,
                                 int chunk_overlap) {
    Reconstruction r;
    r.plan = plan_chunks(video.frames(), chunk_frames, chunk_overlap);
    for (const auto& [s, e] : r.plan.spans) {
        if ((e - s - 1) % codec.k() != 0)
            throw DivisibilityError("chunk of " + std::to_string(e - s) + " frames is not 1 mod " +
                                    std::to_string(codec.k()));
    }
    for (const auto& [s, e] : r.plan.spans) {
        Shape ls;
        r.chunks.push_back(codec.reconstruct(slice_frames(video, s, e), &ls));
        if (r.latent_shape.empty()) r.latent_shape = ls;
        r.latents += ls.empty() ? 0 : ls[0];
    }
    r.video = stitch_chunks(r.chunks, r.plan);
    return r;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::string EvalReport::csv() const {
    std::ostringstream os;
    os << "clip_path,frames,latents,psnr_db,seconds\n";
    for (const auto& c : clips)
        os << csv_field(c.clip_path) << ',' << c.frames << ',' << c.latents << ',' << fmt(c.psnr_db) << ','
           << fmt(c.seconds) << '\n';
    return os.str();
}

EvalReport EvalReport::parse_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "clip_path,frames,latents,psnr_db,seconds")
        throw FormatError("eval CSV: unexpected header");
    EvalReport r;
    double sum = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5) throw FormatError("eval CSV: malformed row '" + line + "'");
        ClipResult c;
        c.clip_path = f[0];
        c.frames = std::stoi(f[1]);
        c.latents = std::stoi(f[2]);
        c.psnr_db = std::stod(f[3]);
        c.seconds = std::stod(f[4]);
        sum += c.psnr_db;
        r.clips.push_back(c);
    }
    if (!r.clips.empty()) r.mean_psnr = sum / double(r.clips.size());
    return r;
}

std::string EvalReport::summary() const {
    nlohmann::json j;
    j["clips"] = clips.size();
    j["skipped"] = skipped;
    j["k"] = k;
    j["factor"] = factor;
    j["mean_psnr_db"] = mean_psnr;
    j["mean_psnr_u8_db"] = mean_psnr_u8;
    j["latent_shape"] = latent_shape;
    j["fingerprint"] = fingerprint;
    return j.dump(2) + "\n";
}

void EvalReport::write(const std::filesystem::path& csv_path, const std::filesystem::path& summary_path) const {
    std::ofstream c(csv_path, std::ios::binary | std::ios::trunc);
    if (!c) throw IoError("cannot write " + csv_path.string());
    c << csv();
    if (!summary_path.empty()) {
        std::ofstream s(summary_path, std::ios::binary | std::ios::trunc);
        if (!s) throw IoError("cannot write " + summary_path.string());
        s << summary();
    }
}

namespace {

EvalReport run_eval(const ChunkCodec& codec, const Corpus& corpus, const EvalOptions& o) {
    if (corpus.size() == 0) throw ConfigError("evaluation corpus is empty");
    if (o.factor != 1 && o.factor != 2 && o.factor != 4)
        throw ConfigError("subsampling factor must be 1, 2 or 4, got " + std::to_string(o.factor));
    EvalReport r;
    r.k = codec.k();
    r.factor = o.factor;
    Fnv1a h;
    h.update(o.config_fingerprint);
    h.update("|");
    h.update(o.checkpoint_hash);
    h.update("|factor=" + std::to_string(o.factor) + "|chunk=" + std::to_string(o.chunk_frames) + "/" +
             std::to_string(o.chunk_overlap) + "|tile=" + std::to_string(o.tile) + "/" + std::to_string(o.overlap));
    r.fingerprint = h.hex();

    const std::size_t n = o.max_clips ? std::min(o.max_clips, corpus.size()) : corpus.size();
    double sum = 0, sum_u8 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Tensor<Real> v = corpus.load(i).frames;
        if (o.factor > 1) {
            if ((v.frames() - 1) % o.factor != 0) {
                ++r.skipped;
                continue;
            }
            v = subsample_time(v, o.factor);
        }
        Reconstruction rec;
        try {
            rec = reconstruct_video(codec, v, o.chunk_frames, o.chunk_overlap);
        } catch (const DivisibilityError&) {
            ++r.skipped;
            continue;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ClipResult c;
        c.clip_path = corpus.entries[i];
        c.frames = v.frames();
        c.latents = rec.latents;
        c.psnr_db = psnr(v, rec.video);
        c.seconds = o.timing ? secs : 0.0;
        sum += c.psnr_db;
        sum_u8 += psnr_u8(v, rec.video);
        if (r.latent_shape.empty()) r.latent_shape = shape_str(rec.latent_shape);
        r.clips.push_back(c);
    }
    if (r.skipped > 0)
        std::cerr << "warning: skipped " << r.skipped << " clip(s) with incompatible frame counts\n";
    if (!r.clips.empty()) {
        r.mean_psnr = sum / double(r.clips.size());
        r.mean_psnr_u8 = sum_u8 / double(r.clips.size());
    }
    return r;
}

}  // namespace

EvalReport eval_reconstruction(const ChunkCodec& codec, const Corpus& corpus, const EvalOptions& options) {
    return run_eval(codec, corpus, options);
}

EvalReport eval_reconstruction(const TokenizerModel& model, const Corpus& corpus, const EvalOptions& options) {
    ModelCodec codec(model, options.tile, options.overlap);
    return run_eval(codec, corpus, options);
}

EvalReport eval_subsampled_baseline(const TokenizerModel& model_4x, const Corpus& corpus, int factor,
                                    EvalOptions options) {
    if (model_4x.k() != 4) throw ConfigError("subsampled baseline needs the 4x model");
    if (factor != 1 && factor != 2 && factor != 4)
        throw ConfigError("subsampling factor must be 1, 2 or 4, got " + std::to_string(factor));
    options.factor = factor;
    return eval_reconstruction(model_4x, corpus, options);
}

Tensor<Real> crop_to_stage(const Tensor<Real>& video, int k) {
    const int n = (video.frames() - 1) / k;
    return slice_frames(video, 0, 1 + k * n);
}

double reconstruction_psnr(const TokenizerModel& model, const Tensor<Real>& clip) {
    const Tensor<Real> v = crop_to_stage(clip, model.k());
    return psnr(v, model.decode(model.encode(v).mean));
}

}  // namespace vtok
