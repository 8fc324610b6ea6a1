#include "vtok/model.hpp"

#include <algorithm>
#include <cmath>

namespace vtok {

namespace {

ConvGeometry geom(int in_ch, int out_ch, int kt, int k, int st = 1, int ss = 1) {
    ConvGeometry g;
    g.in_channels = in_ch;
    g.out_channels = out_ch;
    g.kt = kt;
    g.kh = g.kw = k;
    g.st = st;
    g.sh = g.sw = ss;
    return g;
}

std::string lvl(const std::string& name, int l) { return name + ".level" + std::to_string(l); }

// Time is halved by the two deepest down steps only, so k = 4 at any depth.
bool down_is_temporal(int down_index, int levels) { return down_index >= levels - 3; }
bool up_is_temporal(int level, int levels) { return level >= levels - 2; }

bool any_trainable(const ParamList<Real>& params) {
    return std::any_of(params.begin(), params.end(), [](const Param<Real>* p) { return !p->frozen; });
}

}  // namespace

void StagePlan::validate() const {
    if (k != 4 && k != 8 && k != 16)
        throw ConfigError("stage k must be 4, 8 or 16, got " + std::to_string(k));
    if (widths.size() < 3)
        throw ConfigError("need at least 3 spatial levels for 4x temporal compression");
    for (int w : widths)
        if (w < 1) throw ConfigError("channel widths must be positive");
    if (res_units < 1) throw ConfigError("res_units must be >= 1");
    if (latent_channels < 1) throw ConfigError("latent_channels must be >= 1");
}

LatentGrid split_moments(const Tensor<Real>& moments) {
    if (moments.channels() % 2 != 0) throw ShapeError("moments need an even channel count");
    const int cz = moments.channels() / 2;
    Shape s = moments.shape();
    s[1] = cz;
    LatentGrid g{Tensor<Real>(s), Tensor<Real>(s)};
    const std::size_t plane = moments.plane_numel() * static_cast<std::size_t>(cz);
    for (int t = 0; t < moments.frames(); ++t) {
        const Real* m = moments.frame_ptr(t);
        std::copy(m, m + plane, g.mean.frame_ptr(t));
        Real* lv = g.logvar.frame_ptr(t);
        for (std::size_t i = 0; i < plane; ++i)
            lv[i] = std::clamp(m[plane + i], kLogvarMin, kLogvarMax);
    }
    return g;
}

Tensor<Real> sample_latent(const LatentGrid& grid, Rng& rng, Tensor<Real>* eta_out) {
    require_same_shape(grid.mean, grid.logvar, "sample_latent");
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor<Real> z(grid.mean.shape());
    Tensor<Real> eta(grid.mean.shape());
    for (std::size_t i = 0; i < z.numel(); ++i) {
        eta[i] = static_cast<Real>(normal(rng));
        z[i] = grid.mean[i] + std::exp(grid.logvar[i] * Real(0.5)) * eta[i];
    }
    if (eta_out) *eta_out = std::move(eta);
    return z;
}

template <typename R>
Tensor<R> subsample_time(const Tensor<R>& video, int factor) {
    if (factor < 1) throw ConfigError("subsample factor must be >= 1");
    const int t = video.frames();
    if ((t - 1) % factor != 0)
        throw DivisibilityError("cannot subsample " + std::to_string(t) + " frames by " +
                                std::to_string(factor) + ": (T-1) is not divisible");
    Shape s = video.shape();
    s[0] = 1 + (t - 1) / factor;
    Tensor<R> out(s);
    const std::size_t fn = video.frame_numel();
    for (int i = 0; i < s[0]; ++i)
        std::copy(video.frame_ptr(i * factor), video.frame_ptr(i * factor) + fn, out.frame_ptr(i));
    return out;
}

template Tensor<float> subsample_time(const Tensor<float>&, int);
template Tensor<double> subsample_time(const Tensor<double>&, int);

// ---------------------------------------------------------------- encoder

Encoder::Encoder(const std::string& name, const StagePlan& plan, bool temporal, int stage,
                 Rng& rng)
    : res_units_(plan.res_units) {
    const int kt = temporal ? 3 : 1;
    const int levels = plan.levels();
    conv_in_ = CausalConv3d<Real>(name + ".conv_in", geom(3, plan.widths[0], kt, 3), stage, rng);
    int ch = plan.widths[0];
    for (int l = 0; l < levels; ++l) {
        const int w = plan.widths[static_cast<std::size_t>(l)];
        for (int u = 0; u < res_units_; ++u) {
            res_.emplace_back(lvl(name, l) + ".res" + std::to_string(u), ch, w, kt, stage, rng);
            ch = w;
        }
        if (l < levels - 1) {
            const int st = temporal && down_is_temporal(l, levels) ? 2 : 1;
            down_.emplace_back(lvl(name, l) + ".down", geom(ch, ch, kt, 3, st, 2), stage, rng);
        }
    }
    mid_ = ResBlock<Real>(name + ".mid", ch, ch, kt, stage, rng);
    norm_out_ = MeanFreeGroupNorm<Real>(name + ".norm_out", ch,
                                        MeanFreeGroupNorm<Real>::default_groups(ch), stage);
    out_channels_ = ch;
}

Tensor<Real> Encoder::forward(const Tensor<Real>& x, Cache* cache) const {
    if (cache) {
        cache->res.assign(res_.size(), {});
        cache->down.assign(down_.size(), {});
    }
    Tensor<Real> h = conv_in_.forward(x, cache ? &cache->conv_in : nullptr);
    std::size_t r = 0;
    for (std::size_t l = 0; l <= down_.size(); ++l) {
        for (int u = 0; u < res_units_; ++u, ++r)
            h = res_[r].forward(h, cache ? &cache->res[r] : nullptr);
        if (l < down_.size()) h = down_[l].forward(h, cache ? &cache->down[l] : nullptr);
    }
    h = mid_.forward(h, cache ? &cache->mid : nullptr);
    h = norm_out_.forward(h, cache ? &cache->norm_out : nullptr);
    if (cache) cache->act_in = h;
    return silu(h);
}

void Encoder::backward(const Tensor<Real>& dy, const Cache& cache, bool param_grads) {
    Tensor<Real> d = silu_backward(cache.act_in, dy);
    d = norm_out_.backward(d, cache.norm_out, param_grads);
    d = mid_.backward(d, cache.mid, param_grads);
    std::size_t r = res_.size();
    for (std::size_t l = down_.size() + 1; l-- > 0;) {
        if (l < down_.size()) d = down_[l].backward(d, cache.down[l], true, param_grads);
        for (int u = 0; u < res_units_; ++u) {
            --r;
            d = res_[r].backward(d, cache.res[r], param_grads);
        }
    }
    conv_in_.backward(d, cache.conv_in, false, param_grads);
}

void Encoder::collect(ParamList<Real>& out) {
    conv_in_.collect(out);
    std::size_t r = 0;
    for (std::size_t l = 0; l <= down_.size(); ++l) {
        for (int u = 0; u < res_units_; ++u, ++r) res_[r].collect(out);
        if (l < down_.size()) down_[l].collect(out);
    }
    mid_.collect(out);
    norm_out_.collect(out);
}

// ---------------------------------------------------------------- decoder

Decoder::Decoder(const std::string& name, const StagePlan& plan, bool temporal, int stage, Rng& rng)
    : name_(name), res_units_(plan.res_units), top_width_(plan.top_width()), kt_(temporal ? 3 : 1) {
    const int levels = plan.levels();
    conv_in_ = CausalConv3d<Real>(name + ".conv_in", geom(plan.latent_channels, top_width_, kt_, 3),
                                  stage, rng);
    mid_ = ResBlock<Real>(name + ".mid", top_width_, top_width_, kt_, stage, rng);
    int ch = top_width_;
    for (int l = levels - 1; l >= 0; --l) {
        const int w = plan.widths[static_cast<std::size_t>(l)];
        for (int u = 0; u < res_units_; ++u) {
            res_.emplace_back(lvl(name, l) + ".res" + std::to_string(u), ch, w, kt_, stage, rng);
            ch = w;
        }
        if (l > 0) {
            const int next = plan.widths[static_cast<std::size_t>(l - 1)];
            up_.emplace_back(lvl(name, l) + ".up", ch, next, temporal && up_is_temporal(l, levels), 2,
                             kt_, stage, rng);
            ch = next;
        }
    }
    norm_out_ = MeanFreeGroupNorm<Real>(name + ".norm_out", ch,
                                        MeanFreeGroupNorm<Real>::default_groups(ch), stage);
    conv_out_ = CausalConv3d<Real>(name + ".conv_out", geom(ch, 3, kt_, 3), stage, rng);
}

void Decoder::add_growth(int k, int stage, Rng& rng) {
    const std::string base = name_ + ".growth" + std::to_string(k);
    DecoderGrowth g;
    g.k = k;
    g.up = UpsampleBlock<Real>(base + ".up", top_width_, top_width_, true, 1, kt_, stage, rng);
    g.res = ResBlock<Real>(base + ".res", top_width_, top_width_, kt_, stage, rng);
    growth_.insert(growth_.begin(), std::move(g));
}

Tensor<Real> Decoder::forward(const Tensor<Real>& z, Cache* cache, const ConvHook<Real>* hook) const {
    if (cache) {
        cache->growth_up.assign(growth_.size(), {});
        cache->growth_res.assign(growth_.size(), {});
        cache->res.assign(res_.size(), {});
        cache->up.assign(up_.size(), {});
    }
    Tensor<Real> h = conv_in_.run(z, cache ? &cache->conv_in : nullptr, hook);
    for (std::size_t i = 0; i < growth_.size(); ++i) {
        h = growth_[i].up.forward(h, cache ? &cache->growth_up[i] : nullptr, hook);
        h = growth_[i].res.forward(h, cache ? &cache->growth_res[i] : nullptr, hook);
    }
    h = mid_.forward(h, cache ? &cache->mid : nullptr, hook);
    std::size_t r = 0;
    for (std::size_t l = 0; l <= up_.size(); ++l) {
        for (int u = 0; u < res_units_; ++u, ++r)
            h = res_[r].forward(h, cache ? &cache->res[r] : nullptr, hook);
        if (l < up_.size()) h = up_[l].forward(h, cache ? &cache->up[l] : nullptr, hook);
    }
    h = norm_out_.forward(h, cache ? &cache->norm_out : nullptr);
    if (cache) cache->act_in = h;
    return conv_out_.run(silu(h), cache ? &cache->conv_out : nullptr, hook);
}

Tensor<Real> Decoder::backward(const Tensor<Real>& dy, const Cache& cache, bool param_grads) {
    Tensor<Real> d = conv_out_.backward(dy, cache.conv_out, true, param_grads);
    d = silu_backward(cache.act_in, d);
    d = norm_out_.backward(d, cache.norm_out, param_grads);
    std::size_t r = res_.size();
    for (std::size_t l = up_.size() + 1; l-- > 0;) {
        if (l < up_.size()) d = up_[l].backward(d, cache.up[l], param_grads);
        for (int u = 0; u < res_units_; ++u) {
            --r;
            d = res_[r].backward(d, cache.res[r], param_grads);
        }
    }
    d = mid_.backward(d, cache.mid, param_grads);
    for (std::size_t i = growth_.size(); i-- > 0;) {
        d = growth_[i].res.backward(d, cache.growth_res[i], param_grads);
        d = growth_[i].up.backward(d, cache.growth_up[i], param_grads);
    }
    return conv_in_.backward(d, cache.conv_in, true, param_grads);
}

void Decoder::collect(ParamList<Real>& out) {
    conv_in_.collect(out);
    for (auto& g : growth_) {
        g.up.collect(out);
        g.res.collect(out);
    }
    mid_.collect(out);
    std::size_t r = 0;
    for (std::size_t l = 0; l <= up_.size(); ++l) {
        for (int u = 0; u < res_units_; ++u, ++r) res_[r].collect(out);
        if (l < up_.size()) up_[l].collect(out);
    }
    norm_out_.collect(out);
    conv_out_.collect(out);
}

namespace {

// Gradient of the bottleneck moments from gradients of the sampled latent
// and direct mean/logvar terms.
Tensor<Real> moments_grad(const Tensor<Real>& dz, const Tensor<Real>& d_mean,
                          const Tensor<Real>& d_logvar, const Tensor<Real>& eta,
                          const Tensor<Real>& logvar_raw) {
    Shape s = dz.shape();
    s[1] *= 2;
    Tensor<Real> dm(s);
    const std::size_t half = dz.frame_numel();
    for (int t = 0; t < dz.frames(); ++t) {
        const std::size_t off = static_cast<std::size_t>(t) * half;
        Real* out = dm.frame_ptr(t);
        for (std::size_t i = 0; i < half; ++i) {
            const std::size_t j = off + i;
            out[i] = dz[j] + (d_mean.empty() ? Real(0) : d_mean[j]);
            const Real raw = logvar_raw[j];
            if (raw < kLogvarMin || raw > kLogvarMax) {
                out[half + i] = 0;
                continue;
            }
            const Real sd = std::exp(raw * Real(0.5));
            out[half + i] = dz[j] * eta[j] * Real(0.5) * sd + (d_logvar.empty() ? Real(0) : d_logvar[j]);
        }
    }
    return dm;
}

Tensor<Real> raw_logvar(const Tensor<Real>& moments) {
    Shape s = moments.shape();
    s[1] /= 2;
    Tensor<Real> out(s);
    const std::size_t half = out.frame_numel();
    for (int t = 0; t < moments.frames(); ++t)
        std::copy(moments.frame_ptr(t) + half, moments.frame_ptr(t) + 2 * half, out.frame_ptr(t));
    return out;
}

}  // namespace

// ---------------------------------------------------------------- image model

ImageAutoencoder ImageAutoencoder::build(const StagePlan& plan, std::uint64_t seed) {
    plan.validate();
    Rng rng(seed);
    ImageAutoencoder m;
    m.plan_ = plan;
    m.encoder_ = Encoder("image_encoder", plan, false, 0, rng);
    m.bottleneck_ = CausalConv3d<Real>("image_bottleneck",
                                       geom(plan.top_width(), 2 * plan.latent_channels, 1, 1), 0, rng);
    m.decoder_ = Decoder("image_decoder", plan, false, 0, rng);
    return m;
}

LatentGrid ImageAutoencoder::encode(const Tensor<Real>& image) const {
    return split_moments(bottleneck_.forward(encoder_.forward(image)));
}

Tensor<Real> ImageAutoencoder::decode(const Tensor<Real>& z) const {
    Tensor<Real> x = decoder_.forward(z);
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = std::clamp(x[i], Real(-1), Real(1));
    return x;
}

ParamList<Real> ImageAutoencoder::parameters() {
    ParamList<Real> out;
    encoder_.collect(out);
    bottleneck_.collect(out);
    decoder_.collect(out);
    return out;
}

std::vector<const Param<Real>*> ImageAutoencoder::parameters() const {
    auto list = const_cast<ImageAutoencoder*>(this)->parameters();
    return {list.begin(), list.end()};
}

Tensor<Real> ImageAutoencoder::forward_train(const Tensor<Real>& images, Rng& rng, LatentGrid& grid,
                                             Cache& cache) const {
    Tensor<Real> moments = bottleneck_.forward(encoder_.forward(images, &cache.enc), &cache.bottleneck);
    grid = split_moments(moments);
    cache.logvar_raw = raw_logvar(moments);
    Tensor<Real> z = sample_latent(grid, rng, &cache.eta);
    return decoder_.forward(z, &cache.dec);
}


void ImageAutoencoder::backward_train(const Tensor<Real>& d_recon, const Tensor<Real>& d_mean,
                                      const Tensor<Real>& d_logvar, const Cache& cache) {
    Tensor<Real> dz = decoder_.backward(d_recon, cache.dec);
    Tensor<Real> dm = moments_grad(dz, d_mean, d_logvar, cache.eta, cache.logvar_raw);
    Tensor<Real> df = bottleneck_.backward(dm, cache.bottleneck, true);
    encoder_.backward(df, cache.enc);
}

// ---------------------------------------------------------------- tokenizer

namespace {

void add_growth_stage(std::vector<GrowthStage>& growth, std::vector<CausalConv3d<Real>>& bottleneck,
                      Decoder& decoder, const StagePlan& plan, int k, bool mixing, Rng& rng) {
    const int w = plan.top_width();
    const std::string base = "growth" + std::to_string(k);
    GrowthStage g;
    g.k = k;
    g.mixing = mixing;
    if (mixing) g.ada = AdaNorm<Real>(base + ".ada", w, w, k, rng);
    g.down = TemporalDownsampleBlock<Real>(base + ".down", w, k, rng);
    growth.push_back(std::move(g));
    bottleneck.emplace_back("bottleneck" + std::to_string(k),
                            geom(w, 2 * plan.latent_channels, 1, 1), k, rng);
    decoder.add_growth(k, k, rng);
}

}  // namespace

TokenizerModel TokenizerModel::build(const StagePlan& plan, std::uint64_t seed) {
    plan.validate();
    Rng rng(seed);
    TokenizerModel m;
    m.plan_ = plan;
    m.image_encoder_ = Encoder("image_encoder", plan, false, 0, rng);
    ParamList<Real> img;
    m.image_encoder_.collect(img);
    for (auto* p : img) p->frozen = true;
    m.trunk_ = Encoder("encoder", plan, true, 4, rng);
    m.bottleneck_.emplace_back("bottleneck4", geom(plan.top_width(), 2 * plan.latent_channels, 1, 1),
                               4, rng);
    m.decoder_ = Decoder("decoder", plan, true, 4, rng);
    for (int k = 8; k <= plan.k; k *= 2)
        add_growth_stage(m.growth_, m.bottleneck_, m.decoder_, plan, k, plan.mixing, rng);
    return m;
}

TokenizerModel TokenizerModel::grow(const TokenizerModel& parent, const StagePlan& next,
                                    std::uint64_t seed) {
    next.validate();
    if (next.k != 2 * parent.k())
        throw ConfigError("grow: stage mismatch, parent k=" + std::to_string(parent.k()) +
                          " cannot grow to k=" + std::to_string(next.k));
    if (!next.same_architecture(parent.plan()))
        throw ConfigError("grow: architecture of next plan differs from parent");
    TokenizerModel m = parent;
    for (auto* p : m.parameters()) {
        p->frozen = true;
        p->zero_grad();
    }
    m.plan_ = next;
    Rng rng(seed);
    add_growth_stage(m.growth_, m.bottleneck_, m.decoder_, next, next.k, next.mixing, rng);
    return m;
}

int TokenizerModel::latent_frames(int frames) const {
    if (frames < 1 || (frames - 1) % plan_.k != 0)
        throw DivisibilityError("stage " + std::to_string(plan_.k) + "x needs 1 + " +
                                std::to_string(plan_.k) + "N frames, got " + std::to_string(frames));
    return 1 + (frames - 1) / plan_.k;
}

bool TokenizerModel::level_trainable(int level) const {
    auto* self = const_cast<TokenizerModel*>(this);
    ParamList<Real> ps;
    if (level == 0) {
        self->trunk_.collect(ps);
    } else {
        auto& g = self->growth_[static_cast<std::size_t>(level - 1)];
        if (g.ada) g.ada->collect(ps);
        g.down.collect(ps);
        if (!any_trainable(ps)) return level_trainable(level - 1);
    }
    return any_trainable(ps);
}

Tensor<Real> TokenizerModel::features(int level, const Tensor<Real>& video, FeatureCache* cache) const {
    if (level < 0 || level > this->level()) throw ConfigError("features: bad level");
    if (cache) cache->level = level;
    if (level == 0) {
        Tensor<Real> h = trunk_.forward(video, cache ? &cache->trunk : nullptr);
        Tensor<Real> first = image_encoder_.forward(slice_frames(video, 0, 1));
        require_same_shape(first, slice_frames(h, 0, 1), "first-frame injection");
        std::copy(first.data(), first.data() + first.numel(), h.frame_ptr(0));
        return h;
    }
    const GrowthStage& g = growth_[static_cast<std::size_t>(level - 1)];
    const bool sub_cache = cache && level_trainable(level - 1);
    FeatureCache* star_cache = nullptr;
    if (sub_cache) {
        cache->star = std::make_unique<FeatureCache>();
        star_cache = cache->star.get();
    }
    if (!g.mixing) {
        Tensor<Real> star = features(level - 1, video, star_cache);
        return g.down.forward(star, cache ? &cache->down : nullptr);
    }
    FeatureCache* key_cache = nullptr;
    if (sub_cache) {
        cache->key = std::make_unique<FeatureCache>();
        key_cache = cache->key.get();
    }
    Tensor<Real> key = features(level - 1, subsample_time(video, 2), key_cache);
    Tensor<Real> star = features(level - 1, video, star_cache);
    Tensor<Real> mixed = g.ada->forward(star, key, cache ? &cache->ada : nullptr);
    Tensor<Real> inter = g.down.forward(mixed, cache ? &cache->down : nullptr);
    add_inplace(inter, key);
    return inter;
}

void TokenizerModel::features_backward(int level, const Tensor<Real>& dy, FeatureCache& cache) {
    if (level == 0) {
        Tensor<Real> d = dy;
        // Frame 0 comes from the frozen image encoder.
        std::fill(d.frame_ptr(0), d.frame_ptr(0) + d.frame_numel(), Real(0));
        trunk_.backward(d, cache.trunk);
        return;
    }
    GrowthStage& g = growth_[static_cast<std::size_t>(level - 1)];
    const bool below = level_trainable(level - 1);
    if (!g.mixing) {
        Tensor<Real> dstar = g.down.backward(dy, cache.down);
        if (below) features_backward(level - 1, dstar, *cache.star);
        return;
    }
    Tensor<Real> dmixed = g.down.backward(dy, cache.down);
    Tensor<Real> dkey;
    Tensor<Real> dstar = g.ada->backward(dmixed, cache.ada, below ? &dkey : nullptr);
    if (below) {
        add_inplace(dkey, dy);
        features_backward(level - 1, dkey, *cache.key);
        features_backward(level - 1, dstar, *cache.star);
    }
}

Tensor<Real> TokenizerModel::key_embedding(const Tensor<Real>& video) const {
    if (level() == 0) throw ConfigError("key_embedding: 4x model has no key-frame path");
    return features(level() - 1, subsample_time(video, 2));
}

LatentGrid TokenizerModel::encode(const Tensor<Real>& video) const {
    if (video.rank() != 4 || video.channels() != 3)
        throw ShapeError("encode expects [T,3,H,W], got " + shape_str(video.shape()));
    latent_frames(video.frames());
    const int s = plan_.spatial_compression();
    if (video.height() % s != 0 || video.width() % s != 0)
        throw ShapeError("spatial size must be divisible by " + std::to_string(s));
    Tensor<Real> f = features(level(), video);
    return split_moments(bottleneck_[static_cast<std::size_t>(level())].forward(f));
}

Tensor<Real> TokenizerModel::decode_raw(const Tensor<Real>& z, const ConvHook<Real>* hook) const {
    if (z.rank() != 4 || z.channels() != plan_.latent_channels)
        throw ShapeError("decode: expected " + std::to_string(plan_.latent_channels) +
                         " latent channels, got " + shape_str(z.shape()));
    return decoder_.forward(z, nullptr, hook);
}

Tensor<Real> TokenizerModel::decode(const Tensor<Real>& z, const ConvHook<Real>* hook) const {
    Tensor<Real> x = decode_raw(z, hook);
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = std::clamp(x[i], Real(-1), Real(1));
    return x;
}

Tensor<Real> TokenizerModel::forward_train(const Tensor<Real>& video, Rng& rng, LatentGrid& grid,
                                           TrainCache& cache) const {
    latent_frames(video.frames());
    const bool trainable = level_trainable(level());
    Tensor<Real> f = features(level(), video, trainable ? &cache.features : nullptr);
    Tensor<Real> moments = bottleneck_[static_cast<std::size_t>(level())].forward(f, &cache.bottleneck);
    grid = split_moments(moments);
    cache.logvar_raw = raw_logvar(moments);
    Tensor<Real> z = sample_latent(grid, rng, &cache.eta);
    return decoder_.forward(z, &cache.decoder);
}

void TokenizerModel::backward_train(const Tensor<Real>& d_recon, const Tensor<Real>& d_mean,
                                    const Tensor<Real>& d_logvar, TrainCache& cache) {
    Tensor<Real> dz = decoder_.backward(d_recon, cache.decoder);
    Tensor<Real> dm = moments_grad(dz, d_mean, d_logvar, cache.eta, cache.logvar_raw);
    const bool trainable = level_trainable(level());
    Tensor<Real> df = bottleneck_[static_cast<std::size_t>(level())].backward(dm, cache.bottleneck, trainable);
    if (trainable) features_backward(level(), df, cache.features);
}

void TokenizerModel::adopt_image_encoder(const ImageAutoencoder& image_model) {
    if (!plan_.same_architecture(image_model.plan()))
        throw ConfigError("image model architecture differs from video model");
    ParamList<Real> mine;
    image_encoder_.collect(mine);
    auto theirs = image_model.parameters();
    for (auto* p : mine) {
        auto it = std::find_if(theirs.begin(), theirs.end(),
                               [&](const Param<Real>* q) { return q->name == p->name; });
        if (it == theirs.end()) throw ConfigError("image model lacks parameter " + p->name);
        require_same_shape(p->value, (*it)->value, "adopt_image_encoder");
        p->value = (*it)->value;
        p->frozen = true;
        p->stage = 0;
    }
}

ParamList<Real> TokenizerModel::parameters() {
    ParamList<Real> out;
    image_encoder_.collect(out);
    trunk_.collect(out);
    for (auto& g : growth_) {
        if (g.ada) g.ada->collect(out);
        g.down.collect(out);
    }
    for (auto& b : bottleneck_) b.collect(out);
    decoder_.collect(out);
    return out;
}

std::vector<const Param<Real>*> TokenizerModel::parameters() const {
    auto list = const_cast<TokenizerModel*>(this)->parameters();
    return {list.begin(), list.end()};
}

std::size_t TokenizerModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.numel();
    return n;
}

const Param<Real>* TokenizerModel::find(const std::string& name) const {
    for (const auto* p : parameters())
        if (p->name == name) return p;
    return nullptr;
}

}  // namespace vtok
