#include "vtok/layers.hpp"

#include <cmath>

namespace vtok {

namespace {

template <typename Real>
Param<Real> make_param(std::string name, Shape shape, int stage) {
    Param<Real> p;
    p.name = std::move(name);
    p.value = Tensor<Real>(shape);
    p.grad = Tensor<Real>(shape);
    p.stage = stage;
    return p;
}

}  // namespace

// ---------------------------------------------------------------- conv

template <typename Real>
CausalConv3d<Real>::CausalConv3d(std::string name, const ConvGeometry& geom, int stage, Rng& rng,
                                 double init_gain)
    : geom_(geom) {
    weight_ = make_param<Real>(name + ".weight", geom.weight_shape(), stage);
    bias_ = make_param<Real>(name + ".bias", {geom.out_channels}, stage);
    if (init_gain != 0.0) {
        std::normal_distribution<double> normal(0.0, init_gain / std::sqrt(double(geom.patch_size())));
        for (std::size_t i = 0; i < weight_.value.numel(); ++i)
            weight_.value[i] = static_cast<Real>(normal(rng));
    }
}

template <typename Real>
Tensor<Real> CausalConv3d<Real>::forward(const Tensor<Real>& x, Cache* cache) const {
    Tensor<Real> y;
    kernels::conv3d_forward(geom_, x, weight_.value.data(), bias_.value.data(), y);
    if (cache) cache->input = x;
    return y;
}

template <typename Real>
Tensor<Real> CausalConv3d<Real>::forward_reference(const Tensor<Real>& x) const {
    Tensor<Real> y;
    reference::conv3d_forward(geom_, x, weight_.value.data(), bias_.value.data(), y);
    return y;
}

template <typename Real>
Tensor<Real> CausalConv3d<Real>::backward(const Tensor<Real>& dy, const Cache& cache, bool need_dx,
                                          bool param_grads) {
    const bool pg = param_grads && !weight_.frozen;
    Tensor<Real> dx;
    if (need_dx) dx = Tensor<Real>(cache.input.shape());
    if (!need_dx && !pg) return dx;
    if (pg) {
        if (!weight_.grad.same_shape(weight_.value)) weight_.zero_grad();
        if (!bias_.grad.same_shape(bias_.value)) bias_.zero_grad();
    }
    kernels::conv3d_backward(geom_, cache.input, weight_.value.data(), dy, need_dx ? &dx : nullptr,
                             pg ? weight_.grad.data() : nullptr, pg ? bias_.grad.data() : nullptr);
    return dx;
}

// ---------------------------------------------------------------- norm

template <typename Real>
MeanFreeGroupNorm<Real>::MeanFreeGroupNorm(std::string name, int channels, int groups, int stage,
                                           double eps)
    : channels_(channels), groups_(groups), eps_(eps) {
    if (groups < 1 || channels % groups != 0)
        throw ConfigError(name + ": channels " + std::to_string(channels) +
                          " not divisible by groups " + std::to_string(groups));
    gain_ = make_param<Real>(name + ".gain", {channels}, stage);
    gain_.value.fill(Real(1));
}

template <typename Real>
Tensor<Real> MeanFreeGroupNorm<Real>::forward(const Tensor<Real>& x, Cache* cache) const {
    if (x.rank() != 4 || x.channels() != channels_)
        throw ShapeError("mf_group_norm: expected " + std::to_string(channels_) +
                         " channels, got " + shape_str(x.shape()));
    const int t_n = x.frames();
    const int cpg = channels_ / groups_;
    const std::size_t plane = x.plane_numel();
    const std::size_t group_n = plane * cpg;
    Tensor<Real> y(x.shape());
    std::vector<Real> inv(static_cast<std::size_t>(t_n) * groups_);
#pragma omp parallel for collapse(2) schedule(static)
    for (int t = 0; t < t_n; ++t) {
        for (int g = 0; g < groups_; ++g) {
            const Real* src = x.plane_ptr(t, g * cpg);
            double ss = 0.0;
            for (std::size_t i = 0; i < group_n; ++i) ss += double(src[i]) * double(src[i]);
            const Real r = static_cast<Real>(1.0 / std::sqrt(ss / double(group_n) + eps_));
            inv[static_cast<std::size_t>(t) * groups_ + g] = r;
            Real* dst = y.plane_ptr(t, g * cpg);
            for (int c = 0; c < cpg; ++c) {
                const Real scale = gain_.value[g * cpg + c] * r;
                const Real* s = src + c * plane;
                Real* d = dst + c * plane;
                for (std::size_t i = 0; i < plane; ++i) d[i] = s[i] * scale;
            }
        }
    }
    if (cache) {
        cache->input = x;
        cache->inv_rms = std::move(inv);
    }
    return y;
}

template <typename Real>
Tensor<Real> MeanFreeGroupNorm<Real>::backward(const Tensor<Real>& dy, const Cache& cache,
                                               bool param_grads) {
    const Tensor<Real>& x = cache.input;
    require_same_shape(x, dy, "mf_group_norm backward");
    const bool pg = param_grads && !gain_.frozen;
    if (pg && !gain_.grad.same_shape(gain_.value)) gain_.zero_grad();
    const int t_n = x.frames();
    const int cpg = channels_ / groups_;
    const std::size_t plane = x.plane_numel();
    const double group_n = double(plane * cpg);
    Tensor<Real> dx(x.shape());
    std::vector<double> dgain(static_cast<std::size_t>(t_n) * channels_, 0.0);
#pragma omp parallel for collapse(2) schedule(static)
    for (int t = 0; t < t_n; ++t) {
        for (int g = 0; g < groups_; ++g) {
            const double r = cache.inv_rms[static_cast<std::size_t>(t) * groups_ + g];
            // dot = sum_j gain_c(j) * dy_j * x_j over the group
            double dot = 0.0;
            for (int c = 0; c < cpg; ++c) {
                const int ch = g * cpg + c;
                const Real* xs = x.plane_ptr(t, ch);
                const Real* ds = dy.plane_ptr(t, ch);
                double s = 0.0;
                for (std::size_t i = 0; i < plane; ++i) s += double(ds[i]) * double(xs[i]);
                dgain[static_cast<std::size_t>(t) * channels_ + ch] = s * r;
                dot += double(gain_.value[ch]) * s;
            }
            const double coef = r * r * r * dot / group_n;
            for (int c = 0; c < cpg; ++c) {
                const int ch = g * cpg + c;
                const Real* xs = x.plane_ptr(t, ch);
                const Real* ds = dy.plane_ptr(t, ch);
                Real* out = dx.plane_ptr(t, ch);
                const double a = r * double(gain_.value[ch]);
                for (std::size_t i = 0; i < plane; ++i)
                    out[i] = static_cast<Real>(a * double(ds[i]) - coef * double(xs[i]));
            }
        }
    }
    if (pg) {
        for (int t = 0; t < t_n; ++t)
            for (int c = 0; c < channels_; ++c)
                gain_.grad[c] += static_cast<Real>(dgain[static_cast<std::size_t>(t) * channels_ + c]);
    }
    return dx;
}

// ---------------------------------------------------------------- activations

template <typename Real>
Tensor<Real> silu(const Tensor<Real>& x) {
    Tensor<Real> y(x.shape());
    const std::size_t n = x.numel();
    const Real* px = x.data();
    Real* py = y.data();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) py[i] = px[i] / (Real(1) + std::exp(-px[i]));
    return y;
}

template <typename Real>
Tensor<Real> silu_backward(const Tensor<Real>& x, const Tensor<Real>& dy) {
    require_same_shape(x, dy, "silu backward");
    Tensor<Real> dx(x.shape());
    const std::size_t n = x.numel();
    const Real* px = x.data();
    const Real* pd = dy.data();
    Real* po = dx.data();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
        const Real s = Real(1) / (Real(1) + std::exp(-px[i]));
        po[i] = pd[i] * s * (Real(1) + px[i] * (Real(1) - s));
    }
    return dx;
}

template <typename Real>
Tensor<Real> leaky_relu(const Tensor<Real>& x, Real slope) {
    Tensor<Real> y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0 ? x[i] : slope * x[i];
    return y;
}

template <typename Real>
Tensor<Real> leaky_relu_backward(const Tensor<Real>& x, const Tensor<Real>& dy, Real slope) {
    require_same_shape(x, dy, "leaky_relu backward");
    Tensor<Real> dx(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > 0 ? dy[i] : slope * dy[i];
    return dx;
}

// ---------------------------------------------------------------- ada norm

std::vector<int> ada_norm_frame_map(int frames, int cond_frames) {
    if (frames < 1 || cond_frames < 1) throw ShapeError("ada_norm: empty sequence");
    if (cond_frames == 1) {
        if (frames != 1)
            throw ShapeError("ada_norm: one conditioning frame cannot govern " +
                             std::to_string(frames) + " feature frames");
        return {0};
    }
    if ((frames - 1) % (cond_frames - 1) != 0)
        throw ShapeError("ada_norm: temporal ratio (" + std::to_string(frames) + "-1)/(" +
                         std::to_string(cond_frames) + "-1) is not an integer");
    const int r = (frames - 1) / (cond_frames - 1);
    std::vector<int> map(static_cast<std::size_t>(frames));
    map[0] = 0;
    for (int i = 1; i < frames; ++i) map[static_cast<std::size_t>(i)] = (i + r - 1) / r;
    return map;
}

template <typename Real>
AdaNorm<Real>::AdaNorm(std::string name, int channels, int cond_channels, int stage, Rng& rng)
    : channels_(channels) {
    norm_ = MeanFreeGroupNorm<Real>(name + ".norm", channels,
                                    MeanFreeGroupNorm<Real>::default_groups(channels), stage);
    ConvGeometry g;
    g.in_channels = cond_channels;
    g.out_channels = 2 * channels;
    // Zero projection: the layer starts as a plain mean-free group norm.
    proj_ = CausalConv3d<Real>(name + ".proj", g, stage, rng, 0.0);
}

template <typename Real>
Tensor<Real> AdaNorm<Real>::forward(const Tensor<Real>& x, const Tensor<Real>& cond,
                                    Cache* cache) const {
    if (x.height() != cond.height() || x.width() != cond.width())
        throw ShapeError("ada_norm: spatial mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(cond.shape()));
    std::vector<int> map = ada_norm_frame_map(x.frames(), cond.frames());
    typename MeanFreeGroupNorm<Real>::Cache* ncache = cache ? &cache->norm : nullptr;
    typename CausalConv3d<Real>::Cache* pcache = cache ? &cache->proj : nullptr;
    Tensor<Real> normed = norm_.forward(x, ncache);
    Tensor<Real> sb = proj_.forward(cond, pcache);
    Tensor<Real> y(x.shape());
    const std::size_t plane = x.plane_numel();
    for (int t = 0; t < x.frames(); ++t) {
        const int j = map[static_cast<std::size_t>(t)];
        for (int c = 0; c < channels_; ++c) {
            const Real* n = normed.plane_ptr(t, c);
            const Real* s = sb.plane_ptr(j, c);
            const Real* b = sb.plane_ptr(j, channels_ + c);
            Real* out = y.plane_ptr(t, c);
            for (std::size_t i = 0; i < plane; ++i) out[i] = (Real(1) + s[i]) * n[i] + b[i];
        }
    }
    if (cache) {
        cache->normed = std::move(normed);
        cache->scale_shift = std::move(sb);
        cache->frame_map = std::move(map);
    }
    return y;
}

template <typename Real>
Tensor<Real> AdaNorm<Real>::backward(const Tensor<Real>& dy, const Cache& cache,
                                     Tensor<Real>* dcond, bool param_grads) {
    const Tensor<Real>& normed = cache.normed;
    const Tensor<Real>& sb = cache.scale_shift;
    require_same_shape(dy, normed, "ada_norm backward");
    Tensor<Real> dnormed(normed.shape());
    Tensor<Real> dsb(sb.shape());
    const std::size_t plane = normed.plane_numel();
    for (int t = 0; t < normed.frames(); ++t) {
        const int j = cache.frame_map[static_cast<std::size_t>(t)];
        for (int c = 0; c < channels_; ++c) {
            const Real* g = dy.plane_ptr(t, c);
            const Real* n = normed.plane_ptr(t, c);
            const Real* s = sb.plane_ptr(j, c);
            Real* dn = dnormed.plane_ptr(t, c);
            Real* ds = dsb.plane_ptr(j, c);
            Real* db = dsb.plane_ptr(j, channels_ + c);
            for (std::size_t i = 0; i < plane; ++i) {
                dn[i] = (Real(1) + s[i]) * g[i];
                ds[i] += g[i] * n[i];
                db[i] += g[i];
            }
        }
    }
    Tensor<Real> dc = proj_.backward(dsb, cache.proj, dcond != nullptr, param_grads);
    if (dcond) *dcond = std::move(dc);
    return norm_.backward(dnormed, cache.norm, param_grads);
}

// ---------------------------------------------------------------- res block

namespace {

ConvGeometry conv_geom(int in_ch, int out_ch, int kt, int k, int st = 1, int ss = 1) {
    ConvGeometry g;
    g.in_channels = in_ch;
    g.out_channels = out_ch;
    g.kt = kt;
    g.kh = g.kw = k;
    g.st = st;
    g.sh = g.sw = ss;
    return g;
}

}  // namespace

template <typename Real>
ResBlock<Real>::ResBlock(const std::string& name, int in_ch, int out_ch, int kt, int stage,
                         Rng& rng) {
    norm1_ = MeanFreeGroupNorm<Real>(name + ".norm1", in_ch,
                                     MeanFreeGroupNorm<Real>::default_groups(in_ch), stage);
    conv1_ = CausalConv3d<Real>(name + ".conv1", conv_geom(in_ch, out_ch, kt, 3), stage, rng);
    norm2_ = MeanFreeGroupNorm<Real>(name + ".norm2", out_ch,
                                     MeanFreeGroupNorm<Real>::default_groups(out_ch), stage);
    conv2_ = CausalConv3d<Real>(name + ".conv2", conv_geom(out_ch, out_ch, kt, 3), stage, rng, 0.5);
    if (in_ch != out_ch)
        skip_ = CausalConv3d<Real>(name + ".skip", conv_geom(in_ch, out_ch, 1, 1), stage, rng);
}

template <typename Real>
Tensor<Real> ResBlock<Real>::forward(const Tensor<Real>& x, Cache* cache,
                                     const ConvHook<Real>* hook) const {
    Tensor<Real> h = norm1_.forward(x, cache ? &cache->n1 : nullptr);
    if (cache) cache->a1 = h;
    h = conv1_.run(silu(h), cache ? &cache->c1 : nullptr, hook);
    h = norm2_.forward(h, cache ? &cache->n2 : nullptr);
    if (cache) cache->a2 = h;
    h = conv2_.run(silu(h), cache ? &cache->c2 : nullptr, hook);
    if (skip_)
        add_inplace(h, skip_->run(x, cache ? &cache->skip : nullptr, hook));
    else
        add_inplace(h, x);
    return h;
}

template <typename Real>
Tensor<Real> ResBlock<Real>::backward(const Tensor<Real>& dy, const Cache& cache, bool param_grads) {
    Tensor<Real> d = conv2_.backward(dy, cache.c2, true, param_grads);
    d = silu_backward(cache.a2, d);
    d = norm2_.backward(d, cache.n2, param_grads);
    d = conv1_.backward(d, cache.c1, true, param_grads);
    d = silu_backward(cache.a1, d);
    Tensor<Real> dx = norm1_.backward(d, cache.n1, param_grads);
    if (skip_)
        add_inplace(dx, skip_->backward(dy, cache.skip, true, param_grads));
    else
        add_inplace(dx, dy);
    return dx;
}

template <typename Real>
void ResBlock<Real>::collect(ParamList<Real>& out) {
    norm1_.collect(out);
    conv1_.collect(out);
    norm2_.collect(out);
    conv2_.collect(out);
    if (skip_) skip_->collect(out);
}

// ---------------------------------------------------------------- down / up

template <typename Real>
TemporalDownsampleBlock<Real>::TemporalDownsampleBlock(const std::string& name, int channels,
                                                       int stage, Rng& rng) {
    res_ = ResBlock<Real>(name + ".res", channels, channels, 3, stage, rng);
    conv_ = CausalConv3d<Real>(name + ".conv", conv_geom(channels, channels, 3, 3, 2, 1), stage, rng);
}

template <typename Real>
Tensor<Real> TemporalDownsampleBlock<Real>::forward(const Tensor<Real>& x, Cache* cache) const {
    if ((x.frames() - 1) % 2 != 0)
        throw ShapeError("temporal downsample needs 1 + 2M frames, got " +
                         std::to_string(x.frames()));
    Tensor<Real> h = res_.forward(x, cache ? &cache->res : nullptr);
    return conv_.forward(h, cache ? &cache->conv : nullptr);
}

template <typename Real>
Tensor<Real> TemporalDownsampleBlock<Real>::backward(const Tensor<Real>& dy, const Cache& cache,
                                                     bool param_grads) {
    Tensor<Real> d = conv_.backward(dy, cache.conv, true, param_grads);
    return res_.backward(d, cache.res, param_grads);
}

template <typename Real>
void TemporalDownsampleBlock<Real>::collect(ParamList<Real>& out) {
    res_.collect(out);
    conv_.collect(out);
}

template <typename Real>
UpsampleBlock<Real>::UpsampleBlock(const std::string& name, int in_ch, int out_ch, bool temporal,
                                   int spatial_factor, int kt, int stage, Rng& rng)
    : temporal_(temporal), spatial_factor_(spatial_factor) {
    ConvGeometry g = conv_geom(in_ch, out_ch, kt, 3);
    g.skip_leading = temporal ? 1 : 0;
    conv_ = CausalConv3d<Real>(name + ".conv", g, stage, rng);
}

template <typename Real>
Tensor<Real> UpsampleBlock<Real>::forward(const Tensor<Real>& x, Cache* cache,
                                          const ConvHook<Real>* hook) const {
    Tensor<Real> up = kernels::upsample_nearest(x, time_factor(), spatial_factor_);
    return conv_.run(up, cache ? &cache->conv : nullptr, hook);
}

template <typename Real>
Tensor<Real> UpsampleBlock<Real>::backward(const Tensor<Real>& dy, const Cache& cache,
                                           bool param_grads) {
    Tensor<Real> d = conv_.backward(dy, cache.conv, true, param_grads);
    return kernels::upsample_nearest_backward(d, time_factor(), spatial_factor_);
}

template <typename Real>
Tensor<Real> causal_pad(const Tensor<Real>& x, int kt) {
    if (kt < 1) throw ConfigError("causal_pad: k_t must be >= 1");
    if (x.rank() < 1 || x.dim(0) < 1) throw ShapeError("causal_pad: empty sequence");
    Shape s = x.shape();
    s[0] += kt - 1;
    Tensor<Real> out(s);
    const std::size_t fn = x.frame_numel();
    for (int t = 0; t < s[0]; ++t) {
        const int src = t < kt - 1 ? 0 : t - (kt - 1);
        std::copy(x.frame_ptr(src), x.frame_ptr(src) + fn, out.frame_ptr(t));
    }
    return out;
}

#define VTOK_INSTANTIATE(R)                                                          \
    template class CausalConv3d<R>;                                                  \
    template class MeanFreeGroupNorm<R>;                                             \
    template class AdaNorm<R>;                                                       \
    template class ResBlock<R>;                                                      \
    template class TemporalDownsampleBlock<R>;                                       \
    template class UpsampleBlock<R>;                                                 \
    template Tensor<R> silu(const Tensor<R>&);                                       \
    template Tensor<R> silu_backward(const Tensor<R>&, const Tensor<R>&);            \
    template Tensor<R> leaky_relu(const Tensor<R>&, R);                              \
    template Tensor<R> leaky_relu_backward(const Tensor<R>&, const Tensor<R>&, R);   \
    template Tensor<R> causal_pad(const Tensor<R>&, int);

VTOK_INSTANTIATE(float)
VTOK_INSTANTIATE(double)

#undef VTOK_INSTANTIATE

}  // namespace vtok
