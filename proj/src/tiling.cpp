#include "vtok/tiling.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace vtok {

namespace {

AxisLayout plan_axis(int length, int tile, int overlap) {
    AxisLayout a;
    a.length = length;
    if (tile >= length) {
        a.spans.push_back({0, length});
        return a;
    }
    const int stride = tile - overlap;
    for (int s = 0;; s += stride) {
        const int start = std::min(s, length - tile);
        a.spans.push_back({start, start + tile});
        if (start + tile >= length) break;
    }
    return a;
}

}  // namespace

std::int64_t AxisLayout::raw_weight(std::size_t tile, int x, int overlap) const {
    const TileSpan& s = spans[tile];
    if (x < s.start || x >= s.end) return 0;
    std::int64_t w = overlap + 1;
    if (tile > 0) w = std::min<std::int64_t>(w, x - s.start + 1);
    if (tile + 1 < spans.size()) w = std::min<std::int64_t>(w, s.end - x);
    return w;
}

std::int64_t AxisLayout::weight_sum(int x, int overlap) const {
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < spans.size(); ++i) sum += raw_weight(i, x, overlap);
    return sum;
}

std::int64_t TileLayout::numerator(std::size_t row, std::size_t col, int y, int x) const {
    return rows.raw_weight(row, y, overlap) * cols.raw_weight(col, x, overlap);
}

std::int64_t TileLayout::denominator(int y, int x) const {
    return rows.weight_sum(y, overlap) * cols.weight_sum(x, overlap);
}

double TileLayout::weight(std::size_t row, std::size_t col, int y, int x) const {
    return double(numerator(row, col, y, x)) / double(denominator(y, x));
}

TileLayout plan_tiles(int height, int width, int tile, int overlap) {
    if (height < 1 || width < 1) throw ConfigError("plan_tiles: empty plane");
    if (overlap < 0 || tile <= overlap)
        throw ConfigError("plan_tiles: need tile > overlap >= 0 (tile " + std::to_string(tile) + ", overlap " +
                          std::to_string(overlap) + ")");
    TileLayout l;
    l.height = height;
    l.width = width;
    l.tile = tile;
    l.overlap = overlap;
    l.rows = plan_axis(height, tile, overlap);
    l.cols = plan_axis(width, tile, overlap);
    return l;
}

template <typename R>
Tensor<R> layerwise_tiled_apply(const CausalConv3d<R>& conv, const Tensor<R>& x, const TileLayout& layout,
                                const TileOptions& options) {
    const ConvGeometry& g = conv.geometry();
    if (x.rank() != 4) throw ShapeError("layerwise_tiled_apply expects [T,C,H,W]");
    if (g.sh != 1 || g.sw != 1) throw ConfigError("layerwise tiling needs a spatial stride of 1");
    if (x.height() != layout.height || x.width() != layout.width)
        throw ShapeError("tile layout planned for " + std::to_string(layout.height) + "x" +
                         std::to_string(layout.width) + ", input is " + shape_str(x.shape()));
    const int r = std::max(g.pad_h(), g.pad_w());
    if (layout.count() > 1 && layout.overlap < 2 * r)
        throw ConfigError("tile overlap " + std::to_string(layout.overlap) + " is below twice the kernel radius " +
                          std::to_string(r));

    const int T = x.frames(), C = x.channels(), H = x.height(), W = x.width();
    const std::size_t nr = layout.rows.spans.size(), nc = layout.cols.spans.size(), n = nr * nc;

    std::vector<std::size_t> order = options.order;
    if (order.empty()) {
        order.resize(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
    }
    if (order.size() != n) throw ConfigError("tile order must list every tile once");

    std::vector<Tensor<R>> outs(n);
    std::size_t peak = 0;
    for (std::size_t idx : order) {
        if (idx >= n || outs[idx].numel() != 0) throw ConfigError("tile order must list every tile once");
        const TileSpan& rs = layout.rows.spans[idx / nc];
        const TileSpan& cs = layout.cols.spans[idx % nc];
        const int y0 = std::max(0, rs.start - r), y1 = std::min(H, rs.end + r);
        const int x0 = std::max(0, cs.start - r), x1 = std::min(W, cs.end + r);
        Tensor<R> in({T, C, y1 - y0, x1 - x0});
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < C; ++c)
                for (int y = y0; y < y1; ++y)
                    std::copy_n(&x.at(t, c, y, x0), x1 - x0, &in.at(t, c, y - y0, 0));
        peak = std::max(peak, in.numel());
        Tensor<R> full = conv.forward(in);
        const int To = full.frames(), Co = full.channels();
        Tensor<R> crop({To, Co, rs.size(), cs.size()});
        for (int t = 0; t < To; ++t)
            for (int c = 0; c < Co; ++c)
                for (int y = rs.start; y < rs.end; ++y)
                    std::copy_n(&full.at(t, c, y - y0, cs.start - x0), cs.size(), &crop.at(t, c, y - rs.start, 0));
        outs[idx] = std::move(crop);
    }

    const int To = outs[0].frames(), Co = outs[0].channels();
    Tensor<R> y({To, Co, H, W});
    const int o = layout.overlap;
    for (int yy = 0; yy < H; ++yy) {
        for (int xx = 0; xx < W; ++xx) {
            std::size_t covering = 0, first = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (layout.numerator(i / nc, i % nc, yy, xx) > 0) {
                    if (covering++ == 0) first = i;
                }
            }
            if (covering == 1) {
                const TileSpan& rs = layout.rows.spans[first / nc];
                const TileSpan& cs = layout.cols.spans[first % nc];
                for (int t = 0; t < To; ++t)
                    for (int c = 0; c < Co; ++c)
                        y.at(t, c, yy, xx) = outs[first].at(t, c, yy - rs.start, xx - cs.start);
                continue;
            }
            const double den = double(layout.rows.weight_sum(yy, o) * layout.cols.weight_sum(xx, o));
            for (int t = 0; t < To; ++t) {
                for (int c = 0; c < Co; ++c) {
                    double acc = 0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const std::int64_t num = layout.numerator(i / nc, i % nc, yy, xx);
                        if (num == 0) continue;
                        const TileSpan& rs = layout.rows.spans[i / nc];
                        const TileSpan& cs = layout.cols.spans[i % nc];
                        acc += double(num) * double(outs[i].at(t, c, yy - rs.start, xx - cs.start));
                    }
                    y.at(t, c, yy, xx) = static_cast<R>(acc / den);
                }
            }
        }
    }
    if (options.stats) {
        options.stats->layers += 1;
        options.stats->tiles += n;
        options.stats->peak_tile_elements = std::max(options.stats->peak_tile_elements, peak);
        options.stats->peak_full_elements = std::max(options.stats->peak_full_elements, x.numel());
    }
    return y;
}

template Tensor<float> layerwise_tiled_apply(const CausalConv3d<float>&, const Tensor<float>&, const TileLayout&,
                                             const TileOptions&);
template Tensor<double> layerwise_tiled_apply(const CausalConv3d<double>&, const Tensor<double>&,
                                              const TileLayout&, const TileOptions&);

Tensor<Real> tiled_decode(const TokenizerModel& model, const Tensor<Real>& z, int tile, int overlap,
                          const TileOptions& options) {
    if (z.rank() != 4) throw ShapeError("tiled_decode expects a [T,C,H,W] latent");
    plan_tiles(z.height(), z.width(), tile, overlap);  // validates knobs
    const int zh = z.height(), zw = z.width();
    ConvHook<Real> hook = [&](const CausalConv3d<Real>& conv, const Tensor<Real>& x) {
        if (x.height() % zh != 0 || x.width() % zw != 0 || x.height() / zh != x.width() / zw)
            throw ShapeError("decoder resolution is not an integer multiple of the latent grid");
        const int scale = x.height() / zh;
        TileOptions per_layer = options;
        if (!options.order.empty()) {
            // The order applies to layers with the same tile count only.
            const TileLayout probe = plan_tiles(x.height(), x.width(), tile * scale, overlap * scale);
            if (probe.count() != options.order.size()) per_layer.order.clear();
        }
        return layerwise_tiled_apply(conv, x, plan_tiles(x.height(), x.width(), tile * scale, overlap * scale),
                                     per_layer);
    };
    return model.decode(z, &hook);
}

Tensor<Real> stitch_chunks(const std::vector<Tensor<Real>>& chunks, const ChunkPlan& plan) {
    if (chunks.size() != plan.spans.size())
        throw ShapeError("stitch_chunks: " + std::to_string(chunks.size()) + " chunks for " +
                         std::to_string(plan.spans.size()) + " spans");
    if (chunks.empty()) throw ShapeError("stitch_chunks: nothing to stitch");
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto [s, e] = plan.spans[i];
        if (chunks[i].rank() != 4 || chunks[i].frames() != e - s)
            throw ShapeError("stitch_chunks: chunk " + std::to_string(i) + " has " +
                             std::to_string(chunks[i].rank() == 4 ? chunks[i].frames() : -1) + " frames, span needs " +
                             std::to_string(e - s));
        if (i > 0 && (chunks[i].frame_numel() != chunks[0].frame_numel() || s < plan.spans[i - 1].first))
            throw ShapeError("stitch_chunks: inconsistent chunk geometry");
    }
    Shape shape = chunks[0].shape();
    shape[0] = plan.total_frames;
    Tensor<Real> out(shape);
    const std::size_t fsz = chunks[0].frame_numel();
    int filled = 0;  // frames [0, filled) already written
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto [s, e] = plan.spans[i];
        if (s > filled) throw ShapeError("stitch_chunks: spans leave a gap");
        const int o = filled - s;
        for (int f = s; f < e; ++f) {
            Real* dst = out.frame_ptr(f);
            const Real* src = chunks[i].frame_ptr(f - s);
            if (f >= filled) {
                std::copy_n(src, fsz, dst);
                continue;
            }
            const double w = stitch_weight(f - s, o);
            for (std::size_t j = 0; j < fsz; ++j)
                dst[j] = static_cast<Real>(w * double(dst[j]) + (1.0 - w) * double(src[j]));
        }
        filled = std::max(filled, e);
    }
    if (filled != plan.total_frames) throw ShapeError("stitch_chunks: spans do not cover the clip");
    return out;
}

}  // namespace vtok
