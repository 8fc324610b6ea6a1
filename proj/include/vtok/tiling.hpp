#pragma once

#include <cstdint>
#include <vector>

#include "vtok/model.hpp"
#include "vtok/video.hpp"

namespace vtok {

struct TileSpan {
    int start = 0;
    int end = 0;  // exclusive
    int size() const { return end - start; }
};

// One axis of a tile grid. Tiles start every (tile - overlap) pixels and the
// last one is clamped to end at the axis length. Blend weights are integers:
// a linear ramp 1, 2, ..., overlap + 1 on every side that has a neighbour,
// flat elsewhere; a pixel's weight is raw / sum of raws over covering tiles.
struct AxisLayout {
    int length = 0;
    std::vector<TileSpan> spans;

    std::int64_t raw_weight(std::size_t tile, int x, int overlap) const;
    std::int64_t weight_sum(int x, int overlap) const;
};

struct TileLayout {
    int height = 0;
    int width = 0;
    int tile = 64;
    int overlap = 8;
    AxisLayout rows;
    AxisLayout cols;

    std::size_t count() const { return rows.spans.size() * cols.spans.size(); }
    // Exact blend weight as numerator / denominator.
    std::int64_t numerator(std::size_t row, std::size_t col, int y, int x) const;
    std::int64_t denominator(int y, int x) const;
    double weight(std::size_t row, std::size_t col, int y, int x) const;
};

// Throws ConfigError unless tile > overlap >= 0.
TileLayout plan_tiles(int height, int width, int tile, int overlap);

struct TileStats {
    std::size_t layers = 0;
    std::size_t tiles = 0;
    std::size_t peak_tile_elements = 0;  // largest haloed tile input
    std::size_t peak_full_elements = 0;  // largest untiled layer input
};

struct TileOptions {
    // Processing order of tiles (row-major indices); empty = natural order.
    // Blending is always done in canonical order, so results do not depend on it.
    std::vector<std::size_t> order;
    TileStats* stats = nullptr;
};

// Applies a stride-1 conv tile by tile: each tile is read with a halo of the
// kernel radius (clamped at tensor edges), convolved, cropped, and blended.
// Throws ConfigError when overlap < 2r.
template <typename R>
Tensor<R> layerwise_tiled_apply(const CausalConv3d<R>& conv, const Tensor<R>& x, const TileLayout& layout,
                                const TileOptions& options = {});

// Full decode with every decoder conv run through layerwise tiling. Tile and
// overlap are in latent pixels and scale with the decoder's resolution.
// Normalization layers see the full tensor. Output is clamped to [-1, 1].
Tensor<Real> tiled_decode(const TokenizerModel& model, const Tensor<Real>& z, int tile, int overlap,
                          const TileOptions& options = {});

// Earlier-chunk weight at overlap index i of an o-frame overlap: (o - i) / (o + 1).
inline double stitch_weight(int i, int o) { return double(o - i) / double(o + 1); }

// Blends decoded chunks along time. Frames covered by one chunk are copied;
// in each overlap band the result is w * earlier + (1 - w) * later.
Tensor<Real> stitch_chunks(const std::vector<Tensor<Real>>& chunks, const ChunkPlan& plan);

}  // namespace vtok
