#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vtok/kernels.hpp"
#include "vtok/tensor.hpp"

namespace vtok {

using Rng = std::mt19937_64;

// A trainable tensor with its lineage: the compression stage that created it
// (0 for the image model) and whether optimizers may touch it.
template <typename Real>
struct Param {
    std::string name;
    Tensor<Real> value;
    Tensor<Real> grad;
    int stage = 0;
    bool frozen = false;

    void zero_grad() { grad = Tensor<Real>(value.shape()); }
};

template <typename Real>
using ParamList = std::vector<Param<Real>*>;

inline constexpr double kNormEpsilon = 1e-6;

template <typename Real>
class CausalConv3d;

// Lets inference callers reroute every convolution (used by tiled decoding).
template <typename Real>
using ConvHook = std::function<Tensor<Real>(const CausalConv3d<Real>&, const Tensor<Real>&)>;

template <typename Real>
class CausalConv3d {
  public:
    struct Cache {
        Tensor<Real> input;
    };

    CausalConv3d() = default;
    CausalConv3d(std::string name, const ConvGeometry& geom, int stage, Rng& rng,
                 double init_gain = 1.0);

    Tensor<Real> forward(const Tensor<Real>& x, Cache* cache = nullptr) const;
    // Runs the serial reference kernel; test-only oracle path.
    Tensor<Real> forward_reference(const Tensor<Real>& x) const;
    // Returns dx (empty tensor when need_dx is false).
    Tensor<Real> backward(const Tensor<Real>& dy, const Cache& cache, bool need_dx = true,
                          bool param_grads = true);

    Tensor<Real> run(const Tensor<Real>& x, Cache* cache, const ConvHook<Real>* hook) const {
        if (hook && !cache) return (*hook)(*this, x);
        return forward(x, cache);
    }

    const ConvGeometry& geometry() const { return geom_; }
    Param<Real>& weight() { return weight_; }
    Param<Real>& bias() { return bias_; }
    const Param<Real>& weight() const { return weight_; }
    const Param<Real>& bias() const { return bias_; }
    void collect(ParamList<Real>& out) {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

  private:
    ConvGeometry geom_;
    Param<Real> weight_;
    Param<Real> bias_;
};

// Group normalization without mean subtraction: each (frame, group) slice is
// divided by its root-mean-square and scaled per channel. Statistics never mix
// frames, so the layer is causal.
template <typename Real>
class MeanFreeGroupNorm {
  public:
    struct Cache {
        Tensor<Real> input;
        std::vector<Real> inv_rms;  // [T * groups]
    };

    MeanFreeGroupNorm() = default;
    MeanFreeGroupNorm(std::string name, int channels, int groups, int stage,
                      double eps = kNormEpsilon);

    static int default_groups(int channels) { return channels < 8 ? channels : 8; }

    Tensor<Real> forward(const Tensor<Real>& x, Cache* cache = nullptr) const;
    Tensor<Real> backward(const Tensor<Real>& dy, const Cache& cache, bool param_grads = true);

    int channels() const { return channels_; }
    int groups() const { return groups_; }
    double epsilon() const { return eps_; }
    Param<Real>& gain() { return gain_; }
    void collect(ParamList<Real>& out) { out.push_back(&gain_); }

  private:
    int channels_ = 0;
    int groups_ = 1;
    double eps_ = kNormEpsilon;
    Param<Real> gain_;
};

template <typename Real>
Tensor<Real> silu(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> silu_backward(const Tensor<Real>& x, const Tensor<Real>& dy);
template <typename Real>
Tensor<Real> leaky_relu(const Tensor<Real>& x, Real slope);
template <typename Real>
Tensor<Real> leaky_relu_backward(const Tensor<Real>& x, const Tensor<Real>& dy, Real slope);

// Conditioning latent frame feeding each of `frames` feature frames:
// frame 0 <- 0, frames r(j-1)+1 .. rj <- j. Throws when the ratio is not integral.
std::vector<int> ada_norm_frame_map(int frames, int cond_frames);

// y = (1 + s) * mfgn(x) + b with [s, b] = proj(cond) broadcast over time.
template <typename Real>
class AdaNorm {
  public:
    struct Cache {
        typename MeanFreeGroupNorm<Real>::Cache norm;
        typename CausalConv3d<Real>::Cache proj;
        Tensor<Real> normed;
        Tensor<Real> scale_shift;
        std::vector<int> frame_map;
    };

    AdaNorm() = default;
    AdaNorm(std::string name, int channels, int cond_channels, int stage, Rng& rng);

    Tensor<Real> forward(const Tensor<Real>& x, const Tensor<Real>& cond,
                         Cache* cache = nullptr) const;
    // Returns dx; writes dcond when non-null.
    Tensor<Real> backward(const Tensor<Real>& dy, const Cache& cache, Tensor<Real>* dcond,
                          bool param_grads = true);

    MeanFreeGroupNorm<Real>& norm() { return norm_; }
    CausalConv3d<Real>& projection() { return proj_; }
    void collect(ParamList<Real>& out) {
        norm_.collect(out);
        proj_.collect(out);
    }

  private:
    int channels_ = 0;
    MeanFreeGroupNorm<Real> norm_;
    CausalConv3d<Real> proj_;
};

// norm -> silu -> conv -> norm -> silu -> conv, plus (projected) skip.
template <typename Real>
class ResBlock {
  public:
    struct Cache {
        typename MeanFreeGroupNorm<Real>::Cache n1, n2;
        Tensor<Real> a1, a2;
        typename CausalConv3d<Real>::Cache c1, c2, skip;
    };

    ResBlock() = default;
    ResBlock(const std::string& name, int in_ch, int out_ch, int kt, int stage, Rng& rng);

    Tensor<Real> forward(const Tensor<Real>& x, Cache* cache = nullptr,
                         const ConvHook<Real>* hook = nullptr) const;
    Tensor<Real> backward(const Tensor<Real>& dy, const Cache& cache, bool param_grads = true);
    void collect(ParamList<Real>& out);

  private:
    MeanFreeGroupNorm<Real> norm1_, norm2_;
    CausalConv3d<Real> conv1_, conv2_;
    std::optional<CausalConv3d<Real>> skip_;
};

// Residual unit followed by a temporal stride-2 causal convolution:
// 1 + 2M frames -> 1 + M frames, spatial size unchanged.
template <typename Real>
class TemporalDownsampleBlock {
  public:
    struct Cache {
        typename ResBlock<Real>::Cache res;
        typename CausalConv3d<Real>::Cache conv;
    };

    TemporalDownsampleBlock() = default;
    TemporalDownsampleBlock(const std::string& name, int channels, int stage, Rng& rng);

    Tensor<Real> forward(const Tensor<Real>& x, Cache* cache = nullptr) const;
    Tensor<Real> backward(const Tensor<Real>& dy, const Cache& cache, bool param_grads = true);
    void collect(ParamList<Real>& out);

  private:
    ResBlock<Real> res_;
    CausalConv3d<Real> conv_;
};

// Nearest duplication (time x2 when temporal, space x spatial_factor), causal
// conv, and the leading padding frame is never produced: T -> 2T - 1.
template <typename Real>
class UpsampleBlock {
  public:
    struct Cache {
        typename CausalConv3d<Real>::Cache conv;
    };

    UpsampleBlock() = default;
    UpsampleBlock(const std::string& name, int in_ch, int out_ch, bool temporal,
                  int spatial_factor, int kt, int stage, Rng& rng);

    Tensor<Real> forward(const Tensor<Real>& x, Cache* cache = nullptr,
                         const ConvHook<Real>* hook = nullptr) const;
    Tensor<Real> backward(const Tensor<Real>& dy, const Cache& cache, bool param_grads = true);
    void collect(ParamList<Real>& out) { conv_.collect(out); }

    int time_factor() const { return temporal_ ? 2 : 1; }
    int spatial_factor() const { return spatial_factor_; }

  private:
    bool temporal_ = true;
    int spatial_factor_ = 1;
    CausalConv3d<Real> conv_;
};

// Output frame count of an efficient temporal upsample.
inline int efficient_upsample_frames(int frames) { return 2 * frames - 1; }

// Replicates frame 0 k_t - 1 times in front of the sequence.
template <typename Real>
Tensor<Real> causal_pad(const Tensor<Real>& x, int kt);

}  // namespace vtok
