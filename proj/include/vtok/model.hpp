#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vtok/layers.hpp"

namespace vtok {

using Real = float;

// Compression stage descriptor plus the architecture shared by all stages.
struct StagePlan {
    int k = 4;                          // temporal compression, 4 / 8 / 16
    std::vector<int> widths{32, 64, 128};  // channels per spatial level
    int res_units = 2;                  // residual units per level
    int latent_channels = 8;
    bool mixing = true;                 // key-frame skip + AdaNorm on growth steps

    int levels() const { return static_cast<int>(widths.size()); }
    int spatial_compression() const { return 1 << (levels() - 1); }
    int top_width() const { return widths.back(); }
    // Number of growth steps on top of the 4x trunk.
    int growth_steps() const { return k == 4 ? 0 : (k == 8 ? 1 : 2); }
    void validate() const;
    bool same_architecture(const StagePlan& o) const {
        return widths == o.widths && res_units == o.res_units &&
               latent_channels == o.latent_channels;
    }
};

struct LatentGrid {
    Tensor<Real> mean;    // [T_z, C_z, H/s, W/s]
    Tensor<Real> logvar;  // same shape, clamped to [kLogvarMin, kLogvarMax]
};

inline constexpr Real kLogvarMin = -30.0f;
inline constexpr Real kLogvarMax = 20.0f;

// Splits 2*C_z bottleneck channels into (mean, clamped logvar).
LatentGrid split_moments(const Tensor<Real>& moments);

// mean + exp(logvar / 2) * eta, eta ~ N(0, 1) drawn from rng in element order.
Tensor<Real> sample_latent(const LatentGrid& grid, Rng& rng, Tensor<Real>* eta_out = nullptr);

// conv_in -> [res units, spatial(+temporal) stride-2 conv] per level -> mid
// res -> norm -> silu. Temporal encoders compress time by 2^(levels-1).
class Encoder {
  public:
    struct Cache {
        CausalConv3d<Real>::Cache conv_in;
        std::vector<ResBlock<Real>::Cache> res;
        std::vector<CausalConv3d<Real>::Cache> down;
        ResBlock<Real>::Cache mid;
        MeanFreeGroupNorm<Real>::Cache norm_out;
        Tensor<Real> act_in;
    };

    Encoder() = default;
    Encoder(const std::string& name, const StagePlan& plan, bool temporal, int stage, Rng& rng);

    Tensor<Real> forward(const Tensor<Real>& x, Cache* cache = nullptr) const;
    // Parameter gradients only; the encoder input is data.
    void backward(const Tensor<Real>& dy, const Cache& cache, bool param_grads = true);
    void collect(ParamList<Real>& out);
    int out_channels() const { return out_channels_; }

  private:
    int res_units_ = 0;
    int out_channels_ = 0;
    CausalConv3d<Real> conv_in_;
    std::vector<ResBlock<Real>> res_;
    std::vector<CausalConv3d<Real>> down_;
    ResBlock<Real> mid_;
    MeanFreeGroupNorm<Real> norm_out_;
};

// Bottleneck upsampling block added to the decoder by each growth step.
struct DecoderGrowth {
    int k = 8;
    UpsampleBlock<Real> up;
    ResBlock<Real> res;
};

// conv_in -> growth blocks (newest first) -> mid res -> [res units, upsample]
// per level -> norm -> silu -> conv_out.
class Decoder {
  public:
    struct Cache {
        CausalConv3d<Real>::Cache conv_in;
        std::vector<UpsampleBlock<Real>::Cache> growth_up;
        std::vector<ResBlock<Real>::Cache> growth_res;
        ResBlock<Real>::Cache mid;
        std::vector<ResBlock<Real>::Cache> res;
        std::vector<UpsampleBlock<Real>::Cache> up;
        MeanFreeGroupNorm<Real>::Cache norm_out;
        Tensor<Real> act_in;
        CausalConv3d<Real>::Cache conv_out;
    };

    Decoder() = default;
    Decoder(const std::string& name, const StagePlan& plan, bool temporal, int stage, Rng& rng);

    Tensor<Real> forward(const Tensor<Real>& z, Cache* cache = nullptr,
                         const ConvHook<Real>* hook = nullptr) const;
    Tensor<Real> backward(const Tensor<Real>& dy, const Cache& cache, bool param_grads = true);
    void collect(ParamList<Real>& out);

    void add_growth(int k, int stage, Rng& rng);
    const std::vector<DecoderGrowth>& growth() const { return growth_; }

  private:
    std::string name_;
    int res_units_ = 0;
    int top_width_ = 0;
    int kt_ = 3;
    CausalConv3d<Real> conv_in_;
    std::vector<DecoderGrowth> growth_;  // newest first
    ResBlock<Real> mid_;
    std::vector<ResBlock<Real>> res_;        // ordered top level -> bottom level
    std::vector<UpsampleBlock<Real>> up_;
    MeanFreeGroupNorm<Real> norm_out_;
    CausalConv3d<Real> conv_out_;
};

// Single-frame autoencoder trained first; its encoder becomes the frozen
// first-frame path of every video model.
class ImageAutoencoder {
  public:
    struct Cache {
        Encoder::Cache enc;
        CausalConv3d<Real>::Cache bottleneck;
        Decoder::Cache dec;
        Tensor<Real> eta;
        Tensor<Real> logvar_raw;
    };

    ImageAutoencoder() = default;
    static ImageAutoencoder build(const StagePlan& plan, std::uint64_t seed);

    const StagePlan& plan() const { return plan_; }
    LatentGrid encode(const Tensor<Real>& image) const;
    Tensor<Real> decode(const Tensor<Real>& z) const;
    ParamList<Real> parameters();
    std::vector<const Param<Real>*> parameters() const;

    // Training pass on a batch of single frames [B, C, H, W] (B used as T).
    Tensor<Real> forward_train(const Tensor<Real>& images, Rng& rng, LatentGrid& grid, Cache& cache) const;
    void backward_train(const Tensor<Real>& d_recon, const Tensor<Real>& d_mean,
                        const Tensor<Real>& d_logvar, const Cache& cache);

    Encoder& encoder() { return encoder_; }

  private:
    StagePlan plan_;
    Encoder encoder_;
    CausalConv3d<Real> bottleneck_;
    Decoder decoder_;
};

struct GrowthStage {
    int k = 8;
    bool mixing = true;
    std::optional<AdaNorm<Real>> ada;
    TemporalDownsampleBlock<Real> down;
};

class TokenizerModel {
  public:
    // Pre-bottleneck features of one encoder level, cached for backprop.
    struct FeatureCache {
        int level = 0;
        Encoder::Cache trunk;
        std::unique_ptr<FeatureCache> key;
        std::unique_ptr<FeatureCache> star;
        AdaNorm<Real>::Cache ada;
        TemporalDownsampleBlock<Real>::Cache down;
    };

    struct TrainCache {
        FeatureCache features;
        CausalConv3d<Real>::Cache bottleneck;
        Decoder::Cache decoder;
        Tensor<Real> eta;
        Tensor<Real> logvar_raw;
    };

    TokenizerModel() = default;
    static TokenizerModel build(const StagePlan& plan, std::uint64_t seed);
    // Copies every stage-k parameter, freezes it, and adds the next growth
    // step with fresh parameters drawn from seed.
    static TokenizerModel grow(const TokenizerModel& parent, const StagePlan& next, std::uint64_t seed);

    const StagePlan& plan() const { return plan_; }
    int k() const { return plan_.k; }
    int level() const { return static_cast<int>(growth_.size()); }
    const std::vector<GrowthStage>& growth() const { return growth_; }

    LatentGrid encode(const Tensor<Real>& video) const;
    // Clamped to [-1, 1].
    Tensor<Real> decode(const Tensor<Real>& z, const ConvHook<Real>* hook = nullptr) const;
    Tensor<Real> decode_raw(const Tensor<Real>& z, const ConvHook<Real>* hook = nullptr) const;

    // Pre-bottleneck features of the given level (0 = 4x trunk).
    Tensor<Real> features(int level, const Tensor<Real>& video, FeatureCache* cache = nullptr) const;
    // Key-frame embedding of the newest growth step: level-1 features on the 2x-subsampled video.
    Tensor<Real> key_embedding(const Tensor<Real>& video) const;

    Tensor<Real> forward_train(const Tensor<Real>& video, Rng& rng, LatentGrid& grid,
                               TrainCache& cache) const;
    void backward_train(const Tensor<Real>& d_recon, const Tensor<Real>& d_mean,
                        const Tensor<Real>& d_logvar, TrainCache& cache);

    // Replaces the first-frame image encoder with a trained one and freezes it.
    void adopt_image_encoder(const ImageAutoencoder& image_model);

    ParamList<Real> parameters();
    std::vector<const Param<Real>*> parameters() const;
    std::size_t parameter_count() const;
    const Param<Real>* find(const std::string& name) const;

    // Output frame count of decode for T_z latent frames.
    int decoded_frames(int latent_frames) const { return 1 + plan_.k * (latent_frames - 1); }
    int latent_frames(int frames) const;

  private:
    bool level_trainable(int level) const;
    void features_backward(int level, const Tensor<Real>& dy, FeatureCache& cache);

    StagePlan plan_;
    Encoder image_encoder_;
    Encoder trunk_;
    std::vector<GrowthStage> growth_;
    std::vector<CausalConv3d<Real>> bottleneck_;  // one per level
    Decoder decoder_;
};

// Frames kept: 0, factor, 2*factor, ...
template <typename R>
Tensor<R> subsample_time(const Tensor<R>& video, int factor);

}  // namespace vtok
