#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vtok/model.hpp"
#include "vtok/tiling.hpp"
#include "vtok/video.hpp"

namespace vtok {

inline constexpr double kPsnrCap = 99.0;

// 10 log10(peak^2 / MSE), capped at 99 dB for identical inputs.
double psnr(const Tensor<Real>& x, const Tensor<Real>& x_hat, double peak = 2.0);
// PSNR after both tensors are stored as 8-bit pixels (peak 255).
double psnr_u8(const Tensor<Real>& x, const Tensor<Real>& x_hat);

struct BudgetReport {
    int frames = 0;
    int k = 4;
    int chunk = 17;
    int chunks = 0;
    int latents = 0;
    int latents_4x = 0;
    double ratio_vs_4x = 1.0;  // latents / latents at 4x
};

// Latent frames for non-overlapping chunks of `chunk` frames:
// chunks * (1 + (chunk - 1) / k). Throws DivisibilityError when chunk is not
// 1 mod k or frames is not a whole number of chunks.
BudgetReport latent_budget(int frames, int k, int chunk = 17);

// Reconstructs one chunk and reports the latent shape it used.
class ChunkCodec {
  public:
    virtual ~ChunkCodec() = default;
    virtual int k() const = 0;
    virtual Tensor<Real> reconstruct(const Tensor<Real>& chunk, Shape* latent_shape) const = 0;
};

// Mean-mode encode then decode; tile > 0 switches to tiled decoding.
class ModelCodec : public ChunkCodec {
  public:
    explicit ModelCodec(const TokenizerModel& model, int tile = 0, int overlap = 8)
        : model_(model), tile_(tile), overlap_(overlap) {}
    int k() const override { return model_.k(); }
    Tensor<Real> reconstruct(const Tensor<Real>& chunk, Shape* latent_shape) const override;

  private:
    const TokenizerModel& model_;
    int tile_;
    int overlap_;
};

struct EvalOptions {
    int chunk_frames = 17;
    int chunk_overlap = 4;
    int factor = 1;             // temporal subsampling applied before reconstruction
    std::size_t max_clips = 0;  // 0 = whole corpus
    bool timing = true;         // false writes 0 seconds for byte-stable reports
    int tile = 0;
    int overlap = 8;
    std::string config_fingerprint;
    std::string checkpoint_hash;
};

struct Reconstruction {
    Tensor<Real> video;
    ChunkPlan plan;
    std::vector<Tensor<Real>> chunks;
    int latents = 0;
    Shape latent_shape;  // of the first chunk
};

// Chunked reconstruction with temporal stitching. Throws DivisibilityError
// when a chunk length is incompatible with the codec's k.
Reconstruction reconstruct_video(const ChunkCodec& codec, const Tensor<Real>& video, int chunk_frames,
                                 int chunk_overlap);

struct ClipResult {
    std::string clip_path;
    int frames = 0;
    int latents = 0;
    double psnr_db = 0;
    double seconds = 0;
};

struct EvalReport {
    std::vector<ClipResult> clips;
    double mean_psnr = 0;
    double mean_psnr_u8 = 0;
    std::string latent_shape;
    std::string fingerprint;
    int k = 4;
    int factor = 1;
    int skipped = 0;

    std::string csv() const;
    static EvalReport parse_csv(const std::string& text);
    std::string summary() const;  // JSON text
    void write(const std::filesystem::path& csv_path, const std::filesystem::path& summary_path) const;
};

EvalReport eval_reconstruction(const ChunkCodec& codec, const Corpus& corpus, const EvalOptions& options);
EvalReport eval_reconstruction(const TokenizerModel& model, const Corpus& corpus, const EvalOptions& options);

// Reconstructs subsample(v, factor) with a 4x model, scored against the
// subsampled ground truth. factor must be 1, 2 or 4.
EvalReport eval_subsampled_baseline(const TokenizerModel& model_4x, const Corpus& corpus, int factor,
                                    EvalOptions options);

// Mean-mode PSNR of whole-clip reconstruction (no chunking); used for
// held-out monitoring during training.
double reconstruction_psnr(const TokenizerModel& model, const Tensor<Real>& clip);

// Longest prefix of 1 + k * N frames.
Tensor<Real> crop_to_stage(const Tensor<Real>& video, int k);

}  // namespace vtok
