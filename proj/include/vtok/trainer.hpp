#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtok/checkpoint.hpp"
#include "vtok/config.hpp"
#include "vtok/discriminator.hpp"
#include "vtok/losses.hpp"
#include "vtok/optim.hpp"
#include "vtok/video.hpp"

namespace vtok {

class TrainingError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct TrainOptions {
    std::int64_t steps = 0;  // target step count (resumed runs continue up to it)
    int batch = 8;
    OptimConfig optim;
    OptimConfig disc_optim;
    LossWeights weights;
    std::vector<int> disc_widths{32, 64};
    std::uint64_t seed = 0;

    int log_every = 10;
    int eval_every = 500;  // 0 = only at the end
    int eval_clips = 16;
    int save_every = 0;    // 0 = only at the end
    std::filesystem::path run_dir;     // metrics.csv + train.log; empty disables
    std::filesystem::path checkpoint;  // output checkpoint; empty disables
    std::string parent_hash;
    bool verify_frozen = true;
    const PerceptualLoss* perceptual = nullptr;
    std::ostream* console = nullptr;
    // Called after every optimizer step.
    std::function<void(std::int64_t)> on_step;
};

struct StepRecord {
    std::int64_t step = 0;
    LossTerms terms;
    double d_loss = 0;
    double grad_norm = 0;
    double psnr = -1;  // < 0 when not evaluated at this step
};

struct TrainResult {
    std::vector<StepRecord> history;
    double final_psnr = -1;
    std::int64_t steps = 0;
    std::string frozen_hash;  // frozen parameter set, unchanged through training
};

// Trains the trainable parameters of a tokenizer stage. `resume` carries the
// trainer state of a checkpoint written by an earlier run.
TrainResult train_stage(TokenizerModel& model, const Corpus& train, const Corpus& held_out,
                        const TrainOptions& options, const CheckpointInfo* resume = nullptr);

// Frame-level autoencoder stage (L1 + KL on single frames).
TrainResult train_image(ImageAutoencoder& model, const Corpus& train, const Corpus& held_out,
                        const TrainOptions& options, const CheckpointInfo* resume = nullptr);

std::string frozen_hash(const TokenizerModel& model);

TrainOptions options_from_config(const Config& cfg, int k, std::int64_t steps);

struct PipelinePaths {
    std::filesystem::path image, k4, k8, k16;
};

PipelinePaths pipeline_paths(const std::filesystem::path& dir, bool ablation);

// Image stage, 4x base, then two growth steps, each grown from the previous
// checkpoint. Completed stages found on disk are skipped; partially trained
// ones resume.
PipelinePaths run_pipeline(const Config& cfg, const std::filesystem::path& dir, std::ostream* console = nullptr);

}  // namespace vtok
