#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtok/losses.hpp"
#include "vtok/model.hpp"
#include "vtok/optim.hpp"
#include "vtok/video.hpp"

namespace vtok {

struct DataConfig {
    std::string corpus = "data/synthetic";
    int held_out = 64;
    SynthSpec synth;
};

struct StageConfig {
    int k = 4;
    std::int64_t steps = 20000;
    std::string parent;            // checkpoint to grow from / resume
    std::string image_checkpoint;  // frozen first-frame encoder
    std::string output = "checkpoint.vtck";
    std::int64_t image_steps = 2000;
    std::vector<std::int64_t> budgets{20000, 5000, 5000};  // pipeline 4x / 8x / 16x
    bool ablation = false;         // growth without key-frame skip and AdaNorm
};

struct OptimSection {
    OptimConfig generator;
    OptimConfig discriminator;
    int batch = 8;
};

struct LossSection {
    double rec = 1.0;
    double kl = 1e-12;
    std::optional<double> gan;  // unset: 0.1 at 4x, 0 on grown stages
    double perceptual = 0.0;
    std::vector<int> disc_widths{32, 64};

    LossWeights weights(int k) const;
};

struct LoggingSection {
    std::string dir = "runs";
    int log_every = 10;
    int eval_every = 500;
    int eval_clips = 16;
    int save_every = 1000;
};

struct InferenceSection {
    int tile = 64;
    int overlap = 8;
    int chunk_frames = 17;
    int chunk_overlap = 4;
};

struct Config {
    std::uint64_t seed = 0;
    DataConfig data;
    StagePlan model;
    StageConfig stage;
    OptimSection optim;
    LossSection losses;
    LoggingSection logging;
    InferenceSection inference;

    static Config load(const std::filesystem::path& path);
    static Config from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    // Hash of the canonical JSON form.
    std::string fingerprint() const;
    // Stage plan for compression k with this config's architecture.
    StagePlan plan(int k, bool mixing = true) const;
};

}  // namespace vtok
