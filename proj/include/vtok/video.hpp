#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vtok/tensor.hpp"

namespace vtok {

class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class TruncationError : public FormatError {
  public:
    using FormatError::FormatError;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Pixel video in [-1, 1], frames [T, C, H, W].
struct VideoClip {
    Tensor<float> frames;
    int fps = 24;

    int length() const { return frames.frames(); }
};

// NVT1 files: "NVT1", little-endian uint32 T, C, H, W, then T*C*H*W uint8.
VideoClip load_clip(const std::filesystem::path& path);
void save_clip(const VideoClip& clip, const std::filesystem::path& path);

// Storage quantization: [-1, 1] -> [0, 255] with round-half-away-from-zero.
std::uint8_t quantize_pixel(float v);
inline float dequantize_pixel(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

// Keeps frames 0, factor, 2*factor, ...; throws DivisibilityError when
// (T - 1) is not a multiple of factor.
VideoClip subsample_frames(const VideoClip& clip, int factor);

struct ChunkPlan {
    int total_frames = 0;
    int chunk_length = 17;
    int overlap = 4;
    std::vector<std::pair<int, int>> spans;  // [start, end)
};

// Spans of chunk_length frames stepping by chunk_length - overlap; the last
// span is clamped to end at T. T <= chunk_length gives the single span [0, T).
ChunkPlan plan_chunks(int total_frames, int chunk_length = 17, int overlap = 4);

struct SynthSpec {
    int num_clips = 16;
    int frames_per_clip = 17;
    int height = 64;
    int width = 64;
    int channels = 3;
    int max_shapes = 3;
    float min_velocity = 0.0f;  // pixels per frame
    float max_velocity = 3.0f;
    std::uint64_t seed = 0;

    void validate() const;
};

// One clip of bouncing antialiased discs and boxes. Deterministic in
// (spec, index): every clip draws from its own seed + index stream.
VideoClip synthesize_clip(const SynthSpec& spec, int index);

// Writes clip_XXXXX.nvt files plus manifest.txt into dir; returns clip paths.
std::vector<std::filesystem::path> generate_synthetic(const SynthSpec& spec,
                                                      const std::filesystem::path& dir);

// Corpus directory with a manifest of relative clip paths.
struct Corpus {
    std::filesystem::path root;
    std::vector<std::string> entries;

    static Corpus open(const std::filesystem::path& dir);
    std::size_t size() const { return entries.size(); }
    std::filesystem::path path(std::size_t i) const { return root / entries.at(i); }
    VideoClip load(std::size_t i) const { return load_clip(path(i)); }
    // Deterministic train / held-out split: the last `held_out` entries.
    std::pair<Corpus, Corpus> split(std::size_t held_out) const;
};

}  // namespace vtok
