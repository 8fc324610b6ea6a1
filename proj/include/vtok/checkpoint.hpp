#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtok/hash.hpp"

#include "vtok/model.hpp"

namespace vtok {

// Named-tensor archive: "VTCK", uint32 version, uint64 header length, a JSON
// header, then raw little-endian float32 payloads in header order. Each header
// tensor entry records name, dtype, shape, byte offset, lineage stage and the
// frozen flag.
struct ArchiveTensor {
    std::string name;
    Tensor<float> value;
    int stage = 0;
    bool frozen = false;
};

struct Archive {
    nlohmann::json header;  // everything except the tensor table
    std::vector<ArchiveTensor> tensors;

    const ArchiveTensor* find(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

nlohmann::json plan_to_json(const StagePlan& plan);
StagePlan plan_from_json(const nlohmann::json& j);

// Training-state extras carried next to the model weights.
struct CheckpointInfo {
    std::string kind = "tokenizer";  // "tokenizer" or "image"
    std::string parent_hash;         // empty for a root checkpoint
    std::int64_t step = 0;
    std::vector<bool> growth_mixing;
    nlohmann::json trainer;          // optimizer step, rng state, config
    std::vector<ArchiveTensor> extra_tensors;  // optimizer moments etc.
};

void save_tokenizer(const std::filesystem::path& path, const TokenizerModel& model,
                    const CheckpointInfo& info = {});
TokenizerModel load_tokenizer(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

void save_image_model(const std::filesystem::path& path, const ImageAutoencoder& model,
                      const CheckpointInfo& info = {});
ImageAutoencoder load_image_model(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

// Per-step mixing flags of a tokenizer's growth stages.
std::vector<bool> growth_mixing(const TokenizerModel& model);

// Hash over the names and bytes of every parameter matching the filter.
template <typename Filter>
std::string parameter_hash(const std::vector<const Param<Real>*>& params, Filter&& keep) {
    Fnv1a h;
    for (const auto* p : params) {
        if (!keep(*p)) continue;
        h.update(p->name);
        h.update(p->value.data(), p->value.numel() * sizeof(Real));
    }
    return h.hex();
}

}  // namespace vtok
