#pragma once

#include <json.hpp>

#include "vtok/checkpoint.hpp"
#include "vtok/layers.hpp"

namespace vtok {

struct OptimConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    double clip_norm = 1.0;  // <= 0 disables clipping
};

// Adam moments with decoupled weight decay. Frozen parameters are never
// touched; their gradients are ignored.
class AdamW {
  public:
    AdamW() = default;
    AdamW(OptimConfig cfg, const ParamList<Real>& params);

    // Returns the pre-clip global gradient norm over trainable parameters.
    double step(const ParamList<Real>& params);
    std::int64_t steps() const { return t_; }
    const OptimConfig& config() const { return cfg_; }

    nlohmann::json state_json() const;
    // Moments as archive tensors under prefix + param name.
    void export_state(const std::string& prefix, std::vector<ArchiveTensor>& out) const;
    void import_state(const std::string& prefix, const nlohmann::json& j, const std::vector<ArchiveTensor>& tensors);

  private:
    struct Slot {
        std::string name;
        Tensor<Real> m, v;
    };
    Slot& slot(const Param<Real>& p);

    OptimConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<Slot> slots_;
};

double grad_norm(const ParamList<Real>& params);
void zero_grads(const ParamList<Real>& params);

}  // namespace vtok
