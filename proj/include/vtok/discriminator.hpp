#pragma once

#include "vtok/layers.hpp"
#include "vtok/model.hpp"

namespace vtok {

// Patch critic: stride-2 3-D convs with leaky ReLU and a 1-channel score map.
class Discriminator {
  public:
    struct Cache {
        std::vector<CausalConv3d<Real>::Cache> conv;
        std::vector<Tensor<Real>> pre_act;
    };

    Discriminator() = default;
    Discriminator(int in_channels, std::vector<int> widths, std::uint64_t seed);

    Tensor<Real> forward(const Tensor<Real>& x, Cache* cache = nullptr) const;
    // Returns d x; parameter gradients accumulate only when param_grads.
    Tensor<Real> backward(const Tensor<Real>& dscore, const Cache& cache, bool param_grads);

    ParamList<Real> parameters();
    std::vector<const Param<Real>*> parameters() const;
    int in_channels() const { return in_channels_; }
    const std::vector<int>& widths() const { return widths_; }

  private:
    int in_channels_ = 3;
    std::vector<int> widths_;
    std::vector<CausalConv3d<Real>> convs_;
};

}  // namespace vtok
