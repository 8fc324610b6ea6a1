#include "vtok/discriminator.hpp"

namespace vtok {

namespace {

constexpr Real kSlope = 0.2f;

}  // namespace

Discriminator::Discriminator(int in_channels, std::vector<int> widths, std::uint64_t seed)
    : in_channels_(in_channels), widths_(std::move(widths)) {
    if (widths_.empty()) throw ConfigError("discriminator needs at least one width");
    Rng rng(seed);
    int c = in_channels_;
    for (std::size_t i = 0; i <= widths_.size(); ++i) {
        ConvGeometry g;
        g.in_channels = c;
        g.out_channels = i < widths_.size() ? widths_[i] : 1;
        g.kt = 3;
        g.kh = g.kw = 3;
        g.sh = g.sw = i < widths_.size() ? 2 : 1;
        convs_.emplace_back("disc.conv" + std::to_string(i), g, 0, rng);
        c = g.out_channels;
    }
}

Tensor<Real> Discriminator::forward(const Tensor<Real>& x, Cache* cache) const {
    if (cache) {
        cache->conv.assign(convs_.size(), {});
        cache->pre_act.assign(convs_.size(), {});
    }
    Tensor<Real> h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].forward(h, cache ? &cache->conv[i] : nullptr);
        if (i + 1 < convs_.size()) {
            if (cache) cache->pre_act[i] = h;
            h = leaky_relu(h, kSlope);
        }
    }
    return h;
}

Tensor<Real> Discriminator::backward(const Tensor<Real>& dscore, const Cache& cache, bool param_grads) {
    Tensor<Real> g = dscore;
    for (std::size_t i = convs_.size(); i-- > 0;) {
        if (i + 1 < convs_.size()) g = leaky_relu_backward(cache.pre_act[i], g, kSlope);
        g = convs_[i].backward(g, cache.conv[i], true, param_grads);
    }
    return g;
}

ParamList<Real> Discriminator::parameters() {
    ParamList<Real> out;
    for (auto& c : convs_) c.collect(out);
    return out;
}

std::vector<const Param<Real>*> Discriminator::parameters() const {
    auto ps = const_cast<Discriminator*>(this)->parameters();
    return {ps.begin(), ps.end()};
}

}  // namespace vtok
