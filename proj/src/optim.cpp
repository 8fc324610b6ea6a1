#include "vtok/optim.hpp"

#include <cmath>

namespace vtok {

double grad_norm(const ParamList<Real>& params) {
    double sq = 0;
    for (const auto* p : params) {
        if (p->frozen || p->grad.numel() != p->value.numel()) continue;
        for (std::size_t i = 0; i < p->grad.numel(); ++i) sq += double(p->grad[i]) * p->grad[i];
    }
    return std::sqrt(sq);
}

void zero_grads(const ParamList<Real>& params) {
    for (auto* p : params)
        if (!p->frozen) p->zero_grad();
}

AdamW::AdamW(OptimConfig cfg, const ParamList<Real>& params) : cfg_(cfg) {
    for (const auto* p : params)
        if (!p->frozen) slots_.push_back({p->name, Tensor<Real>(p->value.shape()), Tensor<Real>(p->value.shape())});
}

AdamW::Slot& AdamW::slot(const Param<Real>& p) {
    for (auto& s : slots_)
        if (s.name == p.name) return s;
    slots_.push_back({p.name, Tensor<Real>(p.value.shape()), Tensor<Real>(p.value.shape())});
    return slots_.back();
}

double AdamW::step(const ParamList<Real>& params) {
    const double norm = grad_norm(params);
    if (!std::isfinite(norm)) throw std::runtime_error("non-finite gradient norm");
    const double scale = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (auto* p : params) {
        if (p->frozen || p->grad.numel() != p->value.numel()) continue;
        Slot& s = slot(*p);
        Real* w = p->value.data();
        const Real* g = p->grad.data();
        Real* m = s.m.data();
        Real* v = s.v.data();
        const std::size_t n = p->value.numel();
        for (std::size_t i = 0; i < n; ++i) {
            const double gi = g[i] * scale;
            const double mi = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * gi;
            const double vi = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * gi * gi;
            m[i] = static_cast<Real>(mi);
            v[i] = static_cast<Real>(vi);
            const double upd = (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
            w[i] = static_cast<Real>(w[i] - cfg_.lr * (upd + cfg_.weight_decay * w[i]));
        }
    }
    return norm;
}

nlohmann::json AdamW::state_json() const {
    return {{"t", t_},
            {"lr", cfg_.lr},
            {"beta1", cfg_.beta1},
            {"beta2", cfg_.beta2},
            {"eps", cfg_.eps},
            {"weight_decay", cfg_.weight_decay},
            {"clip_norm", cfg_.clip_norm}};
}

void AdamW::export_state(const std::string& prefix, std::vector<ArchiveTensor>& out) const {
    for (const auto& s : slots_) {
        out.push_back({prefix + "m." + s.name, s.m, 0, false});
        out.push_back({prefix + "v." + s.name, s.v, 0, false});
    }
}

void AdamW::import_state(const std::string& prefix, const nlohmann::json& j,
                         const std::vector<ArchiveTensor>& tensors) {
    t_ = j.value("t", std::int64_t{0});
    for (auto& s : slots_) {
        for (const auto& t : tensors) {
            if (t.name == prefix + "m." + s.name && t.value.shape() == s.m.shape()) s.m = t.value;
            if (t.name == prefix + "v." + s.name && t.value.shape() == s.v.shape()) s.v = t.value;
        }
    }
}

}  // namespace vtok
