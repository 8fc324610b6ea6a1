#include "vtok/losses.hpp"

#include <cmath>

#include "vtok/discriminator.hpp"

namespace vtok {

void LossWeights::validate(int k) const {
    if (k != 4 && gan > 0)
        throw ConfigError("GAN weight must be 0 on grown stages (k=" + std::to_string(k) + ")");
    if (rec < 0 || kl < 0 || gan < 0 || perceptual < 0) throw ConfigError("loss weights must be non-negative");
}

double rec_loss(const Tensor<Real>& x, const Tensor<Real>& x_hat, Tensor<Real>* grad) {
    require_same_shape(x, x_hat, "rec_loss");
    const std::size_t n = x.numel();
    if (n == 0) throw ShapeError("rec_loss on empty tensors");
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += std::abs(static_cast<double>(x_hat[i]) - x[i]);
    if (grad) {
        *grad = Tensor<Real>(x.shape());
        const Real s = static_cast<Real>(1.0 / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const Real d = x_hat[i] - x[i];
            (*grad)[i] = d > 0 ? s : (d < 0 ? -s : Real(0));
        }
    }
    return sum / static_cast<double>(n);
}

double kl_loss(const LatentGrid& grid, Tensor<Real>* d_mean, Tensor<Real>* d_logvar) {
    require_same_shape(grid.mean, grid.logvar, "kl_loss");
    const std::size_t n = grid.mean.numel();
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double m = grid.mean[i], lv = grid.logvar[i];
        sum += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
    }
    const double inv = 1.0 / static_cast<double>(n);
    if (d_mean) {
        *d_mean = Tensor<Real>(grid.mean.shape());
        for (std::size_t i = 0; i < n; ++i) (*d_mean)[i] = static_cast<Real>(grid.mean[i] * inv);
    }
    if (d_logvar) {
        *d_logvar = Tensor<Real>(grid.logvar.shape());
        for (std::size_t i = 0; i < n; ++i)
            (*d_logvar)[i] = static_cast<Real>(0.5 * (std::exp(static_cast<double>(grid.logvar[i])) - 1.0) * inv);
    }
    return sum * inv;
}

namespace {

double mean_relu(const Tensor<Real>& s, double sign) {
    double sum = 0;
    for (std::size_t i = 0; i < s.numel(); ++i) sum += std::max(0.0, 1.0 + sign * s[i]);
    return sum / static_cast<double>(s.numel());
}

}  // namespace

GanLosses hinge_losses(const Tensor<Real>& real_scores, const Tensor<Real>& fake_scores) {
    GanLosses out;
    out.d_loss = mean_relu(real_scores, -1.0) + mean_relu(fake_scores, 1.0);
    double sum = 0;
    for (std::size_t i = 0; i < fake_scores.numel(); ++i) sum += fake_scores[i];
    out.g_loss = -sum / static_cast<double>(fake_scores.numel());
    return out;
}

Tensor<Real> hinge_generator_grad(const Tensor<Real>& fake_scores) {
    Tensor<Real> g(fake_scores.shape());
    const Real v = static_cast<Real>(-1.0 / static_cast<double>(fake_scores.numel()));
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] = v;
    return g;
}

void hinge_discriminator_grads(const Tensor<Real>& real_scores, const Tensor<Real>& fake_scores,
                               Tensor<Real>& d_real, Tensor<Real>& d_fake) {
    d_real = Tensor<Real>(real_scores.shape());
    d_fake = Tensor<Real>(fake_scores.shape());
    const Real sr = static_cast<Real>(1.0 / static_cast<double>(real_scores.numel()));
    const Real sf = static_cast<Real>(1.0 / static_cast<double>(fake_scores.numel()));
    for (std::size_t i = 0; i < d_real.numel(); ++i) d_real[i] = real_scores[i] < 1 ? -sr : Real(0);
    for (std::size_t i = 0; i < d_fake.numel(); ++i) d_fake[i] = fake_scores[i] > -1 ? sf : Real(0);
}

GanLosses gan_losses(const Discriminator& d, const Tensor<Real>& x, const Tensor<Real>& x_hat) {
    require_same_shape(x, x_hat, "gan_losses");
    return hinge_losses(d.forward(x), d.forward(x_hat));
}

double combine_losses(int k, const LossWeights& w, LossTerms& terms) {
    w.validate(k);
    terms.total = w.rec * terms.rec + w.kl * terms.kl + w.perceptual * terms.perceptual;
    if (w.gan > 0) terms.total += w.gan * terms.gan;
    return terms.total;
}

LossTerms total_loss(int k, const LossWeights& w, const LatentGrid& grid, const Tensor<Real>& x,
                     const Tensor<Real>& x_hat, const Discriminator* d, const PerceptualLoss* perceptual) {
    w.validate(k);
    LossTerms t;
    t.rec = rec_loss(x, x_hat);
    t.kl = kl_loss(grid);
    if (w.gan > 0 && d) t.gan = gan_losses(*d, x, x_hat).g_loss;
    if (w.perceptual > 0 && perceptual) t.perceptual = (*perceptual)(x, x_hat, nullptr);
    combine_losses(k, w, t);
    return t;
}

}  // namespace vtok
