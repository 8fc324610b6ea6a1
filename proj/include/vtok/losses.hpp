#pragma once

#include "vtok/model.hpp"

namespace vtok {

class Discriminator;

struct LossWeights {
    double rec = 1.0;
    double kl = 1e-12;
    double gan = 0.1;
    double perceptual = 0.0;

    // 0.1 hinge weight at 4x; grown stages carry no adversarial term.
    static LossWeights for_stage(int k) {
        LossWeights w;
        w.gan = k == 4 ? 0.1 : 0.0;
        return w;
    }
    void validate(int k) const;
};

// Mean absolute error. grad (optional) receives d loss / d x_hat.
double rec_loss(const Tensor<Real>& x, const Tensor<Real>& x_hat, Tensor<Real>* grad = nullptr);

// Mean of 0.5 (mu^2 + e^logvar - 1 - logvar); gradients are optional.
double kl_loss(const LatentGrid& grid, Tensor<Real>* d_mean = nullptr, Tensor<Real>* d_logvar = nullptr);

struct GanLosses {
    double d_loss = 0;
    double g_loss = 0;
};

// Hinge losses from critic scores.
GanLosses hinge_losses(const Tensor<Real>& real_scores, const Tensor<Real>& fake_scores);
// d g_loss / d fake_scores.
Tensor<Real> hinge_generator_grad(const Tensor<Real>& fake_scores);
// d d_loss / d real_scores and d fake_scores.
void hinge_discriminator_grads(const Tensor<Real>& real_scores, const Tensor<Real>& fake_scores,
                               Tensor<Real>& d_real, Tensor<Real>& d_fake);

GanLosses gan_losses(const Discriminator& d, const Tensor<Real>& x, const Tensor<Real>& x_hat);

// Optional feature-space term. Default training leaves it unset.
struct PerceptualLoss {
    virtual ~PerceptualLoss() = default;
    virtual double operator()(const Tensor<Real>& x, const Tensor<Real>& x_hat, Tensor<Real>* grad) const = 0;
};

struct LossTerms {
    double rec = 0;
    double kl = 0;
    double gan = 0;  // generator term
    double perceptual = 0;
    double total = 0;
};

// Weighted sum of precomputed sub-losses; throws ConfigError when a grown
// stage carries a GAN weight.
double combine_losses(int k, const LossWeights& w, LossTerms& terms);

LossTerms total_loss(int k, const LossWeights& w, const LatentGrid& grid, const Tensor<Real>& x,
                     const Tensor<Real>& x_hat, const Discriminator* d,
                     const PerceptualLoss* perceptual = nullptr);

}  // namespace vtok
