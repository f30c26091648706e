// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "contrastforge/tensor.hpp"

// Minimization-form losses. Expectations are means over the batch and the
// patch logit map.

namespace contrastforge::losses {

struct LossWeights {
  double lambda_pix = 100.0;   // pixel-wise L1 weight (pGAN)
  double lambda_cycle = 10.0;  // cycle-consistency weight (cGAN)
};

/// Cross-entropy discriminator loss: real logits -> 1, fake logits -> 0.
Tensor adv_loss_log_D(Tape& tape, const Tensor& d_real_logits, const Tensor& d_fake_logits);
/// Non-saturating generator loss, -log sigmoid(fake).
Tensor adv_loss_log_G(Tape& tape, const Tensor& d_fake_logits);

Tensor l1_loss(Tape& tape, const Tensor& y, const Tensor& y_hat);

Tensor pgan_total_G(Tape& tape, const Tensor& adv_G, const Tensor& l1, const LossWeights& w);

/// mean|x - Gx(Gy(x))| + mean|y - Gy(Gx(y))|
Tensor cycle_loss(Tape& tape, const Tensor& x, const Tensor& x_reconstructed, const Tensor& y,
                  const Tensor& y_reconstructed);

/// Least-squares discriminator loss on raw scores: mean (real-1)^2 + mean fake^2.
Tensor adv_loss_lsq_D(Tape& tape, const Tensor& d_real, const Tensor& d_fake);
/// mean (fake-1)^2
Tensor adv_loss_lsq_G(Tape& tape, const Tensor& d_fake);

Tensor cgan_total(Tape& tape, const Tensor& adv_x, const Tensor& adv_y, const Tensor& cycle,
                  const LossWeights& w);

}  // namespace contrastforge::losses
