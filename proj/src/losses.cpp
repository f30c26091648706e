// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/losses.hpp"

#include "contrastforge/errors.hpp"
#include "contrastforge/ops.hpp"

namespace contrastforge::losses {
namespace {

void require_match(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw UsageError(std::string(who) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_weights(const LossWeights& w) {
  if (w.lambda_pix < 0.0 || w.lambda_cycle < 0.0) throw ConfigError("loss weights must be non-negative");
}

}  // namespace

Tensor adv_loss_log_D(Tape& tape, const Tensor& d_real_logits, const Tensor& d_fake_logits) {
  require_match(d_real_logits, d_fake_logits, "adv_loss_log_D");
  Tensor real_term = ops::mean(tape, ops::bce_with_logits(tape, d_real_logits, 1.0));
  Tensor fake_term = ops::mean(tape, ops::bce_with_logits(tape, d_fake_logits, 0.0));
  return ops::add(tape, real_term, fake_term);
}

Tensor adv_loss_log_G(Tape& tape, const Tensor& d_fake_logits) {
  return ops::mean(tape, ops::bce_with_logits(tape, d_fake_logits, 1.0));
}

Tensor l1_loss(Tape& tape, const Tensor& y, const Tensor& y_hat) {
  require_match(y, y_hat, "l1_loss");
  return ops::mean(tape, ops::abs(tape, ops::sub(tape, y, y_hat)));
}

Tensor pgan_total_G(Tape& tape, const Tensor& adv_G, const Tensor& l1, const LossWeights& w) {
  require_weights(w);
  return ops::add(tape, adv_G, ops::scale(tape, l1, w.lambda_pix));
}

Tensor cycle_loss(Tape& tape, const Tensor& x, const Tensor& x_reconstructed, const Tensor& y,
                  const Tensor& y_reconstructed) {
  return ops::add(tape, l1_loss(tape, x, x_reconstructed), l1_loss(tape, y, y_reconstructed));
}

Tensor adv_loss_lsq_D(Tape& tape, const Tensor& d_real, const Tensor& d_fake) {
  require_match(d_real, d_fake, "adv_loss_lsq_D");
  Tensor real_term = ops::mean(tape, ops::square(tape, ops::add_scalar(tape, d_real, -1.0)));
  Tensor fake_term = ops::mean(tape, ops::square(tape, d_fake));
  return ops::add(tape, real_term, fake_term);
}

Tensor adv_loss_lsq_G(Tape& tape, const Tensor& d_fake) {
  return ops::mean(tape, ops::square(tape, ops::add_scalar(tape, d_fake, -1.0)));
}

Tensor cgan_total(Tape& tape, const Tensor& adv_x, const Tensor& adv_y, const Tensor& cycle,
                  const LossWeights& w) {
  require_weights(w);
  return ops::add(tape, ops::add(tape, adv_x, adv_y), ops::scale(tape, cycle, w.lambda_cycle));
}

}  // namespace contrastforge::losses
