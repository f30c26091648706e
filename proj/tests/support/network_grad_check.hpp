// SPDX-License-Identifier: Apache-2.0
// Full pGAN generator objective checked against finite differences at the first
// seeded parameter draw whose perturbations cross no activation kink.
#pragma once

#include <array>
#include <vector>

#include "contrastforge/grad_check.hpp"
#include "contrastforge/losses.hpp"
#include "contrastforge/networks.hpp"
#include "contrastforge/ops.hpp"
#include "contrastforge/rng.hpp"

namespace contrastforge::test_support {

struct NetworkGradCheck {
  int seed = 0;
  int draws = 0;
  GradCheckResult result;
};

inline GradCheckResult pgan_generator_grad_check(int seed, Stencil stencil) {
  const NetworkDef g = build_unet_generator(16, 1, 1, 4, 2);
  const NetworkDef d = build_patch_discriminator(1, 1, 4, 1);
  ParamSet gp = make_params(g), dp = make_params(d);
  init_weights(gp, 100 + seed, 1.0);
  init_weights(dp, 200 + seed, 1.0);
  set_requires_grad(dp, false);
  Rng rng(300 + seed);
  Tensor x({1, 1, 16, 16}), y({1, 1, 16, 16});
  for (double& v : x.mutable_data()) v = rng.uniform(-1, 1);
  for (double& v : y.mutable_data()) v = rng.uniform(-0.9, 0.9);
  std::vector<Tensor> inputs;
  for (auto& [name, t] : gp) inputs.push_back(t);
  return grad_check(
      [&](Tape& tape) {
        const Tensor fake = generator_forward(tape, g, gp, x);
        const std::array<Tensor, 2> pair{x, fake};
        const Tensor logits = discriminator_forward(tape, d, dp, ops::concat(tape, pair, 1));
        return losses::pgan_total_G(tape, losses::adv_loss_log_G(tape, logits), losses::l1_loss(tape, y, fake), {});
      },
      inputs, 1e-3, stencil);
}

// seeds are tried in order 1, 2, ... and the first kink-free one is reported
inline NetworkGradCheck first_smooth_grad_check(Stencil stencil = Stencil::kFourPoint, int max_draws = 32) {
  NetworkGradCheck out;
  for (int seed = 1; seed <= max_draws; ++seed) {
    out.seed = seed;
    out.draws = seed;
    out.result = pgan_generator_grad_check(seed, stencil);
    if (out.result.kink_crossings == 0) return out;
  }
  out.seed = 0;
  return out;
}

}  // namespace contrastforge::test_support
