// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "contrastforge/errors.hpp"
#include "contrastforge/grad_check.hpp"
#include "contrastforge/losses.hpp"
#include "contrastforge/networks.hpp"
#include "contrastforge/ops.hpp"
#include "contrastforge/optim.hpp"
#include "contrastforge/rng.hpp"
#include "support/network_grad_check.hpp"
#include "support/oracles.hpp"

using namespace contrastforge;

namespace {

Tensor filled(Shape s, double v) { return Tensor(std::move(s), v); }

Tensor random_tensor(Rng& rng, Shape s, double lo = -1, double hi = 1) {
  Tensor t(std::move(s));
  for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

// ---- optim ------------------------------------------------------------------

TEST(Adam, FirstStepFixture) {
  ParamSet p{{"w", Tensor({1}, 0.0, true)}};
  p.at("w").mutable_grad()[0] = 1.0;
  AdamState s = AdamState::for_params(p);
  adam_step(p, s, 2e-4, {0.5, 0.999, 1e-8});
  EXPECT_EQ(s.t, 1u);
  // m_hat = v_hat = 1, so the step is lr / (1 + eps).
  EXPECT_NEAR(p.at("w").at(0), -1.99999998e-4, 1e-15);
  EXPECT_DOUBLE_EQ(p.at("w").at(0), -2e-4 / (1.0 + 1e-8));
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamSet p{{"w", Tensor({3}, std::vector<double>{1, -2, 3}, true)}};
  p.at("w").mutable_grad();
  AdamState s = AdamState::for_params(p);
  adam_step(p, s, 1e-3);
  EXPECT_EQ(p.at("w").at(1), -2.0);
}

TEST(Adam, IdenticalRunsAreBitwiseEqual) {
  std::vector<double> result[2];
  for (int run = 0; run < 2; ++run) {
    ParamSet p{{"w", Tensor({4}, std::vector<double>{0.3, -0.1, 2, 5}, true)}};
    AdamState s = AdamState::for_params(p);
    for (int i = 0; i < 10; ++i) {
      Tape tape;
      Tensor loss = ops::sum(tape, ops::square(tape, p.at("w")));
      zero_grads(p);
      tape.backward(loss);
      adam_step(p, s, 0.01);
    }
    result[run].assign(p.at("w").data().begin(), p.at("w").data().end());
  }
  EXPECT_EQ(result[0], result[1]);
}

TEST(Adam, ShapeMismatchAndNegativeLr) {
  ParamSet p{{"w", Tensor({2}, 0.0, true)}};
  AdamState s = AdamState::for_params(ParamSet{{"w", Tensor({3}, 0.0, true)}});
  EXPECT_THROW(adam_step(p, s, 1e-3), ConfigError);
  AdamState ok = AdamState::for_params(p);
  EXPECT_THROW(adam_step(p, ok, -1.0), UsageError);
}

TEST(Adam, ZeroBetasGiveSignSteps) {
  ParamSet p{{"w", Tensor({2}, std::vector<double>{0, 0}, true)}};
  AdamState s = AdamState::for_params(p);
  p.at("w").mutable_grad()[0] = 3.0;
  p.at("w").mutable_grad()[1] = -0.25;
  adam_step(p, s, 0.1, {0.0, 0.0, 1e-12});
  EXPECT_NEAR(p.at("w").at(0), -0.1, 1e-10);
  EXPECT_NEAR(p.at("w").at(1), 0.1, 1e-10);
}

TEST(Adam, QuadraticDecreasesAfterWarmup) {
  ParamSet p{{"w", Tensor({1}, 1.0, true)}};
  AdamState s = AdamState::for_params(p);
  double prev = 1.0;
  for (int i = 1; i <= 200; ++i) {
    Tape tape;
    Tensor loss = ops::sum(tape, ops::square(tape, p.at("w")));
    zero_grads(p);
    tape.backward(loss);
    adam_step(p, s, 2e-4);
    const double f = p.at("w").at(0) * p.at("w").at(0);
    if (i > 5) EXPECT_LT(f, prev);
    prev = f;
  }
}

TEST(LrSchedule, ConstantThenLinearValues) {
  const LrSchedule s;
  EXPECT_EQ(lr_at_epoch(0, s), 2e-4);
  EXPECT_EQ(lr_at_epoch(99, s), 2e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(150, s), 1e-4);
  EXPECT_THROW(lr_at_epoch(200, s), UsageError);
  EXPECT_THROW(lr_at_epoch(-1, s), UsageError);
  double prev = 1.0;
  for (int e = 0; e < 200; ++e) {
    EXPECT_LE(lr_at_epoch(e, s), prev);
    prev = lr_at_epoch(e, s);
  }
  EXPECT_DOUBLE_EQ(lr_at_epoch(199, s), 2e-4 / 100);
  EXPECT_THROW(lr_at_epoch(0, LrSchedule{2e-4, 10, 0}), ConfigError);
}

// ---- networks ---------------------------------------------------------------

TEST(Generator, ShapeContract) {
  const NetworkDef g = build_unet_generator(64, 1, 1, 16, 4);
  ParamSet p = make_params(g);
  init_weights(p, 1);
  Tape tape = Tape::inference();
  Rng rng(2);
  const Tensor y = generator_forward(tape, g, p, random_tensor(rng, {1, 1, 64, 64}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 64, 64}));
  for (double v : y.data()) {
    EXPECT_GT(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Generator, MultiSliceInputChannels) {
  const NetworkDef g = build_unet_generator(64, 3, 1, 16, 4);
  EXPECT_EQ(g.layers.front().in_channels, 3u);
  ParamSet p = make_params(g);
  EXPECT_EQ(p.at("enc0.weight").shape(), (Shape{16, 3, 4, 4}));
}

TEST(Generator, ParameterCountMatchesCountingOracle) {
  for (auto [k_in, k_out, base, depth] : {std::array<std::size_t, 4>{1, 1, 16, 4}, {3, 1, 16, 4}, {3, 3, 8, 5},
                                          {1, 1, 4, 2}, {2, 2, 16, 6}}) {
    const NetworkDef g = build_unet_generator(64, k_in, k_out, base, depth);
    std::size_t counted = 0;
    for (const auto& [name, t] : make_params(g)) counted += t.numel();
    EXPECT_EQ(g.parameter_count(), oracle::unet_params(k_in, k_out, base, depth));
    EXPECT_EQ(counted, g.parameter_count());
  }
  EXPECT_EQ(build_unet_generator(64, 1, 1, 16, 4).parameter_count(), 385809u);
}

TEST(Generator, InvalidGeometry) {
  EXPECT_THROW(build_unet_generator(60, 1, 1, 16, 4), ConfigError);
  EXPECT_THROW(build_unet_generator(64, 1, 1, 16, 1), ConfigError);
}

TEST(Generator, BatchMatchesPerSample) {
  const NetworkDef g = build_unet_generator(16, 1, 1, 4, 2);
  ParamSet p = make_params(g);
  init_weights(p, 7);
  Rng rng(3);
  const Tensor a = random_tensor(rng, {1, 1, 16, 16}), b = random_tensor(rng, {1, 1, 16, 16});
  Tape tape = Tape::inference();
  std::vector<double> both(a.data().begin(), a.data().end());
  both.insert(both.end(), b.data().begin(), b.data().end());
  const Tensor yab = generator_forward(tape, g, p, Tensor({2, 1, 16, 16}, both));
  const Tensor ya = generator_forward(tape, g, p, a), yb = generator_forward(tape, g, p, b);
  for (std::size_t i = 0; i < 256; ++i) {
    EXPECT_EQ(yab.at(i), ya.at(i));
    EXPECT_EQ(yab.at(256 + i), yb.at(i));
  }
}

TEST(Generator, ZeroParametersGiveZeroOutput) {
  const NetworkDef g = build_unet_generator(16, 1, 1, 4, 2);
  ParamSet p = make_params(g);
  Rng rng(1);
  Tape tape = Tape::inference();
  const Tensor y = generator_forward(tape, g, p, random_tensor(rng, {1, 1, 16, 16}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Generator, WrongInputShapeIsUsageError) {
  const NetworkDef g = build_unet_generator(16, 1, 1, 4, 2);
  ParamSet p = make_params(g);
  Tape tape = Tape::inference();
  EXPECT_THROW(generator_forward(tape, g, p, Tensor({1, 2, 16, 16})), UsageError);
  EXPECT_THROW(generator_forward(tape, g, p, Tensor({1, 1, 32, 32})), UsageError);
}

TEST(Discriminator, InputChannelsAndPatchSize) {
  const NetworkDef pg = build_patch_discriminator(1, 1, 16, 3);
  EXPECT_EQ(pg.in_channels, 2u);
  const NetworkDef cg = build_patch_discriminator(0, 3, 16, 3);
  EXPECT_EQ(cg.in_channels, 3u);
  EXPECT_EQ(discriminator_output_size(pg, 64), 6u);
  ParamSet p = make_params(pg);
  init_weights(p, 4);
  Tape tape = Tape::inference();
  EXPECT_EQ(discriminator_forward(tape, pg, p, Tensor({1, 2, 64, 64}, 0.1)).shape(), (Shape{1, 1, 6, 6}));
  EXPECT_EQ(pg.parameter_count(), 174609u);
}

TEST(InitWeights, Statistics) {
  ParamSet p = make_params(build_unet_generator(64, 1, 1, 16, 4));
  init_weights(p, 12);
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& [name, t] : p) {
    if (name.ends_with(".bias")) {
      for (double v : t.data()) EXPECT_EQ(v, 0.0);
      continue;
    }
    for (double v : t.data()) {
      sum += v;
      sq += v * v;
      ++n;
    }
  }
  ASSERT_GE(n, 10000u);
  const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  EXPECT_LT(std::abs(mean), 3 * 0.02 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(sd, 0.02, 0.05 * 0.02);
  ParamSet q = make_params(build_unet_generator(64, 1, 1, 16, 4));
  init_weights(q, 12);
  for (const auto& [name, t] : p) {
    EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), q.at(name).data().begin()));
  }
}

// Full generator loss on a 16x16 depth-2 network against central differences.
TEST(Generator, EndToEndGradCheck) {
  const auto check = test_support::first_smooth_grad_check();
  ASSERT_GT(check.seed, 0) << "no kink-free draw";
  EXPECT_EQ(check.result.kink_crossings, 0u);
  EXPECT_LT(check.result.max_relative_error, 1e-4);
  EXPECT_GT(check.result.max_abs_analytic, 0.0);
}

TEST(GradCheck, FourPointStencilIsExactOnQuartics) {
  Rng rng(31);
  Tensor p = random_tensor(rng, {5});
  p.set_requires_grad(true);
  std::vector<Tensor> in{p};
  const auto quartic = [&](Tape& tape) {
    const Tensor sq = ops::mul(tape, p, p);
    return ops::sum(tape, ops::mul(tape, sq, sq));
  };
  EXPECT_LT(grad_check(quartic, in, 1e-2, Stencil::kFourPoint).max_relative_error, 1e-9);
  EXPECT_GT(grad_check(quartic, in, 1e-2, Stencil::kTwoPoint).max_relative_error, 1e-6);
}

TEST(GradCheck, CountsKinkCrossings) {
  Tensor p({3});
  p.mutable_data()[0] = 5e-4;
  p.mutable_data()[1] = 0.5;
  p.mutable_data()[2] = -0.5;
  p.set_requires_grad(true);
  std::vector<Tensor> in{p};
  const auto f = [&](Tape& tape) { return ops::sum(tape, ops::relu(tape, p)); };
  const auto two = grad_check(f, in, 1e-3, Stencil::kTwoPoint);
  EXPECT_EQ(two.kink_crossings, 1u);
  p.mutable_data()[0] = 0.25;
  EXPECT_EQ(grad_check(f, in, 1e-3).kink_crossings, 0u);
  KinkProbe outer;
  {
    KinkProbe inner;
    const std::vector<double> v{-0.2, 0.1};
    detail::observe_kinks(v);
    EXPECT_DOUBLE_EQ(inner.margin(), 0.1);
  }
  EXPECT_DOUBLE_EQ(outer.margin(), 0.1);
}

// ---- losses -----------------------------------------------------------------

TEST(Losses, LogAdversarialFixtures) {
  Tape tape;
  const Tensor zero = filled({1, 1, 6, 6}, 0.0);
  EXPECT_NEAR(losses::adv_loss_log_D(tape, zero, zero).item(), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(losses::adv_loss_log_G(tape, zero).item(), std::log(2.0), 1e-12);
  EXPECT_LT(losses::adv_loss_log_D(tape, filled({4}, 40.0), filled({4}, -40.0)).item(), 1e-15);
  double prev = 1e9;
  for (double l = -5; l <= 5; l += 0.5) {
    const double v = losses::adv_loss_log_G(tape, filled({3}, l)).item();
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Losses, L1) {
  Tape tape;
  Rng rng(1);
  const Tensor a = random_tensor(rng, {2, 5}), b = random_tensor(rng, {2, 5});
  EXPECT_EQ(losses::l1_loss(tape, a, a).item(), 0.0);
  EXPECT_NEAR(losses::l1_loss(tape, filled({3, 3}, 1.0), filled({3, 3}, 1.5)).item(), 0.5, 1e-15);
  EXPECT_EQ(losses::l1_loss(tape, a, b).item(), losses::l1_loss(tape, b, a).item());
  EXPECT_THROW(losses::l1_loss(tape, a, filled({5, 2}, 0)), UsageError);
}

TEST(Losses, PganTotal) {
  Tape tape;
  EXPECT_NEAR(losses::pgan_total_G(tape, Tensor::scalar(0.2), Tensor::scalar(0.01), {100, 10}).item(), 1.2, 1e-15);
  EXPECT_EQ(losses::pgan_total_G(tape, Tensor::scalar(0.2), Tensor::scalar(0.01), {0, 10}).item(), 0.2);
}

TEST(Losses, PganTotalGradientIsSumOfParts) {
  Rng rng(6);
  const Tensor logits0 = random_tensor(rng, {1, 1, 3, 3}), y = random_tensor(rng, {1, 1, 4, 4});
  const Tensor f0 = random_tensor(rng, {1, 1, 4, 4});
  auto grads = [&](int which) {
    Tensor logits = logits0.clone(), fake = f0.clone();
    logits.set_requires_grad(true);
    fake.set_requires_grad(true);
    Tape tape;
    Tensor adv = losses::adv_loss_log_G(tape, logits);
    Tensor l1 = losses::l1_loss(tape, y, fake);
    Tensor out = which == 0 ? losses::pgan_total_G(tape, adv, l1, {100, 10})
                 : which == 1 ? adv
                              : ops::scale(tape, l1, 100.0);
    if (which == 1) out = ops::add(tape, out, ops::scale(tape, l1, 0.0));
    if (which == 2) out = ops::add(tape, out, ops::scale(tape, adv, 0.0));
    tape.backward(out);
    std::vector<double> g(logits.grad().begin(), logits.grad().end());
    g.insert(g.end(), fake.grad().begin(), fake.grad().end());
    return g;
  };
  const auto total = grads(0), adv = grads(1), pix = grads(2);
  for (std::size_t i = 0; i < total.size(); ++i) EXPECT_NEAR(total[i], adv[i] + pix[i], 1e-14);
}

TEST(Losses, CycleFixtures) {
  Tape tape;
  Rng rng(2);
  const Tensor x = random_tensor(rng, {1, 1, 8, 8}), y = random_tensor(rng, {1, 1, 8, 8});
  EXPECT_EQ(losses::cycle_loss(tape, x, x, y, y).item(), 0.0);
  const Tensor ones = filled({1, 1, 8, 8}, 1.0), zeros = filled({1, 1, 8, 8}, 0.0);
  EXPECT_NEAR(losses::cycle_loss(tape, ones, zeros, ones, zeros).item(), 2.0, 1e-12);
  EXPECT_GE(losses::cycle_loss(tape, x, y, y, x).item(), 0.0);
  EXPECT_THROW(losses::cycle_loss(tape, x, filled({1, 1, 4, 4}, 0), y, y), UsageError);
}

TEST(Losses, LeastSquaresFixtures) {
  Tape tape;
  EXPECT_NEAR(losses::adv_loss_lsq_D(tape, filled({6}, 1.0), filled({6}, 0.0)).item(), 0.0, 1e-12);
  EXPECT_NEAR(losses::adv_loss_lsq_D(tape, filled({6}, 0.5), filled({6}, 0.5)).item(), 0.5, 1e-15);
  EXPECT_EQ(losses::adv_loss_lsq_G(tape, filled({6}, 1.0)).item(), 0.0);
}

TEST(Losses, CganTotal) {
  Tape tape;
  const losses::LossWeights w{100, 10};
  EXPECT_EQ(losses::cgan_total(tape, Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0), w).item(), 0.0);
  EXPECT_NEAR(losses::cgan_total(tape, Tensor::scalar(0.1), Tensor::scalar(0.2), Tensor::scalar(0.05), w).item(), 0.8,
              1e-15);
  EXPECT_GT(losses::cgan_total(tape, Tensor::scalar(0.11), Tensor::scalar(0.2), Tensor::scalar(0.05), w).item(), 0.8);
  EXPECT_THROW(losses::cgan_total(tape, Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0), {1, -1}),
               ConfigError);
}

TEST(Losses, LinearityOfTotals) {
  Tape tape;
  const losses::LossWeights w{100, 10};
  const double a = 0.3, b = 0.07, alpha = 2.5;
  const double base = losses::pgan_total_G(tape, Tensor::scalar(a), Tensor::scalar(b), w).item();
  const double scaled = losses::pgan_total_G(tape, Tensor::scalar(alpha * a), Tensor::scalar(alpha * b), w).item();
  EXPECT_NEAR(scaled, alpha * base, 1e-12);
}

TEST(Losses, GradCheckAll) {
  Rng rng(31);
  Tensor r = random_tensor(rng, {1, 1, 4, 4}), f = random_tensor(rng, {1, 1, 4, 4});
  Tensor x = random_tensor(rng, {1, 1, 4, 4}), xr = random_tensor(rng, {1, 1, 4, 4});
  Tensor y = random_tensor(rng, {1, 1, 4, 4}), yr = random_tensor(rng, {1, 1, 4, 4});
  std::vector<Tensor> in{r, f, xr, yr};
  for (auto& t : in) t.set_requires_grad(true);
  auto run = [&](const std::function<Tensor(Tape&)>& fn) { return grad_check(fn, in, 1e-3).max_relative_error; };
  EXPECT_LT(run([&](Tape& t) { return losses::adv_loss_log_D(t, r, f); }), 1e-4);
  EXPECT_LT(run([&](Tape& t) { return losses::adv_loss_log_G(t, f); }), 1e-4);
  EXPECT_LT(run([&](Tape& t) { return losses::adv_loss_lsq_D(t, r, f); }), 1e-4);
  EXPECT_LT(run([&](Tape& t) { return losses::adv_loss_lsq_G(t, f); }), 1e-4);
  EXPECT_LT(run([&](Tape& t) { return losses::l1_loss(t, r, f); }), 1e-4);
  EXPECT_LT(run([&](Tape& t) { return losses::cycle_loss(t, x, xr, y, yr); }), 1e-4);
}
