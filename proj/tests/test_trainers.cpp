// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "contrastforge/dataset.hpp"
#include "contrastforge/errors.hpp"
#include "contrastforge/losses.hpp"
#include "contrastforge/ops.hpp"
#include "contrastforge/trainers.hpp"

using namespace contrastforge;

namespace {

DatasetSpec tiny_spec(bool misalign = false) {
  DatasetSpec s;
  s.subjects = 4;
  s.size = 16;
  s.slices = 16;
  s.seed = 3;
  s.train_fraction = 0.5;
  s.misalign = misalign;
  return s;
}

const Dataset& tiny_data() {
  static const Dataset ds = build_dataset(tiny_spec());
  return ds;
}

const Dataset& tiny_misaligned() {
  static const Dataset ds = build_dataset(tiny_spec(true));
  return ds;
}

TrainConfig tiny_config(TrainMode mode = TrainMode::kPgan) {
  TrainConfig c;
  c.mode = mode;
  c.image_size = 16;
  c.epochs = 2;
  c.schedule = {2e-4, 2, 1};
  c.g_base = 4;
  c.g_depth = 2;
  c.d_base = 4;
  c.d_layers = 1;
  c.seed = 5;
  return c;
}

Tensor net_input(std::span<const double> v, Shape shape) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = 2.0 * v[i] - 1.0;
  return Tensor(std::move(shape), std::move(out));
}

std::vector<double> values_of(const RunLog& log, const std::string& name) {
  std::vector<double> out;
  for (const auto& r : log.records)
    if (r.loss == name) out.push_back(r.value);
  return out;
}

std::vector<SliceSample> train_samples(const TrainConfig& cfg, const Dataset& ds) {
  std::vector<SliceSample> out;
  for (const auto* s : ds.role(true)) {
    auto part = extract_slices(s->get(cfg.source), s->get(cfg.target), cfg.k,
                               cfg.is_cgan() ? SampleMode::kCgan : SampleMode::kPgan, cfg.image_size);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace

TEST(Trainer, PganIsDeterministic) {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  const TrainResult a = train_pgan(cfg, tiny_data()), b = train_pgan(cfg, tiny_data());
  ASSERT_EQ(a.log.records.size(), 32u * 4);
  ASSERT_EQ(a.log.records.size(), b.log.records.size());
  for (std::size_t i = 0; i < a.log.records.size(); ++i) {
    EXPECT_NEAR(a.log.records[i].value, b.log.records[i].value, 1e-12);
    EXPECT_EQ(a.log.records[i].step, b.log.records[i].step);
  }
  EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
  EXPECT_EQ(a.checkpoint.step, 32u);
}

TEST(Trainer, LogIsMonotoneAndComplete) {
  const TrainResult r = train_pgan(tiny_config(), tiny_data());
  std::uint64_t prev_step = 0;
  int prev_epoch = 0;
  for (const auto& rec : r.log.records) {
    EXPECT_GE(rec.step, prev_step);
    EXPECT_GE(rec.epoch, prev_epoch);
    prev_step = rec.step;
    prev_epoch = rec.epoch;
    EXPECT_EQ(rec.lr, lr_at_epoch(rec.epoch, tiny_config().schedule));
  }
  EXPECT_EQ(values_of(r.log, "D").size(), 64u);
  const std::string csv = r.log.to_csv();
  EXPECT_EQ(RunLog::parse_csv(csv).to_csv(), csv);
}

// First optimization step rebuilt by hand from the initial weights: the
// logged losses have to come out identical, and with lambda_pix = 0 the
// generator objective is the adversarial term alone.
TEST(Trainer, FirstStepMatchesHandAssembly) {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  cfg.weights.lambda_pix = 0.0;
  const TrainResult run = train_pgan(cfg, tiny_data());
  const double logged_d = values_of(run.log, "D")[0];
  const double logged_l1 = values_of(run.log, "G_l1")[0];
  const double logged_adv = values_of(run.log, "G_adv")[0];
  EXPECT_EQ(values_of(run.log, "G_total")[0], logged_adv);

  const auto samples = train_samples(cfg, tiny_data());
  int matched = 0;
  for (const auto& s : samples) {
    Checkpoint ck = initial_checkpoint(cfg);
    ModelSlot& G = ck.slot("G");
    ModelSlot& D = ck.slot("D");
    const Tensor x = net_input(s.source, {1, 1, 16, 16}), y = net_input(s.target, {1, 1, 16, 16});
    Tape tg;
    const Tensor fake = generator_forward(tg, G.def, G.params, x);
    Tape td;
    const std::array<Tensor, 2> real_pair{x, y}, fake_pair{x, fake.detach()};
    Tensor ld = losses::adv_loss_log_D(td, discriminator_forward(td, D.def, D.params, ops::concat(td, real_pair, 1)),
                                       discriminator_forward(td, D.def, D.params, ops::concat(td, fake_pair, 1)));
    if (ld.item() != logged_d) continue;
    ++matched;
    td.backward(ld);
    adam_step(D.params, D.adam, lr_at_epoch(0, cfg.schedule), cfg.adam);

    const ParamSet d_before = ModelSlot(D).params;
    zero_grads(D.params);
    set_requires_grad(D.params, false);
    const std::array<Tensor, 2> g_pair{x, fake};
    const Tensor adv = losses::adv_loss_log_G(tg, discriminator_forward(tg, D.def, D.params, ops::concat(tg, g_pair, 1)));
    const Tensor l1 = losses::l1_loss(tg, y, fake);
    Tensor total = losses::pgan_total_G(tg, adv, l1, cfg.weights);
    tg.backward(total);
    EXPECT_EQ(adv.item(), logged_adv);
    EXPECT_EQ(l1.item(), logged_l1);
    EXPECT_EQ(total.item(), adv.item());
    for (const auto& [name, t] : D.params) {
      EXPECT_FALSE(t.has_grad()) << name;
      EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), d_before.at(name).data().begin()));
    }
  }
  EXPECT_EQ(matched, 1);
}

TEST(Trainer, DiscriminatorStepLeavesGeneratorUntouched) {
  const TrainConfig cfg = tiny_config();
  Checkpoint ck = initial_checkpoint(cfg);
  ModelSlot& G = ck.slot("G");
  ModelSlot& D = ck.slot("D");
  const ParamSet g_before = ModelSlot(G).params;
  const auto samples = train_samples(cfg, tiny_data());
  const Tensor x = net_input(samples[3].source, {1, 1, 16, 16}), y = net_input(samples[3].target, {1, 1, 16, 16});
  Tape tg;
  const Tensor fake = generator_forward(tg, G.def, G.params, x);
  Tape td;
  const std::array<Tensor, 2> real_pair{x, y}, fake_pair{x, fake.detach()};
  Tensor ld = losses::adv_loss_log_D(td, discriminator_forward(td, D.def, D.params, ops::concat(td, real_pair, 1)),
                                     discriminator_forward(td, D.def, D.params, ops::concat(td, fake_pair, 1)));
  td.backward(ld);
  adam_step(D.params, D.adam, 2e-4, cfg.adam);
  for (const auto& [name, t] : G.params) {
    EXPECT_FALSE(t.has_grad()) << name;
    EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), g_before.at(name).data().begin()));
  }
}

TEST(Trainer, ResumeEqualsUninterrupted) {
  for (TrainMode mode : {TrainMode::kPgan, TrainMode::kCganReg}) {
    TrainConfig cfg = tiny_config(mode);
    cfg.checkpoint_every = 1;
    std::vector<std::uint8_t> mid;
    TrainHooks hooks;
    hooks.on_checkpoint = [&](const Checkpoint& c) { mid = encode_checkpoint(c); };
    const TrainResult full = train(cfg, tiny_data(), nullptr, hooks);
    ASSERT_FALSE(mid.empty());
    const Checkpoint restored = decode_checkpoint(mid);
    EXPECT_EQ(restored.epoch, 1);
    const TrainResult resumed = train(cfg, tiny_data(), &restored);
    EXPECT_EQ(encode_checkpoint(resumed.checkpoint), encode_checkpoint(full.checkpoint)) << mode_name(mode);
    const std::size_t half = full.log.records.size() / 2;
    ASSERT_EQ(resumed.log.records.size(), half);
    for (std::size_t i = 0; i < half; ++i) {
      EXPECT_EQ(resumed.log.records[i].value, full.log.records[half + i].value);
      EXPECT_EQ(resumed.log.records[i].step, full.log.records[half + i].step);
    }
  }
}

TEST(Trainer, ResumeRejectsDifferentConfig) {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  const TrainResult r = train(cfg, tiny_data());
  TrainConfig other = cfg;
  other.weights.lambda_pix = 50;
  EXPECT_THROW(train(other, tiny_data(), &r.checkpoint), ConfigError);
}

TEST(Trainer, ModeGuards) {
  EXPECT_THROW(train_pgan(tiny_config(), tiny_misaligned()), ConfigError);
  EXPECT_THROW(train_cgan(tiny_config(TrainMode::kPgan), tiny_data()), ConfigError);
  EXPECT_THROW(train_pgan(tiny_config(TrainMode::kCganReg), tiny_data()), ConfigError);
  EXPECT_THROW(train(tiny_config(TrainMode::kCganReg), tiny_misaligned()), ConfigError);
  TrainConfig big = tiny_config();
  big.image_size = 8;
  EXPECT_THROW(train(big, tiny_data()), ConfigError);
}

TEST(Trainer, CganStructure) {
  const Checkpoint ck = initial_checkpoint(tiny_config(TrainMode::kCganUnreg));
  ASSERT_EQ(ck.models.size(), 4u);
  EXPECT_EQ(ck.slot("D_x").def.in_channels, 1u);
  EXPECT_EQ(ck.slot("D_y").def.in_channels, 1u);
  EXPECT_EQ(initial_checkpoint(tiny_config()).slot("D").def.in_channels, 2u);
  TrainConfig k3 = tiny_config(TrainMode::kCganReg);
  k3.k = 3;
  EXPECT_EQ(initial_checkpoint(k3).slot("G_x").def.out_channels, 3u);
  EXPECT_EQ(initial_checkpoint(k3).slot("D_y").def.in_channels, 3u);
}

TEST(Trainer, CganRunsAndIsDeterministic) {
  TrainConfig cfg = tiny_config(TrainMode::kCganUnreg);
  cfg.epochs = 1;
  const TrainResult a = train(cfg, tiny_misaligned()), b = train(cfg, tiny_misaligned());
  EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
  EXPECT_EQ(values_of(a.log, "G_cycle").size(), 32u);
  for (double v : values_of(a.log, "G_total")) EXPECT_TRUE(std::isfinite(v));
  cfg.unpaired_cross_subject = true;
  const TrainResult c = train(cfg, tiny_data());
  EXPECT_EQ(values_of(c.log, "D_x").size(), 32u);
}

// Swapping which network plays G_x and which plays G_y, together with the
// inputs, swaps the adversarial components and keeps the cycle term.
TEST(Trainer, CganLossSymmetry) {
  const Checkpoint ck = initial_checkpoint(tiny_config(TrainMode::kCganReg));
  const ModelSlot &Gx = ck.slot("G_x"), &Gy = ck.slot("G_y"), &Dx = ck.slot("D_x"), &Dy = ck.slot("D_y");
  const auto samples = train_samples(tiny_config(TrainMode::kCganReg), tiny_data());
  const Tensor x = net_input(samples[5].source, {1, 1, 16, 16}), y = net_input(samples[5].target, {1, 1, 16, 16});
  struct Parts {
    double adv_x, adv_y, cyc;
  };
  auto parts = [](const ModelSlot& gx, const ModelSlot& gy, const ModelSlot& dx, const ModelSlot& dy, const Tensor& a,
                  const Tensor& b) {
    Tape t = Tape::inference();
    const Tensor fy = generator_forward(t, gy.def, gy.params, a), fx = generator_forward(t, gx.def, gx.params, b);
    return Parts{losses::adv_loss_lsq_G(t, discriminator_forward(t, dx.def, dx.params, fx)).item(),
                 losses::adv_loss_lsq_G(t, discriminator_forward(t, dy.def, dy.params, fy)).item(),
                 losses::cycle_loss(t, a, generator_forward(t, gx.def, gx.params, fy), b,
                                    generator_forward(t, gy.def, gy.params, fx))
                     .item()};
  };
  const Parts p = parts(Gx, Gy, Dx, Dy, x, y), q = parts(Gy, Gx, Dy, Dx, y, x);
  EXPECT_EQ(p.adv_x, q.adv_y);
  EXPECT_EQ(p.adv_y, q.adv_x);
  EXPECT_NEAR(p.cyc, q.cyc, 1e-15);
}

// Two tiny generators trained on the cycle term alone with source and target
// drawn from the same contrast.
TEST(Trainer, CycleLossFallsOnIdenticalContrast) {
  const NetworkDef def = build_unet_generator(16, 1, 1, 4, 2);
  ParamSet gx = make_params(def), gy = make_params(def);
  init_weights(gx, 1);
  init_weights(gy, 2);
  AdamState ax = AdamState::for_params(gx), ay = AdamState::for_params(gy);
  const auto samples = train_samples(tiny_config(), tiny_data());
  std::vector<double> history;
  for (int step = 0; step < 50; ++step) {
    const SliceSample& s = samples[(step * 7) % samples.size()];
    const Tensor x = net_input(s.source, {1, 1, 16, 16});
    zero_grads(gx);
    zero_grads(gy);
    Tape t;
    const Tensor fy = generator_forward(t, def, gy, x), fx = generator_forward(t, def, gx, x);
    Tensor cyc = losses::cycle_loss(t, x, generator_forward(t, def, gx, fy), x, generator_forward(t, def, gy, fx));
    t.backward(cyc);
    adam_step(gx, ax, 2e-3);
    adam_step(gy, ay, 2e-3);
    history.push_back(cyc.item());
  }
  const double first = (history[0] + history[1] + history[2]) / 3;
  const double last = (history[47] + history[48] + history[49]) / 3;
  EXPECT_LT(last, 0.5 * first) << "first " << first << " last " << last;
}

TEST(Checkpoint, RoundTripAndCorruption) {
  TrainConfig cfg = tiny_config(TrainMode::kCganReg);
  cfg.epochs = 1;
  const TrainResult r = train(cfg, tiny_data());
  const auto bytes = encode_checkpoint(r.checkpoint);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  EXPECT_EQ(back.config.to_text(), cfg.to_text());
  EXPECT_EQ(back.step, 32u);
  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), IoError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_checkpoint(bad), IoError);
  bad = bytes;
  bad[9] ^= 1;  // config hash
  EXPECT_THROW(decode_checkpoint(bad), IoError);
}

TEST(Synthesize, ShapesAndDeterminism) {
  TrainConfig cfg = tiny_config();
  cfg.k = 3;
  const Checkpoint ck = initial_checkpoint(cfg);
  const Volume& src = tiny_data().subjects[0].t1w;
  const Volume out = synthesize(ck, src, 3);
  EXPECT_TRUE(out.same_dims(src));
  EXPECT_EQ(out.contrast, Contrast::kT2w);
  double mx = 0;
  for (double v : out.voxels) mx = std::max(mx, v);
  EXPECT_DOUBLE_EQ(mx, 1.0);
  EXPECT_EQ(synthesize(ck, src, SynthOptions{false, 4}).voxels, out.voxels);
  EXPECT_THROW(synthesize(ck, src, 1), UsageError);
  EXPECT_THROW(synthesize(ck, src, SynthOptions{true, 1}), UsageError);
  EXPECT_THROW(synthesize(ck, tiny_data().subjects[0].t2w), UsageError);
  Volume large(16, 32, 32, Contrast::kT1w);
  EXPECT_THROW(synthesize(ck, large), UsageError);
}

TEST(Synthesize, ZeroSourceGivesIdenticalSlices) {
  const Checkpoint ck = initial_checkpoint(tiny_config());
  Volume zero(5, 12, 12, Contrast::kT1w);
  const Volume a = synthesize(ck, zero), b = synthesize(ck, zero);
  EXPECT_EQ(a.voxels, b.voxels);
  for (std::size_t z = 1; z < 5; ++z) {
    EXPECT_TRUE(std::equal(a.slice(z).begin(), a.slice(z).end(), a.slice(0).begin())) << "slice " << z;
  }
}

TEST(Synthesize, CganReverseUsesOtherGenerator) {
  const Checkpoint ck = initial_checkpoint(tiny_config(TrainMode::kCganReg));
  const Volume fwd = synthesize(ck, tiny_data().subjects[0].t1w);
  const Volume rev = synthesize(ck, tiny_data().subjects[0].t2w, SynthOptions{true, 1});
  EXPECT_EQ(fwd.contrast, Contrast::kT2w);
  EXPECT_EQ(rev.contrast, Contrast::kT1w);
}

TEST(TrainConfigText, ParseOverridesAndValidation) {
  const TrainConfig d;
  EXPECT_EQ(TrainConfig::parse(d.to_text()).to_text(), d.to_text());
  EXPECT_EQ(TrainConfig::parse(d.to_text()).hash(), d.hash());
  const TrainConfig o = TrainConfig::parse("[run]\nmode = cgan_reg\n", "t", {"lambda_pix=0", "run.k=3"});
  EXPECT_EQ(o.weights.lambda_pix, 0.0);
  EXPECT_EQ(o.k, 3u);
  EXPECT_EQ(o.mode, TrainMode::kCganReg);
  EXPECT_NE(o.hash(), d.hash());
  EXPECT_THROW(TrainConfig::parse("[run]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("", "t", {"base_channels=8"}), ConfigError);
  EXPECT_THROW(TrainConfig::parse("", "t", {"nokey"}), ConfigError);
  EXPECT_THROW(TrainConfig::parse("[run]\nk = 2\n").validate(), ConfigError);
  EXPECT_THROW(TrainConfig::parse("[run]\nepochs = 300\n").validate(), ConfigError);
  EXPECT_THROW(TrainConfig::parse("[run]\ntarget = t1w\n").validate(), ConfigError);
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}
