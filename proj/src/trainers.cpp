// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/trainers.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <sstream>
#include <thread>

#include "contrastforge/errors.hpp"
#include "contrastforge/ini.hpp"
#include "contrastforge/losses.hpp"
#include "contrastforge/metrics.hpp"
#include "contrastforge/ops.hpp"
#include "contrastforge/rng.hpp"
#include "contrastforge/volume_io.hpp"

namespace contrastforge {
namespace {

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  le::put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

std::string get_string(le::Reader& in) {
  const auto n = in.u32();
  const auto bytes = in.raw(n);
  return std::string(bytes.begin(), bytes.end());
}

void put_blob(std::vector<std::uint8_t>& out, const std::string& name, std::span<const double> values) {
  put_string(out, name);
  le::put_u64(out, values.size());
  for (double v : values) le::put_f64(out, v);
}

std::vector<std::string> slot_names(TrainMode mode) {
  if (mode == TrainMode::kPgan) return {"G", "D"};
  return {"G_x", "G_y", "D_x", "D_y"};
}

NetworkDef slot_def(const TrainConfig& cfg, const std::string& name) {
  const bool generator = name[0] == 'G';
  if (cfg.mode == TrainMode::kPgan) {
    return generator ? build_unet_generator(cfg.image_size, cfg.k, 1, cfg.g_base, cfg.g_depth)
                     : build_patch_discriminator(cfg.k, 1, cfg.d_base, cfg.d_layers);
  }
  return generator ? build_unet_generator(cfg.image_size, cfg.k, cfg.k, cfg.g_base, cfg.g_depth)
                   : build_patch_discriminator(0, cfg.k, cfg.d_base, cfg.d_layers);
}

Tensor to_network_range(std::span<const double> values, Shape shape) {
  std::vector<double> v(values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 2.0 * values[i] - 1.0;
  return Tensor(std::move(shape), std::move(v));
}

Tensor cat(Tape& tape, const Tensor& a, const Tensor& b) {
  const std::array<Tensor, 2> parts{a, b};
  return ops::concat(tape, parts, 1);
}

void check_dataset(const TrainConfig& cfg, const Dataset& data) {
  const auto& spec = data.manifest.spec;
  const std::string where = data.manifest.root.empty() ? "in-memory dataset" : data.manifest.root.string();
  if (spec.misalign && cfg.mode != TrainMode::kCganUnreg) {
    throw ConfigError("mode " + mode_name(cfg.mode) + " needs a registered dataset, but " + where +
                      " is misaligned (use cgan_unreg)");
  }
  if (cfg.mode == TrainMode::kCganUnreg && !spec.misalign && !cfg.unpaired_cross_subject) {
    throw ConfigError("mode cgan_unreg needs a misaligned dataset or unpaired_cross_subject = true; " + where +
                      " is registered");
  }
  if (spec.size > cfg.image_size) {
    throw ConfigError("dataset slices are " + std::to_string(spec.size) + " pixels wide, larger than image_size " +
                      std::to_string(cfg.image_size));
  }
  if (data.role(true).empty()) throw DataError(where + ": no training subjects");
}

std::uint64_t shuffle_seed(const TrainConfig& cfg) { return Rng::derive(cfg.seed, 1); }

struct Trainer {
  const TrainConfig& cfg;
  Checkpoint ckpt;
  Rng rng;
  RunLog log;
  std::vector<SliceSample> samples;
  std::size_t slices_per_subject = 0;
  std::size_t n_subjects = 0;

  Trainer(const TrainConfig& c, const Dataset& data, const Checkpoint* resume) : cfg(c) {
    cfg.validate();
    check_dataset(cfg, data);
    if (resume != nullptr) {
      if (resume->config_hash != cfg.hash()) {
        throw ConfigError("resume checkpoint was written with a different config (hash mismatch)");
      }
      if (resume->epoch > cfg.epochs) throw ConfigError("resume checkpoint is past the configured epochs");
      ckpt = *resume;
      rng.restore(ckpt.rng_state);
    } else {
      ckpt = initial_checkpoint(cfg);
      rng = Rng(shuffle_seed(cfg));
    }
    const SampleMode mode = cfg.is_cgan() ? SampleMode::kCgan : SampleMode::kPgan;
    for (const auto* s : data.role(true)) {
      auto part = extract_slices(s->get(cfg.source), s->get(cfg.target), cfg.k, mode, cfg.image_size,
                                 s->record.index);
      if (slices_per_subject == 0) slices_per_subject = part.size();
      if (part.size() != slices_per_subject) throw DataError("training subjects differ in slice count");
      samples.insert(samples.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
      ++n_subjects;
    }
  }

  void emit(int epoch, const std::string& name, double value, double lr) {
    log.records.push_back({epoch, ckpt.step, name, value, lr});
  }

  template <typename StepFn>
  TrainResult run(const TrainHooks& hooks, StepFn step_fn) {
    const std::size_t n = samples.size();
    std::vector<std::size_t> order(n);
    for (int epoch = ckpt.epoch; epoch < cfg.epochs; ++epoch) {
      const double lr = lr_at_epoch(epoch, cfg.schedule);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (std::size_t i : order) {
        ++ckpt.step;
        step_fn(i, epoch, lr);
      }
      ckpt.epoch = epoch + 1;
      ckpt.rng_state = rng.state();
      if (hooks.on_epoch) hooks.on_epoch(ckpt.epoch, log);
      if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && ckpt.epoch % cfg.checkpoint_every == 0 &&
          ckpt.epoch < cfg.epochs) {
        hooks.on_checkpoint(ckpt);
      }
    }
    ckpt.rng_state = rng.state();
    return {std::move(ckpt), std::move(log)};
  }
};

}  // namespace

ModelSlot::ModelSlot(const ModelSlot& other) : name(other.name), def(other.def), adam(other.adam) {
  for (const auto& [key, t] : other.params) params.emplace(key, t.clone());
}

ModelSlot& ModelSlot::operator=(const ModelSlot& other) {
  if (this != &other) *this = ModelSlot(other);
  return *this;
}

ModelSlot& Checkpoint::slot(const std::string& name) {
  for (auto& m : models) {
    if (m.name == name) return m;
  }
  throw UsageError("checkpoint has no model '" + name + "'");
}

const ModelSlot& Checkpoint::slot(const std::string& name) const {
  return const_cast<Checkpoint*>(this)->slot(name);
}

Checkpoint initial_checkpoint(const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.config_hash = cfg.hash();
  ckpt.rng_state = Rng(shuffle_seed(cfg)).state();
  const auto names = slot_names(cfg.mode);
  for (std::size_t i = 0; i < names.size(); ++i) {
    ModelSlot s;
    s.name = names[i];
    s.def = slot_def(cfg, s.name);
    s.params = make_params(s.def);
    init_weights(s.params, Rng::derive(cfg.seed, 100 + i), cfg.init_stddev);
    s.adam = AdamState::for_params(s.params);
    ckpt.models.push_back(std::move(s));
  }
  return ckpt;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  le::put_u64(out, ckpt.config_hash);
  put_string(out, ckpt.config.to_text());
  le::put_u32(out, static_cast<std::uint32_t>(ckpt.epoch));
  le::put_u64(out, ckpt.step);
  put_string(out, ckpt.rng_state);
  le::put_u32(out, static_cast<std::uint32_t>(ckpt.models.size()));
  for (const auto& m : ckpt.models) {
    put_string(out, m.name);
    le::put_u32(out, static_cast<std::uint32_t>(3 * m.params.size() + 1));
    for (const auto& [name, t] : m.params) put_blob(out, "param:" + name, t.data());
    for (const auto& [name, v] : m.adam.m) put_blob(out, "adam_m:" + name, v);
    for (const auto& [name, v] : m.adam.v) put_blob(out, "adam_v:" + name, v);
    const double t = static_cast<double>(m.adam.t);
    put_blob(out, "adam_t", std::span<const double>(&t, 1));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin) {
  le::Reader in(bytes, origin);
  const auto magic = in.raw(sizeof(kCheckpointMagic));
  if (!std::equal(magic.begin(), magic.end(), std::begin(kCheckpointMagic))) {
    throw IoError(origin + ": not a checkpoint (bad magic or version)");
  }
  Checkpoint ckpt;
  ckpt.config_hash = in.u64();
  const std::string text = get_string(in);
  if (fnv1a64(text) != ckpt.config_hash) throw IoError(origin + ": config hash does not match stored config");
  try {
    ckpt.config = TrainConfig::parse(text, origin);
  } catch (const ConfigError& e) {
    throw IoError(origin + ": stored config is invalid: " + e.what());
  }
  if (ckpt.config.hash() != ckpt.config_hash) throw IoError(origin + ": stored config is not canonical");
  ckpt.epoch = static_cast<int>(in.u32());
  ckpt.step = in.u64();
  ckpt.rng_state = get_string(in);

  const auto expected = slot_names(ckpt.config.mode);
  if (in.u32() != expected.size()) throw IoError(origin + ": wrong number of models for mode");
  for (const auto& want : expected) {
    ModelSlot s;
    s.name = get_string(in);
    if (s.name != want) throw IoError(origin + ": expected model '" + want + "', found '" + s.name + "'");
    s.def = slot_def(ckpt.config, s.name);
    s.params = make_params(s.def);
    s.adam = AdamState::for_params(s.params);
    const auto n_blobs = in.u32();
    if (n_blobs != 3 * s.params.size() + 1) throw IoError(origin + ": blob count mismatch in model " + s.name);
    for (std::uint32_t b = 0; b < n_blobs; ++b) {
      const std::string name = get_string(in);
      const auto count = in.u64();
      std::span<double> dst;
      if (name == "adam_t") {
        if (count != 1) throw IoError(origin + ": bad adam_t blob");
        s.adam.t = static_cast<std::uint64_t>(in.f64());
        continue;
      }
      const auto colon = name.find(':');
      const std::string kind = name.substr(0, colon), pname = colon == std::string::npos ? "" : name.substr(colon + 1);
      if (kind == "param" && s.params.count(pname)) {
        dst = s.params.at(pname).mutable_data();
      } else if (kind == "adam_m" && s.adam.m.count(pname)) {
        dst = s.adam.m.at(pname);
      } else if (kind == "adam_v" && s.adam.v.count(pname)) {
        dst = s.adam.v.at(pname);
      } else {
        throw IoError(origin + ": unexpected blob '" + name + "' in model " + s.name);
      }
      if (count != dst.size()) throw IoError(origin + ": blob '" + name + "' has wrong length");
      for (double& d : dst) d = in.f64();
    }
    ckpt.models.push_back(std::move(s));
  }
  if (!in.done()) throw IoError(origin + ": trailing bytes");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path), path.string());
}

std::string RunLog::to_csv(bool header) const {
  std::string out;
  if (header) out = std::string(kHeader) + '\n';
  for (const auto& r : records) out += fmt::format("{},{},{},{:.17g},{:.17g}\n", r.epoch, r.step, r.loss, r.value, r.lr);
  return out;
}

RunLog RunLog::parse_csv(const std::string& text) {
  RunLog log;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw DataError("runlog: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 5) throw DataError("runlog: malformed line '" + line + "'");
    LogRecord r;
    r.epoch = static_cast<int>(ini::parse_u64(f[0], "runlog epoch"));
    r.step = ini::parse_u64(f[1], "runlog step");
    r.loss = f[2];
    r.value = ini::parse_double(f[3], "runlog value");
    r.lr = ini::parse_double(f[4], "runlog lr");
    log.records.push_back(r);
  }
  return log;
}

TrainResult train_pgan(const TrainConfig& cfg, const Dataset& data, const Checkpoint* resume,
                       const TrainHooks& hooks) {
  if (cfg.mode != TrainMode::kPgan) throw ConfigError("train_pgan called with mode " + mode_name(cfg.mode));
  Trainer tr(cfg, data, resume);
  ModelSlot& G = tr.ckpt.slot("G");
  ModelSlot& D = tr.ckpt.slot("D");
  const std::size_t S = cfg.image_size;

  return tr.run(hooks, [&](std::size_t i, int epoch, double lr) {
    const SliceSample& s = tr.samples[i];
    const Tensor x = to_network_range(s.source, {1, cfg.k, S, S});
    const Tensor y = to_network_range(s.target, {1, 1, S, S});
    zero_grads(G.params);
    zero_grads(D.params);

    Tape tg;
    const Tensor fake = generator_forward(tg, G.def, G.params, x);
    {
      Tape td;
      const Tensor d_real = discriminator_forward(td, D.def, D.params, cat(td, x, y));
      const Tensor d_fake = discriminator_forward(td, D.def, D.params, cat(td, x, fake.detach()));
      Tensor loss_d = losses::adv_loss_log_D(td, d_real, d_fake);
      td.backward(loss_d);
      adam_step(D.params, D.adam, lr, cfg.adam);
      tr.emit(epoch, "D", loss_d.item(), lr);
    }
    set_requires_grad(D.params, false);
    const Tensor d_fake = discriminator_forward(tg, D.def, D.params, cat(tg, x, fake));
    const Tensor adv = losses::adv_loss_log_G(tg, d_fake);
    const Tensor l1 = losses::l1_loss(tg, y, fake);
    Tensor total = losses::pgan_total_G(tg, adv, l1, cfg.weights);
    tg.backward(total);
    set_requires_grad(D.params, true);
    adam_step(G.params, G.adam, lr, cfg.adam);
    tr.emit(epoch, "G_adv", adv.item(), lr);
    tr.emit(epoch, "G_l1", l1.item(), lr);
    tr.emit(epoch, "G_total", total.item(), lr);
  });
}

TrainResult train_cgan(const TrainConfig& cfg, const Dataset& data, const Checkpoint* resume,
                       const TrainHooks& hooks) {
  if (cfg.mode == TrainMode::kPgan) throw ConfigError("train_cgan called with mode pgan");
  Trainer tr(cfg, data, resume);
  ModelSlot& Gx = tr.ckpt.slot("G_x");
  ModelSlot& Gy = tr.ckpt.slot("G_y");
  ModelSlot& Dx = tr.ckpt.slot("D_x");
  ModelSlot& Dy = tr.ckpt.slot("D_y");
  const std::size_t S = cfg.image_size;
  const Shape shape{1, cfg.k, S, S};

  return tr.run(hooks, [&](std::size_t i, int epoch, double lr) {
    const SliceSample& s = tr.samples[i];
    std::size_t j = i;
    if (cfg.unpaired_cross_subject && tr.n_subjects > 1) {
      const std::size_t own = i / tr.slices_per_subject;
      std::size_t other = tr.rng.below(tr.n_subjects - 1);
      if (other >= own) ++other;
      j = other * tr.slices_per_subject + s.center;
    }
    const Tensor x = to_network_range(s.source, shape);
    const Tensor y = to_network_range(tr.samples[j].target, shape);
    for (ModelSlot* m : {&Gx, &Gy, &Dx, &Dy}) zero_grads(m->params);

    Tape tg;
    const Tensor fake_y = generator_forward(tg, Gy.def, Gy.params, x);
    const Tensor fake_x = generator_forward(tg, Gx.def, Gx.params, y);
    {
      Tape td;
      Tensor loss_dy = losses::adv_loss_lsq_D(td, discriminator_forward(td, Dy.def, Dy.params, y),
                                              discriminator_forward(td, Dy.def, Dy.params, fake_y.detach()));
      Tensor loss_dx = losses::adv_loss_lsq_D(td, discriminator_forward(td, Dx.def, Dx.params, x),
                                              discriminator_forward(td, Dx.def, Dx.params, fake_x.detach()));
      Tensor both = ops::add(td, loss_dx, loss_dy);
      td.backward(both);
      adam_step(Dx.params, Dx.adam, lr, cfg.adam);
      adam_step(Dy.params, Dy.adam, lr, cfg.adam);
      tr.emit(epoch, "D_x", loss_dx.item(), lr);
      tr.emit(epoch, "D_y", loss_dy.item(), lr);
    }
    set_requires_grad(Dx.params, false);
    set_requires_grad(Dy.params, false);
    const Tensor adv_x = losses::adv_loss_lsq_G(tg, discriminator_forward(tg, Dx.def, Dx.params, fake_x));
    const Tensor adv_y = losses::adv_loss_lsq_G(tg, discriminator_forward(tg, Dy.def, Dy.params, fake_y));
    const Tensor rec_x = generator_forward(tg, Gx.def, Gx.params, fake_y);
    const Tensor rec_y = generator_forward(tg, Gy.def, Gy.params, fake_x);
    const Tensor cyc = losses::cycle_loss(tg, x, rec_x, y, rec_y);
    Tensor total = losses::cgan_total(tg, adv_x, adv_y, cyc, cfg.weights);
    tg.backward(total);
    set_requires_grad(Dx.params, true);
    set_requires_grad(Dy.params, true);
    adam_step(Gx.params, Gx.adam, lr, cfg.adam);
    adam_step(Gy.params, Gy.adam, lr, cfg.adam);
    tr.emit(epoch, "G_adv_x", adv_x.item(), lr);
    tr.emit(epoch, "G_adv_y", adv_y.item(), lr);
    tr.emit(epoch, "G_cycle", cyc.item(), lr);
    tr.emit(epoch, "G_total", total.item(), lr);
  });
}

TrainResult train(const TrainConfig& cfg, const Dataset& data, const Checkpoint* resume, const TrainHooks& hooks) {
  return cfg.mode == TrainMode::kPgan ? train_pgan(cfg, data, resume, hooks) : train_cgan(cfg, data, resume, hooks);
}

Volume synthesize(const Checkpoint& ckpt, const Volume& source, std::size_t k, const SynthOptions& options) {
  if (k != ckpt.config.k) {
    throw UsageError("synthesize: k = " + std::to_string(k) + " but the checkpoint was trained with k = " +
                     std::to_string(ckpt.config.k));
  }
  return synthesize(ckpt, source, options);
}

Volume synthesize(const Checkpoint& ckpt, const Volume& source, const SynthOptions& options) {
  const TrainConfig& cfg = ckpt.config;
  if (cfg.mode == TrainMode::kPgan && options.reverse) {
    throw UsageError("synthesize: a pgan checkpoint only maps " + contrast_name(cfg.source) + " to " +
                     contrast_name(cfg.target));
  }
  const Contrast in_c = options.reverse ? cfg.target : cfg.source;
  const Contrast out_c = options.reverse ? cfg.source : cfg.target;
  if (source.contrast != Contrast::kUnknown && source.contrast != in_c) {
    throw UsageError("synthesize: source volume is " + contrast_name(source.contrast) + ", model expects " +
                     contrast_name(in_c));
  }
  const std::size_t S = cfg.image_size;
  if (source.height > S || source.width > S || source.depth == 0) {
    throw UsageError("synthesize: source slices " + std::to_string(source.height) + "x" +
                     std::to_string(source.width) + " do not fit the model image size " + std::to_string(S));
  }
  if (source.voxels.size() != source.depth * source.height * source.width) {
    throw UsageError("synthesize: inconsistent source volume");
  }
  const ModelSlot& G = ckpt.slot(cfg.mode == TrainMode::kPgan ? "G" : (options.reverse ? "G_x" : "G_y"));
  const std::size_t k = cfg.k, plane = S * S;
  const std::size_t center_channel = G.def.out_channels == 1 ? 0 : k / 2;
  const std::size_t top = (S - source.height) / 2, left = (S - source.width) / 2;

  Volume out = source;
  out.contrast = out_c;
  out.misaligned = false;
  out.rigid = {};

  auto work = [&](std::size_t z) {
    std::vector<double> input(k * plane);
    const auto idx = stack_indices(z, k, source.depth);
    for (std::size_t i = 0; i < k; ++i) {
      pad_slice_into(source.slice(idx[i]), source.height, source.width, S,
                     std::span<double>(input).subspan(i * plane, plane));
    }
    Tape tape = Tape::inference();
    const Tensor y = generator_forward(tape, G.def, G.params, to_network_range(input, {1, k, S, S}));
    const auto yd = y.data().subspan(center_channel * plane, plane);
    for (std::size_t r = 0; r < source.height; ++r) {
      for (std::size_t c = 0; c < source.width; ++c) {
        out.voxels[(z * source.height + r) * source.width + c] = (yd[(top + r) * S + left + c] + 1.0) / 2.0;
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, source.depth);
  if (threads == 1) {
    for (std::size_t z = 0; z < source.depth; ++z) work(z);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t z = t; z < source.depth; z += threads) work(z);
      });
    }
    for (auto& th : pool) th.join();
  }
  return normalize_max(out);
}

}  // namespace contrastforge
