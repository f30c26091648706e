// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "contrastforge/dataset.hpp"
#include "contrastforge/networks.hpp"
#include "contrastforge/optim.hpp"
#include "contrastforge/train_config.hpp"

namespace contrastforge {

/// One network with its parameters and optimizer moments. Slot names are
/// "G" and "D" for pGAN, "G_x", "G_y", "D_x", "D_y" for cGAN; G_y maps the
/// source contrast x to the target contrast y. Copies are deep.
struct ModelSlot {
  std::string name;
  NetworkDef def;
  ParamSet params;
  AdamState adam;

  ModelSlot() = default;
  ModelSlot(const ModelSlot& other);
  ModelSlot& operator=(const ModelSlot& other);
  ModelSlot(ModelSlot&&) = default;
  ModelSlot& operator=(ModelSlot&&) = default;
};

struct Checkpoint {
  TrainConfig config;
  std::uint64_t config_hash = 0;
  int epoch = 0;           // completed epochs
  std::uint64_t step = 0;  // completed optimization steps
  std::string rng_state;
  std::vector<ModelSlot> models;

  ModelSlot& slot(const std::string& name);
  const ModelSlot& slot(const std::string& name) const;
};

inline constexpr char kCheckpointMagic[8] = {'C', 'F', 'C', 'K', 'P', 'T', '0', '1'};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin = "checkpoint");
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

struct LogRecord {
  int epoch = 0;
  std::uint64_t step = 0;  // 1-based global step
  std::string loss;
  double value = 0.0;
  double lr = 0.0;
};

struct RunLog {
  std::vector<LogRecord> records;

  static constexpr const char* kHeader = "epoch,step,loss_name,value,lr";
  std::string to_csv(bool header = true) const;
  static RunLog parse_csv(const std::string& text);
};

struct TrainHooks {
  std::function<void(const Checkpoint&)> on_checkpoint;  // every checkpoint_every epochs
  std::function<void(int epoch, const RunLog&)> on_epoch;
};

struct TrainResult {
  Checkpoint checkpoint;
  RunLog log;  // records produced by this call only
};

/// Fresh networks, weights drawn from the config seed.
Checkpoint initial_checkpoint(const TrainConfig& cfg);

/// Per sample: a discriminator step on (x, y) vs (x, G(x)) with the fake
/// detached, then a generator step on adversarial + lambda * L1.
TrainResult train_pgan(const TrainConfig& cfg, const Dataset& data, const Checkpoint* resume = nullptr,
                       const TrainHooks& hooks = {});

/// Per sample: D_x and D_y least-squares steps on detached fakes, then a
/// joint G_x/G_y step on least-squares adversarial + lambda * cycle loss.
TrainResult train_cgan(const TrainConfig& cfg, const Dataset& data, const Checkpoint* resume = nullptr,
                       const TrainHooks& hooks = {});

/// Dispatches on cfg.mode.
TrainResult train(const TrainConfig& cfg, const Dataset& data, const Checkpoint* resume = nullptr,
                  const TrainHooks& hooks = {});

struct SynthOptions {
  bool reverse = false;  // cGAN only: map target contrast back to source
  std::size_t threads = 1;
};

/// Runs the generator on every axial k-window of `source`, keeps the center
/// output slice, crops the padding, maps [-1,1] to [0,1] and rescales the
/// volume to unit maximum.
Volume synthesize(const Checkpoint& ckpt, const Volume& source, const SynthOptions& options = {});

/// Same, with an explicit k that has to match the checkpoint.
Volume synthesize(const Checkpoint& ckpt, const Volume& source, std::size_t k, const SynthOptions& options = {});

}  // namespace contrastforge
