// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "contrastforge/losses.hpp"
#include "contrastforge/optim.hpp"
#include "contrastforge/phantom.hpp"

namespace contrastforge {

enum class TrainMode { kPgan, kCganReg, kCganUnreg };

std::string mode_name(TrainMode m);
TrainMode parse_mode(const std::string& s);

/// Every hyperparameter of one training run. Defaults are the full-scale
/// values (200 epochs, constant for 100); configs/desk_*.ini hold the
/// desk-scale settings.
struct TrainConfig {
  TrainMode mode = TrainMode::kPgan;
  std::size_t k = 1;
  std::size_t image_size = 64;
  int epochs = 200;
  std::uint64_t seed = 1;
  std::string manifest;
  int checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  Contrast source = Contrast::kT1w;
  Contrast target = Contrast::kT2w;
  bool unpaired_cross_subject = false;

  LrSchedule schedule{2e-4, 200, 100};
  AdamHyper adam;
  losses::LossWeights weights;
  double init_stddev = 0.02;

  std::size_t g_base = 16;
  std::size_t g_depth = 4;
  std::size_t d_base = 16;
  std::size_t d_layers = 3;

  bool is_cgan() const { return mode != TrainMode::kPgan; }
  void validate() const;

  /// Canonical text form; the frozen config copy and the hash are taken from it.
  std::string to_text() const;
  /// Missing keys keep their defaults; unknown keys are rejected. Overrides
  /// are "key=value" or "section.key=value" and win over the text.
  static TrainConfig parse(const std::string& text, const std::string& origin = "config",
                           const std::vector<std::string>& overrides = {});
  std::uint64_t hash() const;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace contrastforge
