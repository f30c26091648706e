// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "contrastforge/networks.hpp"

namespace contrastforge {

struct AdamHyper {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers per parameter name plus the shared step count.
struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::uint64_t t = 0;

  static AdamState for_params(const ParamSet& params);
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// A parameter without a gradient buffer is treated as having zero gradient.
void adam_step(ParamSet& params, AdamState& state, double lr, const AdamHyper& hyper = {});

/// Constant for `constant_epochs`, then linear decay toward zero at `total_epochs`.
struct LrSchedule {
  double base_lr = 2e-4;
  int total_epochs = 200;
  int constant_epochs = 100;

  void validate() const;
};

double lr_at_epoch(int epoch, const LrSchedule& schedule);

}  // namespace contrastforge
