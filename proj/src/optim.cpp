// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/optim.hpp"

#include <cmath>

#include "contrastforge/errors.hpp"

namespace contrastforge {

AdamState AdamState::for_params(const ParamSet& params) {
  AdamState state;
  for (const auto& [name, tensor] : params) {
    state.m.emplace(name, std::vector<double>(tensor.numel(), 0.0));
    state.v.emplace(name, std::vector<double>(tensor.numel(), 0.0));
  }
  return state;
}

void adam_step(ParamSet& params, AdamState& state, double lr, const AdamHyper& hyper) {
  if (lr < 0.0) throw UsageError("adam_step: negative learning rate");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ConfigError("adam_step: optimizer state does not match parameter set");
  }
  for (const auto& [name, tensor] : params) {
    auto mi = state.m.find(name);
    auto vi = state.v.find(name);
    if (mi == state.m.end() || vi == state.v.end() || mi->second.size() != tensor.numel() ||
        vi->second.size() != tensor.numel()) {
      throw ConfigError("adam_step: state shape mismatch for parameter " + name);
    }
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  for (auto& [name, tensor] : params) {
    double* __restrict m = state.m.at(name).data();
    double* __restrict v = state.v.at(name).data();
    double* __restrict values = tensor.mutable_data().data();
    const std::size_t n = tensor.numel();
    if (!tensor.has_grad()) {
      // zero gradient: moments decay, parameters still move by the momentum
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = hyper.beta1 * m[i];
        v[i] = hyper.beta2 * v[i];
        values[i] -= lr * (m[i] / correction1) / (std::sqrt(v[i] / correction2) + hyper.eps);
      }
      continue;
    }
    const double* __restrict g = tensor.grad().data();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      values[i] -= lr * (m[i] / correction1) / (std::sqrt(v[i] / correction2) + hyper.eps);
    }
  }
}

void LrSchedule::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("lr schedule: base_lr must be positive");
  if (constant_epochs <= 0 || constant_epochs > total_epochs) {
    throw ConfigError("lr schedule: need 0 < constant_epochs <= total_epochs");
  }
}

double lr_at_epoch(int epoch, const LrSchedule& schedule) {
  schedule.validate();
  if (epoch < 0 || epoch >= schedule.total_epochs) {
    throw UsageError("lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(schedule.total_epochs) + ")");
  }
  if (epoch < schedule.constant_epochs) return schedule.base_lr;
  return schedule.base_lr * static_cast<double>(schedule.total_epochs - epoch) /
         static_cast<double>(schedule.total_epochs - schedule.constant_epochs);
}

}  // namespace contrastforge
