// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "contrastforge/tensor.hpp"

namespace contrastforge {

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;  // largest |analytic gradient| seen, for context
  std::size_t elements = 0;
  // Perturbed evaluations whose relu/leaky_relu/abs sign pattern differed from
  // the unperturbed one; nonzero means the stencil straddled a kink.
  std::size_t kink_crossings = 0;
};

/// Compares tape gradients of a scalar function against central differences.
///
/// Relative error per element is |a - n| / max(|a|, |n|, 1e-8). The function
/// is evaluated in place: each entry of `inputs` is perturbed, re-evaluated and
/// restored, so `f` must read them through the handles it was given.
enum class Stencil {
  kTwoPoint,   // (f(x+h) - f(x-h)) / 2h
  kFourPoint,  // (f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h
};

GradCheckResult grad_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> inputs, double step,
                           Stencil stencil = Stencil::kTwoPoint);

/// Single-tensor convenience form: f is evaluated at `point`.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& point, double step,
                  Stencil stencil = Stencil::kTwoPoint);

/// While alive, tracks the smallest |x| fed to relu, leaky_relu or abs on the
/// current thread; a point is smooth for a check at step h when the margin
/// stays well above h. Probes nest.
class KinkProbe {
 public:
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;

  double margin() const { return margin_; }
  /// Hash of the sign of every observed input, in observation order.
  std::uint64_t pattern() const { return pattern_; }
  void observe(std::span<const double> inputs);

 private:
  double margin_;
  std::uint64_t pattern_;
  KinkProbe* outer_;
};

namespace detail {
// Called by the piecewise-linear ops; a no-op unless a probe is alive.
void observe_kinks(std::span<const double> inputs);
}  // namespace detail

}  // namespace contrastforge
