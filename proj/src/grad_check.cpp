// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "contrastforge/errors.hpp"

namespace contrastforge {

namespace {
thread_local KinkProbe* active_probe = nullptr;
}  // namespace

KinkProbe::KinkProbe()
    : margin_(std::numeric_limits<double>::infinity()), pattern_(0xcbf29ce484222325ULL), outer_(active_probe) {
  active_probe = this;
}

KinkProbe::~KinkProbe() { active_probe = outer_; }

void KinkProbe::observe(std::span<const double> inputs) {
  for (double v : inputs) {
    margin_ = std::min(margin_, std::fabs(v));
    pattern_ = (pattern_ ^ static_cast<std::uint64_t>((v > 0.0) - (v < 0.0) + 1)) * 0x100000001b3ULL;
  }
  if (outer_ != nullptr) outer_->observe(inputs);
}

namespace detail {
void observe_kinks(std::span<const double> inputs) {
  if (active_probe != nullptr) active_probe->observe(inputs);
}
}  // namespace detail

GradCheckResult grad_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> inputs, double step,
                           Stencil stencil) {
  if (!(step > 0.0)) throw UsageError("grad_check: step must be positive");
  std::vector<bool> saved_flags;
  for (Tensor& t : inputs) {
    saved_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = f(tape);
    if (loss.numel() != 1) throw UsageError("grad_check: function must be scalar valued");
    if (loss.requires_grad()) tape.backward(loss);
    for (Tensor& t : inputs) {
      if (t.has_grad()) {
        analytic.emplace_back(t.grad().begin(), t.grad().end());
      } else {
        analytic.emplace_back(t.numel(), 0.0);
      }
      t.zero_grad();
    }
  }

  std::uint64_t base_pattern = 0;
  {
    KinkProbe probe;
    Tape tape = Tape::inference();
    f(tape);
    base_pattern = probe.pattern();
  }
  GradCheckResult result;
  auto evaluate = [&] {
    KinkProbe probe;
    Tape tape = Tape::inference();
    const double v = f(tape).item();
    if (probe.pattern() != base_pattern) ++result.kink_crossings;
    return v;
  };

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      auto at = [&](double offset) {
        values[i] = original + offset;
        const double v = evaluate();
        values[i] = original;
        return v;
      };
      const double numeric = stencil == Stencil::kTwoPoint
                                 ? (at(step) - at(-step)) / (2.0 * step)
                                 : (at(-2 * step) - 8 * at(-step) + 8 * at(step) - at(2 * step)) / (12.0 * step);
      const double a = analytic[k][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      result.max_relative_error = std::max(result.max_relative_error, std::fabs(a - numeric) / denom);
      result.max_abs_analytic = std::max(result.max_abs_analytic, std::fabs(a));
      ++result.elements;
    }
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) inputs[k].set_requires_grad(saved_flags[k]);
  return result;
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& point, double step,
                  Stencil stencil) {
  Tensor x = point.clone();
  Tensor inputs[] = {x};
  return grad_check([&](Tape& tape) { return f(tape, x); }, inputs, step, stencil).max_relative_error;
}

}  // namespace contrastforge
