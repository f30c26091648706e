// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace contrastforge {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major double tensor with an optional gradient slot.
///
/// Copies are shallow: two Tensor handles may refer to the same storage.
/// Forward ops never mutate their inputs; only gradients accumulate, and the
/// optimizer writes parameters between steps.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::size_t flat) const { return node_->data.at(flat); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  /// Same values, fresh storage, cut from any gradient path.
  Tensor detach() const;
  /// Deep copy that keeps the requires_grad flag (gradient is not copied).
  Tensor clone() const;
  Tensor reshaped(Shape shape) const;

  detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Records backward closures in forward order and replays them in reverse.
///
/// A Tape is meant to live for exactly one optimization step: backward()
/// consumes the records. An inference tape never records anything.
class Tape {
 public:
  Tape() = default;
  static Tape inference() {
    Tape tape;
    tape.recording_ = false;
    return tape;
  }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return recording_; }

  /// True when an op with these inputs has to be recorded.
  bool wants(std::initializer_list<const Tensor*> inputs) const;

  void record(std::function<void()> backward_fn);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure once, newest
  /// first. Gradients accumulate into whatever grad buffers already exist.
  void backward(Tensor& loss);

 private:
  bool recording_ = true;
  std::vector<std::function<void()>> entries_;
};

}  // namespace contrastforge
