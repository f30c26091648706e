// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "contrastforge/errors.hpp"
#include "contrastforge/grad_check.hpp"

namespace contrastforge::ops {
namespace {

using NodePtr = std::shared_ptr<detail::TensorNode>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Tensor make_result(const Shape& shape, std::vector<double> values, bool requires_grad) {
  return Tensor(shape, std::move(values), requires_grad);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ConfigError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                      ", got " + shape_str(t.shape()));
  }
}

// Sliding-window geometry shared by conv2d and its transpose. The "image"
// side is (channels, height, width); the "grid" side is the output of the
// forward correlation.
struct Geometry {
  std::size_t channels, height, width;
  std::size_t kh, kw;
  std::size_t out_h, out_w;
  long stride, pad;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

void im2col(const double* image, const Geometry& g, double* cols) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(i);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + iy * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(j);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

// Accumulating inverse of im2col.
void col2im(const double* cols, const Geometry& g, double* image) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(i);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          double* dst = plane + iy * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(j);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    throw ConfigError(std::string(op) + ": bias shape " + shape_str(bias.shape()) + " does not match " +
                      std::to_string(channels) + " output channels");
  }
}

void add_bias(double* out, const double* bias, std::size_t batch, std::size_t channels,
              std::size_t plane) {
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* p = out + (n * channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) p[k] += bias[c];
    }
  }
}

void accumulate_bias_grad(const double* dout, double* dbias, std::size_t batch, std::size_t channels,
                          std::size_t plane) {
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* p = dout + (n * channels + c) * plane;
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
      dbias[c] += s;
    }
  }
}

// Shared skeleton for unary elementwise ops: fwd(v) and dfwd(v, out) -> local slope.
template <typename Fwd, typename Slope>
Tensor unary(Tape& tape, const Tensor& x, Fwd fwd, Slope slope) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  const bool track = tape.wants({&x});
  Tensor result = make_result(x.shape(), std::move(out), track);
  if (track) {
    NodePtr xn = x.node_ptr(), on = result.node_ptr();
    tape.record([xn, on, slope] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        xn->grad[i] += on->grad[i] * slope(xn->data[i], on->data[i]);
      }
    });
  }
  return result;
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin) {
    throw ConfigError("conv2d: input has " + std::to_string(cin) + " channels, kernel expects " +
                      std::to_string(kernel.dim(1)));
  }
  if (h + 2 * padding < kh || w + 2 * padding < kw) {
    throw ConfigError("conv2d: kernel larger than padded input");
  }
  check_bias(bias, cout, "conv2d");

  Geometry g{cin, h, w, kh, kw, (h + 2 * padding - kh) / stride + 1, (w + 2 * padding - kw) / stride + 1,
             stride, padding};
  const std::size_t rows = g.rows(), ncols = g.cols();
  const bool track = tape.wants({&input, &kernel, &bias});
  const bool keep_cols = track && kernel.requires_grad();

  std::vector<double> cols(batch * rows * ncols);
  std::vector<double> out(batch * cout * ncols);
  ConstMatMap kmat(kernel.data().data(), cout, rows);
  for (std::size_t n = 0; n < batch; ++n) {
    double* c = cols.data() + n * rows * ncols;
    im2col(input.data().data() + n * cin * h * w, g, c);
    MatMap(out.data() + n * cout * ncols, cout, ncols).noalias() = kmat * ConstMatMap(c, rows, ncols);
  }
  if (bias.defined()) add_bias(out.data(), bias.data().data(), batch, cout, ncols);

  Tensor result = make_result({batch, cout, g.out_h, g.out_w}, std::move(out), track);
  if (track) {
    if (!keep_cols) cols = {};
    NodePtr xn = input.node_ptr(), kn = kernel.node_ptr(), on = result.node_ptr();
    NodePtr bn = bias.defined() ? bias.node_ptr() : nullptr;
    tape.record([xn, kn, bn, on, g, batch, cout, cols = std::move(cols)] {
      if (on->grad.empty()) return;
      const std::size_t rows = g.rows(), ncols = g.cols();
      const std::size_t in_plane = g.channels * g.height * g.width;
      if (kn->requires_grad) {
        kn->ensure_grad();
        MatMap dk(kn->grad.data(), cout, rows);
        for (std::size_t n = 0; n < batch; ++n) {
          dk.noalias() += ConstMatMap(on->grad.data() + n * cout * ncols, cout, ncols) *
                          ConstMatMap(cols.data() + n * rows * ncols, rows, ncols).transpose();
        }
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        ConstMatMap kmat(kn->data.data(), cout, rows);
        RowMat dcols(rows, ncols);
        for (std::size_t n = 0; n < batch; ++n) {
          dcols.noalias() = kmat.transpose() * ConstMatMap(on->grad.data() + n * cout * ncols, cout, ncols);
          col2im(dcols.data(), g, xn->grad.data() + n * in_plane);
        }
      }
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        accumulate_bias_grad(on->grad.data(), bn->grad.data(), batch, cout, ncols);
      }
    });
  }
  return result;
}

Tensor conv_transpose2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        int stride, int padding) {
  require_rank(input, 4, "conv_transpose2d", "input");
  require_rank(kernel, 4, "conv_transpose2d", "kernel");
  if (stride < 1) throw ConfigError("conv_transpose2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv_transpose2d: padding must be >= 0");
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(0) != cin) {
    throw ConfigError("conv_transpose2d: input has " + std::to_string(cin) + " channels, kernel expects " +
                      std::to_string(kernel.dim(0)));
  }
  const long out_h = (static_cast<long>(h) - 1) * stride - 2L * padding + static_cast<long>(kh);
  const long out_w = (static_cast<long>(w) - 1) * stride - 2L * padding + static_cast<long>(kw);
  if (out_h <= 0 || out_w <= 0) {
    throw ConfigError("conv_transpose2d: non-positive output size");
  }
  check_bias(bias, cout, "conv_transpose2d");

  // Geometry of the forward correlation this op is the adjoint of: the output
  // here is that correlation's input.
  Geometry g{cout, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w), kh, kw, h, w, stride,
             padding};
  const std::size_t rows = g.rows(), ncols = g.cols();
  const std::size_t out_plane = cout * g.height * g.width;
  const bool track = tape.wants({&input, &kernel, &bias});

  std::vector<double> out(batch * out_plane, 0.0);
  ConstMatMap kmat(kernel.data().data(), cin, rows);
  RowMat cols(rows, ncols);
  for (std::size_t n = 0; n < batch; ++n) {
    cols.noalias() = kmat.transpose() * ConstMatMap(input.data().data() + n * cin * ncols, cin, ncols);
    col2im(cols.data(), g, out.data() + n * out_plane);
  }
  if (bias.defined()) add_bias(out.data(), bias.data().data(), batch, cout, g.height * g.width);

  Tensor result = make_result({batch, cout, g.height, g.width}, std::move(out), track);
  if (track) {
    NodePtr xn = input.node_ptr(), kn = kernel.node_ptr(), on = result.node_ptr();
    NodePtr bn = bias.defined() ? bias.node_ptr() : nullptr;
    tape.record([xn, kn, bn, on, g, batch, cin] {
      if (on->grad.empty()) return;
      const std::size_t rows = g.rows(), ncols = g.cols();
      const std::size_t out_plane = g.channels * g.height * g.width;
      RowMat dcols(rows, ncols);
      if (xn->requires_grad) xn->ensure_grad();
      if (kn->requires_grad) kn->ensure_grad();
      for (std::size_t n = 0; n < batch; ++n) {
        im2col(on->grad.data() + n * out_plane, g, dcols.data());
        if (xn->requires_grad) {
          MatMap(xn->grad.data() + n * cin * ncols, cin, ncols).noalias() +=
              ConstMatMap(kn->data.data(), cin, rows) * dcols;
        }
        if (kn->requires_grad) {
          MatMap(kn->grad.data(), cin, rows).noalias() +=
              ConstMatMap(xn->data.data() + n * cin * ncols, cin, ncols) * dcols.transpose();
        }
      }
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        accumulate_bias_grad(on->grad.data(), bn->grad.data(), batch, g.channels, g.height * g.width);
      }
    });
  }
  return result;
}

Tensor instance_norm(Tape& tape, const Tensor& input, double eps) {
  require_rank(input, 4, "instance_norm", "input");
  if (!(eps > 0.0)) throw ConfigError("instance_norm: eps must be positive");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t area = input.dim(2) * input.dim(3);
  const auto in = input.data();
  std::vector<double> out(input.numel());
  std::vector<double> inv_std(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* x = in.data() + p * area;
    double mu = 0.0;
    for (std::size_t k = 0; k < area; ++k) mu += x[k];
    mu /= static_cast<double>(area);
    double var = 0.0;
    for (std::size_t k = 0; k < area; ++k) var += (x[k] - mu) * (x[k] - mu);
    var /= static_cast<double>(area);
    const double s = 1.0 / std::sqrt(var + eps);
    inv_std[p] = s;
    double* y = out.data() + p * area;
    for (std::size_t k = 0; k < area; ++k) y[k] = (x[k] - mu) * s;
  }
  const bool track = tape.wants({&input});
  Tensor result = make_result(input.shape(), std::move(out), track);
  if (track) {
    NodePtr xn = input.node_ptr(), on = result.node_ptr();
    tape.record([xn, on, planes, area, inv_std = std::move(inv_std)] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      const double inv_area = 1.0 / static_cast<double>(area);
      for (std::size_t p = 0; p < planes; ++p) {
        const double* dy = on->grad.data() + p * area;
        const double* xhat = on->data.data() + p * area;
        double mean_dy = 0.0, mean_dy_xhat = 0.0;
        for (std::size_t k = 0; k < area; ++k) {
          mean_dy += dy[k];
          mean_dy_xhat += dy[k] * xhat[k];
        }
        mean_dy *= inv_area;
        mean_dy_xhat *= inv_area;
        double* dx = xn->grad.data() + p * area;
        for (std::size_t k = 0; k < area; ++k) {
          dx[k] += inv_std[p] * (dy[k] - mean_dy - xhat[k] * mean_dy_xhat);
        }
      }
    });
  }
  return result;
}

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) throw ConfigError("leaky_relu: slope must lie in [0,1)");
  detail::observe_kinks(x.data());
  return unary(
      tape, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor relu(Tape& tape, const Tensor& x) {
  detail::observe_kinks(x.data());
  return unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor abs(Tape& tape, const Tensor& x) {
  detail::observe_kinks(x.data());
  return unary(
      tape, x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor square(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return unary(
      tape, x, [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(Tape& tape, const Tensor& x, double offset) {
  return unary(
      tape, x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

namespace {

// a (+|-) b with matching shapes; sign applies to b.
Tensor add_signed(Tape& tape, const Tensor& a, const Tensor& b, double sign, const char* op) {
  require_same_shape(a, b, op);
  std::vector<double> out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sign * bv[i];
  const bool track = tape.wants({&a, &b});
  Tensor result = make_result(a.shape(), std::move(out), track);
  if (track) {
    NodePtr an = a.node_ptr(), bn = b.node_ptr(), on = result.node_ptr();
    tape.record([an, bn, on, sign] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += sign * on->grad[i];
      }
    });
  }
  return result;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) { return add_signed(tape, a, b, 1.0, "add"); }

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) { return add_signed(tape, a, b, -1.0, "sub"); }

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const bool track = tape.wants({&a, &b});
  Tensor result = make_result(a.shape(), std::move(out), track);
  if (track) {
    NodePtr an = a.node_ptr(), bn = b.node_ptr(), on = result.node_ptr();
    tape.record([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->data[i];
      }
    });
  }
  return result;
}

Tensor sum(Tape& tape, const Tensor& x) {
  const auto v = x.data();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  const bool track = tape.wants({&x});
  Tensor result = make_result({1}, {total}, track);
  if (track) {
    NodePtr xn = x.node_ptr(), on = result.node_ptr();
    tape.record([xn, on] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (double& g : xn->grad) g += on->grad[0];
    });
  }
  return result;
}

Tensor mean(Tape& tape, const Tensor& x) {
  const auto v = x.data();
  const double n = static_cast<double>(v.size());
  const double avg = std::accumulate(v.begin(), v.end(), 0.0) / n;
  const bool track = tape.wants({&x});
  Tensor result = make_result({1}, {avg}, track);
  if (track) {
    NodePtr xn = x.node_ptr(), on = result.node_ptr();
    tape.record([xn, on, n] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      const double g = on->grad[0] / n;
      for (double& d : xn->grad) d += g;
    });
  }
  return result;
}

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ConfigError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw ConfigError("concat: axis " + std::to_string(axis) + " out of range for rank " +
                      std::to_string(first.size()));
  }
  Shape shape = first;
  shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool compatible = s.size() == first.size();
    for (std::size_t d = 0; compatible && d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) compatible = false;
    }
    if (!compatible) throw ConfigError("concat: incompatible shape " + shape_str(s));
    shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t out_chunk = shape[axis] * inner;

  std::vector<double> out(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.dim(axis) * inner;
    const auto v = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * chunk, chunk, out.data() + o * out_chunk + offset);
    }
    offset += chunk;
  }

  bool track = false;
  for (const Tensor& p : parts) track = track || tape.wants({&p});
  Tensor result = make_result(shape, std::move(out), track);
  if (track) {
    std::vector<NodePtr> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node_ptr());
    NodePtr on = result.node_ptr();
    tape.record([nodes, offsets, on, outer, inner, out_chunk, axis] {
      if (on->grad.empty()) return;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        auto& pn = nodes[k];
        if (!pn->requires_grad) continue;
        pn->ensure_grad();
        const std::size_t chunk = pn->shape[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = on->grad.data() + o * out_chunk + offsets[k];
          double* dst = pn->grad.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return result;
}

Tensor pad_zero(Tape& tape, const Tensor& x, const std::vector<std::pair<std::size_t, std::size_t>>& pads) {
  if (pads.size() > x.rank()) throw ConfigError("pad_zero: more pad pairs than axes");
  const std::size_t rank = x.rank();
  Shape shape = x.shape();
  std::vector<std::size_t> before(rank, 0);
  for (std::size_t d = 0; d < pads.size(); ++d) {
    before[d] = pads[d].first;
    shape[d] += pads[d].first + pads[d].second;
  }
  // Flat offset in the output for each input element.
  std::vector<std::size_t> out_stride(rank, 1);
  for (std::size_t d = rank; d-- > 1;) out_stride[d - 1] = out_stride[d] * shape[d];
  std::vector<std::size_t> map(x.numel());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < map.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < rank; ++d) o += (idx[d] + before[d]) * out_stride[d];
    map[flat] = o;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < x.dim(d)) break;
      idx[d] = 0;
    }
  }
  std::vector<double> out(shape_numel(shape), 0.0);
  const auto v = x.data();
  for (std::size_t i = 0; i < map.size(); ++i) out[map[i]] = v[i];

  const bool track = tape.wants({&x});
  Tensor result = make_result(shape, std::move(out), track);
  if (track) {
    NodePtr xn = x.node_ptr(), on = result.node_ptr();
    tape.record([xn, on, map = std::move(map)] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < map.size(); ++i) xn->grad[i] += on->grad[map[i]];
    });
  }
  return result;
}

Tensor bce_with_logits(Tape& tape, const Tensor& logits, const Tensor& labels) {
  require_same_shape(logits, labels, "bce_with_logits");
  const auto l = logits.data(), t = labels.data();
  std::vector<double> out(l.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(l[i], 0.0) - l[i] * t[i] + std::log1p(std::exp(-std::fabs(l[i])));
  }
  const bool track = tape.wants({&logits});
  Tensor result = make_result(logits.shape(), std::move(out), track);
  if (track) {
    NodePtr ln = logits.node_ptr(), tn = labels.node_ptr(), on = result.node_ptr();
    tape.record([ln, tn, on] {
      if (on->grad.empty()) return;
      ln->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double v = ln->data[i];
        // sigmoid without overflow for either sign
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        ln->grad[i] += on->grad[i] * (s - tn->data[i]);
      }
    });
  }
  return result;
}

Tensor bce_with_logits(Tape& tape, const Tensor& logits, double label) {
  return bce_with_logits(tape, logits, Tensor(logits.shape(), label));
}

}  // namespace contrastforge::ops
