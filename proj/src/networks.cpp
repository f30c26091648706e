// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/networks.hpp"

#include <algorithm>

#include "contrastforge/errors.hpp"
#include "contrastforge/ops.hpp"
#include "contrastforge/rng.hpp"

namespace contrastforge {
namespace {

std::size_t level_channels(std::size_t base, std::size_t level) {
  const std::size_t factor = level >= 3 ? 8 : (std::size_t{1} << level);
  return base * factor;
}

Tensor apply_layer(Tape& tape, const NetworkDef& net, const LayerSpec& layer, const ParamSet& params,
                   const Tensor& input) {
  const Tensor& weight = params.at(layer.name + ".weight");
  const Tensor bias = layer.bias ? params.at(layer.name + ".bias") : Tensor();
  Tensor y = layer.kind == LayerKind::kConv
                 ? ops::conv2d(tape, input, weight, bias, layer.stride, layer.padding)
                 : ops::conv_transpose2d(tape, input, weight, bias, layer.stride, layer.padding);
  if (layer.instance_norm) y = ops::instance_norm(tape, y);
  switch (layer.activation) {
    case Activation::kLeakyRelu:
      return ops::leaky_relu(tape, y, net.leaky_slope);
    case Activation::kRelu:
      return ops::relu(tape, y);
    case Activation::kTanh:
      return ops::tanh(tape, y);
    case Activation::kNone:
      break;
  }
  return y;
}

void check_input(const NetworkDef& net, const Tensor& x, const char* who) {
  if (x.rank() != 4 || x.dim(1) != net.in_channels) {
    throw UsageError(std::string(who) + ": expected [N," + std::to_string(net.in_channels) +
                     ",H,W] input, got " + shape_str(x.shape()));
  }
}

}  // namespace

std::size_t NetworkDef::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers) {
    total += l.in_channels * l.out_channels * l.kernel * l.kernel;
    if (l.bias) total += l.out_channels;
  }
  return total;
}

NetworkDef build_unet_generator(std::size_t image_size, std::size_t k_in, std::size_t k_out,
                                std::size_t base_channels, std::size_t depth) {
  if (depth < 2) throw ConfigError("unet generator: depth must be >= 2");
  if (k_in == 0 || k_out == 0 || base_channels == 0) throw ConfigError("unet generator: zero channels");
  const std::size_t granule = std::size_t{1} << depth;
  if (image_size == 0 || image_size % granule != 0) {
    throw ConfigError("unet generator: image size " + std::to_string(image_size) + " not divisible by 2^" +
                      std::to_string(depth));
  }
  NetworkDef net;
  net.kind = NetworkKind::kUNetGenerator;
  net.in_channels = k_in;
  net.out_channels = k_out;
  net.image_size = image_size;

  std::size_t in = k_in;
  for (std::size_t level = 0; level < depth; ++level) {
    LayerSpec l;
    l.name = "enc" + std::to_string(level);
    l.kind = LayerKind::kConv;
    l.in_channels = in;
    l.out_channels = level_channels(base_channels, level);
    l.instance_norm = level != 0;
    l.bias = level == 0;
    l.activation = Activation::kLeakyRelu;
    net.layers.push_back(l);
    in = l.out_channels;
  }
  for (std::size_t level = depth; level-- > 0;) {
    LayerSpec l;
    l.name = "dec" + std::to_string(level);
    l.kind = LayerKind::kConvTranspose;
    const bool innermost = level == depth - 1;
    l.skip_from = innermost ? -1 : static_cast<int>(level);
    l.in_channels = innermost ? level_channels(base_channels, level) : 2 * level_channels(base_channels, level);
    const bool outermost = level == 0;
    l.out_channels = outermost ? k_out : level_channels(base_channels, level - 1);
    l.instance_norm = !outermost;
    l.bias = outermost;
    l.activation = outermost ? Activation::kTanh : Activation::kRelu;
    net.layers.push_back(l);
  }
  return net;
}

NetworkDef build_patch_discriminator(std::size_t k_cond, std::size_t k_img, std::size_t base_channels,
                                     std::size_t n_layers) {
  if (n_layers < 1) throw ConfigError("patch discriminator: n_layers must be >= 1");
  if (k_img == 0 || base_channels == 0) throw ConfigError("patch discriminator: zero channels");
  NetworkDef net;
  net.kind = NetworkKind::kPatchDiscriminator;
  net.in_channels = k_cond + k_img;
  net.out_channels = 1;

  std::size_t in = net.in_channels;
  for (std::size_t i = 0; i <= n_layers; ++i) {
    LayerSpec l;
    l.name = "d" + std::to_string(i);
    l.in_channels = in;
    l.out_channels = level_channels(base_channels, i);
    l.stride = i < n_layers ? 2 : 1;
    l.instance_norm = i != 0;
    l.bias = i == 0;
    l.activation = Activation::kLeakyRelu;
    net.layers.push_back(l);
    in = l.out_channels;
  }
  LayerSpec head;
  head.name = "d" + std::to_string(n_layers + 1);
  head.in_channels = in;
  head.out_channels = 1;
  head.stride = 1;
  head.bias = true;
  net.layers.push_back(head);
  return net;
}

ParamSet make_params(const NetworkDef& net) {
  ParamSet params;
  for (const auto& l : net.layers) {
    const Shape wshape = l.kind == LayerKind::kConv ? Shape{l.out_channels, l.in_channels, l.kernel, l.kernel}
                                                    : Shape{l.in_channels, l.out_channels, l.kernel, l.kernel};
    params.emplace(l.name + ".weight", Tensor(wshape, 0.0, true));
    if (l.bias) params.emplace(l.name + ".bias", Tensor(Shape{l.out_channels}, 0.0, true));
  }
  return params;
}

void init_weights(ParamSet& params, std::uint64_t seed, double stddev) {
  Rng rng(seed);
  for (auto& [name, tensor] : params) {
    auto values = tensor.mutable_data();
    const bool is_bias = name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
    for (double& v : values) v = is_bias ? 0.0 : rng.normal(0.0, stddev);
  }
}

std::size_t discriminator_output_size(const NetworkDef& net, std::size_t input_size) {
  long size = static_cast<long>(input_size);
  for (const auto& l : net.layers) {
    size = (size + 2L * l.padding - static_cast<long>(l.kernel)) / l.stride + 1;
    if (size <= 0) throw ConfigError("discriminator: input too small for layer " + l.name);
  }
  return static_cast<std::size_t>(size);
}

Tensor generator_forward(Tape& tape, const NetworkDef& net, const ParamSet& params, const Tensor& x) {
  check_input(net, x, "generator_forward");
  if (x.dim(2) != net.image_size || x.dim(3) != net.image_size) {
    throw UsageError("generator_forward: expected " + std::to_string(net.image_size) + "x" +
                     std::to_string(net.image_size) + " images, got " + shape_str(x.shape()));
  }
  std::vector<Tensor> encoder_out;
  Tensor h = x;
  for (const auto& layer : net.layers) {
    if (layer.kind == LayerKind::kConv) {
      h = apply_layer(tape, net, layer, params, h);
      encoder_out.push_back(h);
      continue;
    }
    if (layer.skip_from >= 0) {
      const Tensor parts[] = {h, encoder_out.at(static_cast<std::size_t>(layer.skip_from))};
      h = ops::concat(tape, parts, 1);
    }
    h = apply_layer(tape, net, layer, params, h);
  }
  return h;
}

Tensor discriminator_forward(Tape& tape, const NetworkDef& net, const ParamSet& params, const Tensor& input) {
  check_input(net, input, "discriminator_forward");
  Tensor h = input;
  for (const auto& layer : net.layers) h = apply_layer(tape, net, layer, params, h);
  return h;
}

void set_requires_grad(ParamSet& params, bool on) {
  for (auto& [name, t] : params) t.set_requires_grad(on);
}

void zero_grads(ParamSet& params) {
  for (auto& [name, t] : params) t.zero_grad();
}

}  // namespace contrastforge
