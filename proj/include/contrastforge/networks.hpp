// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "contrastforge/tensor.hpp"

namespace contrastforge {

enum class LayerKind { kConv, kConvTranspose };
enum class Activation { kNone, kLeakyRelu, kRelu, kTanh };

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 4;
  int stride = 2;
  int padding = 1;
  bool instance_norm = false;
  bool bias = false;
  Activation activation = Activation::kNone;
  // Generator decoder layers only: index of the encoder layer whose output is
  // concatenated onto this layer's input, or -1.
  int skip_from = -1;
};

enum class NetworkKind { kUNetGenerator, kPatchDiscriminator };

/// Layer table of a generator or discriminator.
struct NetworkDef {
  NetworkKind kind = NetworkKind::kUNetGenerator;
  std::vector<LayerSpec> layers;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t image_size = 0;  // generator only; 0 for the discriminator
  double leaky_slope = 0.2;

  std::size_t parameter_count() const;
};

/// Named learnable tensors, e.g. "enc0.weight". Ordered so that iteration and
/// serialization are deterministic.
using ParamSet = std::map<std::string, Tensor>;

/// U-Net: `depth` stride-2 encoder convolutions (channels base*2^level capped
/// at 8*base, leaky relu, instance norm except the first) mirrored by
/// stride-2 transposed convolutions with skip concatenation (relu, instance
/// norm) and a final tanh.
NetworkDef build_unet_generator(std::size_t image_size, std::size_t k_in, std::size_t k_out,
                                std::size_t base_channels, std::size_t depth);

/// Patch discriminator. Input channels are k_cond + k_img; k_cond = 0 gives
/// the unconditional form.
NetworkDef build_patch_discriminator(std::size_t k_cond, std::size_t k_img, std::size_t base_channels,
                                     std::size_t n_layers);

/// Allocates zero parameters for every layer of `net` (requires_grad on).
ParamSet make_params(const NetworkDef& net);

/// Kernels ~ N(0, 0.02^2) drawn in name order from `seed`; biases zero.
void init_weights(ParamSet& params, std::uint64_t seed, double stddev = 0.02);

/// Spatial output size of the discriminator for a square input.
std::size_t discriminator_output_size(const NetworkDef& net, std::size_t input_size);

Tensor generator_forward(Tape& tape, const NetworkDef& net, const ParamSet& params, const Tensor& x);
Tensor discriminator_forward(Tape& tape, const NetworkDef& net, const ParamSet& params, const Tensor& input);

void set_requires_grad(ParamSet& params, bool on);
void zero_grads(ParamSet& params);

}  // namespace contrastforge
