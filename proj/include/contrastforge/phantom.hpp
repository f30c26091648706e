// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace contrastforge {

enum class Contrast : std::uint8_t { kUnknown = 0, kT1w = 1, kT2w = 2 };

std::string contrast_name(Contrast c);
Contrast parse_contrast(const std::string& text);

/// In-plane rigid transform: rotation about the slice center, then shift.
struct RigidParams {
  double rotation_deg = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
};

/// 3-D scalar field [depth][height][width] with its contrast and alignment record.
struct Volume {
  std::size_t depth = 0, height = 0, width = 0;
  std::vector<double> voxels;
  Contrast contrast = Contrast::kUnknown;
  bool misaligned = false;
  RigidParams rigid;

  Volume() = default;
  Volume(std::size_t d, std::size_t h, std::size_t w, Contrast c = Contrast::kUnknown)
      : depth(d), height(h), width(w), voxels(d * h * w, 0.0), contrast(c) {}

  std::size_t slice_size() const { return height * width; }
  std::span<const double> slice(std::size_t z) const {
    return std::span<const double>(voxels).subspan(z * slice_size(), slice_size());
  }
  std::span<double> slice(std::size_t z) { return std::span<double>(voxels).subspan(z * slice_size(), slice_size()); }
  double& at(std::size_t z, std::size_t y, std::size_t x) { return voxels[(z * height + y) * width + x]; }
  double at(std::size_t z, std::size_t y, std::size_t x) const { return voxels[(z * height + y) * width + x]; }
  bool same_dims(const Volume& o) const { return depth == o.depth && height == o.height && width == o.width; }
};

/// Co-registered proton density / relaxation maps of one synthetic subject.
/// T1 and T2 are in milliseconds; background voxels carry PD = T1 = T2 = 0.
struct TissueMaps {
  std::size_t depth = 0, height = 0, width = 0;
  std::vector<double> pd, t1, t2;
  std::vector<std::uint8_t> tissue;  // class label per voxel, 255 = background
  std::uint64_t subject_seed = 0;

  /// Brain mask: voxels with PD > 0.
  std::vector<std::uint8_t> mask() const;
};

struct Protocol {
  double tr_ms = 0.0;
  double te_ms = 0.0;
  Contrast label = Contrast::kUnknown;
};

/// Acquisition parameters of the reference T1- and T2-weighted scans.
inline constexpr Protocol kT1wProtocol{14.0, 7.7, Contrast::kT1w};
inline constexpr Protocol kT2wProtocol{7730.0, 80.0, Contrast::kT2w};

inline constexpr std::size_t kMaxTissues = 6;

TissueMaps generate_phantom(std::uint64_t subject_seed, std::array<std::size_t, 3> size,
                            std::size_t n_tissues = kMaxTissues);

/// S = PD (1 - exp(-TR/T1)) exp(-TE/T2), plus Gaussian noise whose standard
/// deviation is `noise_amplitude` times the in-mask mean signal.
Volume render_contrast(const TissueMaps& maps, const Protocol& protocol, double noise_amplitude = 0.0,
                       std::uint64_t noise_seed = 0);

/// Scalar signal equation for one voxel.
double signal_equation(double pd, double t1_ms, double t2_ms, const Protocol& protocol);

struct PooledStats {
  double mean = 1.0;
  double stddev = 0.0;
};

/// Step 1 of normalization: divide by the in-mask mean.
Volume mean_normalize(const Volume& v, std::span<const std::uint8_t> mask);

/// Mean and population std of in-mask voxels pooled over mean-normalized volumes.
PooledStats pooled_stats(std::span<const Volume> mean_normalized, std::span<const std::vector<std::uint8_t>> masks);

/// Full normalization: in-mask mean to 1, divide by pooled mean + 3 std, clip to [0,1].
Volume normalize_volume(const Volume& v, std::span<const std::uint8_t> mask, const PooledStats& pooled);

/// Resamples every slice through `params` (bilinear, zero fill). With
/// `inverse` the inverse transform is applied.
Volume apply_rigid(const Volume& v, const RigidParams& params, bool inverse = false);

/// Seeded rigid misalignment within the given bounds; the drawn parameters
/// are recorded on the returned volume.
Volume misalign(const Volume& v, std::uint64_t seed, double max_rot_deg, double max_shift_vox);

enum class SampleMode { kPgan, kCgan };

/// k consecutive source slices (edge slices replicated) plus one (pGAN) or k
/// (cGAN) target slices, zero padded to image_size x image_size.
struct SliceSample {
  std::size_t k = 1;
  std::size_t image_size = 0;
  std::vector<double> source;  // k * image_size^2
  std::vector<double> target;  // (1 or k) * image_size^2
  std::size_t target_slices = 1;
  std::size_t center = 0;
  std::uint64_t subject = 0;
};

/// Indices of the k-stack around `center` under border replication.
std::vector<std::size_t> stack_indices(std::size_t center, std::size_t k, std::size_t depth);

/// Copies one slice into a zero-padded square plane, centered.
void pad_slice_into(std::span<const double> slice, std::size_t height, std::size_t width, std::size_t image_size,
                    std::span<double> out);

std::vector<SliceSample> extract_slices(const Volume& source, const Volume& target, std::size_t k, SampleMode mode,
                                        std::size_t image_size, std::uint64_t subject = 0);

struct SplitManifest {
  std::vector<std::uint64_t> train;
  std::vector<std::uint64_t> test;
};

/// Subject-level split, deterministic per seed; partitions keep input order.
SplitManifest split_dataset(std::span<const std::uint64_t> subjects, double train_fraction, std::uint64_t seed);

}  // namespace contrastforge
