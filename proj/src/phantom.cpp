// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "contrastforge/errors.hpp"
#include "contrastforge/rng.hpp"

namespace contrastforge {
namespace {

constexpr std::uint8_t kBackground = 255;

struct TissueClass {
  const char* name;
  double pd, t1_ms, t2_ms;
};

// Nominal 1.5T-like values; each subject scales them by up to +/-8%.
constexpr std::array<TissueClass, kMaxTissues> kTissues{{
    {"white_matter", 0.70, 800.0, 80.0},
    {"gray_matter", 0.80, 1200.0, 100.0},
    {"csf", 1.00, 4000.0, 2000.0},
    {"fat", 0.90, 260.0, 80.0},
    {"muscle", 0.75, 900.0, 45.0},
    {"deep_gray", 0.82, 1050.0, 90.0},
}};

enum Region : std::uint8_t { kWhite = 0, kGray = 1, kCsf = 2, kFat = 3, kMuscle = 4, kDeepGray = 5 };

// Low-frequency random field in roughly [-1, 1]: mean of a few plane waves.
class SmoothField {
 public:
  SmoothField(Rng& rng, double max_freq, int waves = 6) {
    for (int i = 0; i < waves; ++i) {
      Wave w;
      for (double& f : w.freq) f = rng.uniform(-max_freq, max_freq);
      w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      waves_.push_back(w);
    }
  }

  double operator()(double u, double v, double w) const {
    double s = 0.0;
    for (const auto& wave : waves_) {
      s += std::cos(std::numbers::pi * (wave.freq[0] * u + wave.freq[1] * v + wave.freq[2] * w) + wave.phase);
    }
    return s / std::sqrt(static_cast<double>(waves_.size()) / 2.0) / 1.5;
  }

 private:
  struct Wave {
    std::array<double, 3> freq{};
    double phase = 0.0;
  };
  std::vector<Wave> waves_;
};

struct Ellipsoid {
  double cx, cy, cz, ax, ay, az;
  bool contains(double u, double v, double w) const {
    const double du = (u - cx) / ax, dv = (v - cy) / ay, dw = (w - cz) / az;
    return du * du + dv * dv + dw * dw <= 1.0;
  }
};

double coord(std::size_t i, std::size_t n) { return (static_cast<double>(i) + 0.5) / static_cast<double>(n) * 2.0 - 1.0; }

double bilinear(std::span<const double> plane, std::size_t h, std::size_t w, double y, double x) {
  const double fy = std::floor(y), fx = std::floor(x);
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  const double ty = y - fy, tx = x - fx;
  auto sample = [&](long yy, long xx) {
    if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) return 0.0;
    return plane[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
  };
  return (1.0 - ty) * ((1.0 - tx) * sample(y0, x0) + tx * sample(y0, x0 + 1)) +
         ty * ((1.0 - tx) * sample(y0 + 1, x0) + tx * sample(y0 + 1, x0 + 1));
}

}  // namespace

std::string contrast_name(Contrast c) {
  switch (c) {
    case Contrast::kT1w:
      return "t1w";
    case Contrast::kT2w:
      return "t2w";
    case Contrast::kUnknown:
      break;
  }
  return "unknown";
}

Contrast parse_contrast(const std::string& text) {
  if (text == "t1w" || text == "T1" || text == "t1") return Contrast::kT1w;
  if (text == "t2w" || text == "T2" || text == "t2") return Contrast::kT2w;
  throw ConfigError("unknown contrast '" + text + "' (expected t1w or t2w)");
}

std::vector<std::uint8_t> TissueMaps::mask() const {
  std::vector<std::uint8_t> m(pd.size());
  for (std::size_t i = 0; i < pd.size(); ++i) m[i] = pd[i] > 0.0 ? 1 : 0;
  return m;
}

TissueMaps generate_phantom(std::uint64_t subject_seed, std::array<std::size_t, 3> size, std::size_t n_tissues) {
  const auto [depth, height, width] = size;
  if (depth < 16 || height < 16 || width < 16) throw ConfigError("generate_phantom: every axis must be >= 16");
  if (n_tissues < 2 || n_tissues > kMaxTissues) {
    throw ConfigError("generate_phantom: n_tissues must lie in [2, " + std::to_string(kMaxTissues) + "]");
  }
  Rng rng(Rng::derive(subject_seed, 0));

  // Head outline. The axial semi-axis exceeds the volume so every slice cuts
  // through the head.
  const double head_x = rng.uniform(0.78, 0.90), head_y = rng.uniform(0.84, 0.94);
  const double head_z = rng.uniform(1.3, 1.6);
  const double head_cx = rng.uniform(-0.04, 0.04), head_cy = rng.uniform(-0.04, 0.04);
  std::array<double, 4> lobe_amp{}, lobe_phase{};
  for (std::size_t i = 0; i < lobe_amp.size(); ++i) {
    lobe_amp[i] = rng.uniform(0.0, 0.025);
    lobe_phase[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const double scalp = rng.uniform(0.88, 0.91);
  const double skull = scalp - rng.uniform(0.05, 0.07);
  const double cortex = skull - rng.uniform(0.05, 0.07);
  const double white_core = rng.uniform(0.50, 0.58);
  SmoothField folds(rng, 3.0);

  const double vent_dx = rng.uniform(0.08, 0.12);
  const std::array<Ellipsoid, 2> ventricles{{
      {head_cx - vent_dx, head_cy - rng.uniform(0.0, 0.08), 0.0, rng.uniform(0.06, 0.09), rng.uniform(0.18, 0.26), 0.8},
      {head_cx + vent_dx, head_cy - rng.uniform(0.0, 0.08), 0.0, rng.uniform(0.06, 0.09), rng.uniform(0.18, 0.26), 0.8},
  }};
  const double deep_dx = rng.uniform(0.22, 0.28), deep_dy = rng.uniform(0.0, 0.1);
  const std::array<Ellipsoid, 2> deep_gray{{
      {head_cx - deep_dx, head_cy + deep_dy, 0.1, rng.uniform(0.08, 0.12), rng.uniform(0.12, 0.16), 0.6},
      {head_cx + deep_dx, head_cy + deep_dy, 0.1, rng.uniform(0.08, 0.12), rng.uniform(0.12, 0.16), 0.6},
  }};

  std::array<TissueClass, kMaxTissues> subject{};
  for (std::size_t t = 0; t < kMaxTissues; ++t) {
    subject[t] = kTissues[t];
    subject[t].pd *= rng.uniform(0.92, 1.08);
    subject[t].t1_ms *= rng.uniform(0.92, 1.08);
    subject[t].t2_ms *= rng.uniform(0.92, 1.08);
  }
  SmoothField pd_var(rng, 1.5), t1_var(rng, 1.5), t2_var(rng, 1.5);
  constexpr double kIntraClass = 0.03;

  TissueMaps maps;
  maps.depth = depth;
  maps.height = height;
  maps.width = width;
  maps.subject_seed = subject_seed;
  const std::size_t n = depth * height * width;
  maps.pd.assign(n, 0.0);
  maps.t1.assign(n, 0.0);
  maps.t2.assign(n, 0.0);
  maps.tissue.assign(n, kBackground);

  for (std::size_t z = 0; z < depth; ++z) {
    const double w = coord(z, depth);
    for (std::size_t y = 0; y < height; ++y) {
      const double v = coord(y, height);
      for (std::size_t x = 0; x < width; ++x) {
        const double u = coord(x, width);
        const double du = (u - head_cx) / head_x, dv = (v - head_cy) / head_y, dw = w / head_z;
        const double angle = std::atan2(dv, du);
        double modulation = 1.0;
        for (std::size_t i = 0; i < lobe_amp.size(); ++i) {
          modulation += lobe_amp[i] * std::sin(static_cast<double>(i + 2) * angle + lobe_phase[i]);
        }
        const double rho = std::sqrt(du * du + dv * dv + dw * dw) / modulation;
        if (rho > 1.0) continue;

        Region region;
        if (rho > scalp) {
          region = kFat;
        } else if (rho > skull) {
          region = kMuscle;
        } else if (rho > cortex) {
          region = kCsf;
        } else if (ventricles[0].contains(u, v, w) || ventricles[1].contains(u, v, w)) {
          region = kCsf;
        } else if (deep_gray[0].contains(u, v, w) || deep_gray[1].contains(u, v, w)) {
          region = kDeepGray;
        } else if (rho < white_core + 0.14 * folds(u, v, w)) {
          region = kWhite;
        } else {
          region = kGray;
        }
        const std::size_t cls = static_cast<std::size_t>(region) % n_tissues;
        const std::size_t i = (z * height + y) * width + x;
        maps.tissue[i] = static_cast<std::uint8_t>(cls);
        maps.pd[i] = subject[cls].pd * (1.0 + kIntraClass * pd_var(u, v, w));
        maps.t1[i] = subject[cls].t1_ms * (1.0 + kIntraClass * t1_var(u, v, w));
        maps.t2[i] = subject[cls].t2_ms * (1.0 + kIntraClass * t2_var(u, v, w));
      }
    }
  }
  return maps;
}

double signal_equation(double pd, double t1_ms, double t2_ms, const Protocol& protocol) {
  if (pd <= 0.0) return 0.0;
  return pd * (1.0 - std::exp(-protocol.tr_ms / t1_ms)) * std::exp(-protocol.te_ms / t2_ms);
}

Volume render_contrast(const TissueMaps& maps, const Protocol& protocol, double noise_amplitude,
                       std::uint64_t noise_seed) {
  if (!(protocol.tr_ms > 0.0) || protocol.te_ms < 0.0) throw ConfigError("render_contrast: invalid TR/TE");
  if (noise_amplitude < 0.0) throw ConfigError("render_contrast: negative noise amplitude");
  Volume out(maps.depth, maps.height, maps.width, protocol.label);
  double in_mask = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < out.voxels.size(); ++i) {
    out.voxels[i] = signal_equation(maps.pd[i], maps.t1[i], maps.t2[i], protocol);
    if (maps.pd[i] > 0.0) {
      in_mask += out.voxels[i];
      ++count;
    }
  }
  if (noise_amplitude > 0.0 && count > 0) {
    const double sigma = noise_amplitude * in_mask / static_cast<double>(count);
    Rng rng(Rng::derive(noise_seed, static_cast<std::uint64_t>(protocol.label) + 100));
    for (double& s : out.voxels) s += rng.normal(0.0, sigma);
  }
  return out;
}

Volume mean_normalize(const Volume& v, std::span<const std::uint8_t> mask) {
  if (mask.size() != v.voxels.size()) throw DataError("mean_normalize: mask size does not match volume");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      total += v.voxels[i];
      ++count;
    }
  }
  if (count == 0) throw DataError("mean_normalize: empty brain mask");
  const double mean = total / static_cast<double>(count);
  if (mean == 0.0 || !std::isfinite(mean)) throw DataError("mean_normalize: in-mask mean is zero");
  Volume out = v;
  for (double& s : out.voxels) s /= mean;
  return out;
}

PooledStats pooled_stats(std::span<const Volume> mean_normalized, std::span<const std::vector<std::uint8_t>> masks) {
  if (mean_normalized.size() != masks.size() || mean_normalized.empty()) {
    throw DataError("pooled_stats: need one mask per volume and at least one volume");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    for (std::size_t i = 0; i < masks[k].size(); ++i) {
      if (masks[k][i]) {
        total += mean_normalized[k].voxels[i];
        ++count;
      }
    }
  }
  if (count == 0) throw DataError("pooled_stats: empty masks");
  const double mean = total / static_cast<double>(count);
  double var = 0.0;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    for (std::size_t i = 0; i < masks[k].size(); ++i) {
      if (masks[k][i]) {
        const double d = mean_normalized[k].voxels[i] - mean;
        var += d * d;
      }
    }
  }
  return {mean, std::sqrt(var / static_cast<double>(count))};
}

Volume normalize_volume(const Volume& v, std::span<const std::uint8_t> mask, const PooledStats& pooled) {
  const double ceiling = pooled.mean + 3.0 * pooled.stddev;
  if (!(ceiling > 0.0)) throw DataError("normalize_volume: non-positive intensity ceiling");
  Volume out = mean_normalize(v, mask);
  for (double& s : out.voxels) s = std::clamp(s / ceiling, 0.0, 1.0);
  return out;
}

Volume apply_rigid(const Volume& v, const RigidParams& params, bool inverse) {
  Volume out = v;
  if (params.rotation_deg == 0.0 && params.shift_x == 0.0 && params.shift_y == 0.0) return out;
  const double theta = params.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cx = (static_cast<double>(v.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(v.height) - 1.0) / 2.0;
  for (std::size_t z = 0; z < v.depth; ++z) {
    const auto src = v.slice(z);
    auto dst = out.slice(z);
    for (std::size_t y = 0; y < v.height; ++y) {
      for (std::size_t x = 0; x < v.width; ++x) {
        const double px = static_cast<double>(x), py = static_cast<double>(y);
        double sx, sy;
        if (!inverse) {
          // forward map p' = R(p - c) + c + t, so sample at R^T(p' - c - t) + c
          const double qx = px - cx - params.shift_x, qy = py - cy - params.shift_y;
          sx = c * qx + s * qy + cx;
          sy = -s * qx + c * qy + cy;
        } else {
          const double qx = px - cx, qy = py - cy;
          sx = c * qx - s * qy + cx + params.shift_x;
          sy = s * qx + c * qy + cy + params.shift_y;
        }
        dst[y * v.width + x] = bilinear(src, v.height, v.width, sy, sx);
      }
    }
  }
  return out;
}

Volume misalign(const Volume& v, std::uint64_t seed, double max_rot_deg, double max_shift_vox) {
  if (max_rot_deg < 0.0 || max_shift_vox < 0.0) throw ConfigError("misalign: bounds must be non-negative");
  Rng rng(Rng::derive(seed, 7));
  RigidParams p;
  p.rotation_deg = rng.uniform(-max_rot_deg, max_rot_deg);
  p.shift_x = rng.uniform(-max_shift_vox, max_shift_vox);
  p.shift_y = rng.uniform(-max_shift_vox, max_shift_vox);
  Volume out = apply_rigid(v, p);
  out.misaligned = true;
  out.rigid = p;
  return out;
}

std::vector<std::size_t> stack_indices(std::size_t center, std::size_t k, std::size_t depth) {
  if (k == 0 || k % 2 == 0) throw ConfigError("slice stack size k must be odd, got " + std::to_string(k));
  if (center >= depth) throw UsageError("stack_indices: center outside volume");
  std::vector<std::size_t> idx;
  const long half = static_cast<long>(k / 2);
  for (long off = -half; off <= half; ++off) {
    const long z = std::clamp(static_cast<long>(center) + off, 0L, static_cast<long>(depth) - 1);
    idx.push_back(static_cast<std::size_t>(z));
  }
  return idx;
}

void pad_slice_into(std::span<const double> slice, std::size_t height, std::size_t width, std::size_t image_size,
                    std::span<double> out) {
  if (height > image_size || width > image_size) {
    throw ConfigError("slice " + std::to_string(height) + "x" + std::to_string(width) + " exceeds image size " +
                      std::to_string(image_size));
  }
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t top = (image_size - height) / 2, left = (image_size - width) / 2;
  for (std::size_t y = 0; y < height; ++y) {
    std::copy_n(slice.begin() + static_cast<long>(y * width), width,
                out.begin() + static_cast<long>((top + y) * image_size + left));
  }
}

std::vector<SliceSample> extract_slices(const Volume& source, const Volume& target, std::size_t k, SampleMode mode,
                                        std::size_t image_size, std::uint64_t subject) {
  if (!source.same_dims(target)) throw DataError("extract_slices: source and target dimensions differ");
  const std::size_t plane = image_size * image_size;
  const std::size_t target_slices = mode == SampleMode::kPgan ? 1 : k;
  std::vector<SliceSample> samples;
  samples.reserve(source.depth);
  for (std::size_t z = 0; z < source.depth; ++z) {
    SliceSample s;
    s.k = k;
    s.image_size = image_size;
    s.center = z;
    s.subject = subject;
    s.target_slices = target_slices;
    const auto idx = stack_indices(z, k, source.depth);
    s.source.resize(k * plane);
    s.target.resize(target_slices * plane);
    for (std::size_t i = 0; i < k; ++i) {
      pad_slice_into(source.slice(idx[i]), source.height, source.width, image_size,
                     std::span<double>(s.source).subspan(i * plane, plane));
    }
    if (mode == SampleMode::kPgan) {
      pad_slice_into(target.slice(z), target.height, target.width, image_size, s.target);
    } else {
      for (std::size_t i = 0; i < k; ++i) {
        pad_slice_into(target.slice(idx[i]), target.height, target.width, image_size,
                       std::span<double>(s.target).subspan(i * plane, plane));
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

SplitManifest split_dataset(std::span<const std::uint64_t> subjects, double train_fraction, std::uint64_t seed) {
  if (subjects.size() < 2) throw DataError("split_dataset: need at least 2 subjects");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split_dataset: fraction must lie in (0,1)");
  const std::size_t n = subjects.size();
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::derive(seed, 11));
  for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<bool> is_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = true;
  SplitManifest out;
  for (std::size_t i = 0; i < n; ++i) (is_train[i] ? out.train : out.test).push_back(subjects[i]);
  return out;
}

}  // namespace contrastforge
