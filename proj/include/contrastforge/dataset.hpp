// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "contrastforge/phantom.hpp"

namespace contrastforge {

enum class NoiseTarget { kT1w, kT2w, kBoth };

/// Everything needed to regenerate a phantom dataset bit-for-bit.
struct DatasetSpec {
  std::size_t subjects = 50;
  std::size_t size = 64;    // in-plane height and width
  std::size_t slices = 16;  // axial depth
  std::size_t n_tissues = kMaxTissues;
  std::uint64_t seed = 1;
  double train_fraction = 0.8;
  bool misalign = false;  // misalign every T2w volume
  double max_rotation_deg = 5.0;
  double max_shift_vox = 3.0;
  double noise = 0.0;
  NoiseTarget noise_target = NoiseTarget::kT1w;

  void validate() const;
};

struct SubjectRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool train = true;
  std::string t1w_file;
  std::string t2w_file;
  bool misaligned = false;
  RigidParams rigid;
};

struct Manifest {
  DatasetSpec spec;
  PooledStats t1w_stats;
  PooledStats t2w_stats;
  std::vector<SubjectRecord> subjects;
  std::filesystem::path root;  // directory holding the volume files

  std::string to_text() const;
  static Manifest parse(const std::string& text, const std::filesystem::path& root);

  std::vector<const SubjectRecord*> role(bool train) const;
};

struct SubjectVolumes {
  SubjectRecord record;
  Volume t1w;
  Volume t2w;

  const Volume& get(Contrast c) const { return c == Contrast::kT1w ? t1w : t2w; }
};

/// Normalized volumes plus manifest, entirely in memory.
struct Dataset {
  Manifest manifest;
  std::vector<SubjectVolumes> subjects;

  std::vector<const SubjectVolumes*> role(bool train) const;
};

Dataset build_dataset(const DatasetSpec& spec);

/// Builds the dataset and writes volumes plus "manifest.ini" into `dir`.
Dataset generate_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

Manifest read_manifest(const std::filesystem::path& manifest_path);
Dataset load_dataset(const std::filesystem::path& manifest_path);

inline constexpr const char* kManifestName = "manifest.ini";

}  // namespace contrastforge
