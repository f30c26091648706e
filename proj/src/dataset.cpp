// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/dataset.hpp"

#include <cstdio>

#include "contrastforge/errors.hpp"
#include "contrastforge/ini.hpp"
#include "contrastforge/rng.hpp"
#include "contrastforge/volume_io.hpp"

namespace contrastforge {
namespace {

constexpr const char* kFormat = "contrastforge-dataset-1";

std::string noise_target_name(NoiseTarget t) {
  switch (t) {
    case NoiseTarget::kT1w:
      return "t1w";
    case NoiseTarget::kT2w:
      return "t2w";
    case NoiseTarget::kBoth:
      return "both";
  }
  return "t1w";
}

NoiseTarget parse_noise_target(const std::string& s) {
  if (s == "t1w") return NoiseTarget::kT1w;
  if (s == "t2w") return NoiseTarget::kT2w;
  if (s == "both") return NoiseTarget::kBoth;
  throw ConfigError("noise target must be t1w, t2w or both, got '" + s + "'");
}

std::string subject_section(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "subject_%03zu", index);
  return buf;
}

bool noisy(NoiseTarget t, Contrast c) {
  return t == NoiseTarget::kBoth || (t == NoiseTarget::kT1w && c == Contrast::kT1w) ||
         (t == NoiseTarget::kT2w && c == Contrast::kT2w);
}

}  // namespace

void DatasetSpec::validate() const {
  if (subjects < 2) throw ConfigError("dataset: need at least 2 subjects");
  if (size < 16 || slices < 16) throw ConfigError("dataset: size and slices must be >= 16");
  if (n_tissues < 2 || n_tissues > kMaxTissues) throw ConfigError("dataset: n_tissues out of range");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("dataset: train_fraction must lie in (0,1)");
  if (max_rotation_deg < 0.0 || max_shift_vox < 0.0) throw ConfigError("dataset: negative misalignment bound");
  if (noise < 0.0) throw ConfigError("dataset: negative noise amplitude");
}

std::vector<const SubjectRecord*> Manifest::role(bool train) const {
  std::vector<const SubjectRecord*> out;
  for (const auto& s : subjects) {
    if (s.train == train) out.push_back(&s);
  }
  return out;
}

std::vector<const SubjectVolumes*> Dataset::role(bool train) const {
  std::vector<const SubjectVolumes*> out;
  for (const auto& s : subjects) {
    if (s.record.train == train) out.push_back(&s);
  }
  return out;
}

std::string Manifest::to_text() const {
  ini::Writer w;
  w.section("dataset")
      .set("format", kFormat)
      .set("subjects", static_cast<std::uint64_t>(spec.subjects))
      .set("size", static_cast<std::uint64_t>(spec.size))
      .set("slices", static_cast<std::uint64_t>(spec.slices))
      .set("n_tissues", static_cast<std::uint64_t>(spec.n_tissues))
      .set("seed", spec.seed)
      .set("train_fraction", spec.train_fraction)
      .set("misaligned", spec.misalign)
      .set("max_rotation_deg", spec.max_rotation_deg)
      .set("max_shift_vox", spec.max_shift_vox)
      .set("noise", spec.noise)
      .set("noise_contrast", noise_target_name(spec.noise_target));
  w.section("protocol_t1w").set("tr_ms", kT1wProtocol.tr_ms).set("te_ms", kT1wProtocol.te_ms);
  w.section("protocol_t2w").set("tr_ms", kT2wProtocol.tr_ms).set("te_ms", kT2wProtocol.te_ms);
  w.section("normalization_t1w").set("pooled_mean", t1w_stats.mean).set("pooled_std", t1w_stats.stddev);
  w.section("normalization_t2w").set("pooled_mean", t2w_stats.mean).set("pooled_std", t2w_stats.stddev);
  for (const auto& s : subjects) {
    w.section(subject_section(s.index))
        .set("seed", s.seed)
        .set("role", s.train ? "train" : "test")
        .set("t1w", s.t1w_file)
        .set("t2w", s.t2w_file)
        .set("misaligned", s.misaligned)
        .set("rotation_deg", s.rigid.rotation_deg)
        .set("shift_x", s.rigid.shift_x)
        .set("shift_y", s.rigid.shift_y);
  }
  return w.str();
}

Manifest Manifest::parse(const std::string& text, const std::filesystem::path& root) {
  const auto tree = ini::parse(text, (root / kManifestName).string());
  if (ini::get_string(tree, "dataset", "format") != kFormat) {
    throw DataError("manifest: unsupported format in " + root.string());
  }
  Manifest m;
  m.root = root;
  auto& s = m.spec;
  s.subjects = ini::get_u64(tree, "dataset", "subjects");
  s.size = ini::get_u64(tree, "dataset", "size");
  s.slices = ini::get_u64(tree, "dataset", "slices");
  s.n_tissues = ini::get_u64(tree, "dataset", "n_tissues");
  s.seed = ini::get_u64(tree, "dataset", "seed");
  s.train_fraction = ini::get_double(tree, "dataset", "train_fraction");
  s.misalign = ini::get_bool(tree, "dataset", "misaligned");
  s.max_rotation_deg = ini::get_double(tree, "dataset", "max_rotation_deg");
  s.max_shift_vox = ini::get_double(tree, "dataset", "max_shift_vox");
  s.noise = ini::get_double(tree, "dataset", "noise");
  s.noise_target = parse_noise_target(ini::get_string(tree, "dataset", "noise_contrast"));
  m.t1w_stats = {ini::get_double(tree, "normalization_t1w", "pooled_mean"),
                 ini::get_double(tree, "normalization_t1w", "pooled_std")};
  m.t2w_stats = {ini::get_double(tree, "normalization_t2w", "pooled_mean"),
                 ini::get_double(tree, "normalization_t2w", "pooled_std")};
  for (std::size_t i = 0; i < s.subjects; ++i) {
    const std::string sec = subject_section(i);
    SubjectRecord r;
    r.index = i;
    r.seed = ini::get_u64(tree, sec, "seed");
    const std::string role = ini::get_string(tree, sec, "role");
    if (role != "train" && role != "test") throw DataError("manifest: bad role '" + role + "' in " + sec);
    r.train = role == "train";
    r.t1w_file = ini::get_string(tree, sec, "t1w");
    r.t2w_file = ini::get_string(tree, sec, "t2w");
    r.misaligned = ini::get_bool(tree, sec, "misaligned");
    r.rigid = {ini::get_double(tree, sec, "rotation_deg"), ini::get_double(tree, sec, "shift_x"),
               ini::get_double(tree, sec, "shift_y")};
    m.subjects.push_back(r);
  }
  return m;
}

Dataset build_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.manifest.spec = spec;

  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < spec.subjects; ++i) seeds.push_back(Rng::derive(spec.seed, 1000 + i));
  const SplitManifest split = split_dataset(seeds, spec.train_fraction, spec.seed);
  std::vector<bool> is_train(spec.subjects, false);
  for (std::size_t i = 0, j = 0; i < spec.subjects && j < split.train.size(); ++i) {
    if (seeds[i] == split.train[j]) {
      is_train[i] = true;
      ++j;
    }
  }

  // Render, then per-subject mean normalization; the 3-sigma ceiling is pooled
  // over training subjects only and reused for test subjects.
  struct Raw {
    Volume t1w, t2w;
    std::vector<std::uint8_t> mask;
  };
  std::vector<Raw> raw(spec.subjects);
  for (std::size_t i = 0; i < spec.subjects; ++i) {
    const TissueMaps maps = generate_phantom(seeds[i], {spec.slices, spec.size, spec.size}, spec.n_tissues);
    raw[i].mask = maps.mask();
    raw[i].t1w = render_contrast(maps, kT1wProtocol, noisy(spec.noise_target, Contrast::kT1w) ? spec.noise : 0.0,
                                 seeds[i]);
    raw[i].t2w = render_contrast(maps, kT2wProtocol, noisy(spec.noise_target, Contrast::kT2w) ? spec.noise : 0.0,
                                 seeds[i]);
  }
  for (Contrast c : {Contrast::kT1w, Contrast::kT2w}) {
    std::vector<Volume> normalized;
    std::vector<std::vector<std::uint8_t>> masks;
    for (std::size_t i = 0; i < spec.subjects; ++i) {
      if (!is_train[i]) continue;
      normalized.push_back(mean_normalize(c == Contrast::kT1w ? raw[i].t1w : raw[i].t2w, raw[i].mask));
      masks.push_back(raw[i].mask);
    }
    (c == Contrast::kT1w ? ds.manifest.t1w_stats : ds.manifest.t2w_stats) = pooled_stats(normalized, masks);
  }

  for (std::size_t i = 0; i < spec.subjects; ++i) {
    SubjectVolumes sv;
    sv.record.index = i;
    sv.record.seed = seeds[i];
    sv.record.train = is_train[i];
    char name[48];
    std::snprintf(name, sizeof(name), "subject_%03zu_t1w.cfv", i);
    sv.record.t1w_file = name;
    std::snprintf(name, sizeof(name), "subject_%03zu_t2w.cfv", i);
    sv.record.t2w_file = name;
    sv.t1w = normalize_volume(raw[i].t1w, raw[i].mask, ds.manifest.t1w_stats);
    sv.t2w = normalize_volume(raw[i].t2w, raw[i].mask, ds.manifest.t2w_stats);
    if (spec.misalign) {
      sv.t2w = misalign(sv.t2w, seeds[i], spec.max_rotation_deg, spec.max_shift_vox);
      sv.record.misaligned = true;
      sv.record.rigid = sv.t2w.rigid;
    }
    ds.manifest.subjects.push_back(sv.record);
    ds.subjects.push_back(std::move(sv));
  }
  return ds;
}

Dataset generate_dataset(const DatasetSpec& spec, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": " + ec.message());
  Dataset ds = build_dataset(spec);
  ds.manifest.root = dir;
  for (const auto& s : ds.subjects) {
    write_volume(dir / s.record.t1w_file, s.t1w);
    write_volume(dir / s.record.t2w_file, s.t2w);
  }
  write_file_text(dir / kManifestName, ds.manifest.to_text());
  return ds;
}

Manifest read_manifest(const std::filesystem::path& manifest_path) {
  const auto bytes = read_file_bytes(manifest_path);
  return Manifest::parse(std::string(bytes.begin(), bytes.end()), manifest_path.parent_path());
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  Dataset ds;
  ds.manifest = read_manifest(manifest_path);
  for (const auto& r : ds.manifest.subjects) {
    SubjectVolumes sv;
    sv.record = r;
    sv.t1w = read_volume(ds.manifest.root / r.t1w_file);
    sv.t2w = read_volume(ds.manifest.root / r.t2w_file);
    if (sv.t1w.contrast != Contrast::kT1w || sv.t2w.contrast != Contrast::kT2w) {
      throw DataError(ds.manifest.root.string() + ": contrast tags do not match manifest for subject " +
                      std::to_string(r.index));
    }
    ds.subjects.push_back(std::move(sv));
  }
  return ds;
}

}  // namespace contrastforge
