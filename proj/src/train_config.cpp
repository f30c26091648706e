// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/train_config.hpp"

#include <functional>
#include <map>

#include "contrastforge/errors.hpp"
#include "contrastforge/ini.hpp"

namespace contrastforge {
namespace {

struct Key {
  const char* section;
  const char* name;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

std::string u64_str(std::uint64_t v) { return std::to_string(v); }

std::size_t as_size(const std::string& v, const std::string& what) {
  return static_cast<std::size_t>(ini::parse_u64(v, what));
}

int as_int(const std::string& v, const std::string& what) {
  const auto n = ini::parse_u64(v, what);
  if (n > 1000000) throw ConfigError(what + ": value too large");
  return static_cast<int>(n);
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"run", "mode", [](const TrainConfig& c) { return mode_name(c.mode); },
       [](TrainConfig& c, const std::string& v, const std::string&) { c.mode = parse_mode(v); }},
      {"run", "manifest", [](const TrainConfig& c) { return c.manifest; },
       [](TrainConfig& c, const std::string& v, const std::string&) { c.manifest = v; }},
      {"run", "source", [](const TrainConfig& c) { return contrast_name(c.source); },
       [](TrainConfig& c, const std::string& v, const std::string&) { c.source = parse_contrast(v); }},
      {"run", "target", [](const TrainConfig& c) { return contrast_name(c.target); },
       [](TrainConfig& c, const std::string& v, const std::string&) { c.target = parse_contrast(v); }},
      {"run", "k", [](const TrainConfig& c) { return u64_str(c.k); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.k = as_size(v, w); }},
      {"run", "image_size", [](const TrainConfig& c) { return u64_str(c.image_size); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.image_size = as_size(v, w); }},
      {"run", "epochs", [](const TrainConfig& c) { return std::to_string(c.epochs); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.epochs = as_int(v, w); }},
      {"run", "seed", [](const TrainConfig& c) { return u64_str(c.seed); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.seed = ini::parse_u64(v, w); }},
      {"run", "checkpoint_every", [](const TrainConfig& c) { return std::to_string(c.checkpoint_every); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.checkpoint_every = as_int(v, w); }},
      {"run", "unpaired_cross_subject", [](const TrainConfig& c) { return std::string(c.unpaired_cross_subject ? "true" : "false"); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.unpaired_cross_subject = ini::parse_bool(v, w); }},
      {"optim", "lr", [](const TrainConfig& c) { return ini::format_double(c.schedule.base_lr); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.schedule.base_lr = ini::parse_double(v, w); }},
      {"optim", "schedule_total_epochs", [](const TrainConfig& c) { return std::to_string(c.schedule.total_epochs); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.schedule.total_epochs = as_int(v, w); }},
      {"optim", "schedule_constant_epochs", [](const TrainConfig& c) { return std::to_string(c.schedule.constant_epochs); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.schedule.constant_epochs = as_int(v, w); }},
      {"optim", "beta1", [](const TrainConfig& c) { return ini::format_double(c.adam.beta1); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.adam.beta1 = ini::parse_double(v, w); }},
      {"optim", "beta2", [](const TrainConfig& c) { return ini::format_double(c.adam.beta2); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.adam.beta2 = ini::parse_double(v, w); }},
      {"optim", "eps", [](const TrainConfig& c) { return ini::format_double(c.adam.eps); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.adam.eps = ini::parse_double(v, w); }},
      {"loss", "lambda_pix", [](const TrainConfig& c) { return ini::format_double(c.weights.lambda_pix); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.weights.lambda_pix = ini::parse_double(v, w); }},
      {"loss", "lambda_cycle", [](const TrainConfig& c) { return ini::format_double(c.weights.lambda_cycle); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.weights.lambda_cycle = ini::parse_double(v, w); }},
      {"init", "stddev", [](const TrainConfig& c) { return ini::format_double(c.init_stddev); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.init_stddev = ini::parse_double(v, w); }},
      {"generator", "base_channels", [](const TrainConfig& c) { return u64_str(c.g_base); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.g_base = as_size(v, w); }},
      {"generator", "depth", [](const TrainConfig& c) { return u64_str(c.g_depth); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.g_depth = as_size(v, w); }},
      {"discriminator", "base_channels", [](const TrainConfig& c) { return u64_str(c.d_base); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.d_base = as_size(v, w); }},
      {"discriminator", "n_layers", [](const TrainConfig& c) { return u64_str(c.d_layers); },
       [](TrainConfig& c, const std::string& v, const std::string& w) { c.d_layers = as_size(v, w); }},
  };
  return table;
}

const Key& lookup(const std::string& section, const std::string& name, const std::string& origin) {
  for (const auto& k : keys()) {
    if (section == k.section && name == k.name) return k;
  }
  throw ConfigError(origin + ": unknown key [" + section + "] " + name);
}

const Key& lookup_override(const std::string& path) {
  const auto dot = path.find('.');
  if (dot != std::string::npos) return lookup(path.substr(0, dot), path.substr(dot + 1), "override");
  const Key* found = nullptr;
  for (const auto& k : keys()) {
    if (path != k.name) continue;
    if (found != nullptr) {
      throw ConfigError("override key '" + path + "' is ambiguous; use section." + path);
    }
    found = &k;
  }
  if (found == nullptr) throw ConfigError("override: unknown key '" + path + "'");
  return *found;
}

}  // namespace

std::string mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::kPgan:
      return "pgan";
    case TrainMode::kCganReg:
      return "cgan_reg";
    case TrainMode::kCganUnreg:
      return "cgan_unreg";
  }
  return "pgan";
}

TrainMode parse_mode(const std::string& s) {
  if (s == "pgan") return TrainMode::kPgan;
  if (s == "cgan_reg") return TrainMode::kCganReg;
  if (s == "cgan_unreg") return TrainMode::kCganUnreg;
  throw ConfigError("mode must be pgan, cgan_reg or cgan_unreg, got '" + s + "'");
}

void TrainConfig::validate() const {
  if (k == 0 || k % 2 == 0) throw ConfigError("k must be a positive odd number, got " + std::to_string(k));
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  schedule.validate();
  if (epochs > schedule.total_epochs) {
    throw ConfigError("epochs (" + std::to_string(epochs) + ") exceed the schedule length (" +
                      std::to_string(schedule.total_epochs) + ")");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (source == target || source == Contrast::kUnknown || target == Contrast::kUnknown) {
    throw ConfigError("source and target must be two different contrasts");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0,1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("adam eps must be positive");
  if (weights.lambda_pix < 0.0 || weights.lambda_cycle < 0.0) throw ConfigError("loss weights must be >= 0");
  if (!(init_stddev > 0.0)) throw ConfigError("init stddev must be positive");
  if (g_base == 0 || d_base == 0 || d_layers == 0) throw ConfigError("network widths and depths must be positive");
  if (g_depth < 2 || g_depth > 10 || image_size % (std::size_t{1} << g_depth) != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " must be divisible by 2^depth (depth " +
                      std::to_string(g_depth) + ")");
  }
  if (mode == TrainMode::kPgan && unpaired_cross_subject) {
    throw ConfigError("unpaired_cross_subject applies to cgan modes only");
  }
}

std::string TrainConfig::to_text() const {
  ini::Writer w;
  std::string current;
  for (const auto& k : keys()) {
    if (current != k.section) {
      current = k.section;
      w.section(current);
    }
    w.set(k.name, k.get(*this));
  }
  return w.str();
}

TrainConfig TrainConfig::parse(const std::string& text, const std::string& origin,
                               const std::vector<std::string>& overrides) {
  const auto tree = ini::parse(text, origin);
  TrainConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError(origin + ": key '" + section + "' outside a section");
    for (const auto& [name, value] : body) {
      const Key& k = lookup(section, name, origin);
      k.set(cfg, value.data(), origin + " [" + section + "] " + name);
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const Key& k = lookup_override(o.substr(0, eq));
    k.set(cfg, o.substr(eq + 1), "override " + o.substr(0, eq));
  }
  cfg.validate();
  return cfg;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t TrainConfig::hash() const { return fnv1a64(to_text()); }

}  // namespace contrastforge
