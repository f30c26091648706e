// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <boost/property_tree/ptree.hpp>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

// Sectioned key = value text used by configs and dataset manifests. Parsing
// is delegated to Boost.PropertyTree; writing is done here so that output is
// byte-stable (fixed key order, shortest round-trip doubles).

namespace contrastforge::ini {

using Tree = boost::property_tree::ptree;

std::string format_double(double v);

class Writer {
 public:
  Writer& section(const std::string& name);
  Writer& set(const std::string& key, const std::string& value);
  Writer& set(const std::string& key, const char* value) { return set(key, std::string(value)); }
  Writer& set(const std::string& key, double value) { return set(key, format_double(value)); }
  Writer& set(const std::string& key, std::uint64_t value) { return set(key, std::to_string(value)); }
  Writer& set(const std::string& key, int value) { return set(key, std::to_string(value)); }
  Writer& set(const std::string& key, bool value) { return set(key, std::string(value ? "true" : "false")); }
  std::string str() const { return text_; }

 private:
  std::string text_;
};

/// Throws ConfigError (with `origin`) on malformed input.
Tree parse(const std::string& text, const std::string& origin);

/// Lookup of "section.key"; nullopt when absent.
std::optional<std::string> find(const Tree& tree, const std::string& section, const std::string& key);

// Typed getters; throw ConfigError naming the key when missing or malformed.
std::string get_string(const Tree& tree, const std::string& section, const std::string& key);
double get_double(const Tree& tree, const std::string& section, const std::string& key);
std::uint64_t get_u64(const Tree& tree, const std::string& section, const std::string& key);
bool get_bool(const Tree& tree, const std::string& section, const std::string& key);

double parse_double(const std::string& text, const std::string& what);
std::uint64_t parse_u64(const std::string& text, const std::string& what);
bool parse_bool(const std::string& text, const std::string& what);

}  // namespace contrastforge::ini
