// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/ini.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <charconv>
#include <sstream>

#include "contrastforge/errors.hpp"

namespace contrastforge::ini {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw UsageError("format_double: conversion failed");
  return std::string(buf, end);
}

Writer& Writer::section(const std::string& name) {
  if (!text_.empty()) text_ += '\n';
  text_ += '[' + name + "]\n";
  return *this;
}

Writer& Writer::set(const std::string& key, const std::string& value) {
  text_ += key + " = " + value + '\n';
  return *this;
}

Tree parse(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  Tree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  return tree;
}

std::optional<std::string> find(const Tree& tree, const std::string& section, const std::string& key) {
  auto sec = tree.get_child_optional(boost::property_tree::ptree::path_type(section, '\0'));
  if (!sec) return std::nullopt;
  auto value = sec->get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0'));
  if (!value) return std::nullopt;
  return *value;
}

std::string get_string(const Tree& tree, const std::string& section, const std::string& key) {
  auto v = find(tree, section, key);
  if (!v) throw ConfigError("missing key [" + section + "] " + key);
  return *v;
}

double parse_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(what + ": expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(what + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(what + ": expected true/false, got '" + text + "'");
}

double get_double(const Tree& tree, const std::string& section, const std::string& key) {
  return parse_double(get_string(tree, section, key), "[" + section + "] " + key);
}

std::uint64_t get_u64(const Tree& tree, const std::string& section, const std::string& key) {
  return parse_u64(get_string(tree, section, key), "[" + section + "] " + key);
}

bool get_bool(const Tree& tree, const std::string& section, const std::string& key) {
  return parse_bool(get_string(tree, section, key), "[" + section + "] " + key);
}

}  // namespace contrastforge::ini
