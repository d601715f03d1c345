#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include <toml.hpp>

#include "fsr/tensor.hpp"

namespace fsr {

/// Errors in config text; messages name the source and line.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// TOML document read as `[section]` tables of scalar or flat-array values. Keys before any
/// header live in section "".
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<config>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  bool has_section(const std::string& section) const;

  double number(const std::string& section, const std::string& key, double fallback) const;
  std::size_t count(const std::string& section, const std::string& key, std::size_t fallback) const;
  std::string string(const std::string& section, const std::string& key, const std::string& fallback) const;
  bool boolean(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> numbers(const std::string& section, const std::string& key,
                              const std::vector<double>& fallback) const;

  /// Throws naming the first key of `section` outside `known`.
  void check_keys(const std::string& section, std::initializer_list<const char*> known) const;
  /// Throws naming the first section outside `known`.
  void check_sections(std::initializer_list<const char*> known) const;

  /// Replaces one value; `raw` is TOML value text such as `20` or `"l2"`.
  void set(const std::string& section, const std::string& key, const std::string& raw);

 private:
  const toml::node* find(const std::string& section, const std::string& key) const;
  [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& what) const;

  std::string origin_;
  toml::table root_;
};

}  // namespace fsr
