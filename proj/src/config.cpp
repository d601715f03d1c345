#include "fsr/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fsr/io.hpp"

namespace fsr {

namespace {

std::string line_of(const toml::source_region& r) { return std::to_string(r.begin.line); }

std::string show(const toml::node& n) {
  std::ostringstream s;
  n.visit([&](const auto& v) { s << v; });
  return s.str();
}

std::optional<double> as_number(const toml::node& n) {
  if (const auto i = n.value_exact<std::int64_t>()) return double(*i);
  return n.value_exact<double>();
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  try {
    cfg.root_ = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    throw ConfigError(origin + ":" + line_of(e.source()) + ": " + std::string(e.description()));
  }
  for (const auto& [name, node] : cfg.root_) {
    const auto* table = node.as_table();
    if (!table) continue;
    for (const auto& [key, value] : *table) {
      if (value.is_table() || value.is_array_of_tables()) {
        throw ConfigError(origin + ":" + line_of(value.source()) + ": nested table [" + std::string(name.str()) + "." +
                          std::string(key.str()) + "] is not supported");
      }
    }
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

bool Config::has_section(const std::string& section) const {
  return section.empty() ? !root_.empty() : root_[section].is_table();
}

const toml::node* Config::find(const std::string& section, const std::string& key) const {
  if (section.empty()) {
    const toml::node* n = root_.get(key);
    return n && !n->is_table() ? n : nullptr;
  }
  const auto* table = root_[section].as_table();
  return table ? table->get(key) : nullptr;
}

void Config::fail(const std::string& section, const std::string& key, const std::string& what) const {
  const toml::node* n = find(section, key);
  throw ConfigError(origin_ + ":" + (n ? line_of(n->source()) : "0") + ": [" + section + "] " + key + ": " + what);
}

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

double Config::number(const std::string& section, const std::string& key, double fallback) const {
  const toml::node* n = find(section, key);
  if (!n) return fallback;
  const auto v = as_number(*n);
  if (!v) fail(section, key, "expected a number, got " + show(*n));
  return *v;
}

std::size_t Config::count(const std::string& section, const std::string& key, std::size_t fallback) const {
  if (!has(section, key)) return fallback;
  const double v = number(section, key, 0.0);
  if (v < 0.0 || v != std::floor(v)) fail(section, key, "expected a non-negative integer");
  return std::size_t(v);
}

std::string Config::string(const std::string& section, const std::string& key, const std::string& fallback) const {
  const toml::node* n = find(section, key);
  if (!n) return fallback;
  const auto v = n->value_exact<std::string>();
  if (!v) fail(section, key, "expected a string, got " + show(*n));
  return *v;
}

bool Config::boolean(const std::string& section, const std::string& key, bool fallback) const {
  const toml::node* n = find(section, key);
  if (!n) return fallback;
  const auto v = n->value_exact<bool>();
  if (!v) fail(section, key, "expected true or false, got " + show(*n));
  return *v;
}

std::vector<double> Config::numbers(const std::string& section, const std::string& key,
                                    const std::vector<double>& fallback) const {
  const toml::node* n = find(section, key);
  if (!n) return fallback;
  const auto* array = n->as_array();
  if (!array) fail(section, key, "expected [a, b, ...], got " + show(*n));
  std::vector<double> out;
  for (const auto& item : *array) {
    const auto v = as_number(item);
    if (!v) fail(section, key, "expected a number, got " + show(item));
    out.push_back(*v);
  }
  return out;
}

void Config::check_keys(const std::string& section, std::initializer_list<const char*> known) const {
  const auto* table = root_[section].as_table();
  if (!table) return;
  for (const auto& [key, value] : *table) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key.str() == k; })) {
      throw ConfigError(origin_ + ":" + line_of(value.source()) + ": unknown key '" + std::string(key.str()) + "' in [" +
                        section + "]");
    }
  }
}

void Config::check_sections(std::initializer_list<const char*> known) const {
  for (const auto& [name, node] : root_) {
    if (!node.is_table()) continue;
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return name.str() == k; })) {
      throw ConfigError(origin_ + ": unknown section [" + std::string(name.str()) + "]");
    }
  }
}

void Config::set(const std::string& section, const std::string& key, const std::string& raw) {
  toml::table parsed;
  try {
    parsed = toml::parse(std::string_view("v = " + raw), std::string_view("<override>"));
  } catch (const toml::parse_error& e) {
    throw ConfigError("override [" + section + "] " + key + ": " + std::string(e.description()));
  }
  toml::table* target = &root_;
  if (!section.empty()) {
    if (!root_[section].is_table()) root_.insert_or_assign(section, toml::table{});
    target = root_[section].as_table();
  }
  parsed["v"].visit([&](const auto& v) { target->insert_or_assign(key, v); });
}

}  // namespace fsr
