#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>

#include "garlic/hyperparams.hpp"

namespace garlic {

/// Everything a CLI run needs: hyperparameters, file paths, and execution
/// controls. Text form:
///
///   [hyperparams]
///   tau = 3
///   [run]
///   data = base.fvecs
///   deterministic = true
struct RunConfig {
  HyperParams hp;
  std::map<std::string, std::string> paths;  // keys from kPathKeys
  bool deterministic = false;
  std::uint64_t threads = 0;  // 0: hardware default

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline constexpr std::string_view kPathKeys[] = {"data", "queries", "gt", "labels", "query_labels", "index", "out", "log"};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool parse_bool(std::string_view s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return out = false, true;
  return false;
}

template <typename F>
bool parse_field(std::string_view text, F& out) {
  if constexpr (std::is_same_v<F, double>) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) return false;
    out = v;
    return true;
  } else if constexpr (std::is_same_v<F, std::uint64_t>) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) return false;
    out = v;
    return true;
  } else if constexpr (std::is_same_v<F, bool>) {
    return parse_bool(text, out);
  } else {
    return parse_enum(text, out);
  }
}

template <typename F>
std::string format_field(const F& v) {
  if constexpr (std::is_same_v<F, double>) {
    return format_real(v);
  } else if constexpr (std::is_same_v<F, std::uint64_t>) {
    return std::to_string(v);
  } else if constexpr (std::is_same_v<F, bool>) {
    return v ? "true" : "false";
  } else {
    return std::string(to_string(v));
  }
}

}  // namespace detail

/// Sets one hyperparameter by name. Throws ConfigError for unknown names or
/// unparseable values.
inline void set_hyperparam(HyperParams& hp, std::string_view name, std::string_view value) {
  bool found = false;
  HyperParams::visit(hp, [&](std::string_view field, auto& v) {
    if (field != name) return;
    found = true;
    if (!detail::parse_field(value, v))
      throw ConfigError("bad value '" + std::string(value) + "' for " + std::string(name));
  });
  if (!found) throw ConfigError("unknown hyperparameter '" + std::string(name) + "'");
}

inline bool is_hyperparam(std::string_view name) {
  bool found = false;
  HyperParams hp;
  HyperParams::visit(hp, [&](std::string_view field, const auto&) { found = found || field == name; });
  return found;
}

inline void set_run_key(RunConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "deterministic") {
    if (!detail::parse_bool(value, cfg.deterministic)) throw ConfigError("bad value for deterministic");
  } else if (key == "threads") {
    if (!detail::parse_field(value, cfg.threads)) throw ConfigError("bad value for threads");
  } else if (std::find(std::begin(kPathKeys), std::end(kPathKeys), key) != std::end(kPathKeys)) {
    cfg.paths[std::string(key)] = std::string(value);
  } else {
    throw ConfigError("unknown run key '" + std::string(key) + "'");
  }
}

inline RunConfig parse_config(std::string_view text, RunConfig cfg = {}) {
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const std::string line = detail::trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      if (section != "hyperparams" && section != "run") throw ConfigError(where + "unknown section '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) throw ConfigError(where + "key outside a section");
    try {
      if (section == "hyperparams") set_hyperparam(cfg.hp, key, value);
      else set_run_key(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  try {
    cfg.hp.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

/// Text form that parse_config reads back to an equal RunConfig.
inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[hyperparams]\n";
  HyperParams::visit(cfg.hp, [&](std::string_view name, const auto& v) { os << name << " = " << detail::format_field(v) << '\n'; });
  os << "\n[run]\n";
  os << "deterministic = " << (cfg.deterministic ? "true" : "false") << '\n';
  os << "threads = " << cfg.threads << '\n';
  for (const auto& [k, v] : cfg.paths) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace garlic
