#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedrl/experiment.hpp"

namespace fedrl {

/// Malformed or invalid configuration. `line` is 0 when the problem is not
/// tied to a single line (cross-field validation).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, std::size_t line) {
  T value{};
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(text.data(), last, value);
  if (res.ec != std::errc() || res.ptr != last)
    throw ConfigError("key '" + key + "': cannot parse '" + text + "' as a number", line);
  return value;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text, std::size_t line) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto dots = item.find("..");
    if constexpr (std::is_integral_v<T>) {
      if (dots != std::string::npos) {
        const T lo = parse_number<T>(key, item.substr(0, dots), line);
        const T hi = parse_number<T>(key, item.substr(dots + 2), line);
        if (hi < lo) throw ConfigError("key '" + key + "': empty range '" + item + "'", line);
        for (T v = lo; v <= hi; ++v) out.push_back(v);
        continue;
      }
    }
    out.push_back(parse_number<T>(key, item, line));
  }
  return out;
}

/// A real in [0, 1].
inline double parse_unit_interval(const std::string& key, const std::string& v, std::size_t line) {
  const double x = parse_number<double>(key, v, line);
  if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("key '" + key + "': " + v + " is outside [0, 1]", line);
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v, std::size_t line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'", line);
}

}  // namespace detail

/// Map text as written in a config value: rows separated by '/'.
inline std::string map_from_config_value(std::string_view v) {
  std::string text(v);
  std::replace(text.begin(), text.end(), '/', '\n');
  return text;
}

/// Applies one key=value setting. Throws ConfigError for unknown keys and
/// unparsable values.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                          std::size_t line = 0) {
  using detail::parse_number;
  if (key == "scheme") {
    const auto k = parse_scheme(value);
    if (!k) throw ConfigError("key 'scheme': unknown scheme '" + value + "'", line);
    cfg.scheme = *k;
  } else if (key == "scenario") {
    const auto t = parse_scenario(value);
    if (!t) throw ConfigError("key 'scenario': unknown scenario '" + value + "'", line);
    cfg.scenario = *t;
  } else if (key == "n_agents") {
    cfg.n_agents = parse_number<std::size_t>(key, value, line);
  } else if (key == "total_steps") {
    cfg.total_steps = parse_number<std::size_t>(key, value, line);
  } else if (key == "h") {
    cfg.fed.h = parse_number<std::size_t>(key, value, line);
  } else if (key == "epsilon") {
    cfg.epsilon = detail::parse_unit_interval(key, value, line);
  } else if (key == "alpha") {
    cfg.alpha = parse_number<double>(key, value, line);
  } else if (key == "gamma") {
    cfg.gamma = parse_number<double>(key, value, line);
  } else if (key == "beta") {
    cfg.fed.beta = detail::parse_unit_interval(key, value, line);
  } else if (key == "p0") {
    cfg.fed.p0 = detail::parse_unit_interval(key, value, line);
  } else if (key == "delta") {
    cfg.fed.delta = detail::parse_unit_interval(key, value, line);
  } else if (key == "xi") {
    cfg.fed.xi = parse_number<double>(key, value, line);
  } else if (key == "eval_episodes") {
    cfg.fed.eval_episodes = parse_number<std::size_t>(key, value, line);
  } else if (key == "seeds") {
    cfg.seeds = detail::parse_list<std::uint64_t>(key, value, line);
  } else if (key == "groups") {
    cfg.groups = detail::parse_list<std::size_t>(key, value, line);
  } else if (key == "step_limit") {
    cfg.step_limit = parse_number<std::size_t>(key, value, line);
  } else if (key == "slippery") {
    cfg.slippery = detail::parse_bool(key, value, line);
  } else if (key == "map_seed") {
    cfg.map_seed = parse_number<std::uint64_t>(key, value, line);
  } else if (key == "q_init") {
    cfg.q_init = parse_number<double>(key, value, line);
  } else if (key == "q_init_spread") {
    cfg.q_init_spread = parse_number<double>(key, value, line);
  } else if (key == "tie_break") {
    if (value == "lowest") cfg.tie_break = TieBreak::Lowest;
    else if (value == "random") cfg.tie_break = TieBreak::Random;
    else throw ConfigError("key 'tie_break': expected lowest or random", line);
  } else if (key == "snapshot_rounds") {
    cfg.snapshot_rounds = detail::parse_list<std::size_t>(key, value, line);
  } else if (key == "trace_states") {
    cfg.trace_states = detail::parse_list<std::size_t>(key, value, line);
  } else if (key.size() > 3 && key.starts_with("map") &&
             std::all_of(key.begin() + 3, key.end(), [](unsigned char c) { return std::isdigit(c); })) {
    const std::size_t idx = parse_number<std::size_t>(key, key.substr(3), line);
    if (idx == 0) throw ConfigError("map keys start at map1", line);
    if (cfg.maps.size() < idx) cfg.maps.resize(idx);
    try {
      cfg.maps[idx - 1] = to_string(parse_layout(map_from_config_value(value)));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("key '" + key + "': " + e.what(), line);
    }
  } else {
    throw ConfigError("unknown key '" + key + "'", line);
  }
}

/// Validates a fully assembled config, rethrowing as ConfigError.
inline void check_config(const ExperimentConfig& cfg) {
  for (std::size_t k = 0; k < cfg.maps.size(); ++k)
    if (cfg.maps[k].empty() && cfg.scenario == ScenarioTag::Custom)
      throw ConfigError("key 'map" + std::to_string(k + 1) + "': missing map");
  try {
    validate(cfg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

/// Parses key=value text. Pairs are separated by newlines or whitespace;
/// '#' starts a comment. Unspecified keys keep their defaults.
inline ExperimentConfig parse_config_text(std::string_view text) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream tokens(raw);
    std::string tok;
    while (tokens >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ConfigError("expected key=value, got '" + tok + "'", line_no);
      apply_setting(cfg, tok.substr(0, eq), tok.substr(eq + 1), line_no);
    }
  }
  check_config(cfg);
  return cfg;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace fedrl
