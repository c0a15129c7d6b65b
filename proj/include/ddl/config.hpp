#ifndef DDL_CONFIG_HPP
#define DDL_CONFIG_HPP

// Flat "key = value" text for TrainConfig. '#' starts a comment that runs to
// the end of the line. Doubles are written with 17 significant digits so that a
// write/read cycle is exact.

#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ddl/errors.hpp"
#include "ddl/trainer.hpp"

namespace ddl {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

inline long long to_integer(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long n = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return n;
}

inline unsigned long long to_unsigned(const std::string& key, const std::string& v) {
  char* end = nullptr;
  if (!v.empty() && v[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return n;
}

}  // namespace detail

inline KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = detail::trim(t.substr(eq + 1));
  }
  return kv;
}

inline const char* init_name(InitKind k) { return k == InitKind::FromSamples ? "samples" : "gaussian"; }

inline InitKind parse_init(const std::string& s) {
  if (s == "samples") return InitKind::FromSamples;
  if (s == "gaussian") return InitKind::GaussianRandom;
  throw ConfigError("init: expected 'samples' or 'gaussian', got '" + s + "'");
}

/// Sets one TrainConfig field. Returns false for keys it does not know.
inline bool apply_config_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "k") {
    cfg.K = to_integer(key, value);
  } else if (key == "t") {
    cfg.T = static_cast<int>(to_integer(key, value));
  } else if (key == "loss") {
    try {
      cfg.loss.family = parse_loss(value).family;  // rho and eps are separate keys
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "rho") {
    cfg.loss.rho = to_double(key, value);
  } else if (key == "eps") {
    cfg.loss.eps = to_double(key, value);
  } else if (key == "q_max") {
    cfg.q_max = static_cast<int>(to_integer(key, value));
  } else if (key == "p_max") {
    cfg.p_max = static_cast<int>(to_integer(key, value));
  } else if (key == "dsc_stop_rel_change") {
    cfg.dsc_stop_rel_change = to_double(key, value);
  } else if (key == "stop_rel_change") {
    cfg.stop_rel_change = to_double(key, value);
  } else if (key == "ridge") {
    if (value == "default") {
      cfg.ridge.reset();
    } else {
      cfg.ridge = to_double(key, value);
    }
  } else if (key == "init") {
    cfg.init = parse_init(value);
  } else if (key == "seed") {
    cfg.seed = to_unsigned(key, value);
  } else if (key == "sigma_floor") {
    cfg.sigma_floor = to_double(key, value);
  } else if (key == "gamma_floor") {
    cfg.gamma_floor = to_double(key, value);
  } else if (key == "labeled_mask") {
    cfg.labeled_mask.clear();
    for (char c : value) {
      if (c != '0' && c != '1') throw ConfigError("labeled_mask: expected a string of 0 and 1");
      cfg.labeled_mask.push_back(static_cast<char>(c == '1'));
    }
  } else {
    return false;
  }
  return true;
}

/// Canonical text of every result-affecting field. Thread count is omitted
/// because it never changes results.
inline std::string config_to_text(const TrainConfig& cfg) {
  using detail::format_double;
  std::ostringstream out;
  out << "k = " << cfg.K << '\n'
      << "t = " << cfg.T << '\n'
      << "loss = " << loss_name(cfg.loss) << '\n'
      << "rho = " << format_double(cfg.loss.rho) << '\n'
      << "eps = " << format_double(cfg.loss.eps) << '\n'
      << "q_max = " << cfg.q_max << '\n'
      << "p_max = " << cfg.p_max << '\n'
      << "dsc_stop_rel_change = " << format_double(cfg.dsc_stop_rel_change) << '\n'
      << "stop_rel_change = " << format_double(cfg.stop_rel_change) << '\n'
      << "ridge = " << (cfg.ridge ? format_double(*cfg.ridge) : std::string("default")) << '\n'
      << "init = " << init_name(cfg.init) << '\n'
      << "seed = " << cfg.seed << '\n'
      << "sigma_floor = " << format_double(cfg.sigma_floor) << '\n'
      << "gamma_floor = " << format_double(cfg.gamma_floor) << '\n';
  if (!cfg.labeled_mask.empty()) {
    out << "labeled_mask = ";
    for (char c : cfg.labeled_mask) out << (c ? '1' : '0');
    out << '\n';
  }
  return out.str();
}

inline TrainConfig config_from_text(const std::string& text) {
  TrainConfig cfg;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (!apply_config_key(cfg, key, value)) throw ConfigError("unknown config key '" + key + "'");
  }
  return cfg;
}

}  // namespace ddl

#endif  // DDL_CONFIG_HPP
