#pragma once

// Serialization of NetworkConfig (JSON and key=value text), command-line
// overrides, and the shared output schema of ModelSolution and SimMetrics.

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pgpoll/core.hpp"
#include "pgpoll/sim.hpp"

namespace pgpoll {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// NetworkConfig fields

namespace detail {

struct IntField {
  const char* name;
  int NetworkConfig::*member;
};
struct RealField {
  const char* name;
  double NetworkConfig::*member;
};

inline constexpr std::array<IntField, 8> kIntFields{{
    {"n_ss", &NetworkConfig::n_ss},
    {"n_tos", &NetworkConfig::n_tos},
    {"n_slots", &NetworkConfig::n_slots},
    {"w0", &NetworkConfig::w0},
    {"m_exp", &NetworkConfig::m_exp},
    {"t16_frames", &NetworkConfig::t16_frames},
    {"max_retx", &NetworkConfig::max_retx},
    {"max_piggy", &NetworkConfig::max_piggy},
}};
inline constexpr std::array<RealField, 2> kRealFields{{
    {"lambda", &NetworkConfig::lambda},
    {"t_frame", &NetworkConfig::t_frame},
}};

// Short names accepted by overrides, mapped to field names. rho_in equals
// lambda because the frame is the time unit.
inline constexpr std::array<std::pair<std::string_view, std::string_view>, 10> kAliases{{
    {"N", "n_ss"},
    {"N_s", "n_tos"},
    {"L", "n_slots"},
    {"W0", "w0"},
    {"m", "m_exp"},
    {"M", "t16_frames"},
    {"D", "max_retx"},
    {"G", "max_piggy"},
    {"rho_in", "lambda"},
    {"T_fr", "t_frame"},
}};

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string_view canonical_key(std::string_view key) {
  for (const auto& [alias, name] : kAliases)
    if (key == alias) return name;
  return key;
}

inline int parse_int(std::string_view key, std::string_view text) {
  int v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end)
    throw ConfigError("config key '" + std::string(key) + "' expects an integer, got '" +
                      std::string(text) + "'");
  return v;
}

inline double parse_real(std::string_view key, std::string_view text) {
  const std::string s(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size())
    throw ConfigError("config key '" + std::string(key) + "' expects a number, got '" + s + "'");
  return v;
}

// Sets one field from its textual value; false when the key is unknown.
inline bool set_field(NetworkConfig& c, std::string_view key, std::string_view value) {
  for (const auto& f : kIntFields)
    if (key == f.name) {
      c.*f.member = parse_int(key, value);
      return true;
    }
  for (const auto& f : kRealFields)
    if (key == f.name) {
      c.*f.member = parse_real(key, value);
      return true;
    }
  return false;
}

/// Shortest text that parses back to the same double.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace detail

inline json to_json(const NetworkConfig& c) {
  json j;
  for (const auto& f : detail::kIntFields) j[f.name] = c.*f.member;
  for (const auto& f : detail::kRealFields) j[f.name] = c.*f.member;
  return j;
}

/// Starts from `base` and overwrites every key present in `j`. Unknown keys
/// and mistyped values throw ConfigError.
inline NetworkConfig config_from_json(const json& j, NetworkConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config JSON must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const auto& f : detail::kIntFields)
      if (key == f.name) {
        if (!value.is_number_integer())
          throw ConfigError("config key '" + key + "' expects an integer");
        base.*f.member = value.get<int>();
        known = true;
      }
    for (const auto& f : detail::kRealFields)
      if (key == f.name) {
        if (!value.is_number()) throw ConfigError("config key '" + key + "' expects a number");
        base.*f.member = value.get<double>();
        known = true;
      }
    if (!known) throw ConfigError("unknown config key '" + key + "'");
  }
  return base;
}

inline std::string to_kv(const NetworkConfig& c) {
  std::ostringstream os;
  for (const auto& f : detail::kIntFields) os << f.name << '=' << c.*f.member << '\n';
  for (const auto& f : detail::kRealFields)
    os << f.name << '=' << detail::format_real(c.*f.member) << '\n';
  return os.str();
}

/// One `key=value` per line; blank lines and lines starting with '#' are
/// skipped. Field names only, no aliases.
inline NetworkConfig config_from_kv(std::string_view text, NetworkConfig base = {}) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const auto key = detail::trim(t.substr(0, eq));
    if (!detail::set_field(base, key, detail::trim(t.substr(eq + 1))))
      throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
  return base;
}

/// Applies one `key=value` override; accepts field names and the short
/// aliases (N, N_s, L, W0, m, M, D, G, rho_in, T_fr).
inline void apply_override(NetworkConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  const auto key = detail::canonical_key(detail::trim(assignment.substr(0, eq)));
  if (!detail::set_field(c, key, detail::trim(assignment.substr(eq + 1))))
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// Reads a `.json` file as JSON and anything else as key=value text.
inline NetworkConfig load_config(const std::string& path, NetworkConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const bool is_json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  if (!is_json) return config_from_kv(buf.str(), base);
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in '" + path + "': " + e.what());
  }
  return config_from_json(j, base);
}

// ---------------------------------------------------------------------------
// Metric schema shared by model and simulator output

struct Metric {
  const char* name;
  double ModelSolution::*model;
  Estimate SimMetrics::*sim;  // nullptr when the simulator has no counterpart
};

// z is the mean number of piggybacked packets per contention BR; the
// simulator measures it as g_bar.
inline constexpr std::array<Metric, 26> kMetrics{{
    {"th", &ModelSolution::th, &SimMetrics::th},
    {"th_c", &ModelSolution::th_c, &SimMetrics::th_c},
    {"th_pg", &ModelSolution::th_pg, &SimMetrics::th_pg},
    {"es", &ModelSolution::es, &SimMetrics::es},
    {"es_c", &ModelSolution::es_c, &SimMetrics::es_c},
    {"ew", &ModelSolution::ew, &SimMetrics::ew},
    {"p", &ModelSolution::p, &SimMetrics::p},
    {"q", &ModelSolution::q, &SimMetrics::q},
    {"p_s", &ModelSolution::p_s, &SimMetrics::p_s},
    {"p_d", &ModelSolution::p_d, &SimMetrics::p_d},
    {"e_r", &ModelSolution::e_r, &SimMetrics::e_r},
    {"e_p", &ModelSolution::e_p, &SimMetrics::e_p},
    {"z", &ModelSolution::z, &SimMetrics::g_bar},
    {"q_m", &ModelSolution::q_m, nullptr},
    {"pi0", &ModelSolution::pi0, nullptr},
    {"rho", &ModelSolution::rho, nullptr},
    {"rho_raw", &ModelSolution::rho_raw, nullptr},
    {"p_f", &ModelSolution::p_f, nullptr},
    {"tau", &ModelSolution::tau, nullptr},
    {"omega", &ModelSolution::omega, nullptr},
    {"phi", &ModelSolution::phi, nullptr},
    {"b00", &ModelSolution::b00, nullptr},
    {"p_b", &ModelSolution::p_b, nullptr},
    {"es2", &ModelSolution::es2, nullptr},
    {"es_b", &ModelSolution::es_b, nullptr},
    {"es_q", &ModelSolution::es_q, nullptr},
}};

inline const Metric* find_metric(std::string_view name) {
  for (const auto& m : kMetrics)
    if (name == m.name) return &m;
  return nullptr;
}

namespace detail {
// JSON has no infinity or NaN; both become null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
}  // namespace detail

inline json to_json(const ModelSolution& s) {
  json j;
  j["source"] = "model";
  for (const auto& m : kMetrics) j[m.name] = detail::number(s.*m.model);
  j["saturated"] = s.saturated;
  j["iterations"] = s.iterations;
  j["residual"] = s.residual;
  j["init_disagreement"] = s.init_disagreement;
  return j;
}

inline json to_json(const SimMetrics& s) {
  json j;
  j["source"] = "sim";
  json hw;
  for (const auto& m : kMetrics) {
    if (!m.sim) continue;
    j[m.name] = detail::number((s.*m.sim).mean);
    hw[m.name] = detail::number((s.*m.sim).half_width);
  }
  j["half_width"] = hw;
  j["replications"] = s.replications;
  j["frames"] = s.totals.frames;
  j["arrived"] = s.totals.arrived;
  j["served"] = s.totals.served;
  j["dropped"] = s.totals.dropped;
  j["queued_at_end"] = s.totals.queued_at_end;
  j["invariant_violations"] = s.audit.total();
  return j;
}

/// `source,<metric...>,<metric>_hw...`; model rows leave the half-widths
/// empty, sim rows leave model-only metrics empty.
inline std::string csv_header() {
  std::string h = "source";
  for (const auto& m : kMetrics) h += std::string(",") + m.name;
  for (const auto& m : kMetrics)
    if (m.sim) h += std::string(",") + m.name + "_hw";
  return h;
}

inline std::string csv_row(const ModelSolution& s) {
  std::string r = "model";
  for (const auto& m : kMetrics) r += "," + detail::format_real(s.*m.model);
  for (const auto& m : kMetrics)
    if (m.sim) r += ",";
  return r;
}

inline std::string csv_row(const SimMetrics& s) {
  std::string r = "sim";
  for (const auto& m : kMetrics) r += "," + (m.sim ? detail::format_real((s.*m.sim).mean) : "");
  for (const auto& m : kMetrics)
    if (m.sim) r += "," + detail::format_real((s.*m.sim).half_width);
  return r;
}

inline std::string to_text(const ModelSolution& s) {
  std::ostringstream os;
  for (const auto& m : kMetrics)
    os << std::left << std::setw(10) << m.name << " = " << detail::format_real(s.*m.model) << '\n';
  os << std::left << std::setw(10) << "saturated" << " = " << (s.saturated ? "true" : "false")
     << '\n';
  os << std::left << std::setw(10) << "iterations" << " = " << s.iterations << '\n';
  os << std::left << std::setw(10) << "residual" << " = " << detail::format_real(s.residual)
     << '\n';
  return os.str();
}

inline std::string to_text(const SimMetrics& s) {
  std::ostringstream os;
  for (const auto& m : kMetrics) {
    if (!m.sim) continue;
    const Estimate& e = s.*m.sim;
    os << std::left << std::setw(10) << m.name << " = " << detail::format_real(e.mean)
       << " +/- " << detail::format_real(e.half_width) << '\n';
  }
  os << std::left << std::setw(10) << "reps" << " = " << s.replications << '\n';
  os << std::left << std::setw(10) << "violations" << " = " << s.audit.total() << '\n';
  return os.str();
}

}  // namespace pgpoll
