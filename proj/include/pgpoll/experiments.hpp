#pragma once

// Parameter sweeps over one axis, model and simulator side by side, and the
// model-versus-simulation comparison report.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pgpoll/config_io.hpp"
#include "pgpoll/core.hpp"
#include "pgpoll/sim.hpp"
#include "pgpoll/solver.hpp"

namespace pgpoll {

enum class Axis { L, rho_in, N, G };

inline std::string_view to_string(Axis a) {
  switch (a) {
    case Axis::L: return "L";
    case Axis::rho_in: return "rho_in";
    case Axis::N: return "N";
    case Axis::G: return "G";
  }
  return "?";
}

inline Axis parse_axis(std::string_view s) {
  if (s == "L") return Axis::L;
  if (s == "rho_in") return Axis::rho_in;
  if (s == "N") return Axis::N;
  if (s == "G") return Axis::G;
  throw ConfigError("unknown sweep axis '" + std::string(s) + "'");
}

struct SweepSpec {
  std::string name;
  NetworkConfig base;
  Axis axis = Axis::L;
  std::vector<double> values;
  std::vector<int> g_values;  // family parameter; ignored when axis == G
  SimConfig sim;
  bool run_sim = false;
  SolverOptions solver;
  unsigned threads = 0;  // 0: hardware concurrency
};

/// Config of one grid point.
inline NetworkConfig point_config(const SweepSpec& s, double x, int g) {
  NetworkConfig c = s.base;
  c.max_piggy = g;
  switch (s.axis) {
    case Axis::L: c.n_slots = static_cast<int>(x); break;
    case Axis::rho_in: c.lambda = x / c.t_frame; break;
    case Axis::N: c.n_ss = static_cast<int>(x); break;
    case Axis::G: c.max_piggy = static_cast<int>(x); break;
  }
  return c;
}

inline std::vector<int> families(const SweepSpec& s) {
  if (s.axis == Axis::G) return {0};
  return s.g_values.empty() ? std::vector<int>{s.base.max_piggy} : s.g_values;
}

inline SweepSpec validate(const SweepSpec& s) {
  if (s.values.empty()) throw ConfigError("invalid SweepSpec: values must be nonempty");
  for (std::size_t i = 1; i < s.values.size(); ++i)
    if (!(s.values[i] > s.values[i - 1]))
      throw ConfigError("invalid SweepSpec: values must be strictly increasing");
  if (s.axis != Axis::rho_in)
    for (double v : s.values)
      if (v != std::floor(v))
        throw ConfigError("invalid SweepSpec: axis " + std::string(to_string(s.axis)) +
                          " takes integer values");
  for (double x : s.values)
    for (int g : families(s)) validate(point_config(s, x, g));
  if (s.run_sim) validate(s.sim);
  return s;
}

// ---------------------------------------------------------------------------
// Results

/// Persisted simulator columns of one row.
struct SimSummary {
  std::map<std::string, Estimate> values;  // keyed by metric name
  int replications = 0;
  std::int64_t violations = 0;
};

inline SimSummary summarize(const SimMetrics& m) {
  SimSummary s;
  for (const auto& d : kMetrics)
    if (d.sim) s.values[d.name] = m.*d.sim;
  s.replications = m.replications;
  s.violations = m.audit.total();
  return s;
}

struct SweepRow {
  double x = 0.0;
  int g = 0;
  NetworkConfig cfg;
  std::optional<ModelSolution> model;
  std::string error;  // solver failure, empty when model is set
  std::optional<SimSummary> sim;
};

struct SweepResult {
  Axis axis = Axis::L;
  std::vector<SweepRow> rows;  // ordered by (axis value, G)
};

/// |a - s| / max(|a|, |s|, 1e-9); undefined (nullopt) unless both values are
/// finite.
inline std::optional<double> relative_error(double model, double sim) {
  if (!std::isfinite(model) || !std::isfinite(sim)) return std::nullopt;
  return std::abs(model - sim) / std::max({std::abs(model), std::abs(sim), 1e-9});
}

inline std::optional<double> relative_error(const SweepRow& r, const Metric& m) {
  if (!r.model || !r.sim || !m.sim) return std::nullopt;
  const auto it = r.sim->values.find(m.name);
  if (it == r.sim->values.end()) return std::nullopt;
  return relative_error((*r.model).*m.model, it->second.mean);
}

namespace detail {
inline std::uint64_t point_seed(std::uint64_t master, double x, int g) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(bits), static_cast<std::uint32_t>(bits >> 32),
                    static_cast<std::uint32_t>(g)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline std::string one_line(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}
}  // namespace detail

/// Solves (and optionally simulates) every grid point on a bounded worker
/// pool. A solver failure is recorded in its row and the sweep continues.
inline SweepResult run_sweep(const SweepSpec& spec) {
  SweepResult out;
  out.axis = spec.axis;
  for (double x : spec.values)
    for (int g : families(spec)) {
      SweepRow r;
      r.x = x;
      r.g = spec.axis == Axis::G ? static_cast<int>(x) : g;
      r.cfg = point_config(spec, x, g);
      out.rows.push_back(std::move(r));
    }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < out.rows.size(); i = next++) {
      SweepRow& r = out.rows[i];
      try {
        r.model = solve(r.cfg, spec.solver);
      } catch (const SolverError& e) {
        r.error = detail::one_line(e.what());
      }
      if (spec.run_sim) {
        SimConfig sc = spec.sim;
        sc.seed = detail::point_seed(spec.sim.seed, r.x, r.g);
        r.sim = summarize(run(r.cfg, sc));
      }
    }
  };
  unsigned n = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  n = static_cast<unsigned>(std::min<std::size_t>(n, out.rows.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {
inline std::string exact(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double read_real(const std::string& s) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw ConfigError("CSV: expected a number, got '" + s + "'");
  return v;
}

inline std::int64_t read_int(const std::string& s) {
  const double v = read_real(s);
  if (v != std::floor(v)) throw ConfigError("CSV: expected an integer, got '" + s + "'");
  return static_cast<std::int64_t>(v);
}
}  // namespace detail

/// Column names after the leading comment line.
inline std::vector<std::string> csv_columns(Axis axis) {
  std::vector<std::string> c{std::string(to_string(axis)), "G"};
  for (const auto& f : detail::kIntFields) c.push_back(std::string("cfg_") + f.name);
  for (const auto& f : detail::kRealFields) c.push_back(std::string("cfg_") + f.name);
  for (const auto& m : kMetrics) c.push_back(std::string("model_") + m.name);
  for (const char* f : {"model_saturated", "model_iterations", "model_residual",
                        "model_init_disagreement"})
    c.push_back(f);
  for (const auto& m : kMetrics)
    if (m.sim) c.push_back(std::string("sim_") + m.name);
  for (const auto& m : kMetrics)
    if (m.sim) c.push_back(std::string("sim_") + m.name + "_hw");
  c.push_back("sim_replications");
  c.push_back("sim_violations");
  for (const auto& m : kMetrics)
    if (m.sim) c.push_back(std::string("relerr_") + m.name);
  c.push_back("error");
  return c;
}

inline void write_csv(std::ostream& os, const SweepResult& r) {
  const auto cols = csv_columns(r.axis);
  os << "# sweep over " << to_string(r.axis) << "; gnuplot: column 1 = " << to_string(r.axis)
     << ", column 2 = G, model_th = column "
     << (std::find(cols.begin(), cols.end(), "model_th") - cols.begin() + 1)
     << ", sim_th = column " << (std::find(cols.begin(), cols.end(), "sim_th") - cols.begin() + 1)
     << "; empty cells mean not computed\n";
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  using detail::exact;
  for (const auto& row : r.rows) {
    std::vector<std::string> v;
    v.push_back(exact(row.x));
    v.push_back(std::to_string(row.g));
    for (const auto& f : detail::kIntFields) v.push_back(std::to_string(row.cfg.*f.member));
    for (const auto& f : detail::kRealFields) v.push_back(exact(row.cfg.*f.member));
    for (const auto& m : kMetrics) v.push_back(row.model ? exact((*row.model).*m.model) : "");
    if (row.model) {
      v.push_back(row.model->saturated ? "1" : "0");
      v.push_back(std::to_string(row.model->iterations));
      v.push_back(exact(row.model->residual));
      v.push_back(row.model->init_disagreement ? "1" : "0");
    } else {
      v.insert(v.end(), 4, "");
    }
    for (const auto& m : kMetrics)
      if (m.sim) v.push_back(row.sim ? exact(row.sim->values.at(m.name).mean) : "");
    for (const auto& m : kMetrics)
      if (m.sim) v.push_back(row.sim ? exact(row.sim->values.at(m.name).half_width) : "");
    v.push_back(row.sim ? std::to_string(row.sim->replications) : "");
    v.push_back(row.sim ? std::to_string(row.sim->violations) : "");
    for (const auto& m : kMetrics)
      if (m.sim) {
        const auto e = relative_error(row, m);
        v.push_back(e ? exact(*e) : "");
      }
    v.push_back(row.error);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << '\n';
  }
}

/// Inverse of write_csv; relerr_* columns are derived and not read back.
inline SweepResult read_csv(std::istream& in) {
  std::string line;
  while (std::getline(in, line) && (line.empty() || line.front() == '#')) {
  }
  if (line.empty()) throw ConfigError("CSV: missing header row");
  const auto header = detail::split_csv(line);
  SweepResult r;
  r.axis = parse_axis(header.at(0));
  if (header != csv_columns(r.axis)) throw ConfigError("CSV: unexpected header");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto v = detail::split_csv(line);
    if (v.size() != header.size()) throw ConfigError("CSV: row has wrong column count");
    auto at = [&](const std::string& name) -> const std::string& { return v[col.at(name)]; };
    SweepRow row;
    row.x = detail::read_real(v[0]);
    row.g = static_cast<int>(detail::read_int(v[1]));
    for (const auto& f : detail::kIntFields)
      row.cfg.*f.member = static_cast<int>(detail::read_int(at(std::string("cfg_") + f.name)));
    for (const auto& f : detail::kRealFields)
      row.cfg.*f.member = detail::read_real(at(std::string("cfg_") + f.name));
    if (!at("model_th").empty()) {
      ModelSolution s;
      for (const auto& m : kMetrics) s.*m.model = detail::read_real(at(std::string("model_") + m.name));
      s.saturated = at("model_saturated") == "1";
      s.iterations = static_cast<int>(detail::read_int(at("model_iterations")));
      s.residual = detail::read_real(at("model_residual"));
      s.init_disagreement = at("model_init_disagreement") == "1";
      row.model = s;
    }
    if (!at("sim_replications").empty()) {
      SimSummary s;
      for (const auto& m : kMetrics)
        if (m.sim)
          s.values[m.name] = {detail::read_real(at(std::string("sim_") + m.name)),
                              detail::read_real(at(std::string("sim_") + m.name + "_hw"))};
      s.replications = static_cast<int>(detail::read_int(at("sim_replications")));
      s.violations = detail::read_int(at("sim_violations"));
      row.sim = s;
    }
    row.error = at("error");
    r.rows.push_back(std::move(row));
  }
  return r;
}

namespace detail {
inline bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }
}  // namespace detail

/// Field-wise equality with NaN equal to NaN.
inline bool operator==(const SweepRow& a, const SweepRow& b) {
  using detail::same;
  if (!same(a.x, b.x) || a.g != b.g || !(a.cfg == b.cfg) || a.error != b.error) return false;
  if (a.model.has_value() != b.model.has_value() || a.sim.has_value() != b.sim.has_value())
    return false;
  if (a.model) {
    for (const auto& m : kMetrics)
      if (!same((*a.model).*m.model, (*b.model).*m.model)) return false;
    if (a.model->saturated != b.model->saturated || a.model->iterations != b.model->iterations ||
        !same(a.model->residual, b.model->residual) ||
        a.model->init_disagreement != b.model->init_disagreement)
      return false;
  }
  if (a.sim) {
    if (a.sim->replications != b.sim->replications || a.sim->violations != b.sim->violations ||
        a.sim->values.size() != b.sim->values.size())
      return false;
    for (const auto& [k, e] : a.sim->values) {
      const auto it = b.sim->values.find(k);
      if (it == b.sim->values.end() || !same(e.mean, it->second.mean) ||
          !same(e.half_width, it->second.half_width))
        return false;
    }
  }
  return true;
}

inline bool operator==(const SweepResult& a, const SweepResult& b) {
  return a.axis == b.axis && a.rows == b.rows;
}

// ---------------------------------------------------------------------------
// Comparison

struct Tolerance {
  std::string metric;
  double max_rel = 0.0;
  std::optional<double> max_queue_load;  // only rows with lambda * E{S_Q} below this
};

/// Agreement targets for model versus simulation.
inline std::vector<Tolerance> default_tolerances() {
  return {{"th", 0.05, {}},   {"p_s", 0.05, {}},  {"p", 0.05, {}},
          {"es", 0.08, {}},   {"es_c", 0.08, {}}, {"ew", 0.15, 0.9},
          {"e_r", 0.10, {}},  {"e_p", 0.10, {}}};
}

struct MetricReport {
  std::string metric;
  double tolerance = 0.0;
  bool compared = false;
  int rows_compared = 0;
  int rows_failed = 0;
  double max_rel_error = 0.0;
  std::optional<std::size_t> worst_row;
  bool pass = true;
};

struct ValidationReport {
  std::vector<MetricReport> metrics;
  std::vector<std::size_t> solver_failures;  // rows whose solve failed
  bool pass = true;
};

/// Per-metric maximum relative error over the rows where it is defined.
/// Metrics with no comparable row are marked not compared and do not fail.
inline ValidationReport compare(const SweepResult& result,
                                const std::vector<Tolerance>& tolerances = default_tolerances()) {
  ValidationReport rep;
  for (std::size_t i = 0; i < result.rows.size(); ++i)
    if (!result.rows[i].model && result.rows[i].sim) rep.solver_failures.push_back(i);
  for (const auto& tol : tolerances) {
    const Metric* m = find_metric(tol.metric);
    if (!m || !m->sim) throw ConfigError("metric '" + tol.metric + "' has no simulated value");
    MetricReport mr;
    mr.metric = tol.metric;
    mr.tolerance = tol.max_rel;
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
      const SweepRow& r = result.rows[i];
      if (tol.max_queue_load && r.model &&
          !(r.cfg.lambda * r.model->es_q < *tol.max_queue_load))
        continue;
      const auto e = relative_error(r, *m);
      if (!e) continue;
      mr.compared = true;
      ++mr.rows_compared;
      if (*e > tol.max_rel) ++mr.rows_failed;
      if (!mr.worst_row || *e > mr.max_rel_error) {
        mr.max_rel_error = *e;
        mr.worst_row = i;
      }
    }
    mr.pass = mr.rows_failed == 0;
    rep.pass = rep.pass && mr.pass;
    rep.metrics.push_back(mr);
  }
  if (!rep.solver_failures.empty()) rep.pass = false;
  return rep;
}

inline json to_json(const ValidationReport& rep, const SweepResult& result) {
  json j;
  j["pass"] = rep.pass;
  j["rows"] = result.rows.size();
  json ms = json::array();
  for (const auto& m : rep.metrics) {
    json e;
    e["metric"] = m.metric;
    e["tolerance"] = m.tolerance;
    if (!m.compared) {
      e["status"] = "not compared";
    } else {
      e["status"] = m.pass ? "pass" : "fail";
      e["rows_compared"] = m.rows_compared;
      e["rows_failed"] = m.rows_failed;
      e["max_rel_error"] = m.max_rel_error;
      const SweepRow& w = result.rows[*m.worst_row];
      e["worst_point"] = to_json(w.cfg);
    }
    ms.push_back(e);
  }
  j["metrics"] = ms;
  json sf = json::array();
  for (auto i : rep.solver_failures)
    sf.push_back({{"row", i}, {"error", result.rows[i].error}});
  j["solver_failures"] = sf;
  return j;
}

// ---------------------------------------------------------------------------
// Canned sweeps

/// Default protocol parameters with N = 50 and saturated load.
inline NetworkConfig figure_base() {
  NetworkConfig c;
  c.n_ss = 50;
  c.lambda = 1.0;
  return c;
}

inline std::vector<double> range(double lo, double hi, double step) {
  std::vector<double> v;
  for (int i = 0;; ++i) {
    const double x = lo + i * step;
    if (x > hi + 1e-9) break;
    v.push_back(std::round(x * 1e9) / 1e9);
  }
  return v;
}

/// The five figure sweeps: performance versus L, versus offered load at
/// L = 21 and L = 7, versus N, and versus G. Each spec pins its own axis and
/// L on top of `base`.
inline std::vector<SweepSpec> figure_specs(const NetworkConfig& base = figure_base()) {
  std::vector<SweepSpec> v;
  SweepSpec s;
  s.base = base;
  s.run_sim = true;

  s.name = "vs_L";
  s.axis = Axis::L;
  s.values = range(5, 21, 1);
  s.g_values = {0, 1, 3, 5};
  v.push_back(s);

  s.name = "vs_rho_L21";
  s.axis = Axis::rho_in;
  s.base.n_slots = 21;
  s.values = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  s.g_values = {0, 1, 3};
  v.push_back(s);

  s.name = "vs_rho_L7";
  s.base.n_slots = 7;
  v.push_back(s);

  s.name = "vs_N";
  s.axis = Axis::N;
  s.base.n_slots = 21;
  s.values = {2, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
  s.g_values = {0, 1, 3};
  v.push_back(s);

  s.name = "vs_G";
  s.axis = Axis::G;
  s.values = range(0, 5, 1);
  s.g_values = {};
  v.push_back(s);
  return v;
}

/// Desk-scale validation grid, one SweepSpec per axis: L x G at saturation,
/// offered load x L x G, and N x G at L = 21. The small grid is the
/// saturated L slice only.
inline std::vector<SweepSpec> validation_specs(bool small = false,
                                              const NetworkConfig& base = figure_base()) {
  std::vector<SweepSpec> v;
  SweepSpec s;
  s.base = base;
  s.run_sim = true;

  s.name = "validate_L";
  s.axis = Axis::L;
  s.values = small ? std::vector<double>{7, 21} : std::vector<double>{5, 7, 12, 21};
  s.g_values = small ? std::vector<int>{0, 1} : std::vector<int>{0, 1, 3, 5};
  v.push_back(s);
  if (small) return v;

  for (int l : {7, 21}) {
    s.name = "validate_rho_L" + std::to_string(l);
    s.axis = Axis::rho_in;
    s.base.n_slots = l;
    s.values = {0.05, 0.1, 0.2, 0.3, 0.5};
    s.g_values = {0, 1, 3};
    v.push_back(s);
  }

  s.name = "validate_N";
  s.axis = Axis::N;
  s.base.n_slots = 21;
  s.values = {5, 10, 20, 30};
  s.g_values = {0, 1, 3};
  v.push_back(s);
  return v;
}

/// Concatenates rows; the axis label is taken from the first result. Rows
/// keep their full config, so points stay identifiable.
inline SweepResult merge(const std::vector<SweepResult>& parts) {
  SweepResult out;
  if (!parts.empty()) out.axis = parts.front().axis;
  for (const auto& p : parts) out.rows.insert(out.rows.end(), p.rows.begin(), p.rows.end());
  return out;
}

}  // namespace pgpoll
