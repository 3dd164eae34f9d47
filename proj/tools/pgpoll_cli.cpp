// pgpoll: solve the analytic model, simulate, sweep, validate, or regenerate
// the figure data.
//
// Exit status: 0 success, 1 validation failure or non-converged solve,
// 2 argument or config error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pgpoll/config_io.hpp"
#include "pgpoll/experiments.hpp"
#include "pgpoll/solver.hpp"

using namespace pgpoll;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::string format = "text";
  std::uint64_t seed = SimConfig{}.seed;
  int replications = SimConfig{}.replications;
  int frames = SimConfig{}.measure_frames;
  int warmup = SimConfig{}.warmup_frames;
  bool no_sim = false;
  unsigned threads = 0;

  // sweep
  std::string axis;
  std::string values;
  std::string g_values;

  // validate
  std::string grid = "full";
  std::string csv_path;
};

NetworkConfig resolve_config(const Options& o, NetworkConfig base) {
  if (!o.config_path.empty()) base = load_config(o.config_path, base);
  for (const auto& s : o.overrides) apply_override(base, s);
  return validate(base);
}

SimConfig resolve_sim(const Options& o) {
  SimConfig s;
  s.seed = o.seed;
  s.replications = o.replications;
  s.measure_frames = o.frames;
  s.warmup_frames = o.warmup;
  return validate(s);
}

/// Writes to --out, or stdout when it is empty.
void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + o.out + "'");
  f << text;
}

json metadata(const Options& o, const NetworkConfig& cfg) {
  json m;
  m["config"] = to_json(cfg);
  m["config_file"] = o.config_path;
  m["overrides"] = o.overrides;
  return m;
}

std::string comment_header(const Options& o, const NetworkConfig& cfg) {
  std::ostringstream os;
  const json j = to_json(cfg);
  os << "# config:";
  for (const auto& [k, v] : j.items()) os << ' ' << k << '=' << v.dump();
  os << '\n';
  if (!o.config_path.empty()) os << "# config_file: " << o.config_path << '\n';
  os << "# overrides:";
  for (const auto& s : o.overrides) os << ' ' << s;
  os << '\n';
  return os.str();
}

// "5,7,9" or "lo:hi:step".
std::vector<double> parse_values(const std::string& text) {
  if (text.empty()) throw ConfigError("--values is required");
  std::vector<std::string> parts;
  if (text.find(':') != std::string::npos) {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("--values range must be lo:hi:step");
    const double lo = detail::parse_real("values", parts[0]);
    const double hi = detail::parse_real("values", parts[1]);
    const double step = detail::parse_real("values", parts[2]);
    if (!(step > 0.0) || hi < lo) throw ConfigError("--values range needs lo <= hi, step > 0");
    return range(lo, hi, step);
  }
  std::vector<double> v;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) v.push_back(detail::parse_real("values", p));
  return v;
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> v;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) v.push_back(detail::parse_int("G", p));
  return v;
}

// ---------------------------------------------------------------------------

int cmd_solve(const Options& o) {
  const NetworkConfig cfg = resolve_config(o, NetworkConfig{});
  SolverOptions opt;
  opt.check_initializers = true;
  ModelSolution s;
  try {
    s = solve(cfg, opt);
  } catch (const SolverError& e) {
    std::cerr << "pgpoll: " << e.what() << '\n';
    return kExitValidation;
  }
  if (o.format == "json") {
    json j = metadata(o, cfg);
    j["solution"] = to_json(s);
    emit(o, j.dump(2) + "\n");
  } else if (o.format == "csv") {
    emit(o, comment_header(o, cfg) + csv_header() + "\n" + csv_row(s) + "\n");
  } else {
    emit(o, comment_header(o, cfg) + to_text(s));
  }
  return 0;
}

int cmd_simulate(const Options& o) {
  const NetworkConfig cfg = resolve_config(o, NetworkConfig{});
  const SimMetrics m = run(cfg, resolve_sim(o));
  if (o.format == "json") {
    json j = metadata(o, cfg);
    j["seed"] = o.seed;
    j["metrics"] = to_json(m);
    emit(o, j.dump(2) + "\n");
  } else if (o.format == "csv") {
    emit(o, comment_header(o, cfg) + csv_header() + "\n" + csv_row(m) + "\n");
  } else {
    emit(o, comment_header(o, cfg) + "# seed: " + std::to_string(o.seed) + "\n" + to_text(m));
  }
  return m.audit.total() == 0 ? 0 : kExitValidation;
}

int cmd_sweep(const Options& o) {
  SweepSpec s;
  s.name = "sweep";
  s.axis = parse_axis(o.axis);
  s.base = resolve_config(o, NetworkConfig{});
  s.values = parse_values(o.values);
  if (!o.g_values.empty()) s.g_values = parse_ints(o.g_values);
  s.run_sim = !o.no_sim;
  s.sim = resolve_sim(o);
  s.threads = o.threads;
  const SweepResult r = run_sweep(validate(s));
  std::ostringstream os;
  os << comment_header(o, s.base);
  write_csv(os, r);
  emit(o, os.str());
  return 0;
}

std::vector<SweepSpec> with_run_options(std::vector<SweepSpec> specs, const Options& o) {
  for (auto& s : specs) {
    s.sim = resolve_sim(o);
    s.run_sim = !o.no_sim;
    s.threads = o.threads;
    validate(s);
  }
  return specs;
}

int cmd_validate(const Options& o) {
  if (o.grid != "small" && o.grid != "full") throw ConfigError("--grid must be small or full");
  if (o.no_sim) throw ConfigError("validate needs the simulator; drop --no-sim");
  const NetworkConfig base = resolve_config(o, figure_base());
  std::vector<SweepResult> parts;
  for (const auto& s : with_run_options(validation_specs(o.grid == "small", base), o))
    parts.push_back(run_sweep(s));
  const SweepResult all = merge(parts);
  const ValidationReport rep = compare(all);

  json j = metadata(o, base);
  j["grid"] = o.grid;
  j["seed"] = o.seed;
  j["report"] = to_json(rep, all);
  const std::string out = o.out.empty() ? "validation_report.json" : o.out;
  {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + out + "'");
    f << j.dump(2) << '\n';
  }
  if (!o.csv_path.empty()) {
    std::ofstream f(o.csv_path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + o.csv_path + "'");
    write_csv(f, all);
  }

  for (const auto& m : rep.metrics) {
    std::cout << (m.compared ? (m.pass ? "pass " : "FAIL ") : "n/a  ") << m.metric;
    if (m.compared)
      std::cout << "  max rel error " << detail::format_real(m.max_rel_error) << " (limit "
                << detail::format_real(m.tolerance) << ", " << m.rows_failed << "/"
                << m.rows_compared << " rows over)";
    std::cout << '\n';
  }
  if (!rep.solver_failures.empty())
    std::cout << "FAIL solver did not converge on " << rep.solver_failures.size() << " rows\n";
  std::cout << (rep.pass ? "validation passed" : "validation failed") << "; report written to "
            << out << '\n';
  return rep.pass ? 0 : kExitValidation;
}

int cmd_figures(const Options& o) {
  const std::string dir = o.out.empty() ? "figures" : o.out;
  std::filesystem::create_directories(dir);
  const NetworkConfig base = resolve_config(o, figure_base());
  for (const auto& s : with_run_options(figure_specs(base), o)) {
    const SweepResult r = run_sweep(s);
    const std::string path = (std::filesystem::path(dir) / (s.name + ".csv")).string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path + "'");
    f << comment_header(o, s.base);
    write_csv(f, r);
    std::cout << path << ": " << r.rows.size() << " rows\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

void add_common(CLI::App* c, Options& o, bool sim_flags, bool format_flag) {
  c->add_option("--config", o.config_path, "Config file: .json object, otherwise key=value lines")
      ->check(CLI::ExistingFile);
  c->add_option("--set", o.overrides,
                "Override K=V after the config file (repeatable). Keys: field names or "
                "N, N_s, L, W0, m, M, D, G, rho_in, T_fr")
      ->allow_extra_args(false);
  c->add_option("--out", o.out, "Output path (default: stdout)");
  if (format_flag)
    c->add_option("--format", o.format, "Output format")
        ->check(CLI::IsMember({"csv", "json", "text"}))
        ->capture_default_str();
  if (sim_flags) {
    c->add_option("--seed", o.seed, "Master seed")->capture_default_str();
    c->add_option("--replications", o.replications, "Independent replications")
        ->capture_default_str();
    c->add_option("--frames", o.frames, "Measured frames per replication")->capture_default_str();
    c->add_option("--warmup", o.warmup, "Warmup frames per replication")->capture_default_str();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Broadcast-polling / piggyback uplink model and simulator"};
  app.require_subcommand(1, 1);
  Options o;

  auto* solve_cmd = app.add_subcommand("solve", "Solve the analytic model for one config");
  add_common(solve_cmd, o, false, true);

  auto* sim_cmd = app.add_subcommand("simulate", "Simulate one config");
  add_common(sim_cmd, o, true, true);

  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one axis and write CSV");
  add_common(sweep_cmd, o, true, false);
  sweep_cmd->add_option("--axis", o.axis, "Swept parameter")
      ->required()
      ->check(CLI::IsMember({"L", "rho_in", "N", "G"}));
  sweep_cmd->add_option("--values", o.values, "Axis values: a,b,c or lo:hi:step")->required();
  sweep_cmd->add_option("--G", o.g_values, "Comma list of G families (ignored for --axis G)");
  sweep_cmd->add_flag("--no-sim", o.no_sim, "Model only");
  sweep_cmd->add_option("--threads", o.threads, "Worker threads (0: all cores)");

  auto* val_cmd = app.add_subcommand("validate", "Compare model and simulator over a grid");
  add_common(val_cmd, o, true, false);
  val_cmd->add_option("--grid", o.grid, "small or full")
      ->check(CLI::IsMember({"small", "full"}))
      ->capture_default_str();
  val_cmd->add_option("--csv", o.csv_path, "Also write the merged sweep CSV here");
  val_cmd->add_flag("--no-sim", o.no_sim, "Rejected: validation needs the simulator");
  val_cmd->add_option("--threads", o.threads, "Worker threads (0: all cores)");
  val_cmd->footer("--out names the JSON report (default validation_report.json).");

  auto* fig_cmd = app.add_subcommand("figures", "Write the five canned figure sweeps as CSV");
  add_common(fig_cmd, o, true, false);
  fig_cmd->add_flag("--no-sim", o.no_sim, "Model curves only");
  fig_cmd->add_option("--threads", o.threads, "Worker threads (0: all cores)");
  fig_cmd->footer("--out names the output directory (default figures/).");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (solve_cmd->parsed()) return cmd_solve(o);
    if (sim_cmd->parsed()) return cmd_simulate(o);
    if (sweep_cmd->parsed()) return cmd_sweep(o);
    if (val_cmd->parsed()) return cmd_validate(o);
    return cmd_figures(o);
  } catch (const ConfigError& e) {
    std::cerr << "pgpoll: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "pgpoll: " << e.what() << '\n';
    return kExitValidation;
  }
}
