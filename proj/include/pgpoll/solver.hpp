#pragma once

// Damped fixed-point iteration for the (p, q, E{S}) system.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "pgpoll/analytic.hpp"
#include "pgpoll/core.hpp"

namespace pgpoll {

struct SolverOptions {
  double damping = 0.2;   // weight of the new iterate, in (0,1]
  double tol = 1e-9;      // max-abs residual on (p, q, es)
  int max_iters = 10000;
  std::optional<double> init_p;
  std::optional<double> init_q;
  std::optional<double> init_es;  // defaults to 1 + K_0
  bool check_initializers = false;  // also solve from (0.5, 0.5, 10) and flag disagreement
};

struct Residuals {
  double dp = 0.0;
  double dq = 0.0;
  double des = 0.0;
  double max_abs() const { return std::max({std::abs(dp), std::abs(dq), std::abs(des)}); }
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, Triple last, Residuals res, int iters)
      : std::runtime_error(what), last_(last), residuals_(res), iterations_(iters) {}
  const Triple& last_iterate() const { return last_; }
  const Residuals& residuals() const { return residuals_; }
  int iterations() const { return iterations_; }

 private:
  Triple last_;
  Residuals residuals_;
  int iterations_;
};

inline constexpr double kMinQ = 1e-9;
inline constexpr double kMaxP = 1.0 - 1e-12;

namespace detail {
inline Triple project(const Triple& x, double es_max) {
  return {std::clamp(x.p, 0.0, kMaxP), std::clamp(x.q, kMinQ, 1.0), std::clamp(x.es, 1.0, es_max)};
}

inline double max_service_delay(const NetworkConfig& cfg, const BackoffProfile& bk) {
  double k = 0.0;
  for (double v : bk.k_bar) k += v;
  return (cfg.max_retx + 1.0) * cfg.t16_frames + k + 1.0;
}
}  // namespace detail

/// Signed difference between the triple and its image under the model map.
inline Residuals residuals(const NetworkConfig& cfg, double p, double q, double es) {
  const BackoffProfile bk = backoff_profile(cfg);
  const Evaluation ev = evaluate(cfg, bk, {p, q, es});
  return {p - ev.next.p, q - ev.next.q, es - ev.next.es};
}

namespace detail {
inline ModelSolution iterate(const NetworkConfig& cfg, const BackoffProfile& bk,
                             const SolverOptions& opt, Triple x) {
  const double es_max = max_service_delay(cfg, bk);
  const double a = opt.damping;
  x = project(x, es_max);
  Residuals res;
  for (int it = 1; it <= opt.max_iters; ++it) {
    const Evaluation ev = evaluate(cfg, bk, x);
    const Triple y = project(ev.next, es_max);
    res = {x.p - y.p, x.q - y.q, x.es - y.es};
    if (res.max_abs() <= opt.tol) {
      // Report at x or at its image, whichever has the smaller residual. The
      // image is exact where the map is constant (p = 0 for one SS) but the
      // map can expand elsewhere, so neither choice is always better.
      const Evaluation ey = evaluate(cfg, bk, y);
      const Triple yy = project(ey.next, es_max);
      const Residuals res_y{y.p - yy.p, y.q - yy.q, y.es - yy.es};
      const bool at_image = res_y.max_abs() <= res.max_abs();
      ModelSolution s = at_image ? ey.solution : ev.solution;
      s.iterations = it;
      s.residual = at_image ? res_y.max_abs() : res.max_abs();
      return s;
    }
    x = project({(1.0 - a) * x.p + a * y.p, (1.0 - a) * x.q + a * y.q,
                 (1.0 - a) * x.es + a * y.es},
                es_max);
  }
  std::ostringstream msg;
  msg << "fixed point did not converge after " << opt.max_iters << " iterations (p=" << x.p
      << " q=" << x.q << " es=" << x.es << ", max residual " << res.max_abs() << ")";
  throw SolverError(msg.str(), x, res, opt.max_iters);
}
}  // namespace detail

/// Solves the three coupled equations (collision, grant, service delay) by
/// damped fixed-point iteration. Expects a validated config.
inline ModelSolution solve(const NetworkConfig& cfg, const SolverOptions& opt = {}) {
  if (!(opt.damping > 0.0 && opt.damping <= 1.0))
    throw std::invalid_argument("SolverOptions: damping must be in (0,1]");
  if (!(opt.tol > 0.0)) throw std::invalid_argument("SolverOptions: tol must be > 0");
  if (opt.max_iters < 1) throw std::invalid_argument("SolverOptions: max_iters must be >= 1");

  const BackoffProfile bk = backoff_profile(cfg);
  const Triple start{opt.init_p.value_or(0.1), opt.init_q.value_or(0.9),
                     opt.init_es.value_or(1.0 + bk.k_bar[0])};
  ModelSolution s = detail::iterate(cfg, bk, opt, start);
  if (opt.check_initializers) {
    const ModelSolution alt = detail::iterate(cfg, bk, opt, {0.5, 0.5, 10.0});
    const double gap =
        std::max({std::abs(s.p - alt.p), std::abs(s.q - alt.q), std::abs(s.es - alt.es)});
    s.init_disagreement = gap > 1e-6;
  }
  return s;
}

}  // namespace pgpoll
