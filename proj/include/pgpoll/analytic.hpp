#pragma once

// Closed-form evaluation of the SS Markov chain and the network-level
// equations for a candidate (p, q, E{S}) triple. Nothing here iterates;
// the fixed point lives in solver.hpp.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "pgpoll/core.hpp"

namespace pgpoll {

// ---------------------------------------------------------------------------
// Backoff

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Mean number of whole frames waited before the frame in which a counter
/// drawn uniformly from [0, window-1] expires, N_s TOs per frame. Exact.
///
/// WC = ceil(window/N_s) and WF = floor(window/N_s); every J in [1, WF] is hit
/// by N_s counter values and J = WC (when WC > WF) by the remainder, so
///   K = WF(WF+1)N_s / (2 window) + WC (1 - WF N_s / window) - 1.
inline Rational mean_backoff_frames(std::int64_t window, std::int64_t n_tos) {
  const std::int64_t wf = window / n_tos;
  const std::int64_t wc = (window + n_tos - 1) / n_tos;
  // Multiply through by 2*window to stay in integers.
  const std::int64_t num =
      wf * (wf + 1) * n_tos + 2 * wc * (window - wf * n_tos) - 2 * window;
  const std::int64_t den = 2 * window;
  const std::int64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

/// Per-round backoff statistics, rounds 0..D.
struct BackoffProfile {
  std::vector<double> k_bar;
  std::vector<std::int64_t> wc;
  std::vector<std::int64_t> wf;
};

inline BackoffProfile backoff_profile(const NetworkConfig& cfg) {
  BackoffProfile b;
  const int rounds = cfg.max_retx + 1;
  b.k_bar.reserve(rounds);
  b.wc.reserve(rounds);
  b.wf.reserve(rounds);
  for (int i = 0; i < rounds; ++i) {
    const std::int64_t w = cfg.window(i);
    b.wf.push_back(w / cfg.n_tos);
    b.wc.push_back((w + cfg.n_tos - 1) / cfg.n_tos);
    b.k_bar.push_back(mean_backoff_frames(w, cfg.n_tos).value());
  }
  return b;
}

// ---------------------------------------------------------------------------
// Queue

/// Probability that a departing packet leaves the queue empty (M/G/1 with a
/// deterministic one-frame vacation). Zero at or beyond saturation.
inline double pi0(const NetworkConfig& cfg, double es) {
  const double x = cfg.lambda * cfg.t_frame;
  const double rho = cfg.lambda * es;
  const double vacation = -std::expm1(-x) / x;  // (1 - e^-x)/x
  return clamp01((1.0 - rho) * vacation);
}

// ---------------------------------------------------------------------------
// Markov chain of one SS

struct ChainStationary {
  double p_f = 0.0;
  double tau = 1.0;
  double omega = 0.0;
  double z = 0.0;
  double phi = 0.0;
  double b00 = 0.0;
};

/// (1 - x^(n+1)) / (1 - x), continuous at x = 1.
inline double geometric_sum(double x, int n) {
  double s = 0.0, t = 1.0;
  for (int i = 0; i <= n; ++i) {
    s += t;
    t *= x;
  }
  return s;
}

inline ChainStationary chain_stationary(const NetworkConfig& cfg, const BackoffProfile& bk,
                                        double p, double q, double pi0_) {
  if (!(q > 0.0)) throw std::domain_error("chain_stationary: q must be > 0");
  const int M = cfg.t16_frames;
  const int D = cfg.max_retx;
  const int G = cfg.max_piggy;

  ChainStationary s;
  s.p_f = clamp01(p + (1.0 - p) * std::pow(1.0 - q, M));
  s.tau = geometric_sum(s.p_f, D);

  double pf_i = 1.0;
  for (int i = 1; i <= D; ++i) {
    pf_i *= s.p_f;
    s.omega += pf_i * bk.k_bar[i];
  }

  // Z = (1-pf) tau * sum_{i=1..G} (1-pi0)^i. This is the closed form
  // (1-pi0)(1-pf) tau (1-(1-pi0)^G)/pi0 without the 0/0 at pi0 = 0.
  const double busy = 1.0 - pi0_;
  double piggy = 0.0, t = 1.0;
  for (int i = 1; i <= G; ++i) {
    t *= busy;
    piggy += t;
  }
  const double delivered = 1.0 - std::pow(s.p_f, D + 1);  // (1-pf) tau
  s.z = delivered * piggy;

  const double p_a = std::exp(-cfg.lambda * cfg.t_frame);
  const double g_term = 1.0 - std::pow(busy, G);
  s.phi = (pi0_ + g_term * busy * delivered) / (1.0 - p_a);

  s.b00 = 1.0 / (s.tau * (1.0 + p * M + (1.0 - s.p_f) / q) + s.omega + s.z + s.phi);
  return s;
}

/// Closed-form stationary probability of every state of the chain, indexed
/// [round][frame-1] where applicable. Used to check normalisation and to
/// compare against a direct solve of the transition matrix.
struct StateMasses {
  std::vector<double> r;                 // (i,0)^R
  std::vector<double> w;                 // sum over backoff frames of round i (0 for i = 0)
  std::vector<std::vector<double>> c;    // (i,j)^C
  std::vector<std::vector<double>> t;    // (i,j)^T
  std::vector<std::vector<double>> f;    // (i,j)^F
  std::vector<double> pg;                // PG_1..PG_G
  double idle = 0.0;

  double total() const {
    double s = idle;
    for (double x : r) s += x;
    for (double x : w) s += x;
    for (const auto* grid : {&c, &t, &f})
      for (const auto& row : *grid)
        for (double x : row) s += x;
    for (double x : pg) s += x;
    return s;
  }
};

inline StateMasses state_masses(const NetworkConfig& cfg, const BackoffProfile& bk, double p,
                                double q, double pi0_) {
  const ChainStationary s = chain_stationary(cfg, bk, p, q, pi0_);
  const int M = cfg.t16_frames;
  const int D = cfg.max_retx;
  const int G = cfg.max_piggy;

  StateMasses m;
  m.r.resize(D + 1);
  m.w.resize(D + 1, 0.0);
  m.c.assign(D + 1, std::vector<double>(M));
  m.t.assign(D + 1, std::vector<double>(M));
  m.f.assign(D + 1, std::vector<double>(M));
  double r_i = s.b00;
  for (int i = 0; i <= D; ++i) {
    m.r[i] = r_i;
    if (i > 0) m.w[i] = bk.k_bar[i] * r_i;
    for (int j = 1; j <= M; ++j) {
      m.c[i][j - 1] = p * r_i;
      m.t[i][j - 1] = (1.0 - p) * q * std::pow(1.0 - q, j - 1) * r_i;
      m.f[i][j - 1] = (1.0 - p) * std::pow(1.0 - q, j) * r_i;
    }
    r_i *= s.p_f;
  }
  double pg = (1.0 - pi0_) * (1.0 - s.p_f) * s.tau * s.b00;
  for (int k = 1; k <= G; ++k) {
    m.pg.push_back(pg);
    pg *= 1.0 - pi0_;
  }
  m.idle = s.phi * s.b00;
  return m;
}

// ---------------------------------------------------------------------------
// Network level

/// p = 1 - (1 - tau b00 / N_s)^(N-1)
inline double collision_probability(const NetworkConfig& cfg, double b00, double tau) {
  const double x = clamp01(tau * b00 / cfg.n_tos);
  return clamp01(-std::expm1((cfg.n_ss - 1) * std::log1p(-x)));
}

/// P_S = N x (1-x)^(N-1) with x = P_B / N_s.
inline double success_probability(const NetworkConfig& cfg, double b00, double tau) {
  const double x = clamp01(tau * b00 / cfg.n_tos);
  if (x == 0.0) return 0.0;
  if (x == 1.0) return cfg.n_ss == 1 ? 1.0 : 0.0;
  return clamp01(cfg.n_ss * x * std::exp((cfg.n_ss - 1) * std::log1p(-x)));
}

inline double drop_probability(double p_f, const NetworkConfig& cfg) {
  return std::pow(clamp01(p_f), cfg.max_retx + 1);
}

struct ServiceDelay {
  double es_c = 1.0;  // through contention, drops included
  double es = 1.0;    // overall, piggyback packets count one frame
  double es2 = 1.0;   // second-moment approximation
  double es_d = 0.0;  // time spent on a dropped packet
};

inline ServiceDelay service_delay(const NetworkConfig& cfg, const BackoffProfile& bk, double p,
                                  double q, double z) {
  const int M = cfg.t16_frames;
  const int D = cfg.max_retx;
  const double p_f = clamp01(p + (1.0 - p) * std::pow(1.0 - q, M));

  ServiceDelay d;
  double k_cum = 0.0;
  double pf_i = 1.0;
  double sum1 = 0.0, sum2 = 0.0;
  for (int i = 0; i <= D; ++i) {
    k_cum += bk.k_bar[i];
    double grant_j = q * (1.0 - p);  // bb_{i,j} / p_f^i, j = 1
    for (int j = 1; j <= M; ++j) {
      const double bb = grant_j * pf_i;
      const double s_ij = j + i * M + k_cum;
      sum1 += bb * s_ij;
      sum2 += bb * s_ij * s_ij;
      grant_j *= 1.0 - q;
    }
    pf_i *= p_f;
  }
  d.es_d = (D + 1.0) * M + k_cum;
  const double p_drop = pf_i;  // p_f^(D+1)
  d.es_c = p_drop * d.es_d + sum1;
  d.es = (d.es_c + z) / (1.0 + z);
  d.es2 = (p_drop * d.es_d * d.es_d + sum2 + z) / (1.0 + z);
  return d;
}

// ---------------------------------------------------------------------------
// Bandwidth allocation

struct AllocationModel {
  double q_new = 1.0;
  double r = 0.0;    // probability a pending BR is not granted this frame
  double e_r = 0.0;  // E{R}
  double e_p = 0.0;  // E{P}
  double p_g = 0.0;  // E{P}/L, clamped
};

namespace detail {
inline double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// Binomial pmf evaluated in log space; exact at the endpoints p = 0, 1.
inline double binom_pmf(int n, int k, double p) {
  if (k < 0 || k > n) return 0.0;
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  return std::exp(log_choose(n, k) + k * std::log(p) + (n - k) * std::log1p(-p));
}
}  // namespace detail

/// Mean number of pending contending BRs per frame.
inline double expected_pending(const NetworkConfig& cfg, double p_s, double q) {
  double s = 0.0, t = 1.0;
  for (int i = 0; i < cfg.t16_frames; ++i) {
    s += t;
    t *= 1.0 - q;
  }
  return cfg.n_tos * p_s * s;
}

/// Mean number of data slots consumed by piggybacked BRs per frame.
inline double expected_piggyback(const NetworkConfig& cfg, double e_r, double q, double pi0_) {
  double s = 0.0, t = 1.0;
  for (int i = 0; i < cfg.max_piggy; ++i) {
    t *= 1.0 - pi0_;
    s += t;
  }
  return e_r * q * s;
}

/// Probability r that a pending BR is not granted in a frame, given the
/// piggyback reservations P ~ Bin(L, P_G) and the other pending BRs
/// Q | P=i ~ Bin(N-i-1, P_A(i)) under random-order service.
inline double not_granted_probability(const NetworkConfig& cfg, double e_r, double e_p) {
  const int N = cfg.n_ss;
  const int L = cfg.n_slots;
  const double p_g = clamp01(e_p / L);
  double r = 0.0;
  for (int i = 0; i <= L && i <= N - 1; ++i) {
    const int others = N - i - 1;
    const int free_slots = L - i;
    if (others < free_slots) continue;  // every requester fits
    const double w_i = detail::binom_pmf(L, i, p_g);
    if (w_i == 0.0) continue;
    const double p_a = clamp01(e_r / (N - i));
    double inner = 0.0;
    for (int j = free_slots; j <= others; ++j) {
      const double unserved = static_cast<double>(j + 1 - free_slots) / (j + 1);
      inner += unserved * detail::binom_pmf(others, j, p_a);
    }
    r += w_i * inner;
  }
  return clamp01(r);
}

inline AllocationModel allocation_probability(const NetworkConfig& cfg, double p_s, double q,
                                              double pi0_) {
  AllocationModel a;
  a.e_r = expected_pending(cfg, p_s, q);
  a.e_p = expected_piggyback(cfg, a.e_r, q, pi0_);
  a.p_g = clamp01(a.e_p / cfg.n_slots);
  a.r = not_granted_probability(cfg, a.e_r, a.e_p);
  a.q_new = 1.0 - a.r;
  return a;
}

// ---------------------------------------------------------------------------
// Throughput and waiting delay

struct Throughput {
  double q_m = 1.0;
  double th_c = 0.0;
  double th_pg = 0.0;
  double th = 0.0;
};

/// Contention throughput q_M P_S N_s plus piggyback throughput. The latter is
/// the piggyback-state mass N * Z * b00; Z already carries the delivery
/// factor 1 - P_D, so it is not applied a second time.
inline Throughput throughput(const NetworkConfig& cfg, double p_s, double q, double z,
                             double b00) {
  Throughput t;
  t.q_m = q >= 1.0 ? 1.0 : -std::expm1(cfg.t16_frames * std::log1p(-q));
  t.th_c = t.q_m * p_s * cfg.n_tos;
  t.th_pg = z * cfg.n_ss * b00;
  t.th = t.th_c + t.th_pg;
  return t;
}

struct WaitingDelay {
  double es_i = 1.0;  // packet finds the SS non-empty but on vacation
  double es_b = 1.0;  // packet finds the SS busy
  double es_q = 1.0;  // service delay seen by queued packets
  double ew = 0.5;
  bool saturated = false;
};

/// Modified Pollaczek-Khinchine waiting delay. Saturated (ew = +inf) when
/// lambda E{S_Q} >= 1.
inline WaitingDelay waiting_delay(const NetworkConfig& cfg, double es, double es_c, double es2,
                                  double pi0_) {
  WaitingDelay w;
  const double lam = cfg.lambda;
  const double rho = lam * es;
  w.es_i = cfg.max_piggy > 0 ? 1.0 : es_c;
  const double idle_busy = 1.0 - pi0_ - rho;  // queue non-empty, server on vacation
  if (rho > 0.0) {
    w.es_b = (es - pi0_ * es_c - idle_busy * w.es_i) / rho;
  } else {
    w.es_b = es_c;
  }
  w.es_b = std::max(w.es_b, 1.0);
  const double queued = 1.0 - pi0_;
  if (queued > 0.0) {
    w.es_q = (rho * w.es_b + idle_busy * w.es_i) / queued;
  } else {
    w.es_q = es;
  }
  const double load = lam * w.es_q;
  if (load >= 1.0) {
    w.saturated = true;
    w.ew = kInf;
  } else {
    w.ew = lam * es2 / (2.0 * (1.0 - load)) + cfg.t_frame / 2.0;
  }
  return w;
}

// ---------------------------------------------------------------------------
// One full pass through the model

/// Iterate in the admissible region of the closed forms.
struct Triple {
  double p = 0.0;
  double q = 1.0;
  double es = 1.0;
};

struct Evaluation {
  ModelSolution solution;  // derived quantities at the input triple
  Triple next;             // the model's map applied to the input triple
};

/// Evaluates every closed form at (p, q, es) and the image of the triple
/// under the three fixed-point equations.
inline Evaluation evaluate(const NetworkConfig& cfg, const BackoffProfile& bk, const Triple& x) {
  Evaluation ev;
  ModelSolution& s = ev.solution;
  s.p = x.p;
  s.q = x.q;
  s.es = x.es;
  s.pi0 = pi0(cfg, x.es);
  s.rho_raw = cfg.lambda * x.es;
  s.rho = clamp01(s.rho_raw);

  const ChainStationary ch = chain_stationary(cfg, bk, x.p, x.q, s.pi0);
  s.p_f = ch.p_f;
  s.tau = ch.tau;
  s.omega = ch.omega;
  s.z = ch.z;
  s.phi = ch.phi;
  s.b00 = ch.b00;
  s.p_b = clamp01(ch.tau * ch.b00);
  s.p_s = success_probability(cfg, ch.b00, ch.tau);
  s.p_d = drop_probability(ch.p_f, cfg);

  const AllocationModel al = allocation_probability(cfg, s.p_s, x.q, s.pi0);
  s.e_r = al.e_r;
  s.e_p = al.e_p;

  const ServiceDelay sd = service_delay(cfg, bk, x.p, x.q, ch.z);
  s.es_c = sd.es_c;
  s.es2 = sd.es2;

  const WaitingDelay wd = waiting_delay(cfg, x.es, sd.es_c, sd.es2, s.pi0);
  s.es_b = wd.es_b;
  s.es_q = wd.es_q;
  s.ew = wd.ew;
  s.saturated = wd.saturated;

  const Throughput th = throughput(cfg, s.p_s, x.q, ch.z, ch.b00);
  s.q_m = th.q_m;
  s.th_c = th.th_c;
  s.th_pg = th.th_pg;
  s.th = th.th;

  ev.next.p = collision_probability(cfg, ch.b00, ch.tau);
  ev.next.q = al.q_new;
  ev.next.es = sd.es;
  return ev;
}

}  // namespace pgpoll
