#pragma once

// Reference computations that share no code with the library: exhaustive
// enumeration and direct linear solves.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "pgpoll/core.hpp"

namespace oracle {

struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;
  friend bool operator==(const Fraction&, const Fraction&) = default;
};

/// Mean of floor(c / n_tos) over every counter c in [0, window), reduced.
inline Fraction mean_backoff(std::int64_t window, std::int64_t n_tos) {
  std::int64_t sum = 0;
  for (std::int64_t c = 0; c < window; ++c) sum += c / n_tos;
  const std::int64_t g = std::gcd(sum, window);
  return {sum / g, window / g};
}

// ---------------------------------------------------------------------------
// Explicit chain

/// Stationary masses of the per-SS chain from a direct solve of its
/// transition matrix. Backoff of round i >= 1 is one state with geometric
/// sojourn of mean K_i (entered with probability K/(1+K), self-loop
/// K/(1+K)), which has the same stationary mass as K_i unit frames.
struct ChainMasses {
  std::vector<double> r, w;
  std::vector<std::vector<double>> c, t, f;
  std::vector<double> pg;
  double idle = 0.0;
  double total = 0.0;
};

inline ChainMasses explicit_chain(const pgpoll::NetworkConfig& cfg,
                                  const std::vector<double>& k_bar, double p, double q,
                                  double pi0) {
  const int D = cfg.max_retx, M = cfg.t16_frames, G = cfg.max_piggy;
  int n = 0;
  std::vector<int> R(D + 1), W(D + 1, -1);
  std::vector<std::vector<int>> C(D + 1, std::vector<int>(M)), T = C, F = C;
  for (int i = 0; i <= D; ++i) {
    if (i > 0 && k_bar[i] > 0.0) W[i] = n++;
    R[i] = n++;
    for (int j = 0; j < M; ++j) {
      C[i][j] = n++;
      T[i][j] = n++;
      F[i][j] = n++;
    }
  }
  std::vector<int> PG(G);
  for (int k = 0; k < G; ++k) PG[k] = n++;
  const int idle = n++;

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  const double p_a = std::exp(-cfg.lambda * cfg.t_frame);

  // Entry into a new packet's contention.
  auto to_new_packet = [&](int from, double w) { P(from, R[0]) += w; };
  // Entry into round i (>= 1) after a failed round.
  auto to_round = [&](int from, int i, double w) {
    if (W[i] < 0) {
      P(from, R[i]) += w;
      return;
    }
    const double a = k_bar[i] / (1.0 + k_bar[i]);
    P(from, W[i]) += w * a;
    P(from, R[i]) += w * (1.0 - a);
  };
  auto after_round_failure = [&](int from, int i) {
    if (i < D) {
      to_round(from, i + 1, 1.0);
    } else {  // drop
      P(from, idle) += pi0;
      to_new_packet(from, 1.0 - pi0);
    }
  };

  for (int i = 0; i <= D; ++i) {
    if (W[i] >= 0) {
      const double s = k_bar[i] / (1.0 + k_bar[i]);
      P(W[i], W[i]) += s;
      P(W[i], R[i]) += 1.0 - s;
    }
    P(R[i], C[i][0]) += p;
    P(R[i], T[i][0]) += (1.0 - p) * q;
    P(R[i], F[i][0]) += (1.0 - p) * (1.0 - q);
    for (int j = 0; j < M; ++j) {
      if (j + 1 < M) {
        P(C[i][j], C[i][j + 1]) += 1.0;
        P(F[i][j], T[i][j + 1]) += q;
        P(F[i][j], F[i][j + 1]) += 1.0 - q;
      } else {
        after_round_failure(C[i][j], i);
        after_round_failure(F[i][j], i);
      }
      P(T[i][j], idle) += pi0;
      if (G > 0) P(T[i][j], PG[0]) += 1.0 - pi0;
      else to_new_packet(T[i][j], 1.0 - pi0);
    }
  }
  for (int k = 0; k < G; ++k) {
    P(PG[k], idle) += pi0;
    if (k + 1 < G) P(PG[k], PG[k + 1]) += 1.0 - pi0;
    else to_new_packet(PG[k], 1.0 - pi0);
  }
  P(idle, idle) += p_a;
  to_new_packet(idle, 1.0 - p_a);

  // pi (P - I) = 0 with sum(pi) = 1: transpose and replace one equation.
  Eigen::MatrixXd A = (P - Eigen::MatrixXd::Identity(n, n)).transpose();
  A.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1.0;
  const Eigen::VectorXd pi = A.fullPivLu().solve(b);

  ChainMasses m;
  m.r.resize(D + 1);
  m.w.assign(D + 1, 0.0);
  m.c.assign(D + 1, std::vector<double>(M));
  m.t = m.c;
  m.f = m.c;
  for (int i = 0; i <= D; ++i) {
    m.r[i] = pi(R[i]);
    if (W[i] >= 0) m.w[i] = pi(W[i]);
    for (int j = 0; j < M; ++j) {
      m.c[i][j] = pi(C[i][j]);
      m.t[i][j] = pi(T[i][j]);
      m.f[i][j] = pi(F[i][j]);
    }
  }
  for (int k = 0; k < G; ++k) m.pg.push_back(pi(PG[k]));
  m.idle = pi(idle);
  m.total = pi.sum();
  return m;
}

// ---------------------------------------------------------------------------
// Allocation

struct Allocation {
  double e_r = 0.0;
  double e_p = 0.0;
  double r = 0.0;
};

/// E{R} and E{P} by direct summation, then the probability that a tagged
/// pending BR is not granted, by enumerating every piggyback-slot pattern
/// and every pattern of other pending BRs. Among the j+1 requesters competing
/// for L-i free slots the tagged one loses with probability
/// max(0, j+1-(L-i))/(j+1). Patterns with i > N-1 piggyback reservations
/// cannot occur and contribute nothing.
inline Allocation enumerate_allocation(const pgpoll::NetworkConfig& cfg, double p_s, double q,
                                       double pi0) {
  const int N = cfg.n_ss, L = cfg.n_slots, M = cfg.t16_frames, G = cfg.max_piggy;
  Allocation a;
  for (int i = 0; i < M; ++i) a.e_r += cfg.n_tos * p_s * std::pow(1.0 - q, i);
  for (int i = 0; i < G; ++i) a.e_p += a.e_r * q * std::pow(1.0 - pi0, i + 1);

  // weight[k] = x^k (1-x)^(n-k): probability of one specific pattern with k set.
  auto pattern_weights = [](double x, int n) {
    std::vector<double> w(n + 1);
    for (int k = 0; k <= n; ++k) w[k] = std::pow(x, k) * std::pow(1.0 - x, n - k);
    return w;
  };
  const double p_g = std::clamp(a.e_p / L, 0.0, 1.0);
  const std::vector<double> w_slots = pattern_weights(p_g, L);
  for (std::uint32_t slots = 0; slots < (1u << L); ++slots) {
    const int i = std::popcount(slots);
    if (i > N - 1) continue;
    const int others = N - i - 1;
    const std::vector<double> w_pend =
        pattern_weights(std::clamp(a.e_r / (N - i), 0.0, 1.0), others);
    const int free_slots = L - i;
    for (std::uint32_t pend = 0; pend < (1u << others); ++pend) {
      const int j = std::popcount(pend);
      const double lose = std::max(0, j + 1 - free_slots) / static_cast<double>(j + 1);
      if (lose == 0.0) continue;
      a.r += w_slots[i] * w_pend[j] * lose;
    }
  }
  return a;
}

}  // namespace oracle
