#pragma once

// Saturation capacity estimates: the slot count beyond which every
// successful BR is granted, and the throughput ceiling that follows.

#include <algorithm>
#include <cmath>

#include "pgpoll/core.hpp"
#include "pgpoll/solver.hpp"

namespace pgpoll {

struct CapacityEstimate {
  int l_prime = 0;       // L'(G)
  double th_max = 0.0;   // min(L, (G+1) * P_S^max * N_s)
  double p_s_max = 0.0;  // largest saturated P_S over L
  int l_at_max = 0;      // L where P_S^max is attained
};

/// P_S^max is the largest saturated success probability over L = 1..N; for
/// L >= N the allocation term is exactly zero, so larger L repeat that value.
inline CapacityEstimate capacity_heuristics(const NetworkConfig& cfg,
                                            const SolverOptions& opt = {}) {
  NetworkConfig sat = cfg;
  sat.lambda = 1.0;
  CapacityEstimate e;
  for (int l = 1; l <= std::max(cfg.n_ss, 1); ++l) {
    sat.n_slots = l;
    const double ps = solve(sat, opt).p_s;
    if (ps > e.p_s_max) {
      e.p_s_max = ps;
      e.l_at_max = l;
    }
  }
  const double demand = (cfg.max_piggy + 1.0) * e.p_s_max * cfg.n_tos;
  e.l_prime = static_cast<int>(std::ceil(demand - 1e-12));
  e.th_max = std::min<double>(cfg.n_slots, demand);
  return e;
}

}  // namespace pgpoll
