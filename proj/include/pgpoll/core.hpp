#pragma once

// Shared domain types for the broadcast-polling / piggyback model.
//
// Units: the frame duration is the time unit. Delays are in frames and rates
// in packets per frame, so lambda and the offered load coincide numerically.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace pgpoll {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Protocol and traffic parameters of one network.
struct NetworkConfig {
  int n_ss = 10;        // N, number of subscriber stations
  int n_tos = 20;       // N_s, transmission opportunities per UL subframe
  int n_slots = 7;      // L, data slots per UL subframe
  int w0 = 32;          // initial contention window
  int m_exp = 5;        // backoff exponent cap, max window 2^m * w0
  int t16_frames = 6;   // M, T16 window in frames
  int max_retx = 5;     // D, max BR retransmissions
  int max_piggy = 0;    // G, max consecutive piggybacks (0 disables)
  double lambda = 1.0;  // Poisson arrival rate per SS, packets/frame
  double t_frame = 1.0; // frame duration, always 1 under the units convention

  double offered_load() const { return lambda * t_frame; }

  /// Contention window in round i: 2^min(i,m) * w0.
  std::int64_t window(int round) const {
    return static_cast<std::int64_t>(w0) << std::min(round, m_exp);
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

namespace detail {
inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid NetworkConfig: " + what);
}
}  // namespace detail

/// Returns the config unchanged when every invariant holds, throws
/// ConfigError naming the first violated invariant otherwise.
inline NetworkConfig validate(const NetworkConfig& c) {
  using detail::require;
  require(c.n_ss >= 1, "n_ss >= 1");
  require(c.n_tos >= 1, "n_tos >= 1");
  require(c.n_slots >= 1, "n_slots >= 1");
  require(c.t16_frames >= 1, "t16_frames >= 1");
  require(c.max_retx >= 0, "max_retx >= 0");
  require(c.max_piggy >= 0, "max_piggy >= 0");
  require(c.m_exp >= 0 && c.m_exp <= 24, "0 <= m_exp <= 24");
  require(c.w0 >= c.n_tos, "w0 >= n_tos (w0 < n_tos leaves TOs unreachable)");
  require(std::isfinite(c.lambda) && c.lambda > 0.0, "lambda > 0");
  require(c.t_frame == 1.0, "t_frame == 1 (frame is the time unit)");
  return c;
}

/// Converged fixed point of the analytic model plus every derived quantity.
struct ModelSolution {
  // fixed-point unknowns
  double p = 0.0;   // BR collision probability in a TO
  double q = 1.0;   // per-frame grant probability of a pending BR
  double es = 1.0;  // mean service delay E{S}

  double pi0 = 1.0;       // empty-queue-at-departure probability
  double rho = 0.0;       // lambda * E{S}, clamped to [0,1]
  double rho_raw = 0.0;   // lambda * E{S}, unclamped
  double p_f = 0.0;       // per-round failure probability
  double tau = 1.0;
  double omega = 0.0;
  double z = 0.0;         // mean piggybacked packets per created BR
  double phi = 0.0;       // idle-state normalisation factor
  double b00 = 0.0;       // stationary probability of (0,0)^R
  double p_b = 0.0;       // SS transmits a BR in a frame
  double p_s = 0.0;       // a TO carries a successful BR
  double p_d = 0.0;       // drop probability per created BR
  double q_m = 1.0;       // grant within the T16 window
  double e_r = 0.0;       // mean pending contending BRs per frame
  double e_p = 0.0;       // mean piggyback slots per frame
  double es_c = 1.0;      // mean service delay through contention
  double es2 = 1.0;       // second moment of the service delay
  double es_b = 1.0;      // service delay of a packet arriving at a busy SS
  double es_q = 1.0;      // service delay seen by queued packets
  double ew = 0.5;        // mean waiting delay, +inf when saturated
  bool saturated = false; // lambda * E{S_Q} >= 1
  double th_c = 0.0;      // contention throughput, packets/frame
  double th_pg = 0.0;     // piggyback throughput, packets/frame
  double th = 0.0;        // total throughput, packets/frame

  int iterations = 0;
  double residual = 0.0;
  bool init_disagreement = false;  // the two standard initialisers disagreed
};

inline double clamp01(double x) {
  if (!(x > 0.0)) return 0.0;  // also maps NaN to 0
  return x < 1.0 ? x : 1.0;
}

inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace pgpoll
