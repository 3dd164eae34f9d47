#pragma once

// Frame-synchronous simulator of broadcast polling with truncated binary
// exponential backoff, T16 timeouts, random-order grants and G-limited
// piggybacking. Independent of the analytic model: it shares only the
// NetworkConfig type.
//
// Time is measured in frames; frame k spans [k, k+1). Every frame an SS is in
// exactly one phase (backoff, BR, collided, waiting, transmitting, piggyback,
// idle). Within frame k:
//   1. grants: piggybacking SSs first, then a uniform random subset of the
//      pending pool for the remaining slots
//   2. data transmission; each transmitter piggybacks a BR for its next packet
//      or schedules contention for it from frame k+1
//   3. T16 expiry of BRs whose last eligible frame was k: retry from frame
//      k+1, or drop after round D
//   4. contention in the N_s TOs
//   5. Poisson arrivals; idle SSs with queued packets start contending at k+1

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <ostream>
#include <random>
#include <string_view>
#include <vector>

#include "pgpoll/core.hpp"

namespace pgpoll {

struct SimConfig {
  std::uint64_t seed = 1;
  int warmup_frames = 2000;
  int measure_frames = 20000;
  int replications = 10;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

inline SimConfig validate(const SimConfig& s) {
  if (s.warmup_frames < 0) throw ConfigError("invalid SimConfig: warmup_frames >= 0");
  if (s.measure_frames < 1) throw ConfigError("invalid SimConfig: measure_frames >= 1");
  if (s.replications < 1) throw ConfigError("invalid SimConfig: replications >= 1");
  return s;
}

enum class Phase { Idle, Backoff, AwaitGrant, Piggyback };

struct SubscriberState {
  Phase phase = Phase::Idle;
  int round = 0;
  std::int64_t backoff_tos = 0;    // TOs left before the BR goes out
  std::int64_t backoff_from = 0;   // first frame whose TOs the counter consumes
  std::int64_t t16_deadline = 0;   // last frame in which the pending BR can be granted
  bool in_pool = false;            // last BR reached the BS intact
  int piggy_count = 0;             // consecutive piggybacks used
  int br_sent = 0;                 // BR transmissions for the head packet
  std::deque<double> queue;        // arrival instants, head first
  std::int64_t head_service_start = 0;
  double next_arrival = 0.0;
};

struct BasePending {
  int ss_id = 0;
  std::int64_t frame_received = 0;
};

// ---------------------------------------------------------------------------
// Events

enum class EventKind {
  Arrival,          // detail: packets queued after the arrival
  ContentionStart,  // detail: drawn backoff counter (round 0)
  BrSent,           // detail: TO index
  BrCollided,       // detail: TO index
  BrPending,        // detail: TO index, BR joined the pool
  PiggybackSlot,    // detail: piggy_count, slot reserved for this frame
  Grant,            // detail: age of the pending BR in frames
  TxContention,     // detail: service delay in frames
  TxPiggyback,      // detail: service delay in frames
  Piggyback,        // detail: piggy_count after this request
  T16Expired,       // detail: round that failed
  Retry,            // detail: new round
  Drop,             // detail: service delay in frames
  Idle,             // detail: 0
};

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Arrival: return "arrival";
    case EventKind::ContentionStart: return "contention_start";
    case EventKind::BrSent: return "br_sent";
    case EventKind::BrCollided: return "br_collided";
    case EventKind::BrPending: return "br_pending";
    case EventKind::PiggybackSlot: return "piggyback_slot";
    case EventKind::Grant: return "grant";
    case EventKind::TxContention: return "tx_contention";
    case EventKind::TxPiggyback: return "tx_piggyback";
    case EventKind::Piggyback: return "piggyback";
    case EventKind::T16Expired: return "t16_expired";
    case EventKind::Retry: return "retry";
    case EventKind::Drop: return "drop";
    case EventKind::Idle: return "idle";
  }
  return "?";
}

struct Event {
  std::int64_t frame = 0;
  int ss = 0;
  EventKind kind = EventKind::Idle;
  std::int64_t detail = 0;
};

struct NullObserver {
  void operator()(const Event&) const noexcept {}
};

/// Writes `frame<TAB>ss<TAB>event<TAB>detail` lines.
struct TraceWriter {
  std::ostream* out;
  void operator()(const Event& e) const {
    *out << e.frame << '\t' << e.ss << '\t' << to_string(e.kind) << '\t' << e.detail << '\n';
  }
};

// ---------------------------------------------------------------------------
// Counters

/// Raw tallies of one replication over the measurement window, plus
/// whole-run packet accounting.
struct SimCounters {
  std::int64_t frames = 0;
  std::int64_t tx_contention = 0;
  std::int64_t tx_piggyback = 0;
  std::int64_t drops = 0;
  std::int64_t br_sent = 0;
  std::int64_t br_collided = 0;
  std::int64_t br_success = 0;
  std::int64_t pool_frames = 0;  // sum over frames of pending BRs at allocation
  std::int64_t grants = 0;
  std::int64_t piggy_slots = 0;
  double delay_contention = 0.0;  // granted and dropped packets
  double delay_piggyback = 0.0;
  double wait_sum = 0.0;
  std::int64_t wait_count = 0;

  // whole run, warmup included
  std::int64_t arrived = 0;
  std::int64_t served = 0;
  std::int64_t dropped = 0;
  std::int64_t queued_at_end = 0;
};

/// Violations of protocol invariants detected while running. All zero in a
/// correct run.
struct InvariantAudit {
  std::int64_t slot_overflow = 0;      // piggyback + grants > L
  std::int64_t piggy_overflow = 0;     // piggyback demand > L
  std::int64_t pool_age = 0;           // grant outside age [1, M]
  std::int64_t retry_bound = 0;        // more than D+1 BRs for one packet
  std::int64_t duplicate_pending = 0;  // more than one pending BR per SS
  std::int64_t packet_identity = 0;    // SSs failing arrived = served + dropped + queued

  std::int64_t total() const {
    return slot_overflow + piggy_overflow + pool_age + retry_bound + duplicate_pending +
           packet_identity;
  }
  InvariantAudit& operator+=(const InvariantAudit& o) {
    slot_overflow += o.slot_overflow;
    piggy_overflow += o.piggy_overflow;
    pool_age += o.pool_age;
    retry_bound += o.retry_bound;
    duplicate_pending += o.duplicate_pending;
    packet_identity += o.packet_identity;
    return *this;
  }
};

// ---------------------------------------------------------------------------
// Simulator

template <class Observer = NullObserver>
class Simulator {
 public:
  Simulator(const NetworkConfig& cfg, std::uint64_t seed, Observer obs = {})
      : cfg_(cfg), obs_(std::move(obs)), ss_(cfg.n_ss), tos_(cfg.n_tos) {
    rng_.reserve(cfg.n_ss);
    for (int i = 0; i < cfg.n_ss; ++i) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(i), 0x55u};
      rng_.emplace_back(seq);
    }
    std::seed_seq bs_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         0xB5B5u};
    bs_rng_.seed(bs_seq);
    std::exponential_distribution<double> gap(cfg_.lambda);
    for (int i = 0; i < cfg.n_ss; ++i) ss_[i].next_arrival = gap(rng_[i]);
  }

  /// Advances `frames` frames; tallies only once `frame() >= measure_from`.
  void run(std::int64_t frames, std::int64_t measure_from = 0) {
    for (std::int64_t n = 0; n < frames; ++n) {
      measuring_ = frame_ >= measure_from;
      step();
      ++frame_;
    }
  }

  std::int64_t frame() const { return frame_; }
  const std::vector<SubscriberState>& subscribers() const { return ss_; }
  const std::vector<BasePending>& pool() const { return pool_; }
  const InvariantAudit& audit() const { return audit_; }
  Observer& observer() { return obs_; }

  /// Tallies with end-of-run packet accounting filled in.
  SimCounters counters() {
    SimCounters c = counters_;
    c.queued_at_end = 0;
    for (int i = 0; i < cfg_.n_ss; ++i) {
      const auto queued = static_cast<std::int64_t>(ss_[i].queue.size());
      c.queued_at_end += queued;
      if (arrived_[i] != served_[i] + dropped_[i] + queued) ++audit_.packet_identity;
    }
    return c;
  }

 private:
  void emit(int ss, EventKind k, std::int64_t detail = 0) { obs_(Event{frame_, ss, k, detail}); }

  // Service of the head packet begins at the start of frame `from`.
  void start_contention(int i, std::int64_t from) {
    auto& s = ss_[i];
    s.phase = Phase::Backoff;
    s.round = 0;
    s.br_sent = 0;
    s.piggy_count = 0;
    s.backoff_tos = draw_counter(i, 0);
    s.backoff_from = from;
    s.head_service_start = from;
    record_wait(s.head_service_start - s.queue.front());
    emit(i, EventKind::ContentionStart, s.backoff_tos);
  }

  std::int64_t draw_counter(int i, int round) {
    std::uniform_int_distribution<std::int64_t> d(0, cfg_.window(round) - 1);
    return d(rng_[i]);
  }

  void record_wait(double w) {
    if (!measuring_) return;
    counters_.wait_sum += w;
    ++counters_.wait_count;
  }

  // Head packet leaves through a grant (piggyback or contention).
  void transmit(int i, bool piggyback) {
    auto& s = ss_[i];
    const auto delay = frame_ - s.head_service_start;
    s.queue.pop_front();
    ++served_[i];
    ++counters_.served;
    if (measuring_) {
      if (piggyback) {
        ++counters_.tx_piggyback;
        counters_.delay_piggyback += delay;
      } else {
        ++counters_.tx_contention;
        counters_.delay_contention += delay;
      }
    }
    emit(i, piggyback ? EventKind::TxPiggyback : EventKind::TxContention, delay);
  }

  // After a transmission or a drop: piggyback, contend again, or go idle.
  void after_departure(int i, bool may_piggyback) {
    auto& s = ss_[i];
    // Queue holds only arrivals before this frame's start at this point.
    if (!s.queue.empty() && may_piggyback && s.piggy_count < cfg_.max_piggy) {
      s.phase = Phase::Piggyback;
      ++s.piggy_count;
      s.head_service_start = frame_;
      record_wait(frame_ - s.queue.front());
      emit(i, EventKind::Piggyback, s.piggy_count);
    } else if (!s.queue.empty()) {
      start_contention(i, frame_ + 1);
    } else {
      s.phase = Phase::Idle;
      s.piggy_count = 0;
      emit(i, EventKind::Idle);
    }
  }

  void step() {
    const int L = cfg_.n_slots;
    const int M = cfg_.t16_frames;
    const int N = cfg_.n_ss;

    // 1. Grant allocation.
    transmitters_.clear();
    int piggy = 0;
    for (int i = 0; i < N; ++i) {
      if (ss_[i].phase == Phase::Piggyback) {
        ++piggy;
        transmitters_.push_back({i, true});
        emit(i, EventKind::PiggybackSlot, ss_[i].piggy_count);
      }
    }
    if (piggy > L) ++audit_.piggy_overflow;
    const int free_slots = std::max(L - piggy, 0);
    const int n_grants = std::min<int>(free_slots, static_cast<int>(pool_.size()));
    if (measuring_) {
      counters_.pool_frames += static_cast<std::int64_t>(pool_.size());
      counters_.piggy_slots += piggy;
      counters_.grants += n_grants;
    }
    // Partial Fisher-Yates: the first n_grants entries become a uniform subset.
    for (int g = 0; g < n_grants; ++g) {
      std::uniform_int_distribution<std::size_t> pick(g, pool_.size() - 1);
      std::swap(pool_[g], pool_[pick(bs_rng_)]);
      const BasePending& b = pool_[g];
      const auto age = frame_ - b.frame_received;
      if (age < 1 || age > M) ++audit_.pool_age;
      emit(b.ss_id, EventKind::Grant, age);
      transmitters_.push_back({b.ss_id, false});
      ss_[b.ss_id].in_pool = false;
    }
    pool_.erase(pool_.begin(), pool_.begin() + n_grants);
    if (static_cast<int>(transmitters_.size()) > L) ++audit_.slot_overflow;

    // 2. Data transmission and the next packet's request.
    for (const auto& [i, via_piggyback] : transmitters_) {
      transmit(i, via_piggyback);
      after_departure(i, true);
    }

    // 3. T16 expiry. A BR sent in frame b was eligible in b+1..b+M.
    for (int i = 0; i < N; ++i) {
      auto& s = ss_[i];
      if (s.phase != Phase::AwaitGrant || s.t16_deadline > frame_) continue;
      if (s.in_pool) {
        auto it = std::find_if(pool_.begin(), pool_.end(),
                               [i](const BasePending& b) { return b.ss_id == i; });
        if (it != pool_.end()) pool_.erase(it);
        s.in_pool = false;
      }
      emit(i, EventKind::T16Expired, s.round);
      if (s.round < cfg_.max_retx) {
        ++s.round;
        s.phase = Phase::Backoff;
        s.backoff_tos = draw_counter(i, s.round);
        s.backoff_from = frame_ + 1;
        emit(i, EventKind::Retry, s.round);
      } else {
        const auto delay = frame_ - s.head_service_start;
        s.queue.pop_front();
        ++dropped_[i];
        ++counters_.dropped;
        if (measuring_) {
          ++counters_.drops;
          counters_.delay_contention += delay;
        }
        emit(i, EventKind::Drop, delay);
        after_departure(i, false);
      }
    }

    // 4. Contention.
    std::fill(tos_.begin(), tos_.end(), -1);
    senders_.clear();
    for (int i = 0; i < N; ++i) {
      auto& s = ss_[i];
      if (s.phase != Phase::Backoff || s.backoff_from > frame_) continue;
      if (s.backoff_tos >= cfg_.n_tos) {
        s.backoff_tos -= cfg_.n_tos;
        continue;
      }
      const int to = static_cast<int>(s.backoff_tos);
      senders_.push_back(i);
      tos_[to] = tos_[to] == -1 ? i : -2;  // -2 marks a collision
      ++s.br_sent;
      if (s.br_sent > cfg_.max_retx + 1) ++audit_.retry_bound;
      if (measuring_) ++counters_.br_sent;
      emit(i, EventKind::BrSent, to);
    }
    for (int i : senders_) {
      auto& s = ss_[i];
      const int to = static_cast<int>(s.backoff_tos);
      s.phase = Phase::AwaitGrant;
      s.t16_deadline = frame_ + M;
      if (tos_[to] == i) {
        if (s.in_pool) ++audit_.duplicate_pending;
        s.in_pool = true;
        pool_.push_back({i, frame_});
        if (measuring_) ++counters_.br_success;
        emit(i, EventKind::BrPending, to);
      } else {
        s.in_pool = false;
        if (measuring_) ++counters_.br_collided;
        emit(i, EventKind::BrCollided, to);
      }
    }

    // 5. Arrivals within [frame, frame+1).
    const double end = static_cast<double>(frame_ + 1);
    for (int i = 0; i < N; ++i) {
      auto& s = ss_[i];
      std::exponential_distribution<double> gap(cfg_.lambda);
      while (s.next_arrival < end) {
        s.queue.push_back(s.next_arrival);
        ++arrived_[i];
        ++counters_.arrived;
        emit(i, EventKind::Arrival, static_cast<std::int64_t>(s.queue.size()));
        s.next_arrival += gap(rng_[i]);
      }
      if (s.phase == Phase::Idle && !s.queue.empty()) start_contention(i, frame_ + 1);
    }
    if (measuring_) ++counters_.frames;
  }

  struct Slot {
    int ss;
    bool piggyback;
  };

  NetworkConfig cfg_;
  Observer obs_;
  std::vector<SubscriberState> ss_;
  std::vector<std::mt19937_64> rng_;
  std::mt19937_64 bs_rng_;
  std::vector<BasePending> pool_;
  std::vector<int> tos_;
  std::vector<int> senders_;
  std::vector<Slot> transmitters_;
  std::vector<std::int64_t> arrived_ = std::vector<std::int64_t>(cfg_.n_ss, 0);
  std::vector<std::int64_t> served_ = std::vector<std::int64_t>(cfg_.n_ss, 0);
  std::vector<std::int64_t> dropped_ = std::vector<std::int64_t>(cfg_.n_ss, 0);
  SimCounters counters_;
  InvariantAudit audit_;
  std::int64_t frame_ = 0;
  bool measuring_ = true;
};

// ---------------------------------------------------------------------------
// Replicated runs

struct Estimate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double half_width = 0.0;  // 95% confidence half-width across replications
};

struct SimMetrics {
  Estimate th, th_c, th_pg;
  Estimate es, es_c, ew;
  Estimate p, q, p_s, p_d;
  Estimate e_r, e_p, g_bar;
  SimCounters totals;  // summed over replications
  InvariantAudit audit;
  int replications = 0;
};

namespace detail {
inline double t_quantile_975(int dof) {
  static constexpr std::array<double, 30> table = {
      12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
      2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
      2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof < 1) return 0.0;
  return dof <= 30 ? table[dof - 1] : 1.96;
}

inline Estimate summarize(const std::vector<double>& xs) {
  Estimate e;
  std::vector<double> v;
  for (double x : xs)
    if (std::isfinite(x)) v.push_back(x);
  if (v.empty()) return e;
  double sum = 0.0;
  for (double x : v) sum += x;
  e.mean = sum / v.size();
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - e.mean) * (x - e.mean);
    const double sd = std::sqrt(ss / (v.size() - 1));
    e.half_width = t_quantile_975(static_cast<int>(v.size()) - 1) * sd / std::sqrt(v.size());
  }
  return e;
}

inline double ratio(double num, double den) {
  return den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
}

inline std::uint64_t replication_seed(std::uint64_t master, int rep) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(rep), 0x7E9u};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}
}  // namespace detail

/// Runs `replications` independent replications and aggregates the
/// measured counterparts of the model's metrics.
inline SimMetrics run(const NetworkConfig& cfg, const SimConfig& sim) {
  SimMetrics m;
  m.replications = sim.replications;
  std::vector<double> th, th_c, th_pg, es, es_c, ew, p, q, p_s, p_d, e_r, e_p, g_bar;
  for (int rep = 0; rep < sim.replications; ++rep) {
    Simulator<> s(cfg, detail::replication_seed(sim.seed, rep));
    s.run(static_cast<std::int64_t>(sim.warmup_frames) + sim.measure_frames, sim.warmup_frames);
    const SimCounters c = s.counters();
    m.audit += s.audit();

    const double frames = static_cast<double>(c.frames);
    const double served_c = static_cast<double>(c.tx_contention);
    const double served_pg = static_cast<double>(c.tx_piggyback);
    const double contention_done = served_c + static_cast<double>(c.drops);
    th_c.push_back(served_c / frames);
    th_pg.push_back(served_pg / frames);
    th.push_back((served_c + served_pg) / frames);
    es_c.push_back(detail::ratio(c.delay_contention, contention_done));
    es.push_back(detail::ratio(c.delay_contention + c.delay_piggyback, contention_done + served_pg));
    ew.push_back(detail::ratio(c.wait_sum, static_cast<double>(c.wait_count)));
    p.push_back(detail::ratio(static_cast<double>(c.br_collided), static_cast<double>(c.br_sent)));
    q.push_back(detail::ratio(static_cast<double>(c.grants), static_cast<double>(c.pool_frames)));
    p_s.push_back(static_cast<double>(c.br_success) / (frames * cfg.n_tos));
    p_d.push_back(detail::ratio(static_cast<double>(c.drops), contention_done));
    e_r.push_back(static_cast<double>(c.pool_frames) / frames);
    e_p.push_back(static_cast<double>(c.piggy_slots) / frames);
    g_bar.push_back(detail::ratio(served_pg, contention_done));

    auto& t = m.totals;
    t.frames += c.frames;
    t.tx_contention += c.tx_contention;
    t.tx_piggyback += c.tx_piggyback;
    t.drops += c.drops;
    t.br_sent += c.br_sent;
    t.br_collided += c.br_collided;
    t.br_success += c.br_success;
    t.pool_frames += c.pool_frames;
    t.grants += c.grants;
    t.piggy_slots += c.piggy_slots;
    t.delay_contention += c.delay_contention;
    t.delay_piggyback += c.delay_piggyback;
    t.wait_sum += c.wait_sum;
    t.wait_count += c.wait_count;
    t.arrived += c.arrived;
    t.served += c.served;
    t.dropped += c.dropped;
    t.queued_at_end += c.queued_at_end;
  }
  using detail::summarize;
  m.th = summarize(th);
  m.th_c = summarize(th_c);
  m.th_pg = summarize(th_pg);
  m.es = summarize(es);
  m.es_c = summarize(es_c);
  m.ew = summarize(ew);
  m.p = summarize(p);
  m.q = summarize(q);
  m.p_s = summarize(p_s);
  m.p_d = summarize(p_d);
  m.e_r = summarize(e_r);
  m.e_p = summarize(e_p);
  m.g_bar = summarize(g_bar);
  return m;
}

/// Single seeded run of `frames` frames writing the event log to `out`.
inline void trace(const NetworkConfig& cfg, const SimConfig& sim, std::int64_t frames,
                  std::ostream& out) {
  Simulator<TraceWriter> s(cfg, detail::replication_seed(sim.seed, 0), TraceWriter{&out});
  s.run(frames);
}

}  // namespace pgpoll
