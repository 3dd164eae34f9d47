#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "pgpoll/sim.hpp"
#include "sim_checker.hpp"

using namespace pgpoll;

namespace {
NetworkConfig make(int n, int l, int g, double lambda = 1.0) {
  NetworkConfig c;
  c.n_ss = n;
  c.n_slots = l;
  c.max_piggy = g;
  c.lambda = lambda;
  return c;
}

SimConfig quick(std::uint64_t seed = 1) {
  SimConfig s;
  s.seed = seed;
  s.warmup_frames = 500;
  s.measure_frames = 4000;
  s.replications = 3;
  return s;
}

checker::Violations check_run(const NetworkConfig& cfg, std::uint64_t seed, std::int64_t frames) {
  Simulator<checker::ProtocolChecker> s(cfg, seed, checker::ProtocolChecker(cfg));
  s.run(frames);
  s.counters();
  s.observer().finish(s.subscribers());
  checker::Violations v = s.observer().violations();
  if (s.audit().total() != 0) v.add(s.frame(), -1, "simulator self-audit");
  return v;
}
}  // namespace

TEST(SimConfig, RejectsBadValues) {
  SimConfig s;
  s.replications = 0;
  EXPECT_THROW(validate(s), ConfigError);
  s = {};
  s.measure_frames = 0;
  EXPECT_THROW(validate(s), ConfigError);
  s = {};
  s.warmup_frames = -1;
  EXPECT_THROW(validate(s), ConfigError);
}

TEST(Simulator, SameSeedSameCounters) {
  const NetworkConfig c = make(20, 7, 2, 0.4);
  const SimMetrics a = run(c, quick(42)), b = run(c, quick(42));
  EXPECT_EQ(a.th.mean, b.th.mean);
  EXPECT_EQ(a.es.mean, b.es.mean);
  EXPECT_EQ(a.totals.br_sent, b.totals.br_sent);
  EXPECT_EQ(a.totals.wait_sum, b.totals.wait_sum);
  const SimMetrics d = run(c, quick(43));
  EXPECT_NE(a.totals.br_sent, d.totals.br_sent);
}

TEST(Simulator, PacketsAreConserved) {
  for (double lambda : {0.05, 0.5, 1.0}) {
    const SimMetrics m = run(make(15, 7, 3, lambda), quick());
    const auto& t = m.totals;
    EXPECT_EQ(t.arrived, t.served + t.dropped + t.queued_at_end);
    EXPECT_EQ(m.audit.total(), 0);
  }
}

TEST(Simulator, NoPiggybackWhenDisabled) {
  const SimMetrics m = run(make(30, 7, 0, 1.0), quick());
  EXPECT_EQ(m.totals.tx_piggyback, 0);
  EXPECT_EQ(m.th_pg.mean, 0.0);
  EXPECT_EQ(m.totals.piggy_slots, 0);
}

TEST(Simulator, SingleStationNeverCollides) {
  for (int g : {0, 2}) {
    const SimMetrics m = run(make(1, 3, g, 0.7), quick());
    EXPECT_EQ(m.totals.br_collided, 0);
    EXPECT_EQ(m.p.mean, 0.0);
  }
}

TEST(Simulator, ThroughputBoundedBySlotsAndLoad) {
  for (int g : {0, 1, 3}) {
    const SimMetrics m = run(make(40, 5, g, 1.0), quick());
    EXPECT_LE(m.th.mean, 5.0);
    EXPECT_EQ(m.th.mean, m.th_c.mean + m.th_pg.mean);
  }
  const SimMetrics light = run(make(10, 21, 1, 0.05), quick());
  EXPECT_NEAR(light.th.mean, 0.5, 0.1);
  EXPECT_EQ(light.totals.drops, 0);
}

TEST(Simulator, LightLoadWaitIsHalfFrame) {
  // A packet arriving to an empty SS waits on average half a frame for the
  // next frame boundary.
  SimConfig s = quick();
  s.measure_frames = 20000;
  const SimMetrics m = run(make(5, 21, 0, 0.01), s);
  EXPECT_NEAR(m.ew.mean, 0.5, 0.05);
}

TEST(Simulator, RandomizedConfigsPassIndependentChecker) {
  std::mt19937_64 rng(2024);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int k = 0; k < 100; ++k) {
    NetworkConfig c;
    c.n_ss = pick(1, 40);
    c.n_tos = pick(1, 24);
    c.w0 = c.n_tos * pick(1, 3);
    c.m_exp = pick(0, 5);
    c.n_slots = pick(1, 25);
    c.t16_frames = pick(1, 8);
    c.max_retx = pick(0, 6);
    c.max_piggy = pick(0, 6);
    c.lambda = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    const checker::Violations v = check_run(validate(c), rng(), 1500);
    EXPECT_EQ(v.count, 0) << "config " << k << ": "
                          << (v.messages.empty() ? "" : v.messages.front());
  }
}

TEST(Simulator, CheckerDetectsInjectedFault) {
  // A forged grant must be reported: the checker is not vacuous.
  NetworkConfig c = make(3, 2, 0, 0.5);
  checker::ProtocolChecker chk(c);
  chk(Event{0, 1, EventKind::Grant, 1});
  chk(Event{0, 2, EventKind::PiggybackSlot, 1});
  chk(Event{1, 0, EventKind::BrSent, 4});
  chk(Event{1, 1, EventKind::BrSent, 4});
  chk(Event{1, 0, EventKind::BrPending, 4});
  chk(Event{1, 1, EventKind::BrCollided, 4});
  std::vector<SubscriberState> end(3);
  chk.finish(end);
  EXPECT_GE(chk.violations().count, 3);
}

TEST(Trace, TabSeparatedAndDeterministic) {
  const NetworkConfig c = make(4, 2, 1, 0.6);
  std::ostringstream a, b;
  trace(c, quick(9), 200, a);
  trace(c, quick(9), 200, b);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream in(a.str());
  std::string line;
  std::int64_t last = -1;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    std::istringstream f(line);
    std::int64_t frame, detail;
    int ss;
    std::string kind;
    ASSERT_TRUE(f >> frame >> ss >> kind >> detail) << line;
    EXPECT_GE(frame, last);
    EXPECT_GE(ss, 0);
    EXPECT_LT(ss, 4);
    last = frame;
  }
  EXPECT_GT(lines, 100);
  EXPECT_NE(a.str().find("\ttx_piggyback\t"), std::string::npos);
}

TEST(Summarize, ConfidenceHalfWidth) {
  const Estimate e = detail::summarize({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(e.mean, 2.0);
  EXPECT_NEAR(e.half_width, 4.303 * 1.0 / std::sqrt(3.0), 1e-12);
  EXPECT_TRUE(std::isnan(detail::summarize({}).mean));
}
