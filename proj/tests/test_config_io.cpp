#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "pgpoll/config_io.hpp"
#include "pgpoll/solver.hpp"

using namespace pgpoll;

namespace {
NetworkConfig odd_config() {
  NetworkConfig c;
  c.n_ss = 37;
  c.n_tos = 11;
  c.n_slots = 9;
  c.w0 = 44;
  c.m_exp = 3;
  c.t16_frames = 4;
  c.max_retx = 2;
  c.max_piggy = 5;
  c.lambda = 0.123456789012345;
  return c;
}
}  // namespace

TEST(ConfigJson, RoundTrip) {
  const NetworkConfig c = odd_config();
  EXPECT_EQ(config_from_json(json::parse(to_json(c).dump())), c);
}

TEST(ConfigJson, PartialObjectKeepsBase) {
  const NetworkConfig c = config_from_json(json::parse(R"({"n_slots": 3})"), odd_config());
  NetworkConfig expect = odd_config();
  expect.n_slots = 3;
  EXPECT_EQ(c, expect);
}

TEST(ConfigJson, RejectsUnknownKeyAndWrongType) {
  EXPECT_THROW(config_from_json(json::parse(R"({"slots": 3})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"n_ss": 2.5})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"lambda": "x"})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse("[1,2]")), ConfigError);
}

TEST(ConfigKv, RoundTrip) {
  const NetworkConfig c = odd_config();
  EXPECT_EQ(config_from_kv(to_kv(c)), c);
}

TEST(ConfigKv, CommentsAndErrors) {
  const NetworkConfig c = config_from_kv("# comment\n\n  n_ss = 4 \nlambda=0.5\n");
  EXPECT_EQ(c.n_ss, 4);
  EXPECT_EQ(c.lambda, 0.5);
  EXPECT_THROW(config_from_kv("n_ss 4\n"), ConfigError);
  EXPECT_THROW(config_from_kv("N=4\n"), ConfigError);
  EXPECT_THROW(config_from_kv("n_ss=4x\n"), ConfigError);
}

TEST(Override, AcceptsAliases) {
  NetworkConfig c;
  apply_override(c, "N=50");
  apply_override(c, "L = 21");
  apply_override(c, "G=3");
  apply_override(c, "rho_in=0.25");
  apply_override(c, "N_s=16");
  apply_override(c, "W0=16");
  apply_override(c, "M=4");
  apply_override(c, "D=2");
  apply_override(c, "m=3");
  EXPECT_EQ(c.n_ss, 50);
  EXPECT_EQ(c.n_slots, 21);
  EXPECT_EQ(c.max_piggy, 3);
  EXPECT_EQ(c.lambda, 0.25);
  EXPECT_EQ(c.n_tos, 16);
  EXPECT_EQ(c.w0, 16);
  EXPECT_EQ(c.t16_frames, 4);
  EXPECT_EQ(c.max_retx, 2);
  EXPECT_EQ(c.m_exp, 3);
  EXPECT_THROW(apply_override(c, "bogus=1"), ConfigError);
  EXPECT_THROW(apply_override(c, "N"), ConfigError);
}

TEST(LoadConfig, ChoosesFormatByExtension) {
  const std::string json_path = testing::TempDir() + "pgpoll_cfg.json";
  const std::string kv_path = testing::TempDir() + "pgpoll_cfg.conf";
  {
    std::ofstream(json_path) << to_json(odd_config()).dump(2);
    std::ofstream(kv_path) << to_kv(odd_config());
  }
  EXPECT_EQ(load_config(json_path), odd_config());
  EXPECT_EQ(load_config(kv_path), odd_config());
  EXPECT_THROW(load_config(testing::TempDir() + "missing.json"), ConfigError);
  std::remove(json_path.c_str());
  std::remove(kv_path.c_str());
}

TEST(Metrics, NamesUniqueAndSimSubset) {
  std::set<std::string> names;
  int with_sim = 0;
  for (const auto& m : kMetrics) {
    EXPECT_TRUE(names.insert(std::string(m.name)).second) << m.name;
    with_sim += m.sim != nullptr;
  }
  EXPECT_EQ(with_sim, 13);
  EXPECT_NE(find_metric("th"), nullptr);
  EXPECT_EQ(find_metric("nope"), nullptr);
}

TEST(ModelOutput, JsonAndCsvAgree) {
  NetworkConfig c;
  c.n_ss = 20;
  c.max_piggy = 1;
  const ModelSolution s = solve(c);
  const json j = to_json(s);
  EXPECT_EQ(j["source"], "model");
  EXPECT_DOUBLE_EQ(j["th"].get<double>(), s.th);
  const std::string header = csv_header(), row = csv_row(s);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
}

TEST(ModelOutput, NonFiniteBecomesNull) {
  ModelSolution s;
  s.ew = kInf;
  EXPECT_TRUE(to_json(s)["ew"].is_null());
}
