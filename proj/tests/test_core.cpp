#include <gtest/gtest.h>

#include "pgpoll/core.hpp"

using pgpoll::ConfigError;
using pgpoll::NetworkConfig;

TEST(Validate, AcceptsDefaults) {
  NetworkConfig c;
  c.n_ss = 10;
  c.n_tos = 20;
  c.n_slots = 7;
  c.w0 = 32;
  c.m_exp = 5;
  c.t16_frames = 6;
  c.max_retx = 5;
  c.max_piggy = 0;
  c.lambda = 1.0;
  EXPECT_EQ(pgpoll::validate(c), c);
}

TEST(Validate, RejectsWindowSmallerThanTos) {
  NetworkConfig c;
  c.w0 = 16;
  try {
    pgpoll::validate(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("w0 >= n_tos"), std::string::npos) << e.what();
  }
}

TEST(Validate, RejectsZeroStations) {
  NetworkConfig c;
  c.n_ss = 0;
  EXPECT_THROW(pgpoll::validate(c), ConfigError);
}

TEST(Validate, RejectsEachBrokenInvariant) {
  auto broken = [](auto mutate) {
    NetworkConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(pgpoll::validate(broken([](auto& c) { c.n_tos = 0; })), ConfigError);
  EXPECT_THROW(pgpoll::validate(broken([](auto& c) { c.n_slots = 0; })), ConfigError);
  EXPECT_THROW(pgpoll::validate(broken([](auto& c) { c.t16_frames = 0; })), ConfigError);
  EXPECT_THROW(pgpoll::validate(broken([](auto& c) { c.max_retx = -1; })), ConfigError);
  EXPECT_THROW(pgpoll::validate(broken([](auto& c) { c.max_piggy = -1; })), ConfigError);
  EXPECT_THROW(pgpoll::validate(broken([](auto& c) { c.lambda = 0.0; })), ConfigError);
  EXPECT_THROW(pgpoll::validate(broken([](auto& c) { c.lambda = std::nan(""); })), ConfigError);
  EXPECT_THROW(pgpoll::validate(broken([](auto& c) { c.t_frame = 2.0; })), ConfigError);
}

TEST(Validate, IsIdempotent) {
  NetworkConfig c;
  c.n_ss = 50;
  c.max_piggy = 3;
  c.lambda = 0.3;
  EXPECT_EQ(pgpoll::validate(pgpoll::validate(c)), pgpoll::validate(c));
}

TEST(NetworkConfig, WindowDoublesUpToCap) {
  NetworkConfig c;
  EXPECT_EQ(c.window(0), 32);
  EXPECT_EQ(c.window(1), 64);
  EXPECT_EQ(c.window(5), 32 << 5);
  EXPECT_EQ(c.window(9), 32 << 5);
}

TEST(Clamp01, MapsNanToZero) {
  EXPECT_EQ(pgpoll::clamp01(std::nan("")), 0.0);
  EXPECT_EQ(pgpoll::clamp01(-0.5), 0.0);
  EXPECT_EQ(pgpoll::clamp01(1.5), 1.0);
  EXPECT_EQ(pgpoll::clamp01(0.25), 0.25);
}
