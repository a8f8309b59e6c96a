#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "actreg/energy.hpp"
#include "actreg/rng.hpp"

using namespace actreg;
using namespace actreg::energy;

namespace {

std::vector<PowerSample> profile(std::initializer_list<std::pair<double, double>> points, Phase phase = Phase::training) {
  std::vector<PowerSample> out;
  for (auto [t, w] : points) out.push_back({t, w, phase, std::nullopt, std::nullopt});
  return out;
}

void expect_rel(double got, double want, double tol = 1e-9) {
  EXPECT_LE(std::abs(got - want), tol * std::max(1.0, std::abs(want))) << got << " vs " << want;
}

}  // namespace

TEST(Integrate, ConstantRectangle) {
  const auto r = integrate(profile({{0, 100}, {10, 100}}));
  EXPECT_EQ(r.total_energy_joules, 1000.0);
  EXPECT_EQ(r.average_power_watts, 100.0);
  EXPECT_EQ(r.duration_seconds, 10.0);
}

TEST(Integrate, Ramp) { EXPECT_EQ(integrate(profile({{0, 0}, {10, 100}})).total_energy_joules, 500.0); }

TEST(Integrate, TriangleSampledFinely) {
  std::vector<PowerSample> s;
  for (int i = 0; i <= 40; ++i) {
    const double t = 0.25 * i;
    s.push_back({t, t <= 5 ? 20.0 * t : 20.0 * (10 - t), Phase::training, std::nullopt, std::nullopt});
  }
  expect_rel(integrate(s).total_energy_joules, 0.5 * 10 * 100);
}

TEST(Integrate, FewerThanTwoSamplesIsZeroReport) {
  EXPECT_EQ(integrate(profile({{3, 50}})), EnergyReport{});
  EXPECT_EQ(integrate(std::vector<PowerSample>{}), EnergyReport{});
  auto mixed = profile({{0, 10}, {1, 10}});
  mixed[1].phase = Phase::testing;
  EXPECT_EQ(integrate(mixed, Phase::testing), EnergyReport{});
}

TEST(Integrate, AuxiliaryReadingsIgnored) {
  auto s = profile({{0, 100}, {2, 100}});
  s[0].cpu_percent = 99;
  s[0].memory_percent = 50;
  EXPECT_EQ(integrate(s).total_energy_joules, 200.0);
}

TEST(IntegrateProperty, AveragePowerTimesDurationIsEnergy) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PowerSample> s;
    double t = rng.uniform(0, 5);
    for (std::size_t i = 0, n = 2 + rng.below(30); i < n; ++i) {
      s.push_back({t, rng.uniform(0, 300), Phase::training, std::nullopt, std::nullopt});
      t += rng.uniform(0.01, 2);
    }
    const auto r = integrate(s);
    EXPECT_GE(r.total_energy_joules, 0.0);
    expect_rel(r.average_power_watts * r.duration_seconds, r.total_energy_joules);
  }
}

TEST(IntegrateProperty, ExactOnPiecewiseLinearProfiles) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    // Random knots; sample each linear piece at its ends plus random interior points.
    std::vector<std::pair<double, double>> knots{{0.0, rng.uniform(0, 200)}};
    for (int k = 0; k < 5; ++k) knots.push_back({knots.back().first + rng.uniform(0.5, 3), rng.uniform(0, 200)});
    double analytic = 0;
    std::vector<PowerSample> s;
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
      const auto [t0, w0] = knots[k];
      const auto [t1, w1] = knots[k + 1];
      analytic += 0.5 * (w0 + w1) * (t1 - t0);
      std::vector<double> ts{t0};
      for (int j = 0; j < 3; ++j) ts.push_back(rng.uniform(t0, t1));
      std::sort(ts.begin(), ts.end());
      for (double t : ts) s.push_back({t, w0 + (w1 - w0) * (t - t0) / (t1 - t0), Phase::training, {}, {}});
    }
    s.push_back({knots.back().first, knots.back().second, Phase::training, {}, {}});
    expect_rel(integrate(s).total_energy_joules, analytic);
  }
}

TEST(IntegrateProperty, AdditiveOverContiguousSplits) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PowerSample> s;
    double t = 0;
    for (int i = 0; i < 20; ++i) {
      s.push_back({t, rng.uniform(0, 100), Phase::training, {}, {}});
      t += rng.uniform(0.1, 1);
    }
    const std::size_t cut = 2 + rng.below(16);
    const std::span<const PowerSample> all(s);
    const auto a = integrate(all.first(cut)), b = integrate(all.subspan(cut));
    const double bridge = 0.5 * (s[cut - 1].watts + s[cut].watts) * (s[cut].timestamp - s[cut - 1].timestamp);
    expect_rel(integrate(all).total_energy_joules, a.total_energy_joules + b.total_energy_joules + bridge);
  }
}

TEST(IntegrateProperty, PhaseFilterEqualsPrefilteredSubsequence) {
  Rng rng(5);
  std::vector<PowerSample> s, only_val;
  double t = 0;
  for (int i = 0; i < 60; ++i) {
    const Phase p = static_cast<Phase>(rng.below(3));
    s.push_back({t, rng.uniform(0, 100), p, {}, {}});
    if (p == Phase::validation) only_val.push_back(s.back());
    t += rng.uniform(0.1, 1);
  }
  EXPECT_EQ(integrate(s, Phase::validation), integrate(only_val));
}

TEST(EnergyPerCorrect, UnitsAndGuards) {
  EXPECT_DOUBLE_EQ(*energy_per_correct(1.0, 100), 10.0);
  EXPECT_EQ(*energy_per_correct(0.0, 7), 0.0);
  EXPECT_FALSE(energy_per_correct(5.0, 0).has_value());
}

TEST(EnergyPerCorrectProperty, Homogeneous) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const double e = rng.uniform(0, 1000);
    const std::size_t n = 1 + rng.below(1000);
    EXPECT_DOUBLE_EQ(*energy_per_correct(2 * e, n), 2 * *energy_per_correct(e, n));
  }
}

TEST(Replay, ThreeLineFixture) {
  std::istringstream in("0.000\t100.5\ttraining\n0.200\t101.0\ttraining\t12.5\t40.0\n0.400\t90\tvalidation\n");
  const auto s = parse_replay(in);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[1].watts, 101.0);
  EXPECT_EQ(*s[1].cpu_percent, 12.5);
  EXPECT_EQ(s[2].phase, Phase::validation);
}

TEST(Replay, EmptyFile) {
  std::istringstream in("");
  EXPECT_TRUE(parse_replay(in).empty());
}

TEST(Replay, OutOfOrderNamesLine) {
  std::istringstream in("1.000\t10\ttraining\n2.000\t10\ttraining\n1.500\t10\ttraining\n");
  try {
    parse_replay(in, "fixture");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("fixture:3"), std::string::npos) << e.what();
  }
}

TEST(Replay, MalformedLinesRejected) {
  for (const char* text : {"0.0\t10\n", "0.0\tabc\ttraining\n", "0.0\t10\ttrain\n", "0.0\t-5\ttesting\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_replay(in), ParseError) << text;
  }
}

TEST(Replay, FormatRoundTrip) {
  auto s = profile({{0.125, 80.25}, {0.5, 81}});
  s[1].phase = Phase::testing;
  s[1].cpu_percent = 3;
  s[1].memory_percent = 4;
  std::istringstream in(format_replay(s));
  EXPECT_EQ(parse_replay(in), s);
}

TEST(Replay, MissingFileIsIoError) { EXPECT_THROW(replay_source("/nonexistent/replay.tsv"), IoError); }

TEST(LiveTelemetry, StubCommandAtFiveHertz) {
  LiveTelemetry live("echo 100.0", 5.0);
  live.start(Phase::training);
  std::this_thread::sleep_for(std::chrono::milliseconds(2000));
  live.stop();
  const auto s = live.samples();
  EXPECT_EQ(live.status(), TelemetryStatus::stopped);
  EXPECT_GE(s.size(), 8u);
  EXPECT_LE(s.size(), 12u);
  for (const auto& x : s) EXPECT_EQ(x.watts, 100.0);
  expect_rel(integrate(s).average_power_watts, 100.0);
}

TEST(LiveTelemetry, MissingCommandIsUnavailable) {
  LiveTelemetry live("/nonexistent/power-probe", 20.0);
  live.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  live.stop();
  EXPECT_EQ(live.status(), TelemetryStatus::unavailable);
}

TEST(LiveTelemetry, PhaseSwitchTagsLaterSamples) {
  LiveTelemetry live("echo 5", 20.0);
  live.start(Phase::training);
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  live.set_phase(Phase::testing);
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  live.stop();
  const auto s = live.samples();
  ASSERT_GE(s.size(), 4u);
  EXPECT_EQ(s.front().phase, Phase::training);
  EXPECT_EQ(s.back().phase, Phase::testing);
  // Once switched, the tag never reverts.
  bool switched = false;
  for (const auto& x : s) {
    if (x.phase == Phase::testing) switched = true;
    if (switched) EXPECT_EQ(x.phase, Phase::testing);
  }
}

TEST(LiveTelemetry, ReadOnceParsesSingleNumber) {
  EXPECT_EQ(*LiveTelemetry::read_once("printf '42.5\\n'"), 42.5);
  EXPECT_FALSE(LiveTelemetry::read_once("echo watts").has_value());
  EXPECT_FALSE(LiveTelemetry::read_once("false").has_value());
}
