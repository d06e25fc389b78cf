#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "dea/core.hpp"
#include "dea/csv.hpp"

using namespace dea;

TEST(GenerateSignal, SineStartsAtOffsetAndSpansAmplitude) {
  SignalSpec s{Waveform::sine, 0.1, 650, 400, 10.0};
  const auto ts = generate_signal(s, 1000);
  EXPECT_DOUBLE_EQ(ts.v()[0], 650.0);
  EXPECT_GT(ts.v()[1], 650.0);  // rising
  const auto [lo, hi] = std::minmax_element(ts.v().begin(), ts.v().end());
  // 2.5 s and 7.5 s are sample points at 1 kHz, so the extrema are hit exactly up to rounding
  EXPECT_NEAR(*hi, 1050.0, 1e-9);
  EXPECT_NEAR(*lo, 250.0, 1e-9);
}

TEST(GenerateSignal, ConstantIsFlat) {
  SignalSpec s{Waveform::constant, 1.0, 600, 0, 2.0};
  const auto ts = generate_signal(s, 100);
  for (double v : ts.v()) EXPECT_EQ(v, 600.0);
}

TEST(GenerateSignal, RectangleAlternatesEveryHalfPeriod) {
  SignalSpec s{Waveform::rectangle, 1.0, 650, 400, 2.0};
  const auto ts = generate_signal(s, 100);
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const double t = ts.t()[k];
    const double expected = (std::fmod(t + 1e-12, 1.0) < 0.5) ? 1050.0 : 250.0;
    EXPECT_EQ(ts.v()[k], expected) << "t=" << t;
  }
  EXPECT_EQ(ts.v()[0], 1050.0);
  EXPECT_EQ(ts.v()[50], 250.0);
  EXPECT_EQ(ts.v()[100], 1050.0);
  const auto sw = s.switching_times(2.0);
  ASSERT_EQ(sw.size(), 4u);
  EXPECT_DOUBLE_EQ(sw[0], 0.5);
  EXPECT_DOUBLE_EQ(sw[1], 1.0);
}

TEST(GenerateSignal, TriangleHasConstantSlope) {
  SignalSpec s{Waveform::triangle, 1.0, 650, 400, 1.0};
  const double slope = 4 * 400 * 1.0;
  EXPECT_DOUBLE_EQ(s.value(0.0), 650.0);
  EXPECT_NEAR(s.value(0.1), 650 + slope * 0.1, 1e-9);
  EXPECT_NEAR(s.value(0.25), 1050, 1e-9);
  EXPECT_NEAR(s.value(0.5), 650, 1e-9);
  EXPECT_NEAR(s.value(0.75), 250, 1e-9);
  EXPECT_DOUBLE_EQ(s.derivative(0.1), slope);
  EXPECT_DOUBLE_EQ(s.derivative(0.4), -slope);
}

TEST(GenerateSignal, LengthFollowsDurationAndRate) {
  for (double dur : {0.5, 1.0, 2.37, 10.0}) {
    for (double rate : {100.0, 250.0, 1000.0}) {
      SignalSpec s{Waveform::sine, 1.0, 650, 400, dur};
      EXPECT_EQ(generate_signal(s, rate).size(), static_cast<std::size_t>(std::floor(dur * rate)) + 1);
    }
  }
}

TEST(GenerateSignal, RejectsInvalidSpecs) {
  EXPECT_THROW(generate_signal({Waveform::sine, 1, 650, -1, 1}, 100), ValidationError);
  EXPECT_THROW(generate_signal({Waveform::sine, 1, 650, 400, 0}, 100), ValidationError);
  EXPECT_THROW(generate_signal({Waveform::sine, 1, 300, 400, 1}, 100), ValidationError);  // negative voltage
  EXPECT_THROW(generate_signal({Waveform::sine, 10, 650, 400, 1}, 100), ValidationError);  // under-sampled
  EXPECT_THROW(generate_signal({Waveform::sine, 0, 650, 400, 1}, 100), ValidationError);
}

TEST(Drive, StepJumpsAfterZero) {
  const auto d = Drive::from_signal({Waveform::step, 1, 0, 600, 10});
  EXPECT_EQ(d(0.0), 0.0);
  EXPECT_EQ(d(1e-6), 600.0);
  ASSERT_EQ(d.breaks().size(), 1u);
  EXPECT_NEAR(d.jump_at(0.0), 600.0, 1e-12);
}

TEST(Drive, PiecewiseConstantLevels) {
  const auto d = Drive::piecewise_constant({1.0, 2.0}, {0.0, 5.0, 1.0});
  EXPECT_EQ(d(0.5), 0.0);
  EXPECT_EQ(d(1.0), 0.0);
  EXPECT_EQ(d(1.5), 5.0);
  EXPECT_EQ(d(2.5), 1.0);
  EXPECT_NEAR(d.jump_at(2.0), -4.0, 1e-12);
}

TEST(Drive, SeriesRegistersLargeJumps) {
  TimeSeries ts({0, 1, 2, 3, 4}, {0, 0, 100, 100, 100});
  const auto d = Drive::from_series(ts);
  ASSERT_EQ(d.breaks().size(), 2u);
  EXPECT_DOUBLE_EQ(d(1.5), 50.0);
  EXPECT_DOUBLE_EQ(d.slope(1.5), 100.0);
}

TEST(Drive, SeriesStepsHoldUntilTheLaterSample) {
  TimeSeries ts({0, 1, 2, 3, 4}, {0, 1, 100, 101, 101});
  const auto d = Drive::from_series(ts, 0.05, Drive::Jump::step);
  ASSERT_EQ(d.breaks().size(), 1u);
  EXPECT_NEAR(d.breaks()[0], 2.0, 1e-5);
  EXPECT_LT(d.breaks()[0], 2.0);
  EXPECT_DOUBLE_EQ(d(1.5), 1.0);
  EXPECT_DOUBLE_EQ(d.slope(1.5), 0.0);
  EXPECT_DOUBLE_EQ(d(2.0), 100.0);
  EXPECT_DOUBLE_EQ(d(0.5), 0.5);  // small changes stay linear
  EXPECT_DOUBLE_EQ(d(2.5), 100.5);
  EXPECT_NEAR(d.jump_at(d.breaks()[0]), 99.0, 1e-9);
}

TEST(Schedule, ExactAtBreakpoints) {
  ParameterSchedule s({600, 700, 800}, {{1, 10}, {2, 20}, {4, 40}});
  EXPECT_EQ(interpolate_schedule(s, 600), (std::vector<double>{1, 10}));
  EXPECT_EQ(interpolate_schedule(s, 700), (std::vector<double>{2, 20}));
  EXPECT_EQ(interpolate_schedule(s, 800), (std::vector<double>{4, 40}));
}

TEST(Schedule, MidpointAndClamp) {
  ParameterSchedule s({600, 700, 1200}, {{1, 10}, {3, 30}, {5, 50}});
  const auto mid = interpolate_schedule(s, 650);
  EXPECT_DOUBLE_EQ(mid[0], 2);
  EXPECT_DOUBLE_EQ(mid[1], 20);
  EXPECT_EQ(interpolate_schedule(s, 1300), (std::vector<double>{5, 50}));
  EXPECT_EQ(interpolate_schedule(s, 0), (std::vector<double>{1, 10}));
}

TEST(Schedule, MonotoneBetweenOrderedNeighbours) {
  ParameterSchedule s({100, 200, 300}, {{1, 9}, {4, 2}, {8, 1}});
  std::vector<double> prev = interpolate_schedule(s, 100);
  for (double v = 101; v <= 300; v += 1) {
    const auto cur = interpolate_schedule(s, v);
    EXPECT_GE(cur[0], prev[0]);
    EXPECT_LE(cur[1], prev[1]);
    prev = cur;
  }
}

TEST(Schedule, RejectsBadInput) {
  EXPECT_THROW(ParameterSchedule({600}, {{1}}), ValidationError);
  EXPECT_THROW(ParameterSchedule({600, 600}, {{1}, {2}}), ValidationError);
  EXPECT_THROW(ParameterSchedule({600, 700}, {{1}, {2, 3}}), ValidationError);
}

TEST(Resample, TwoPointLine) {
  TimeSeries ts({0, 1}, {0, 1});
  const auto r = resample_uniform(ts, 0.5);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_DOUBLE_EQ(r.t()[1], 0.5);
  EXPECT_DOUBLE_EQ(r.v()[1], 0.5);
  EXPECT_DOUBLE_EQ(r.v()[2], 1.0);
}

TEST(Resample, IdempotentOnUniformSeries) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  std::vector<double> t(101), v(101);
  for (int i = 0; i <= 100; ++i) t[i] = 0.01 * i, v[i] = nd(rng);
  TimeSeries ts(t, v);
  const auto once = resample_uniform(ts, 0.01);
  const auto twice = resample_uniform(once, 0.01);
  ASSERT_EQ(once.size(), ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EXPECT_NEAR(once.v()[i], v[i], 1e-12);
    EXPECT_NEAR(twice.v()[i], once.v()[i], 1e-12);
  }
}

TEST(Resample, ConstantStaysConstant) {
  TimeSeries ts({0, 0.3, 1.1, 2.0}, {4, 4, 4, 4});
  for (double dt : {0.01, 0.37, 1.9}) {
    const auto r = resample_uniform(ts, dt);
    for (double v : r.v()) EXPECT_DOUBLE_EQ(v, 4.0);
  }
  EXPECT_THROW(resample_uniform(ts, 3.0), ValidationError);
  EXPECT_THROW(resample_uniform(ts, 0.0), ValidationError);
}

TEST(Resample, HoldKeepsLatestSample) {
  TimeSeries ts({0, 0.1, 0.2}, {1, 5, 7});
  const auto r = resample_uniform(ts, 0.025, Resampling::hold);
  ASSERT_EQ(r.size(), 9u);
  const std::vector<double> expect{1, 1, 1, 1, 5, 5, 5, 5, 7};
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r.v()[i], expect[i]) << i;
}

TEST(TimeSeries, Invariants) {
  EXPECT_THROW(TimeSeries({0}, {1}), ValidationError);
  EXPECT_THROW(TimeSeries({0, 1}, {1}), ValidationError);
  EXPECT_THROW(TimeSeries({0, 0}, {1, 2}), ValidationError);
}

TEST(ActuatorSpec, Validation) {
  EXPECT_NO_THROW(ActuatorSpec::reference().validate());
  EXPECT_NO_THROW(ActuatorSpec::creep().validate());
  ActuatorSpec s;
  s.A_e = 2 * s.A_c;
  EXPECT_THROW(s.validate(), ValidationError);
  s = {};
  s.j = 0;
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(Csv, SeriesRoundTripIsExact) {
  const auto dir = std::filesystem::temp_directory_path() / "dea_test_core";
  SignalSpec s{Waveform::sine, 1.3, 650, 400, 1.0};
  const auto ts = generate_signal(s, 97);
  csv::write_series(dir / "x.csv", ts);
  const auto back = csv::read_series(dir / "x.csv");
  ASSERT_EQ(back.size(), ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EXPECT_EQ(back.t()[i], ts.t()[i]);
    EXPECT_EQ(back.v()[i], ts.v()[i]);
  }
  std::filesystem::remove_all(dir);
}
