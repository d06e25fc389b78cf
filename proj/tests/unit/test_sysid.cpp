#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dea/sysid.hpp"

using namespace dea;

namespace {

TimeSeries uniform(double Ts, std::size_t n, const std::function<double(double)>& f) {
  std::vector<double> t(n), v(n);
  for (std::size_t k = 0; k < n; ++k) {
    t[k] = Ts * static_cast<double>(k);
    v[k] = f(t[k]);
  }
  return {t, v};
}

// Up/down steps of varying length: excites all three time scales.
double staircase(double t) {
  if (t < 0.05) return 0.0;
  if (t < 1.5) return 1.0;
  if (t < 2.0) return 0.3;
  if (t < 2.2) return 1.4;
  if (t < 4.0) return 0.6;
  return 1.0;
}

}  // namespace

TEST(Pz3ToStateSpace, DcGainAndPoles) {
  const ProcessModelPZ3 pm{2.0, 0.1, {1.0, 0.2, 0.05}};
  const auto ss = pz3_to_statespace(pm);
  EXPECT_NEAR(ss.dc_gain(), 2.0, 1e-12);
  EXPECT_EQ(ss.D, 0.0);
  std::vector<double> ev;
  for (const auto& e : ss.A.eigenvalues()) {
    EXPECT_NEAR(e.imag(), 0.0, 1e-9);
    ev.push_back(e.real());
  }
  std::sort(ev.begin(), ev.end());
  EXPECT_NEAR(ev[0], -20.0, 1e-9);
  EXPECT_NEAR(ev[1], -5.0, 1e-9);
  EXPECT_NEAR(ev[2], -1.0, 1e-9);
}

TEST(Pz3ToStateSpace, NoZeroLeavesSingleLeadingEntry) {
  const auto ss = pz3_to_statespace({3.0, 0.0, {0.4, 0.3, 0.2}});
  EXPECT_NE(ss.C[0], 0.0);
  EXPECT_EQ(ss.C[1], 0.0);
  EXPECT_EQ(ss.C[2], 0.0);
}

TEST(Pz3ToStateSpace, FrequencyResponseMatchesTransferFunction) {
  const ProcessModelPZ3 pm{1.7, -0.03, {2.0, 0.15, 0.01}};
  const auto ss = pz3_to_statespace(pm);
  for (int i = 0; i < 20; ++i) {
    const double w = std::pow(10.0, -2 + 5.0 * i / 19);
    const std::complex<double> s(0, w);
    const auto g = pm.transfer(s);
    EXPECT_LT(std::abs(ss.transfer(s) - g) / std::abs(g), 1e-9) << w;
  }
  EXPECT_THROW(pz3_to_statespace({1, 0, {1, -1, 1}}), ValidationError);
}

TEST(DiscretizeZoh, IntegratorAndScalarCases) {
  ContinuousStateSpace integ{Mat::Zero(1, 1), Vec::Ones(1), Eigen::RowVectorXd::Ones(1), 0};
  const auto d = discretize_zoh(integ, 0.25);
  EXPECT_NEAR(d.A(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(d.B[0], 0.25, 1e-15);

  ContinuousStateSpace sc{-Mat::Ones(1, 1), 3 * Vec::Ones(1), Eigen::RowVectorXd::Ones(1), 0};
  const auto e = discretize_zoh(sc, 0.1);
  EXPECT_NEAR(e.A(0, 0), std::exp(-0.1), 1e-15);
  EXPECT_NEAR(e.B[0], (1 - std::exp(-0.1)) * 3, 1e-15);
  EXPECT_THROW(discretize_zoh(sc, 0.0), ValidationError);
}

TEST(DiscretizeZoh, PreservesDcGainOfRandomStableSystems) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lt(-3, 1), kp(-5, 5), tz(-0.5, 0.5);
  for (int trial = 0; trial < 100; ++trial) {
    const ProcessModelPZ3 pm{kp(rng), tz(rng), {std::pow(10, lt(rng)), std::pow(10, lt(rng)), std::pow(10, lt(rng))}};
    const auto c = pz3_to_statespace(pm);
    const auto d = discretize_zoh(c, 0.001);
    EXPECT_LT(std::abs(d.dc_gain() - c.dc_gain()) / std::abs(c.dc_gain()), 1e-9);
    EXPECT_LT(d.spectral_radius(), 1.0);
  }
}

TEST(SimulateDiscrete, ZeroInputZeroOutput) {
  const auto ss = published::statespace_table()[0].second;
  const auto y = simulate_discrete(ss, uniform(0.001, 100, [](double) { return 0.0; }));
  for (double v : y.v()) EXPECT_EQ(v, 0.0);
}

TEST(SimulateDiscrete, FirstStepIsCB) {
  const auto ss = published::statespace_table()[0].second;
  const auto y = simulate_discrete(ss, uniform(0.001, 5, [](double) { return 1.0; }));
  // C B by hand: 5.0425 * 3.4098e-7 + 56.8986 * 0.0010 + 0 * 0.2327
  EXPECT_EQ(y.v()[0], 0.0);
  EXPECT_NEAR(y.v()[1], 5.0425 * 3.4098e-7 + 56.8986 * 0.0010, 1e-12);
  EXPECT_NEAR(y.v()[1], 5.69003e-2, 1e-7);
}

TEST(SimulateDiscrete, ConvergesToDcGain) {
  const auto ss = published::statespace_table()[5].second;
  // slowest pole 0.9999 at 1 ms: ~0.1 s time constant in samples of 1e4
  const auto y = simulate_discrete(ss, uniform(0.001, 400000, [](double) { return 2.0; }));
  EXPECT_NEAR(y.v().back(), 2.0 * ss.dc_gain(), 1e-9 * std::abs(ss.dc_gain()));
}

TEST(SimulateDiscrete, RejectsOffGridInput) {
  const auto ss = published::statespace_table()[0].second;
  EXPECT_THROW(simulate_discrete(ss, uniform(0.002, 10, [](double) { return 1.0; })), ValidationError);
}

TEST(PublishedStateSpace, SpectralRadius) {
  const auto tab = published::statespace_table();
  ASSERT_EQ(tab.size(), 12u);
  for (const auto& [v, s] : tab) {
    if (v == 300) {
      // A11 is printed as exactly 1 (four decimals), leaving a marginally stable integrator
      EXPECT_DOUBLE_EQ(s.spectral_radius(), 1.0);
      continue;
    }
    EXPECT_LT(s.spectral_radius(), 1.0) << v;
  }
  EXPECT_NEAR(tab[0].second.dc_gain(), 0.44, 0.01);
  EXPECT_NEAR(tab[5].second.dc_gain(), 0.64, 0.01);
}

TEST(FitPz3, RecoversKnownModel) {
  const ProcessModelPZ3 truth{2.0, 0.1, {1.0, 0.2, 0.05}};
  const auto u = uniform(0.005, 1601, staircase);
  const auto y = simulate_pz3(truth, u);
  const auto fit = fit_pz3(u, y);
  EXPECT_NEAR(fit.model.Kp / 2.0, 1.0, 0.005);
  EXPECT_NEAR(fit.model.Tz / 0.1, 1.0, 0.005);
  EXPECT_NEAR(fit.model.Tp[0] / 1.0, 1.0, 0.005);
  EXPECT_NEAR(fit.model.Tp[1] / 0.2, 1.0, 0.005);
  EXPECT_NEAR(fit.model.Tp[2] / 0.05, 1.0, 0.005);
  EXPECT_GT(fit.report.r_squared, 0.999999);
}

TEST(FitPz3, FirstOrderData) {
  const ProcessModelPZ3 truth{0.7, 0.0, {0.5, 1e-4, 1e-4}};
  const auto u = uniform(0.005, 1201, staircase);
  const auto y = simulate_pz3(truth, u);
  const auto fit = fit_pz3(u, y);
  EXPECT_NEAR(fit.model.Kp / 0.7, 1.0, 0.01);
  EXPECT_NEAR(fit.model.Tp[0] / 0.5, 1.0, 0.01);
}

TEST(FitPz3, StaticGainOnly) {
  const auto u = uniform(0.01, 301, [](double t) { return t < 0.5 ? 0.0 : 2.0; });
  std::vector<double> v = u.v();
  for (double& x : v) x *= 1.5;
  const auto fit = fit_pz3(u, TimeSeries(u.t(), v));
  EXPECT_NEAR(fit.model.Kp, 1.5, 1e-3);
  // strictly proper: the sample at the jump is missed by the full jump height 3
  EXPECT_LT(fit.report.residual_norm, 3.01);
  EXPECT_GT(fit.report.r_squared, 0.97);
}

TEST(Hybrid, ZeroVoltageZeroOutput) {
  const auto spec = ActuatorSpec::creep();
  const auto r = hybrid_static_dynamic(spec, 1.1947e6, published::statespace_schedule(), 0.001,
                                       uniform(0.001, 200, [](double) { return 0.0; }));
  for (double z : r.dz) EXPECT_EQ(z, 0.0);
}

TEST(Hybrid, SteadyStateIsDcGainTimesStaticPrediction) {
  const auto spec = ActuatorSpec::creep();
  const auto [v, ss] = published::statespace_table()[5];
  const double stat = hookean_height_change(spec, 1.1947e6, v);
  // by hand: strain = sigma_el A_e / (A_c Y), dz = strain z0 j
  const double sig = 3.8542e-12 * 2.8 * std::pow(v / 25e-6, 2);
  EXPECT_NEAR(stat, sig * 7.5602e-5 / (1.450e-4 * 1.1947e6) * 25e-6 * 399, 1e-18);
  const auto u = uniform(0.001, 300000, [&](double) { return v; });
  const auto r = hybrid_static_dynamic(spec, 1.1947e6, ss, u);
  EXPECT_NEAR(r.dz.back() / (stat * ss.dc_gain()), 1.0, 1e-6);
  HybridOptions sup;
  sup.superimpose_static = true;
  const auto r2 = hybrid_static_dynamic(spec, 1.1947e6, ss, u, sup);
  EXPECT_NEAR(r2.dz.back() / (stat * (1 + ss.dc_gain())), 1.0, 1e-6);
}

TEST(Hybrid, ConstantScheduleEqualsFixedRealization) {
  const auto spec = ActuatorSpec::creep();
  const auto ss = published::statespace_table()[3].second;
  const auto e = to_vector(ss);
  const ParameterSchedule flat({100, 600, 1200}, {e, e, e});
  const auto u = uniform(0.001, 3000, [](double t) { return 650 + 400 * std::sin(2 * M_PI * t); });
  const auto a = hybrid_static_dynamic(spec, 1.1947e6, flat, 0.001, u);
  const auto b = hybrid_static_dynamic(spec, 1.1947e6, ss, u);
  ASSERT_EQ(a.dz.size(), b.dz.size());
  for (std::size_t i = 0; i < a.dz.size(); ++i) EXPECT_EQ(a.dz[i], b.dz[i]);
}

TEST(Hybrid, WarnsOnClampAndInstability) {
  const auto spec = ActuatorSpec::creep();
  const auto u = uniform(0.001, 100, [](double) { return 1300.0; });
  const auto r = hybrid_static_dynamic(spec, 1.1947e6, published::statespace_schedule(), 0.001, u);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings[0].find("clamped"), std::string::npos);
  const auto u3 = uniform(0.001, 100, [](double) { return 300.0; });
  const auto r3 = hybrid_static_dynamic(spec, 1.1947e6, published::statespace_schedule(), 0.001, u3);
  ASSERT_EQ(r3.warnings.size(), 1u);
  EXPECT_NE(r3.warnings[0].find("unstable"), std::string::npos);
}

TEST(StateSpaceVector, RoundTrip) {
  const auto ss = published::statespace_table()[8].second;
  const auto back = statespace_from_vector(to_vector(ss), ss.Ts);
  EXPECT_EQ(back.A, ss.A);
  EXPECT_EQ(back.B, ss.B);
  EXPECT_EQ(back.C, ss.C);
  EXPECT_THROW(statespace_from_vector(std::vector<double>(5), 0.001), ValidationError);
}

TEST(Pz3Fit, NonConvergenceRaisesFitError) {
  ProcessModelPZ3 pm;
  pm.Kp = 2;
  pm.Tz = 0.1;
  pm.Tp = {1, 0.2, 0.05};
  std::vector<double> t, u;
  for (int i = 0; i < 500; ++i) {
    t.push_back(i * 0.01);
    u.push_back(i >= 10 ? 1.0 : 0.0);
  }
  const TimeSeries in(t, u);
  Pz3FitOptions opt;
  opt.nls.max_iter = 1;
  try {
    fit_pz3(in, simulate_pz3(pm, in), opt);
    FAIL() << "expected FitError";
  } catch (const FitError& e) {
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}
