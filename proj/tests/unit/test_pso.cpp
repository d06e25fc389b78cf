#include <gtest/gtest.h>

#include <cmath>

#include "dea/pso.hpp"

using namespace dea;

namespace {

double sphere(std::span<const double> x, const EvalContext&) {
  double s = 0;
  for (double v : x) s += v * v;
  return s;
}

PsoConfig box(std::size_t d, double lo, double hi) {
  PsoConfig c;
  c.lower.assign(d, lo);
  c.upper.assign(d, hi);
  return c;
}

bool monotone(const std::vector<double>& h) {
  for (std::size_t i = 1; i < h.size(); ++i)
    if (h[i] > h[i - 1]) return false;
  return true;
}

}  // namespace

TEST(Pso, SphereSixDimensions) {
  auto cfg = box(6, -5, 5);
  cfg.max_iter = 2000;
  cfg.seed = 42;
  const auto run = pso_minimize(sphere, cfg);
  EXPECT_LT(run.best_objective, 1e-4);
  EXPECT_LE(run.iterations, 2000);
  EXPECT_TRUE(monotone(run.history));
  for (double v : run.best) {
    EXPECT_GE(v, -5.0);
    EXPECT_LE(v, 5.0);
  }
  EXPECT_FALSE(run.best_penalized);
}

TEST(Pso, SwarmOnlyWithoutRefinement) {
  auto cfg = box(6, -5, 5);
  cfg.max_iter = 2000;
  cfg.local_refine = false;
  const auto run = pso_minimize(sphere, cfg);
  EXPECT_LT(run.best_objective, 1e-4);
  EXPECT_FALSE(run.refined);
}

TEST(Pso, OptimumOnTheBoundIsReachedExactly) {
  // minimum of (x - 7)^2 on [-1, 3] sits on the upper bound
  auto cfg = box(2, -1, 3);
  cfg.max_iter = 300;
  const auto run = pso_minimize(
      [](std::span<const double> x, const EvalContext&) { return (x[0] - 7) * (x[0] - 7) + (x[1] + 4) * (x[1] + 4); }, cfg);
  EXPECT_EQ(run.best[0], 3.0);
  EXPECT_EQ(run.best[1], -1.0);
}

TEST(Pso, ConstantObjectiveStopsByStall) {
  auto cfg = box(3, 0, 1);
  cfg.stall_iter = 25;
  const auto run = pso_minimize([](std::span<const double>, const EvalContext&) { return 2.5; }, cfg);
  EXPECT_EQ(run.iterations, 25);
  EXPECT_EQ(run.best_objective, 2.5);
  EXPECT_NE(run.stop_reason.find("stall"), std::string::npos);
}

TEST(Pso, FailedRegionNeverWins) {
  // the raw objective is lowest inside (-0.5, 0.5) but evaluations there fail
  auto cfg = box(1, -2, 2);
  cfg.max_iter = 200;
  const auto run = pso_minimize(
      [](std::span<const double> x, const EvalContext&) {
        if (std::abs(x[0]) < 0.5) throw NumericalError("simulation diverged");
        return x[0] * x[0];
      },
      cfg);
  EXPECT_FALSE(run.best_penalized);
  EXPECT_GE(std::abs(run.best[0]), 0.5);
  EXPECT_NEAR(std::abs(run.best[0]), 0.5, 1e-6);
  EXPECT_GT(run.failed, 0u);
}

TEST(Pso, TimedOutRegionNeverWins) {
  auto cfg = box(1, -2, 2);
  cfg.max_iter = 40;
  cfg.swarm_size = 10;
  cfg.eval_timeout = 1e-3;
  const auto run = pso_minimize(
      [](std::span<const double> x, const EvalContext& ctx) {
        if (x[0] < 0) {
          while (!ctx.expired()) {
          }
          throw TimeoutError("evaluation exceeded its budget", 0.0);
        }
        return (x[0] + 1) * (x[0] + 1);  // raw minimum at -1 lies in the slow region
      },
      cfg);
  EXPECT_GE(run.best[0], 0.0);
  EXPECT_NEAR(run.best_objective, 1.0, 1e-6);
  EXPECT_GT(run.timed_out, 0u);
}

TEST(Pso, AllParticlesFailing) {
  auto cfg = box(2, 0, 1);
  EXPECT_THROW(pso_minimize([](std::span<const double>, const EvalContext&) -> double { throw NumericalError("x"); }, cfg),
               OptimizationError);
}

TEST(Pso, DeterministicUnderSeedAndThreads) {
  auto cfg = box(4, -3, 3);
  cfg.max_iter = 100;
  cfg.seed = 7;
  const auto a = pso_minimize(sphere, cfg);
  const auto b = pso_minimize(sphere, cfg);
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.history, b.history);
  cfg.threads = 3;
  const auto c = pso_minimize(sphere, cfg);
  EXPECT_EQ(a.best, c.best);
  EXPECT_EQ(a.history, c.history);
  cfg.seed = 8;
  EXPECT_NE(pso_minimize(sphere, cfg).history, a.history);
}

TEST(Pso, WarmStartParticleIsEvaluatedFirst) {
  auto cfg = box(3, -5, 5);
  cfg.max_iter = 5;
  cfg.local_refine = false;
  const auto run = pso_minimize(sphere, cfg, std::vector<double>{0, 0, 0});
  EXPECT_EQ(run.history.front(), 0.0);
  EXPECT_EQ(run.best_objective, 0.0);
  EXPECT_THROW(pso_minimize(sphere, cfg, std::vector<double>{0, 0}), ValidationError);
}

TEST(Pso, ProgressReportsEveryIteration) {
  auto cfg = box(2, -1, 1);
  cfg.max_iter = 12;
  int calls = 0, last = 0;
  double prev = 1e300;
  cfg.progress = [&](int it, double best, int stall) {
    ++calls;
    EXPECT_EQ(it, last + 1);
    EXPECT_LE(best, prev);
    EXPECT_GE(stall, 0);
    last = it;
    prev = best;
  };
  pso_minimize(sphere, cfg);
  EXPECT_EQ(calls, 12);
}

TEST(Pso, ConfigValidation) {
  auto cfg = box(2, 1, 1);
  EXPECT_THROW(pso_minimize(sphere, cfg), ValidationError);
  cfg = box(2, 0, 1);
  cfg.inertia_start = 2.5;
  EXPECT_THROW(pso_minimize(sphere, cfg), ValidationError);
}
