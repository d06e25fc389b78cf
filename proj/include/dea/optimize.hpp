#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dea/core.hpp"
#include "dea/fitting.hpp"
#include "dea/pso.hpp"
#include "dea/viscoelastic.hpp"

namespace dea {

/// Two-stage model refinement against creep records: one PSO per voltage
/// level, then a joint PSO started from the averaged per-level solution.
/// Search variables are multiplicative factors on a seed parameter set; the
/// GKM extra damper is searched directly on an absolute scale.
struct ModelOptimizationConfig {
  ActuatorSpec spec = ActuatorSpec::creep();
  PsoConfig pso;  ///< bounds are filled in from the factor ranges below
  SimOptions sim;
  double factor_lower = 0.6;
  double factor_upper = 1.4;
  double d0_lower = 1e-4;  ///< [Pa s]
  double d0_upper = 1e4;   ///< [Pa s]

  void validate() const {
    spec.validate();
    if (!(factor_lower > 0 && factor_lower < factor_upper)) throw ValidationError("optimize: need 0 < factor_lower < factor_upper");
    if (!(d0_lower > 0 && d0_lower < d0_upper)) throw ValidationError("optimize: need 0 < d0_lower < d0_upper");
  }
};

/// Which search variables are absolute values instead of factors.
inline std::vector<bool> absolute_entries(const ViscoModel& seed) {
  std::vector<bool> a(to_vector(seed).size(), false);
  if (std::holds_alternative<GKMParams>(seed)) a.back() = true;
  return a;
}

inline std::pair<std::vector<double>, std::vector<double>> search_bounds(const ViscoModel& seed,
                                                                         const ModelOptimizationConfig& cfg) {
  const auto abs = absolute_entries(seed);
  std::vector<double> lo, hi;
  for (bool a : abs) {
    lo.push_back(a ? cfg.d0_lower : cfg.factor_lower);
    hi.push_back(a ? cfg.d0_upper : cfg.factor_upper);
  }
  return {lo, hi};
}

inline std::vector<double> apply_factors(const ViscoModel& seed, std::span<const double> x) {
  auto p = to_vector(seed);
  const auto abs = absolute_entries(seed);
  if (x.size() != p.size()) throw ValidationError("optimize: factor vector has the wrong length");
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = abs[i] ? x[i] : p[i] * x[i];
  return p;
}

/// Initial search point: unit factors and the seed's own d0 clamped into range.
inline std::vector<double> unit_factors(const ViscoModel& seed, const ModelOptimizationConfig& cfg) {
  const auto p = to_vector(seed);
  const auto abs = absolute_entries(seed);
  std::vector<double> x(p.size(), 1.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (abs[i]) x[i] = std::clamp(p[i], cfg.d0_lower, cfg.d0_upper);
  return x;
}

/// Mean absolute height error of `model` driven by the recorded voltage
/// (switches reproduced as steps just before the first sample at the new level).
inline double creep_mae(const ActuatorSpec& spec, const ViscoModel& model, const CreepDataset& ds, const SimOptions& sim) {
  const auto res = simulate_actuator(spec, model, Drive::from_series(ds.drive, 0.05, Drive::Jump::step), ds.dz.t(), sim);
  return mean_abs_error(res.dz, ds.dz.v());
}

struct VoltageOptimization {
  double voltage = 0;
  std::vector<double> factors;
  std::vector<double> parameters;  ///< `to_vector` order of the seed model
  OptimizationRun run;
};

namespace detail {

inline PsoObjective creep_objective(const ViscoModel& seed, std::vector<const CreepDataset*> data,
                                    const ModelOptimizationConfig& cfg) {
  return [seed, data = std::move(data), spec = cfg.spec, sim = cfg.sim](std::span<const double> x, const EvalContext& ctx) {
    const auto model = from_vector(seed, apply_factors(seed, x));
    validate(model);
    SimOptions s = sim;
    s.schedule.reset();
    s.deadline = ctx.deadline;
    double sum = 0;
    for (const auto* d : data) sum += creep_mae(spec, model, *d, s);
    return sum / static_cast<double>(data.size());
  };
}

inline PsoConfig bounded(const ViscoModel& seed, const ModelOptimizationConfig& cfg) {
  PsoConfig p = cfg.pso;
  std::tie(p.lower, p.upper) = search_bounds(seed, cfg);
  return p;
}

}  // namespace detail

/// One PSO per voltage level in ascending order; each level after the first
/// is warm-started from the previous level's best factors.
inline std::vector<VoltageOptimization> optimize_model_per_voltage(const ViscoModel& seed,
                                                                   const std::vector<CreepDataset>& datasets,
                                                                   const ModelOptimizationConfig& cfg) {
  cfg.validate();
  validate(seed);
  if (datasets.empty()) throw ValidationError("optimize: no creep datasets");
  std::vector<const CreepDataset*> order;
  for (const auto& d : datasets) order.push_back(&d);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->voltage < b->voltage; });

  std::vector<VoltageOptimization> out;
  std::vector<double> warm = unit_factors(seed, cfg);
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto pcfg = detail::bounded(seed, cfg);
    pcfg.seed = cfg.pso.seed + k;
    VoltageOptimization v;
    v.voltage = order[k]->voltage;
    v.run = pso_minimize(detail::creep_objective(seed, {order[k]}, cfg), pcfg, warm);
    v.factors = v.run.best;
    v.parameters = apply_factors(seed, v.factors);
    warm = v.factors;
    out.push_back(std::move(v));
  }
  return out;
}

/// Per-level parameters as a voltage schedule (breakpoints ascending).
inline ParameterSchedule schedule_from(const std::vector<VoltageOptimization>& levels) {
  std::vector<double> bp;
  std::vector<std::vector<double>> e;
  for (const auto& l : levels) {
    bp.push_back(l.voltage);
    e.push_back(l.parameters);
  }
  return {std::move(bp), std::move(e)};
}

struct AveragedOptimization {
  std::vector<double> start_factors;  ///< arithmetic mean of the per-level factors
  double start_objective = 0;         ///< mean MAE of the averaged set over all levels
  std::vector<double> factors;
  std::vector<double> parameters;
  double objective = 0;
  OptimizationRun run;
};

/// Joint PSO on the mean MAE over all levels, seeded with the mean factors.
inline AveragedOptimization average_and_reoptimize(const ViscoModel& seed, const std::vector<VoltageOptimization>& levels,
                                                   const std::vector<CreepDataset>& datasets,
                                                   const ModelOptimizationConfig& cfg) {
  cfg.validate();
  if (levels.size() < 2) throw ValidationError("optimize: averaging needs at least two per-voltage solutions");
  if (datasets.empty()) throw ValidationError("optimize: no creep datasets");
  const std::size_t n = to_vector(seed).size();
  AveragedOptimization a;
  a.start_factors.assign(n, 0.0);
  for (const auto& l : levels) {
    if (l.factors.size() != n) throw ValidationError("optimize: per-voltage factors do not match the seed model");
    for (std::size_t i = 0; i < n; ++i) a.start_factors[i] += l.factors[i] / static_cast<double>(levels.size());
  }
  std::vector<const CreepDataset*> data;
  for (const auto& d : datasets) data.push_back(&d);
  const auto f = detail::creep_objective(seed, data, cfg);
  const auto pcfg = detail::bounded(seed, cfg);
  a.start_objective = f(a.start_factors, EvalContext{Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                                                     std::chrono::duration<double>(pcfg.eval_timeout * data.size()))});
  a.run = pso_minimize(f, pcfg, a.start_factors);
  a.factors = a.run.best;
  a.parameters = apply_factors(seed, a.factors);
  a.objective = a.run.best_objective;
  return a;
}

}  // namespace dea
