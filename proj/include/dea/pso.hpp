#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dea/errors.hpp"

namespace dea {

using Clock = std::chrono::steady_clock;

/// Per-evaluation context handed to the objective; long-running objectives
/// should poll `deadline` (or pass it to the simulator) and give up past it.
struct EvalContext {
  Clock::time_point deadline;
  bool expired() const { return Clock::now() > deadline; }
};

/// Returns the objective value; a throw or a non-finite value marks a failed evaluation.
using PsoObjective = std::function<double(std::span<const double>, const EvalContext&)>;

struct PsoConfig {
  std::size_t swarm_size = 0;  ///< 0: min(100, 10 x dimensions)
  int max_iter = 10000;
  double ftol = 1e-6;  ///< relative change of the best value over `stall_iter` iterations
  int stall_iter = 1000;
  double inertia_start = 1.0;  ///< inertia decays linearly to `inertia_end` over `max_iter`
  double inertia_end = 0.5;
  double c1 = 1.49;  ///< cognitive
  double c2 = 1.49;  ///< social
  std::vector<double> lower;
  std::vector<double> upper;
  double eval_timeout = 10.0;  ///< [s]
  double penalty = 1e99;
  std::uint64_t seed = 1;
  bool local_refine = true;
  int refine_max_evals = 0;  ///< 0: 200 x dimensions
  unsigned threads = 1;      ///< 0: hardware concurrency
  std::optional<Clock::time_point> deadline;
  std::function<void(int iter, double best, int stall)> progress;

  std::size_t dimension() const { return lower.size(); }

  void validate() const {
    if (lower.empty() || lower.size() != upper.size()) throw ValidationError("pso: bounds must be non-empty and equal in length");
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (!(lower[i] < upper[i]) || !std::isfinite(lower[i]) || !std::isfinite(upper[i]))
        throw ValidationError("pso: bounds must be finite with lower < upper in dimension " + std::to_string(i));
    auto in_range = [](double w) { return w > 0 && w < 2; };
    if (!in_range(inertia_start) || !in_range(inertia_end)) throw ValidationError("pso: inertia must lie in (0, 2)");
    if (max_iter < 1 || stall_iter < 1) throw ValidationError("pso: iteration limits must be positive");
    if (!(c1 >= 0) || !(c2 >= 0)) throw ValidationError("pso: coefficients must be non-negative");
    if (!(eval_timeout > 0)) throw ValidationError("pso: evaluation timeout must be positive");
    if (!(penalty > 0)) throw ValidationError("pso: penalty must be positive");
  }
};

struct OptimizationRun {
  std::vector<double> best;
  double best_objective = std::numeric_limits<double>::infinity();
  bool best_penalized = true;
  std::vector<double> history;  ///< global best after initialization and after every iteration
  std::size_t evaluations = 0;
  std::size_t timed_out = 0;
  std::size_t failed = 0;
  int iterations = 0;
  bool refined = false;  ///< local refinement improved the swarm result
  std::string stop_reason;
};

namespace detail {

struct Score {
  double value = std::numeric_limits<double>::infinity();
  bool penalized = true;
  // Feasible beats penalized regardless of magnitude; ties keep the incumbent.
  bool better_than(const Score& o) const {
    if (penalized != o.penalized) return !penalized;
    return value < o.value;
  }
};

class Evaluator {
 public:
  Evaluator(const PsoObjective& f, const PsoConfig& cfg, OptimizationRun& run) : f_(f), cfg_(cfg), run_(run) {}

  Score operator()(std::span<const double> x) {
    const auto start = Clock::now();
    const auto limit = start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(cfg_.eval_timeout));
    Score s;
    bool timed = false, fail = false;
    double raw = std::numeric_limits<double>::quiet_NaN();
    try {
      raw = f_(x, EvalContext{limit});
      if (!std::isfinite(raw)) fail = true;
    } catch (const TimeoutError&) {
      timed = true;
    } catch (const NumericalError&) {
      fail = true;
    } catch (const ValidationError&) {
      fail = true;
    }
    if (!timed && Clock::now() > limit) timed = true;
    if (timed || fail) {
      s.penalized = true;
      s.value = std::isfinite(raw) ? std::max(std::abs(raw) * cfg_.penalty, cfg_.penalty) : cfg_.penalty;
    } else {
      s.penalized = false;
      s.value = raw;
    }
    std::lock_guard lk(mu_);
    ++run_.evaluations;
    if (timed) ++run_.timed_out;
    else if (fail) ++run_.failed;
    return s;
  }

 private:
  const PsoObjective& f_;
  const PsoConfig& cfg_;
  OptimizationRun& run_;
  std::mutex mu_;
};

/// Evaluates every row of `xs` (in parallel when threads > 1).
inline std::vector<Score> evaluate_all(Evaluator& ev, const std::vector<std::vector<double>>& xs, unsigned threads) {
  std::vector<Score> out(xs.size());
  if (threads <= 1 || xs.size() < 2) {
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = ev(xs[i]);
    return out;
  }
  std::vector<std::future<void>> jobs;
  const std::size_t chunk = (xs.size() + threads - 1) / threads;
  for (std::size_t b = 0; b < xs.size(); b += chunk)
    jobs.push_back(std::async(std::launch::async, [&, b] {
      for (std::size_t i = b; i < std::min(xs.size(), b + chunk); ++i) out[i] = ev(xs[i]);
    }));
  for (auto& j : jobs) j.get();
  return out;
}

/// Nelder-Mead on the box: trial vertices are clamped into the bounds.
inline std::pair<std::vector<double>, Score> bounded_simplex(Evaluator& ev, std::vector<double> x0, Score f0,
                                                             const std::vector<double>& lo, const std::vector<double>& hi,
                                                             int max_evals, std::optional<Clock::time_point> deadline,
                                                             int* used = nullptr) {
  const std::size_t n = x0.size();
  auto clampv = [&](std::vector<double>& v) {
    for (std::size_t i = 0; i < n; ++i) v[i] = std::clamp(v[i], lo[i], hi[i]);
  };
  std::vector<std::vector<double>> s{x0};
  std::vector<Score> fs{f0};
  for (std::size_t i = 0; i < n; ++i) {
    auto v = x0;
    const double h = 0.05 * (hi[i] - lo[i]);
    v[i] = v[i] + h <= hi[i] ? v[i] + h : v[i] - h;
    clampv(v);
    fs.push_back(ev(v));
    s.push_back(std::move(v));
  }
  int evals = static_cast<int>(n);
  std::vector<std::size_t> idx(n + 1);
  auto lt = [&](std::size_t a, std::size_t b) { return fs[a].better_than(fs[b]); };
  while (evals < max_evals && (!deadline || Clock::now() < *deadline)) {
    for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), lt);
    const auto ib = idx.front(), iw = idx.back(), is = idx[n - 1];
    // converged when the simplex is tiny relative to the box
    double size = 0;
    for (std::size_t k = 0; k <= n; ++k)
      for (std::size_t i = 0; i < n; ++i) size = std::max(size, std::abs(s[k][i] - s[ib][i]) / (hi[i] - lo[i]));
    if (size < 1e-10) break;
    if (!fs[ib].penalized && !fs[iw].penalized &&
        std::abs(fs[iw].value - fs[ib].value) <= 1e-14 * std::max(1e-300, std::abs(fs[ib].value)) && size < 1e-6)
      break;

    std::vector<double> c(n, 0.0);
    for (std::size_t k = 0; k <= n; ++k)
      if (k != iw)
        for (std::size_t i = 0; i < n; ++i) c[i] += s[k][i] / static_cast<double>(n);
    auto along = [&](double a) {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = c[i] + a * (s[iw][i] - c[i]);
      clampv(v);
      return v;
    };
    auto xr = along(-1.0);
    const auto fr = ev(xr);
    ++evals;
    if (fr.better_than(fs[ib])) {
      auto xe = along(-2.0);
      const auto fe = ev(xe);
      ++evals;
      if (fe.better_than(fr)) s[iw] = std::move(xe), fs[iw] = fe;
      else s[iw] = std::move(xr), fs[iw] = fr;
      continue;
    }
    if (fr.better_than(fs[is])) {
      s[iw] = std::move(xr), fs[iw] = fr;
      continue;
    }
    const bool outside = fr.better_than(fs[iw]);
    auto xc = along(outside ? -0.5 : 0.5);
    const auto fc = ev(xc);
    ++evals;
    if (fc.better_than(outside ? fr : fs[iw])) {
      s[iw] = std::move(xc), fs[iw] = fc;
      continue;
    }
    for (std::size_t k = 0; k <= n; ++k) {
      if (k == ib) continue;
      for (std::size_t i = 0; i < n; ++i) s[k][i] = s[ib][i] + 0.5 * (s[k][i] - s[ib][i]);
      fs[k] = ev(s[k]);
      ++evals;
    }
  }
  if (used) *used = evals;
  std::size_t b = 0;
  for (std::size_t k = 1; k <= n; ++k)
    if (fs[k].better_than(fs[b])) b = k;
  return {s[b], fs[b]};
}

}  // namespace detail

/// Global-best particle swarm minimization on a box.
///
/// Inertia decays linearly over `max_iter`; velocities are clamped to the bound
/// span and positions reflected at the bounds. Failed or timed-out evaluations
/// are penalized with max(|f| * penalty, penalty) and never displace a feasible
/// best. Stops at `max_iter`, when the best value changes by less than `ftol`
/// (relative) over `stall_iter` iterations, or at the deadline; the best point
/// is then polished by a bounded simplex search.
inline OptimizationRun pso_minimize(const PsoObjective& objective, const PsoConfig& cfg,
                                    const std::optional<std::vector<double>>& init_particle = std::nullopt) {
  cfg.validate();
  const std::size_t D = cfg.dimension();
  const std::size_t N = cfg.swarm_size ? cfg.swarm_size : std::min<std::size_t>(100, 10 * D);
  if (N < 2) throw ValidationError("pso: swarm needs at least two particles");
  if (init_particle && init_particle->size() != D) throw ValidationError("pso: initial particle has the wrong dimension");
  const unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());

  OptimizationRun run;
  detail::Evaluator ev(objective, cfg, run);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  std::vector<double> span(D);
  for (std::size_t d = 0; d < D; ++d) span[d] = cfg.upper[d] - cfg.lower[d];

  std::vector<std::vector<double>> x(N, std::vector<double>(D)), v(N, std::vector<double>(D));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t d = 0; d < D; ++d) {
      x[i][d] = cfg.lower[d] + U(rng) * span[d];
      v[i][d] = (2 * U(rng) - 1) * span[d];
    }
  if (init_particle)
    for (std::size_t d = 0; d < D; ++d) x[0][d] = std::clamp((*init_particle)[d], cfg.lower[d], cfg.upper[d]);

  auto fx = detail::evaluate_all(ev, x, threads);
  auto pbest = x;
  auto fp = fx;
  std::size_t g = 0;
  for (std::size_t i = 1; i < N; ++i)
    if (fp[i].better_than(fp[g])) g = i;
  std::vector<double> gbest = pbest[g];
  detail::Score fg = fp[g];
  run.history.push_back(fg.value);

  int all_failed = std::all_of(fx.begin(), fx.end(), [](const detail::Score& s) { return s.penalized; }) ? 1 : 0;
  int stall = 0;
  run.stop_reason = "iteration limit";
  int it = 0;
  for (; it < cfg.max_iter; ++it) {
    if (cfg.deadline && Clock::now() > *cfg.deadline) {
      run.stop_reason = "deadline";
      break;
    }
    if (all_failed >= 3) throw OptimizationError("pso: every particle failed for 3 consecutive iterations");
    const double w = cfg.inertia_start + (cfg.inertia_end - cfg.inertia_start) * it / std::max(1, cfg.max_iter - 1);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t d = 0; d < D; ++d) {
        double vi = w * v[i][d] + cfg.c1 * U(rng) * (pbest[i][d] - x[i][d]) + cfg.c2 * U(rng) * (gbest[d] - x[i][d]);
        vi = std::clamp(vi, -span[d], span[d]);
        double xi = x[i][d] + vi;
        if (xi > cfg.upper[d]) {
          xi = 2 * cfg.upper[d] - xi;
          vi = -vi;
        } else if (xi < cfg.lower[d]) {
          xi = 2 * cfg.lower[d] - xi;
          vi = -vi;
        }
        x[i][d] = std::clamp(xi, cfg.lower[d], cfg.upper[d]);
        v[i][d] = vi;
      }
    fx = detail::evaluate_all(ev, x, threads);
    bool any_ok = false;
    for (std::size_t i = 0; i < N; ++i) {
      any_ok |= !fx[i].penalized;
      if (fx[i].better_than(fp[i])) {
        fp[i] = fx[i];
        pbest[i] = x[i];
      }
    }
    all_failed = any_ok ? 0 : all_failed + 1;
    for (std::size_t i = 0; i < N; ++i)
      if (fp[i].better_than(fg)) {
        fg = fp[i];
        gbest = pbest[i];
      }
    run.history.push_back(fg.value);
    const auto h = run.history.size();
    const bool changed = h < 2 || run.history[h - 1] < run.history[h - 2];
    stall = changed ? 0 : stall + 1;
    if (cfg.progress) cfg.progress(it + 1, fg.value, stall);
    if (h > static_cast<std::size_t>(cfg.stall_iter)) {
      const double old = run.history[h - 1 - static_cast<std::size_t>(cfg.stall_iter)];
      if (!fg.penalized && (old - fg.value) <= cfg.ftol * std::max(1.0, std::abs(fg.value))) {
        ++it;
        run.stop_reason = "relative change below ftol over stall iterations";
        break;
      }
    }
  }
  if (all_failed >= 3) throw OptimizationError("pso: every particle failed for 3 consecutive iterations");
  run.iterations = it;

  if (cfg.local_refine && !fg.penalized && (!cfg.deadline || Clock::now() < *cfg.deadline)) {
    // a collapsed simplex is rebuilt around the best point while it keeps improving
    int budget = cfg.refine_max_evals ? cfg.refine_max_evals : 200 * static_cast<int>(D);
    while (budget > static_cast<int>(D) + 1 && (!cfg.deadline || Clock::now() < *cfg.deadline)) {
      int used = 0;
      auto [xr, fr] = detail::bounded_simplex(ev, gbest, fg, cfg.lower, cfg.upper, budget, cfg.deadline, &used);
      budget -= std::max(used, 1);
      const bool improved = fr.better_than(fg) && (fg.value - fr.value) > 1e-12 * std::abs(fg.value);
      if (fr.better_than(fg)) {
        gbest = std::move(xr);
        fg = fr;
        run.refined = true;
        run.history.push_back(fg.value);
      }
      if (!improved) break;
    }
  }
  run.best = gbest;
  run.best_objective = fg.value;
  run.best_penalized = fg.penalized;
  return run;
}

}  // namespace dea
