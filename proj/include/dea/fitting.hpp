#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dea/core.hpp"
#include "dea/electromech.hpp"
#include "dea/nls.hpp"
#include "dea/static_models.hpp"
#include "dea/viscoelastic.hpp"

namespace dea {

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessConfig {
  int downsample_factor = 10;
  std::optional<double> median_smoothing_factor;  ///< overrides the voltage-dependent choice
  double delay_removal = 0.02;                    ///< acquisition lag [s]
  double initial_fit_fraction = 0.10;             ///< share of the loading path used for the initial length
  double hold_start = 120.0;                      ///< creep step onset after two 30 s preconditioning pulses [s]
  bool creep_history = true;                      ///< fit the hold phase as the response to the whole voltage history

  void validate() const {
    if (downsample_factor < 1) throw ValidationError("preprocess: downsample factor must be >= 1");
    if (median_smoothing_factor && !(*median_smoothing_factor > 0 && *median_smoothing_factor <= 1))
      throw ValidationError("preprocess: smoothing factor must lie in (0, 1]");
    if (!(delay_removal >= 0)) throw ValidationError("preprocess: delay must be non-negative");
    if (!(initial_fit_fraction > 0 && initial_fit_fraction < 1))
      throw ValidationError("preprocess: initial fit fraction must lie in (0, 1)");
    if (!(hold_start >= 0)) throw ValidationError("preprocess: hold start must be non-negative");
  }
};

/// Median window fraction used for creep records at a given voltage level.
inline double smoothing_factor_for_voltage(double voltage) {
  if (voltage <= 100) return 0.04;
  if (voltage <= 200) return 0.02;
  return 0.01;
}

/// Centered moving median with an odd window; near the ends the window shrinks
/// symmetrically so that monotone data pass through unchanged.
inline std::vector<double> moving_median(std::span<const double> x, std::size_t window) {
  if (window == 0) throw ValidationError("moving median: window must be positive");
  if (window % 2 == 0) ++window;
  const std::size_t h = window / 2, n = x.size();
  std::vector<double> out(n), buf;
  buf.reserve(window);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t w = std::min({h, i, n - 1 - i});
    if (w == 0) {
      out[i] = x[i];
      continue;
    }
    buf.assign(x.begin() + static_cast<std::ptrdiff_t>(i - w), x.begin() + static_cast<std::ptrdiff_t>(i + w + 1));
    std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(w), buf.end());
    out[i] = buf[w];
  }
  return out;
}

/// Window = max(1, round(factor * N)), forced odd.
inline TimeSeries moving_median(const TimeSeries& ts, double smoothing_factor) {
  if (!(smoothing_factor > 0 && smoothing_factor <= 1)) throw ValidationError("moving median: factor must lie in (0, 1]");
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(smoothing_factor * static_cast<double>(ts.size()))));
  return {ts.t(), moving_median(ts.v(), w)};
}

/// Every `factor`-th sample, starting with the first.
inline TimeSeries downsample(const TimeSeries& ts, int factor) {
  if (factor < 1) throw ValidationError("downsample: factor must be >= 1");
  std::vector<double> t, v;
  for (std::size_t i = 0; i < ts.size(); i += static_cast<std::size_t>(factor)) {
    t.push_back(ts.t()[i]);
    v.push_back(ts.v()[i]);
  }
  return {std::move(t), std::move(v)};
}

/// Raw creep experiment at one voltage level, sampled on a uniform grid.
struct CreepRecord {
  double voltage = 0;
  std::vector<double> t, v_target, v_high, dz;

  void validate() const {
    if (t.size() < 2 || v_target.size() != t.size() || v_high.size() != t.size() || dz.size() != t.size())
      throw ValidationError("creep record: columns must have equal length >= 2");
    if (!(voltage > 0)) throw ValidationError("creep record: voltage level must be positive");
  }
  TimeSeries height() const { return {t, dz}; }
};

/// Applied voltage and height change on a common, downsampled grid, with the
/// acquisition delay removed (the whole record, preconditioning included).
struct CreepDataset {
  double voltage = 0;
  TimeSeries drive;
  TimeSeries dz;
};

inline CreepDataset align_creep_record(const CreepRecord& r, int downsample_factor, double delay) {
  r.validate();
  if (downsample_factor < 1) throw ValidationError("creep dataset: downsample factor must be >= 1");
  if (!(delay >= 0)) throw ValidationError("creep dataset: delay must be non-negative");
  const double dt = r.t[1] - r.t[0];
  const auto lag = static_cast<std::size_t>(std::llround(delay / dt));
  if (lag + 2 > r.t.size()) throw ValidationError("creep dataset: record shorter than the delay");
  std::vector<double> t, v, z;
  for (std::size_t i = 0; i + lag < r.t.size(); i += static_cast<std::size_t>(downsample_factor)) {
    t.push_back(r.t[i]);
    v.push_back(r.v_high[i]);
    z.push_back(r.dz[i + lag]);
  }
  return {r.voltage, TimeSeries(t, std::move(v)), TimeSeries(t, std::move(z))};
}

/// Hold phase of a creep record on a time base starting at the step onset:
/// drops the preconditioning pulses and the acquisition delay, downsamples,
/// then applies the voltage-dependent moving median.
inline TimeSeries preprocess_creep(const TimeSeries& raw, const PreprocessConfig& cfg, double voltage_level) {
  cfg.validate();
  const double start = cfg.hold_start + cfg.delay_removal;
  const double tol = 1e-9 * std::max(1.0, std::abs(start));
  const auto it = std::lower_bound(raw.t().begin(), raw.t().end(), start - tol);
  const auto i0 = static_cast<std::size_t>(it - raw.t().begin());
  if (raw.size() - i0 < 2)
    throw ValidationError("preprocess: record ends before the hold phase plus delay (" + std::to_string(start) + " s)");
  std::vector<double> t, v;
  for (std::size_t i = i0; i < raw.size(); i += static_cast<std::size_t>(cfg.downsample_factor)) {
    t.push_back(raw.t()[i] - start);
    v.push_back(raw.v()[i]);
  }
  if (t.size() < 2) throw ValidationError("preprocess: fewer than two samples left after downsampling");
  if (std::abs(t.front()) <= tol) t.front() = 0;
  return moving_median(TimeSeries(std::move(t), std::move(v)),
                       cfg.median_smoothing_factor.value_or(smoothing_factor_for_voltage(voltage_level)));
}

// ---------------------------------------------------------------------------
// Metrics

inline double mean_abs_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ValidationError("mean absolute error: size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double mean_abs_error(const TimeSeries& a, const TimeSeries& b) {
  if (!a.same_grid(b)) throw ValidationError("mean absolute error: series are on different grids");
  return mean_abs_error(a.v(), b.v());
}

inline double r_squared(const TimeSeries& measured, const TimeSeries& predicted) {
  if (!measured.same_grid(predicted)) throw ValidationError("r_squared: series are on different grids");
  return r_squared(measured.v(), predicted.v());
}

// ---------------------------------------------------------------------------
// Compression test

/// Position at which an OLS line through the first `fraction` of the loading
/// samples reaches zero force.
inline double fit_initial_length(const TimeSeries& position, const TimeSeries& force, double fraction = 0.10) {
  if (position.size() != force.size()) throw ValidationError("initial length: position and force differ in length");
  if (!(fraction > 0 && fraction <= 1)) throw ValidationError("initial length: fraction must lie in (0, 1]");
  const auto n = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(position.size()))));
  const auto& x = position.v();
  const auto& f = force.v();
  double mx = 0, mf = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    mf += f[i];
  }
  mx /= static_cast<double>(n);
  mf /= static_cast<double>(n);
  double sxx = 0, sxf = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxf += (x[i] - mx) * (f[i] - mf);
  }
  if (!(sxx > 0)) throw FitError("initial length: position is constant over the fitted samples");
  const double slope = sxf / sxx;
  if (slope == 0) throw FitError("initial length: force does not change with position");
  return mx - mf / slope;
}

/// Engineering stress times the stretch (incompressible uniaxial loading).
inline double true_stress_from_measurement(double force, double area, double lambda_z) {
  if (!(area > 0)) throw ValidationError("true stress: area must be positive");
  if (!(lambda_z > 0)) throw ValidationError("true stress: stretch must be positive");
  return force / area * lambda_z;
}

/// Sample ranges of one compression cycle: loading is [load_begin, load_end],
/// unloading is [load_end, unload_end].
struct LoadCycle {
  std::size_t load_begin = 0;
  std::size_t load_end = 0;
  std::size_t unload_end = 0;
};

/// Splits a cyclic compression record at sign changes of the position
/// derivative (loading = decreasing position) after a light moving median.
/// Runs shorter than `min_run` samples are merged into their predecessor.
inline std::vector<LoadCycle> separate_cycles(const TimeSeries& position, std::size_t smooth_window = 5,
                                              std::size_t min_run = 0) {
  const std::size_t n = position.size();
  if (n < 3) throw ValidationError("cycle separation: too few samples");
  if (min_run == 0) min_run = std::max<std::size_t>(3, n / 200);
  const auto s = moving_median(position.v(), smooth_window);

  std::vector<int> sign(n - 1, 0);
  for (std::size_t i = 0; i + 1 < n; ++i) sign[i] = (s[i + 1] > s[i]) - (s[i + 1] < s[i]);
  int last = 0;
  for (int v : sign)
    if (v != 0) {
      last = v;
      break;
    }
  if (last == 0) throw ValidationError("cycle separation: position never changes");
  for (int& v : sign) v = v == 0 ? last : (last = v);

  struct Run {
    int sign;
    std::size_t begin, end;  // diff indices [begin, end)
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < sign.size(); ++i) {
    if (runs.empty() || runs.back().sign != sign[i]) runs.push_back({sign[i], i, i + 1});
    else runs.back().end = i + 1;
  }
  std::vector<Run> merged;
  for (const auto& r : runs) {
    if (!merged.empty() && (r.end - r.begin < min_run || merged.back().sign == r.sign)) merged.back().end = r.end;
    else merged.push_back(r);
  }

  std::vector<LoadCycle> cycles;
  for (std::size_t k = 0; k < merged.size(); ++k) {
    if (merged[k].sign >= 0) continue;
    LoadCycle c{merged[k].begin, merged[k].end, merged[k].end};
    if (k + 1 < merged.size()) c.unload_end = merged[k + 1].end;
    cycles.push_back(c);
  }
  return cycles;
}

struct StaticFitOptions {
  int cycle = 3;                   ///< 1-based cycle used for fitting
  double initial_fraction = 0.10;  ///< share of the loading path for the initial length
  NlsOptions nls;
};

struct StaticFitResult {
  StaticModel model;
  FitReport report;
  double initial_length = 0;
  std::vector<double> stretch;
  std::vector<double> stress;
};

namespace detail {

inline void static_residual(const StaticModel& like, std::span<const double> p, std::span<const double> lambda,
                            std::span<const double> stress, Eigen::VectorXd& r) {
  r.resize(static_cast<Eigen::Index>(lambda.size()));
  try {
    const auto m = with_parameters(like, p);
    for (std::size_t i = 0; i < lambda.size(); ++i) r[static_cast<Eigen::Index>(i)] = true_stress(m, lambda[i]) - stress[i];
  } catch (const ValidationError&) {
    r.setConstant(std::numeric_limits<double>::quiet_NaN());
  } catch (const NumericalError&) {
    r.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
}

/// Least-squares values of the coefficients `lin` (the stress is linear in them)
/// with every other coefficient held at its value in `p`.
inline bool solve_linear_coefficients(const StaticModel& like, std::vector<double>& p, const std::vector<std::size_t>& lin,
                                      std::span<const double> lambda, std::span<const double> stress) {
  const auto m = static_cast<Eigen::Index>(lambda.size());
  Eigen::MatrixXd B(m, static_cast<Eigen::Index>(lin.size()));
  try {
    for (std::size_t j = 0; j < lin.size(); ++j) {
      auto q = p;
      for (auto k : lin) q[k] = 0;
      q[lin[j]] = 1;
      const auto mod = with_parameters(like, q);
      for (Eigen::Index i = 0; i < m; ++i) B(i, static_cast<Eigen::Index>(j)) = true_stress(mod, lambda[static_cast<std::size_t>(i)]);
    }
  } catch (const std::exception&) {
    return false;
  }
  const Eigen::Map<const Eigen::VectorXd> y(stress.data(), m);
  const Eigen::VectorXd c = B.colPivHouseholderQr().solve(y);
  if (!c.allFinite()) return false;
  for (std::size_t j = 0; j < lin.size(); ++j) p[lin[j]] = c[static_cast<Eigen::Index>(j)];
  return true;
}

/// Starting points: exact linear solutions where the law is linear in its
/// coefficients, otherwise a few nonlinear seeds with the linear part solved.
inline std::vector<std::vector<double>> static_starts(const StaticModel& like, std::span<const double> lambda,
                                                      std::span<const double> stress) {
  std::vector<std::vector<double>> seeds;
  std::vector<std::size_t> lin;
  if (std::holds_alternative<Ogden>(like)) {
    lin = {0, 1, 2};
    const auto pub = parameters(published::ogden());
    seeds = {pub, {0, 0, 0, 2, -2, 4}, {0, 0, 0, 1, 5, -3}, {0, 0, 0, 8, 2, -6}};
  } else if (std::holds_alternative<Gent>(like)) {
    lin = {0};
    for (double J : {-6.2127e6, -100.0, -10.0, -1.0, 1.0, 10.0, 100.0}) seeds.push_back({0, J});
  } else {
    const auto n = parameters(like).size();
    lin.resize(n);
    std::iota(lin.begin(), lin.end(), 0);
    seeds.push_back(std::vector<double>(n, 0.0));
  }
  std::vector<std::vector<double>> out;
  for (auto& s : seeds)
    if (solve_linear_coefficients(like, s, lin, lambda, stress)) out.push_back(s);
  if (out.empty()) out.push_back(parameters(like));
  return out;
}

}  // namespace detail

/// Fits the coefficients of `like` (variant and fixed settings kept) to (stretch, true stress).
inline std::pair<StaticModel, FitReport> fit_static_model(const StaticModel& like, std::span<const double> lambda,
                                                          std::span<const double> stress, const NlsOptions& opt = {}) {
  if (lambda.size() != stress.size() || lambda.size() < parameters(like).size() + 1)
    throw ValidationError("static fit: need more samples than coefficients");
  std::optional<FitReport> best;
  for (const auto& p0 : detail::static_starts(like, lambda, stress)) {
    auto resid = [&](std::span<const double> p, Eigen::VectorXd& r) { detail::static_residual(like, p, lambda, stress, r); };
    try {
      auto rep = least_squares(resid, p0, Bounds::unbounded(p0.size()), opt);
      if (!best || rep.residual_norm < best->residual_norm) best = std::move(rep);
    } catch (const FitError&) {
    }
  }
  if (!best) throw FitError("static fit: no starting point gave a finite residual");
  const auto model = with_parameters(like, best->parameters);
  best->names = parameter_names(like);
  std::vector<double> pred(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) pred[i] = true_stress(model, lambda[i]);
  best->r_squared = r_squared(stress, pred);
  return {model, *best};
}

/// Compression-test pipeline: cycle separation, initial length from the start
/// of the selected loading path, stretch and true stress, coefficient fit.
inline StaticFitResult fit_static(const TimeSeries& position, const TimeSeries& force, double area, const StaticModel& like,
                                  const StaticFitOptions& opt = {}) {
  if (!position.same_grid(force)) throw ValidationError("static fit: position and force must share the time grid");
  if (opt.cycle < 1) throw ValidationError("static fit: cycle index is 1-based");
  const auto cycles = separate_cycles(position);
  if (cycles.size() < static_cast<std::size_t>(opt.cycle))
    throw ValidationError("static fit: record has " + std::to_string(cycles.size()) + " loading cycles, cycle " +
                          std::to_string(opt.cycle) + " requested");
  const auto& c = cycles[static_cast<std::size_t>(opt.cycle - 1)];
  std::vector<double> t, x, f;
  for (std::size_t i = c.load_begin; i <= c.load_end; ++i) {
    t.push_back(position.t()[i]);
    x.push_back(position.v()[i]);
    f.push_back(force.v()[i]);
  }
  const TimeSeries xs(t, x), fs(t, f);

  StaticFitResult out;
  out.initial_length = fit_initial_length(xs, fs, opt.initial_fraction);
  if (!(out.initial_length > 0)) throw FitError("static fit: non-positive initial length");
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lam = x[i] / out.initial_length;
    if (lam > 1 || lam <= 0) continue;  // no contact yet
    out.stretch.push_back(lam);
    out.stress.push_back(true_stress_from_measurement(f[i], area, lam));
  }
  auto [model, rep] = fit_static_model(like, out.stretch, out.stress, opt.nls);
  out.model = model;
  out.report = std::move(rep);
  return out;
}

// ---------------------------------------------------------------------------
// Exponential sums: relaxation and creep

/// Earlier stress step seen from the creep onset: it happened `lead` seconds
/// before the onset and changed the stress by `weight` times the hold stress.
struct LoadStep {
  double lead = 0;
  double weight = 1;
};

struct ExpFitOptions {
  NlsOptions nls;
  int starts = 4;  ///< local refinements from the best grid seeds
  int grid = 10;   ///< log-spaced time constants between the sample spacing and 20x the record length
};

namespace detail {

enum class ExpForm { decay, rise };

/// y = sum a_i exp(-t/tau_i)            (decay)
/// y = c + sum a_i (1 - exp(-t/tau_i))  (rise)
struct ExpSum {
  double offset = 0;
  std::array<double, 3> amp{};
  std::array<double, 3> tau{};
};

inline double exp_basis(ExpForm f, double t, double tau) {
  return f == ExpForm::decay ? std::exp(-t / tau) : -std::expm1(-t / tau);
}

struct ExpSumFit {
  ExpSum sum;
  FitReport report;
};

/// With a non-empty `history` every basis function becomes the weighted
/// superposition of the same response started `lead` seconds earlier; the
/// empty history is a single unit step at t = 0.
inline ExpSumFit fit_exp_sum(ExpForm form, std::span<const double> t, std::span<const double> y, const ExpFitOptions& opt,
                             std::span<const LoadStep> history = {}) {
  const std::size_t m = t.size();
  if (m != y.size() || m < 8) throw ValidationError("exponential fit: need at least 8 samples");
  for (std::size_t i = 0; i < m; ++i)
    if (!std::isfinite(t[i]) || !std::isfinite(y[i])) throw ValidationError("exponential fit: data must be finite");
  if (t.front() < 0) throw ValidationError("exponential fit: time must start at or after the step");
  const bool rise = form == ExpForm::rise;
  const int off = rise ? 1 : 0;
  const int np = off + 6;
  const double dt = t[1] - t[0];
  const double T = t.back();
  double ymax = 0;
  for (double v : y) ymax = std::max(ymax, std::abs(v));
  if (!(ymax > 0) || !(dt > 0) || !(T > 0)) throw ValidationError("exponential fit: degenerate record");

  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(m));
  const auto me = static_cast<Eigen::Index>(m);
  const std::vector<LoadStep> steps = history.empty() ? std::vector<LoadStep>{{0.0, 1.0}}
                                                      : std::vector<LoadStep>(history.begin(), history.end());
  for (const auto& st : steps)
    if (!(st.lead >= 0) || !std::isfinite(st.weight)) throw ValidationError("exponential fit: load steps must precede the onset");
  double level = 0;  // offset basis: the instantaneous share follows the stress level
  for (const auto& st : steps) level += st.weight;
  auto basis = [&](double ti, double tau) {
    double v = 0;
    for (const auto& st : steps) v += st.weight * exp_basis(form, ti + st.lead, tau);
    return v;
  };
  // d/d(log tau) of the basis; a single step gives -t/tau e^{-t/tau} for the rising form
  auto dbasis = [&](double ti, double tau) {
    double v = 0;
    for (const auto& st : steps) {
      const double u = ti + st.lead;
      v += st.weight * std::exp(-u / tau) * u / tau;
    }
    return form == ExpForm::rise ? -v : v;
  };

  // linear amplitudes for a fixed set of time constants
  auto amplitudes = [&](const std::array<double, 3>& tau, Eigen::VectorXd& c) {
    Eigen::MatrixXd B(me, off + 3);
    if (rise) B.col(0).setConstant(level);
    for (int k = 0; k < 3; ++k)
      for (Eigen::Index i = 0; i < me; ++i) B(i, off + k) = basis(t[static_cast<std::size_t>(i)], tau[static_cast<std::size_t>(k)]);
    c = B.colPivHouseholderQr().solve(yv);
    return (B * c - yv).norm();
  };

  struct Seed {
    double norm;
    std::vector<double> p;
  };
  std::vector<Seed> seeds;
  const double lo = std::max(dt, 1e-12), hi = 20 * T;
  std::vector<double> grid(static_cast<std::size_t>(opt.grid));
  for (int i = 0; i < opt.grid; ++i) grid[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / (opt.grid - 1));
  Eigen::VectorXd c;
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = i + 1; j < grid.size(); ++j)
      for (std::size_t k = j + 1; k < grid.size(); ++k) {
        const std::array<double, 3> tau{grid[i], grid[j], grid[k]};
        const double nrm = amplitudes(tau, c);
        if (!std::isfinite(nrm) || (c.array() <= 0).any()) continue;
        std::vector<double> p(static_cast<std::size_t>(np));
        if (rise) p[0] = std::log(c[0]);
        for (int q = 0; q < 3; ++q) {
          p[static_cast<std::size_t>(off + q)] = std::log(c[off + q]);
          p[static_cast<std::size_t>(off + 3 + q)] = std::log(tau[static_cast<std::size_t>(q)]);
        }
        seeds.push_back({nrm, std::move(p)});
      }
  if (seeds.empty()) {
    // no grid triple gives positive amplitudes: start from equal shares
    std::vector<double> p(static_cast<std::size_t>(np));
    if (rise) p[0] = std::log(std::max(std::abs(y.front() / level), 1e-3 * ymax));
    for (int q = 0; q < 3; ++q) {
      p[static_cast<std::size_t>(off + q)] = std::log(ymax / 3);
      p[static_cast<std::size_t>(off + 3 + q)] = std::log(grid[static_cast<std::size_t>(2 + 3 * q)]);
    }
    seeds.push_back({0, std::move(p)});
  }
  std::sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) { return a.norm < b.norm; });

  Bounds b;
  const double alo = std::log(1e-9 * ymax), ahi = std::log(1e6 * ymax);
  const double tlo = std::log(dt / 10), thi = std::log(1e3 * T);
  for (int q = 0; q < off + 3; ++q) {
    b.lower.push_back(alo);
    b.upper.push_back(ahi);
  }
  for (int q = 0; q < 3; ++q) {
    b.lower.push_back(tlo);
    b.upper.push_back(thi);
  }

  auto resid = [&](std::span<const double> p, Eigen::VectorXd& r) {
    r.resize(me);
    const double c0 = rise ? level * std::exp(p[0]) : 0.0;
    double a[3], tau[3];
    for (int q = 0; q < 3; ++q) {
      a[q] = std::exp(p[static_cast<std::size_t>(off + q)]);
      tau[q] = std::exp(p[static_cast<std::size_t>(off + 3 + q)]);
    }
    for (Eigen::Index i = 0; i < me; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      double v = c0;
      for (int q = 0; q < 3; ++q) v += a[q] * basis(ti, tau[q]);
      r[i] = v - y[static_cast<std::size_t>(i)];
    }
  };
  auto jac = [&](std::span<const double> p, Eigen::MatrixXd& J) {
    J.resize(me, np);
    double a[3], tau[3];
    for (int q = 0; q < 3; ++q) {
      a[q] = std::exp(p[static_cast<std::size_t>(off + q)]);
      tau[q] = std::exp(p[static_cast<std::size_t>(off + 3 + q)]);
    }
    if (rise) J.col(0).setConstant(level * std::exp(p[0]));
    for (Eigen::Index i = 0; i < me; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      for (int q = 0; q < 3; ++q) {
        J(i, off + q) = a[q] * basis(ti, tau[q]);
        J(i, off + 3 + q) = a[q] * dbasis(ti, tau[q]);
      }
    }
  };

  std::optional<FitReport> best;
  const int nstarts = std::min<int>(opt.starts, static_cast<int>(seeds.size()));
  for (int s = 0; s < nstarts; ++s) {
    auto p0 = seeds[static_cast<std::size_t>(s)].p;
    for (std::size_t i = 0; i < p0.size(); ++i) p0[i] = std::clamp(p0[i], b.lower[i], b.upper[i]);
    auto rep = least_squares(resid, p0, b, opt.nls, jac);
    if (!best || rep.residual_norm < best->residual_norm) best = std::move(rep);
  }

  ExpSumFit out;
  const auto& p = best->parameters;
  out.sum.offset = rise ? std::exp(p[0]) : 0.0;
  for (int q = 0; q < 3; ++q) {
    out.sum.amp[static_cast<std::size_t>(q)] = std::exp(p[static_cast<std::size_t>(off + q)]);
    out.sum.tau[static_cast<std::size_t>(q)] = std::exp(p[static_cast<std::size_t>(off + 3 + q)]);
  }
  out.report = std::move(*best);
  return out;
}

inline std::array<int, 3> order_by_tau(const std::array<double, 3>& tau, bool descending) {
  std::array<int, 3> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return descending ? tau[static_cast<std::size_t>(a)] > tau[static_cast<std::size_t>(b)]
                      : tau[static_cast<std::size_t>(a)] < tau[static_cast<std::size_t>(b)];
  });
  return idx;
}

}  // namespace detail

struct RelaxationFit {
  GMParams params;
  FitReport report;  ///< parameters k1..k3, d1..d3
};

/// Maxwell branches from a step-strain relaxation record. The elastic share
/// Y * strain is removed first, so only the branch stresses are fitted.
/// Branches are reported with the slowest first.
inline RelaxationFit fit_relaxation(const TimeSeries& stress, const TimeSeries& strain, double Y, const ExpFitOptions& opt = {}) {
  if (!stress.same_grid(strain)) throw ValidationError("relaxation fit: stress and strain must share the time grid");
  if (!(Y > 0)) throw ValidationError("relaxation fit: Y must be positive");
  double eps0 = 0;
  for (double e : strain.v()) eps0 += e;
  eps0 /= static_cast<double>(strain.size());
  if (!(eps0 > 0)) throw ValidationError("relaxation fit: held strain must be positive");

  std::vector<double> t(stress.size()), y(stress.size());
  for (std::size_t i = 0; i < stress.size(); ++i) {
    t[i] = stress.t()[i] - stress.t_front();
    y[i] = stress.v()[i] - Y * strain.v()[i];
  }
  const auto fit = detail::fit_exp_sum(detail::ExpForm::decay, t, y, opt);

  RelaxationFit out;
  out.params.Y = Y;
  const auto idx = detail::order_by_tau(fit.sum.tau, true);
  for (std::size_t q = 0; q < 3; ++q) {
    const auto i = static_cast<std::size_t>(idx[q]);
    out.params.k[q] = fit.sum.amp[i] / eps0;
    out.params.d[q] = out.params.k[q] * fit.sum.tau[i];
  }
  out.report = fit.report;
  out.report.names = {"k1", "k2", "k3", "d1", "d2", "d3"};
  out.report.parameters = {out.params.k[0], out.params.k[1], out.params.k[2], out.params.d[0], out.params.d[1], out.params.d[2]};
  auto natural = [&](std::span<const double> p, Eigen::VectorXd& r) {
    r.resize(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      double v = 0;
      for (int q = 0; q < 3; ++q) v += eps0 * p[static_cast<std::size_t>(q)] * std::exp(-t[i] * p[static_cast<std::size_t>(q)] / p[static_cast<std::size_t>(3 + q)]);
      r[static_cast<Eigen::Index>(i)] = v - y[i];
    }
  };
  out.report.std_errors = asymptotic_std_errors(natural, out.report.parameters);
  std::vector<double> pred(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) pred[i] = gm_relaxation_closed(out.params, eps0, t[i]);
  try {
    out.report.r_squared = r_squared(y, pred);
  } catch (const NumericalError&) {
  }
  return out;
}

inline RelaxationFit fit_relaxation(const TimeSeries& stress, double eps0, double Y, const ExpFitOptions& opt = {}) {
  return fit_relaxation(stress, TimeSeries(stress.t(), std::vector<double>(stress.size(), eps0)), Y, opt);
}

/// Creep strain at `t` after the onset, superposing the step responses of `history`.
inline double gkv_creep_history(const GKVParams& p, double sigma, double t, std::span<const LoadStep> history) {
  if (history.empty()) return gkv_creep_closed(p, sigma, t);
  double e = 0;
  for (const auto& st : history) e += gkv_creep_closed(p, st.weight * sigma, t + st.lead);
  return e;
}

struct CreepFit {
  GKVParams params;
  FitReport report;  ///< parameters k0, k1..k3, alpha1..alpha3
};

/// Kelvin-Voigt chain from a constant-stress creep record (time from the step
/// onset). Elements are reported with the fastest first.
/// A non-empty `history` lists the earlier stress steps (preconditioning), so
/// the record is fitted as their superposed response instead of creep from rest.
inline CreepFit fit_creep(const TimeSeries& strain, double sigma, const ExpFitOptions& opt = {},
                          std::span<const LoadStep> history = {}) {
  if (!(sigma > 0)) throw ValidationError("creep fit: stress must be positive");
  const auto fit = detail::fit_exp_sum(detail::ExpForm::rise, strain.t(), strain.v(), opt, history);

  CreepFit out;
  out.params.k0 = sigma / fit.sum.offset;
  const auto idx = detail::order_by_tau(fit.sum.tau, false);
  for (std::size_t q = 0; q < 3; ++q) {
    const auto i = static_cast<std::size_t>(idx[q]);
    out.params.k[q] = sigma / fit.sum.amp[i];
    out.params.alpha[q] = 1.0 / fit.sum.tau[i];
  }
  out.report = fit.report;
  out.report.names = {"k0", "k1", "k2", "k3", "alpha1", "alpha2", "alpha3"};
  out.report.parameters = to_vector(ViscoModel(out.params));
  const auto& t = strain.t();
  const auto& y = strain.v();
  auto natural = [&](std::span<const double> p, Eigen::VectorXd& r) {
    const GKVParams g{p[0], {p[1], p[2], p[3]}, {p[4], p[5], p[6]}};
    r.resize(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) r[static_cast<Eigen::Index>(i)] = gkv_creep_history(g, sigma, t[i], history) - y[i];
  };
  out.report.std_errors = asymptotic_std_errors(natural, out.report.parameters);
  std::vector<double> pred(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) pred[i] = gkv_creep_history(out.params, sigma, t[i], history);
  try {
    out.report.r_squared = r_squared(y, pred);
  } catch (const NumericalError&) {
  }
  return out;
}

/// Creep fit from a preprocessed height-change record at a voltage level.
inline CreepFit fit_creep_record(const ActuatorSpec& spec, const TimeSeries& dz, double voltage, const ExpFitOptions& opt = {},
                                 std::span<const LoadStep> history = {}) {
  if (!(voltage > 0)) throw ValidationError("creep fit: voltage must be positive");
  std::vector<double> e(dz.size());
  for (std::size_t i = 0; i < dz.size(); ++i) e[i] = strain_from_height_change(spec, dz.v()[i]);
  return fit_creep(TimeSeries(dz.t(), std::move(e)), drive_pressure(spec, voltage), opt, history);
}

/// Voltage steps of a creep record up to the hold onset, as load steps seen
/// from the onset. Stress scales with V^2, so a step from Va to Vb weighs
/// (Vb^2 - Va^2) / V^2 for the hold level V.
inline std::vector<LoadStep> creep_load_history(const CreepRecord& r, double hold_start) {
  r.validate();
  const double tol = 1e-9 * std::max(1.0, std::abs(hold_start));
  const double v2 = r.voltage * r.voltage;
  std::vector<LoadStep> h;
  double prev = 0;  // the actuator rests before the record
  for (std::size_t i = 0; i < r.t.size() && r.t[i] <= hold_start + tol; ++i) {
    const double v = r.v_target[i];
    if (v != prev) h.push_back({std::max(hold_start - r.t[i], 0.0), (v * v - prev * prev) / v2});
    prev = v;
  }
  if (h.empty()) throw ValidationError("creep history: no voltage step up to the hold onset");
  return h;
}

}  // namespace dea
