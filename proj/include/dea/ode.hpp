#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "dea/errors.hpp"

namespace dea {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct OdeOptions {
  double rtol = 1e-6;
  double atol = 1e-9;
  double initial_step = 0;  ///< 0 selects a starting step automatically
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 5'000'000;
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct OdeStats {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
  std::size_t jac_evals = 0;
  std::size_t segments = 0;
};

struct OdeTrajectory {
  std::vector<double> t;
  std::vector<Vec> y;
  OdeStats stats;
};

/// y' = f(t, y) with optional analytic Jacobian and an optional map applied to
/// the state at every discontinuity (for inputs whose jumps move the state).
struct OdeSystem {
  std::function<void(double, const Vec&, Vec&)> rhs;
  std::function<void(double, const Vec&, Mat&)> jacobian;
  std::function<void(double, Vec&)> on_break;
};

namespace detail {

// Hairer & Wanner SDIRK4: L-stable, stiffly accurate, gamma = 1/4, order 4 with embedded order 3.
struct Sdirk4 {
  static constexpr int s = 5;
  static constexpr double gamma = 0.25;
  static constexpr double c[s] = {0.25, 0.75, 11.0 / 20.0, 0.5, 1.0};
  static constexpr double a[s][s] = {
      {0.25, 0, 0, 0, 0},
      {0.5, 0.25, 0, 0, 0},
      {17.0 / 50.0, -1.0 / 25.0, 0.25, 0, 0},
      {371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0},
      {25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25},
  };
  static constexpr double b[s] = {25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25};
  static constexpr double bhat[s] = {59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0};
};

inline double weighted_rms(const Vec& e, const Vec& y0, const Vec& y1, double rtol, double atol) {
  if (e.size() == 0) return 0.0;
  double acc = 0;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double r = e[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(e.size()));
}

inline void hermite(double theta, double h, const Vec& y0, const Vec& f0, const Vec& y1, const Vec& f1, Vec& out) {
  const double t2 = theta * theta, t3 = t2 * theta;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + theta, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  out = h00 * y0 + (h10 * h) * f0 + h01 * y1 + (h11 * h) * f1;
}

}  // namespace detail

/// Adaptive L-stable SDIRK integration over [t0, t1].
///
/// Integration restarts exactly at every discontinuity inside (t0, t1); the
/// right-hand side is never evaluated across one. Samples that fall on an
/// interior discontinuity are left limits; a discontinuity at t0 is applied
/// before the first sample. With `output_times` empty
/// every accepted step is recorded, otherwise the solution is reported at the
/// requested (sorted) times by cubic Hermite interpolation within each step.
inline OdeTrajectory integrate_adaptive(const OdeSystem& sys, const Vec& y0, double t0, double t1,
                                        std::span<const double> discontinuities = {},
                                        std::span<const double> output_times = {}, const OdeOptions& opt = {}) {
  using Tab = detail::Sdirk4;
  if (!(t1 > t0)) throw ValidationError("integrate: t1 must exceed t0");
  if (!(opt.rtol > 0) || !(opt.atol > 0)) throw ValidationError("integrate: tolerances must be positive");
  const Eigen::Index n = y0.size();

  OdeTrajectory out;
  OdeStats& st = out.stats;

  std::vector<double> edges{t0};
  for (double d : discontinuities)
    if (d > t0 && d < t1) edges.push_back(d);
  edges.push_back(t1);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  const bool break_at_start = std::find(discontinuities.begin(), discontinuities.end(), t0) != discontinuities.end();

  const bool dense = !output_times.empty();
  std::size_t next_out = 0;
  if (dense && !std::is_sorted(output_times.begin(), output_times.end()))
    throw ValidationError("integrate: output times must be sorted");

  auto record = [&](double t, const Vec& y) {
    out.t.push_back(t);
    out.y.push_back(y);
  };

  Vec y = y0;
  if (!y.allFinite()) throw DivergenceError("integrate: non-finite initial state", t0);
  // a break at t0 acts before the first sample, so the initial record is the right limit
  if (break_at_start && sys.on_break) sys.on_break(t0, y);
  if (dense) {
    while (next_out < output_times.size() && output_times[next_out] < t0) ++next_out;
    while (next_out < output_times.size() && output_times[next_out] == t0) record(t0, y), ++next_out;
  } else {
    record(t0, y);
  }

  Vec f0(n), f1(n), g(n), Y(n), r(n), dY(n), err(n), ytmp(n), fy(n);
  Mat J(n, n), M(n, n);
  Eigen::PartialPivLU<Mat> lu;
  Vec k[Tab::s];
  for (auto& ki : k) ki.resize(n);

  double h_prev = opt.initial_step;

  for (std::size_t seg = 0; seg + 1 < edges.size(); ++seg) {
    const double a = edges[seg], b = edges[seg + 1];
    ++st.segments;
    if (seg > 0 && sys.on_break) sys.on_break(a, y);

    const double margin = std::min(1e-12 * std::max(1.0, std::abs(b)), 0.25 * (b - a));
    auto eval = [&](double t, const Vec& yy, Vec& dy) {
      sys.rhs(std::clamp(t, a + margin, b - margin), yy, dy);
      ++st.rhs_evals;
    };
    auto jac = [&](double t, const Vec& yy, Mat& JJ) {
      ++st.jac_evals;
      const double tc = std::clamp(t, a + margin, b - margin);
      if (sys.jacobian) {
        sys.jacobian(tc, yy, JJ);
        return;
      }
      Vec base(n), pert(n), yp = yy;
      sys.rhs(tc, yy, base);
      ++st.rhs_evals;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double dh = std::sqrt(std::numeric_limits<double>::epsilon()) * std::max(std::abs(yy[i]), opt.atol / opt.rtol);
        yp[i] = yy[i] + dh;
        sys.rhs(tc, yp, pert);
        ++st.rhs_evals;
        JJ.col(i) = (pert - base) / dh;
        yp[i] = yy[i];
      }
    };

    eval(a, y, f0);
    double h;
    if (h_prev > 0 && seg == 0) {
      h = h_prev;
    } else {
      // Hairer-Norsett-Wanner starting step heuristic
      Vec sc = (opt.atol + opt.rtol * y.cwiseAbs().array()).matrix();
      const double d0 = n ? std::sqrt((y.array() / sc.array()).square().mean()) : 0.0;
      const double d1 = n ? std::sqrt((f0.array() / sc.array()).square().mean()) : 0.0;
      double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
      h0 = std::min(h0, b - a);
      ytmp = y + h0 * f0;
      eval(a + h0, ytmp, fy);
      const double d2 = n ? std::sqrt(((fy - f0).array() / sc.array()).square().mean()) / h0 : 0.0;
      const double dm = std::max(d1, d2);
      const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
      h = std::min(100 * h0, h1);
    }
    h = std::min({h, b - a, opt.max_step});

    double t = a;
    bool last_rejected = false;
    while (t < b) {
      if (st.steps + st.rejected >= opt.max_steps) {
        std::ostringstream os;
        os << "integrate: step budget exhausted at t=" << t;
        throw IntegratorError(os.str(), t);
      }
      if (opt.deadline && ((st.steps + st.rejected) & 31u) == 0 && std::chrono::steady_clock::now() > *opt.deadline)
        throw TimeoutError("integrate: deadline exceeded", t);
      if (h < 1e-14 * std::max(1.0, std::abs(t))) {
        std::ostringstream os;
        os << "integrate: step size underflow at t=" << t;
        throw IntegratorError(os.str(), t);
      }
      if (t + h > b - 1e-12 * std::max(1.0, std::abs(b))) h = b - t;

      jac(t, y, J);
      M = Mat::Identity(n, n) - (h * Tab::gamma) * J;
      lu.compute(M);

      bool newton_ok = true;
      for (int i = 0; i < Tab::s && newton_ok; ++i) {
        g = y;
        for (int jx = 0; jx < i; ++jx) g += (h * Tab::a[i][jx]) * k[jx];
        Y = g + (h * Tab::gamma) * (i > 0 ? k[i - 1] : f0);
        const double ti = t + Tab::c[i] * h;
        double prev = std::numeric_limits<double>::infinity();
        bool conv = false;
        for (int it = 0; it < 10; ++it) {
          eval(ti, Y, fy);
          r = Y - g - (h * Tab::gamma) * fy;
          dY = lu.solve(-r);
          Y += dY;
          const double dn = detail::weighted_rms(dY, y, Y, opt.rtol, opt.atol);
          if (!std::isfinite(dn)) break;
          if (dn <= 1e-3 || dn == 0) {
            conv = true;
            break;
          }
          if (it > 0 && dn > 0.9 * prev) break;
          prev = dn;
        }
        if (!conv) {
          newton_ok = false;
          break;
        }
        k[i] = (Y - g) / (h * Tab::gamma);
      }
      if (!newton_ok) {
        ++st.rejected;
        h *= 0.25;
        last_rejected = true;
        continue;
      }

      Vec ynew = Y;  // stiffly accurate: last stage is the solution
      err.setZero();
      for (int i = 0; i < Tab::s; ++i) err += (h * (Tab::b[i] - Tab::bhat[i])) * k[i];
      err = lu.solve(err);
      const double en = detail::weighted_rms(err, y, ynew, opt.rtol, opt.atol);
      if (!ynew.allFinite()) {
        std::ostringstream os;
        os << "integrate: non-finite state at t=" << t + h;
        throw DivergenceError(os.str(), t + h);
      }
      if (en <= 1.0) {
        const double tn = (h == b - t) ? b : t + h;
        f1 = k[Tab::s - 1];
        if (dense) {
          while (next_out < output_times.size() && output_times[next_out] <= tn) {
            const double to = output_times[next_out];
            if (to >= t) {
              Vec yo(n);
              if (to == tn) yo = ynew;
              else detail::hermite((to - t) / h, h, y, f0, ynew, f1, yo);
              record(to, yo);
            }
            ++next_out;
          }
        } else {
          record(tn, ynew);
        }
        ++st.steps;
        t = tn;
        y = ynew;
        f0 = f1;
        double fac = 0.9 * std::pow(std::max(en, 1e-10), -0.25);
        fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 5.0);
        h = std::min(h * fac, opt.max_step);
        h_prev = h;
        last_rejected = false;
      } else {
        ++st.rejected;
        h *= std::clamp(0.9 * std::pow(en, -0.25), 0.1, 0.9);
        last_rejected = true;
      }
    }
  }
  return out;
}

/// Convenience form without Jacobian or jump map.
inline OdeTrajectory integrate_adaptive(std::function<void(double, const Vec&, Vec&)> rhs, const Vec& y0, double t0,
                                        double t1, const OdeOptions& opt = {}, std::span<const double> discontinuities = {},
                                        std::span<const double> output_times = {}) {
  OdeSystem sys;
  sys.rhs = std::move(rhs);
  return integrate_adaptive(sys, y0, t0, t1, discontinuities, output_times, opt);
}

}  // namespace dea
