#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dea/errors.hpp"

namespace dea {

struct Bounds {
  std::vector<double> lower;
  std::vector<double> upper;

  static Bounds unbounded(std::size_t n) {
    return {std::vector<double>(n, -std::numeric_limits<double>::infinity()),
            std::vector<double>(n, std::numeric_limits<double>::infinity())};
  }
  bool contains(std::span<const double> p) const {
    for (std::size_t i = 0; i < p.size(); ++i)
      if (!(p[i] >= lower[i] && p[i] <= upper[i])) return false;
    return true;
  }
};

struct NlsOptions {
  int max_iter = 10000;
  double ftol = 1e-6;   ///< relative reduction of the sum of squares
  double xtol = 1e-12;  ///< relative step size
  double gtol = 1e-14;  ///< scaled projected gradient
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct FitReport {
  std::vector<double> parameters;
  std::vector<std::string> names;
  std::vector<double> std_errors;  ///< asymptotic, from the Gauss-Newton covariance
  double residual_norm = 0;        ///< Euclidean norm of the residual vector
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// r(p) into `r` (resized by the callee).
using ResidualFn = std::function<void(std::span<const double>, Eigen::VectorXd&)>;
/// dr/dp into `J` (m x n).
using JacobianFn = std::function<void(std::span<const double>, Eigen::MatrixXd&)>;

namespace detail {

inline void forward_difference(const ResidualFn& f, std::span<const double> p, const Eigen::VectorXd& r0,
                               const Bounds& b, Eigen::MatrixXd& J) {
  const auto n = static_cast<Eigen::Index>(p.size());
  J.resize(r0.size(), n);
  std::vector<double> q(p.begin(), p.end());
  Eigen::VectorXd r1;
  for (Eigen::Index j = 0; j < n; ++j) {
    double h = std::sqrt(std::numeric_limits<double>::epsilon()) * std::max(std::abs(p[j]), 1e-8);
    if (p[j] + h > b.upper[j]) h = -h;  // step inward at an upper bound
    q[j] = p[j] + h;
    f(q, r1);
    J.col(j) = (r1 - r0) / h;
    q[j] = p[j];
  }
}

/// sqrt(diag(s^2 (J^T J)^+)); NaN when rank deficient or without residual degrees of freedom.
inline std::vector<double> std_errors_from(const Eigen::MatrixXd& J, const Eigen::VectorXd& r) {
  const auto n = J.cols();
  const auto m = J.rows();
  std::vector<double> se(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
  if (m <= n || !J.allFinite()) return se;
  const double s2 = r.squaredNorm() / static_cast<double>(m - n);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J.transpose() * J);
  if (cod.rank() != n) return se;
  const Eigen::MatrixXd cov = cod.pseudoInverse() * s2;
  for (Eigen::Index i = 0; i < n; ++i) se[static_cast<std::size_t>(i)] = std::sqrt(std::max(cov(i, i), 0.0));
  return se;
}

}  // namespace detail

/// Bounded Levenberg-Marquardt minimization of 0.5 |r(p)|^2.
///
/// Marquardt scaling by running maximum column norms, variables pinned at a bound
/// (with the gradient pushing outward) are frozen for the step, and every trial
/// point is projected onto the box. Stops when both the actual and predicted
/// relative reductions fall below `ftol`, on a tiny step or gradient, or at the
/// iteration cap (reported as not converged).
inline FitReport least_squares(const ResidualFn& f, std::vector<double> p0, const Bounds& bounds,
                               const NlsOptions& opt = {}, const JacobianFn& jac = {}) {
  const std::size_t n = p0.size();
  if (n == 0) throw ValidationError("least squares: no parameters");
  if (bounds.lower.size() != n || bounds.upper.size() != n) throw ValidationError("least squares: bounds size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(bounds.lower[i] <= bounds.upper[i])) throw ValidationError("least squares: lower bound above upper bound");
    if (!(p0[i] >= bounds.lower[i] && p0[i] <= bounds.upper[i]))
      throw ValidationError("least squares: initial parameter " + std::to_string(i) + " outside bounds");
  }

  using Vec = Eigen::VectorXd;
  using Mat = Eigen::MatrixXd;
  std::vector<double> x = std::move(p0);
  Vec r;
  f(x, r);
  if (!r.allFinite()) throw FitError("least squares: non-finite residual at the initial point");
  const auto m = r.size();
  double cost = 0.5 * r.squaredNorm();

  Mat J;
  auto jacobian = [&](const std::vector<double>& p, const Vec& rr) {
    if (jac) jac(p, J);
    else detail::forward_difference(f, p, rr, bounds, J);
    if (J.rows() != m || J.cols() != static_cast<Eigen::Index>(n)) throw ValidationError("least squares: Jacobian shape");
    if (!J.allFinite()) throw FitError("least squares: non-finite Jacobian");
  };
  jacobian(x, r);

  Vec D = J.colwise().norm().transpose();
  for (Eigen::Index i = 0; i < D.size(); ++i)
    if (D[i] == 0) D[i] = 1;
  double mu = 1e-3 * (J.transpose() * J).diagonal().cwiseQuotient(D.cwiseProduct(D)).maxCoeff();
  double nu = 2;

  FitReport rep;
  int it = 0;
  std::vector<double> xt(n);
  Vec rt;
  for (; it < opt.max_iter; ++it) {
    if (opt.deadline && std::chrono::steady_clock::now() > *opt.deadline) {
      rep.message = "deadline reached";
      break;
    }
    if (cost == 0) {
      rep.converged = true;
      rep.message = "zero residual";
      break;
    }
    const Vec g = J.transpose() * r;
    // freeze variables held at a bound by the descent direction
    std::vector<Eigen::Index> free;
    for (std::size_t i = 0; i < n; ++i) {
      const bool at_lo = x[i] <= bounds.lower[i] && g[i] > 0;
      const bool at_hi = x[i] >= bounds.upper[i] && g[i] < 0;
      if (!at_lo && !at_hi) free.push_back(static_cast<Eigen::Index>(i));
    }
    double gnorm = 0;
    for (auto i : free) gnorm = std::max(gnorm, std::abs(g[i]) / D[i]);
    if (free.empty() || gnorm <= opt.gtol * std::max(cost, 1e-300)) {
      rep.converged = true;
      rep.message = "gradient below tolerance";
      break;
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    Mat Jf(m, nf);
    Vec Df(nf), gf(nf);
    for (Eigen::Index k = 0; k < nf; ++k) {
      Jf.col(k) = J.col(free[k]);
      Df[k] = D[free[k]];
      gf[k] = g[free[k]];
    }
    const Mat JtJ = Jf.transpose() * Jf;

    bool accepted = false;
    bool done = false;
    for (int inner = 0; inner < 60 && !accepted; ++inner) {
      Mat H = JtJ;
      H.diagonal() += mu * Df.cwiseProduct(Df);
      const Vec step = H.ldlt().solve(-gf);
      if (!step.allFinite()) {
        mu *= nu;
        nu *= 2;
        continue;
      }
      xt = x;
      for (Eigen::Index k = 0; k < nf; ++k) {
        const auto i = static_cast<std::size_t>(free[k]);
        xt[i] = std::clamp(x[i] + step[k], bounds.lower[i], bounds.upper[i]);
      }
      Vec dx(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) dx[i] = xt[i] - x[i];
      double xnorm = 0, dnorm = 0;
      for (std::size_t i = 0; i < n; ++i) {
        xnorm += D[i] * D[i] * x[i] * x[i];
        dnorm += D[i] * D[i] * dx[i] * dx[i];
      }
      if (std::sqrt(dnorm) <= opt.xtol * (std::sqrt(xnorm) + opt.xtol)) {
        rep.converged = true;
        rep.message = "step below tolerance";
        done = true;
        break;
      }
      f(xt, rt);
      const double cost_t = rt.allFinite() ? 0.5 * rt.squaredNorm() : std::numeric_limits<double>::infinity();
      const double pred = cost - 0.5 * (r + J * dx).squaredNorm();
      const double actual = cost - cost_t;
      const double rho = pred > 0 ? actual / pred : -1;
      if (rho > 1e-4) {
        accepted = true;
        const bool small = actual <= opt.ftol * cost && pred <= opt.ftol * cost;
        x = xt;
        r = rt;
        cost = cost_t;
        mu *= std::max(1.0 / 3.0, 1 - std::pow(2 * rho - 1, 3));
        nu = 2;
        if (small) {
          rep.converged = true;
          rep.message = "relative reduction below ftol";
          done = true;
        }
      } else {
        mu *= nu;
        nu *= 2;
        if (!std::isfinite(mu) || mu > 1e300) {
          rep.converged = true;
          rep.message = "no further reduction possible";
          done = true;
          break;
        }
      }
    }
    if (done) {
      ++it;
      break;
    }
    if (!accepted) {
      rep.converged = true;
      rep.message = "no further reduction possible";
      ++it;
      break;
    }
    jacobian(x, r);
    D = D.cwiseMax(J.colwise().norm().transpose());
  }
  if (it >= opt.max_iter && !rep.converged) rep.message = "iteration cap reached";
  if (!r.allFinite()) throw FitError("least squares: non-finite residual");

  rep.parameters = x;
  rep.residual_norm = r.norm();
  rep.iterations = it;
  jacobian(x, r);
  rep.std_errors = detail::std_errors_from(J, r);
  return rep;
}

/// Asymptotic standard errors of `p` for residual `f` (forward-difference Jacobian).
inline std::vector<double> asymptotic_std_errors(const ResidualFn& f, std::span<const double> p) {
  Eigen::VectorXd r;
  f(p, r);
  Eigen::MatrixXd J;
  detail::forward_difference(f, p, r, Bounds::unbounded(p.size()), J);
  return detail::std_errors_from(J, r);
}

/// Coefficient of determination of `pred` against `meas`.
inline double r_squared(std::span<const double> meas, std::span<const double> pred) {
  if (meas.size() != pred.size() || meas.empty()) throw ValidationError("r_squared: size mismatch");
  double mean = 0;
  for (double v : meas) mean += v;
  mean /= static_cast<double>(meas.size());
  double ss_tot = 0, ss_res = 0;
  for (std::size_t i = 0; i < meas.size(); ++i) {
    ss_tot += (meas[i] - mean) * (meas[i] - mean);
    ss_res += (meas[i] - pred[i]) * (meas[i] - pred[i]);
  }
  if (ss_tot == 0) throw NumericalError("r_squared: measured series is constant, metric undefined");
  return 1 - ss_res / ss_tot;
}

/// y(x; p) model for curve fitting.
using CurveModel = std::function<void(std::span<const double> p, std::span<const double> x, Eigen::VectorXd& y)>;

/// Least-squares curve fit of `model` to (x, y); R^2 of the fitted curve is reported.
inline FitReport nls_fit(const CurveModel& model, std::vector<double> p0, const Bounds& bounds,
                         std::span<const double> x, std::span<const double> y, const NlsOptions& opt = {},
                         const JacobianFn& jac = {}) {
  if (x.size() != y.size() || x.empty()) throw ValidationError("nls_fit: x and y must have equal non-zero length");
  for (double v : y)
    if (!std::isfinite(v)) throw ValidationError("nls_fit: data must be finite");
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  auto resid = [&](std::span<const double> p, Eigen::VectorXd& r) {
    model(p, x, r);
    r -= yv;
  };
  auto rep = least_squares(resid, std::move(p0), bounds, opt, jac);
  Eigen::VectorXd fit;
  model(rep.parameters, x, fit);
  try {
    rep.r_squared = r_squared(y, std::span<const double>(fit.data(), static_cast<std::size_t>(fit.size())));
  } catch (const NumericalError&) {
    rep.r_squared = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

}  // namespace dea
