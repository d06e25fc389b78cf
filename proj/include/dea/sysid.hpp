#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <vector>

#include "dea/core.hpp"
#include "dea/electromech.hpp"
#include "dea/nls.hpp"
#include "dea/viscoelastic.hpp"

namespace dea {

/// Kp (1 + s Tz) / ((1 + s Tp1)(1 + s Tp2)(1 + s Tp3))
struct ProcessModelPZ3 {
  double Kp = 1;
  double Tz = 0;
  std::array<double, 3> Tp{1, 1, 1};

  void validate() const {
    if (!std::isfinite(Kp) || !std::isfinite(Tz)) throw ValidationError("PZ3: Kp and Tz must be finite");
    for (double t : Tp)
      if (!(t > 0) || !std::isfinite(t)) throw ValidationError("PZ3: pole time constants must be positive");
  }

  std::complex<double> transfer(std::complex<double> s) const {
    return Kp * (1.0 + s * Tz) / ((1.0 + s * Tp[0]) * (1.0 + s * Tp[1]) * (1.0 + s * Tp[2]));
  }
};

struct ContinuousStateSpace {
  Mat A;
  Vec B;
  Eigen::RowVectorXd C;
  double D = 0;

  double dc_gain() const { return (C * (-A).partialPivLu().solve(B))(0) + D; }
  std::complex<double> transfer(std::complex<double> s) const {
    const Eigen::Index n = A.rows();
    const Eigen::MatrixXcd M = s * Eigen::MatrixXcd::Identity(n, n) - A.cast<std::complex<double>>();
    const Eigen::VectorXcd x = M.partialPivLu().solve(B.cast<std::complex<double>>());
    return (C.cast<std::complex<double>>() * x)(0) + D;
  }
};

/// x[k+1] = A x[k] + B u[k], y[k] = C x[k] + D u[k]
struct DiscreteStateSpace {
  Mat A;
  Vec B;
  Eigen::RowVectorXd C;
  double D = 0;
  double Ts = 0.001;

  void validate() const {
    if (A.rows() != A.cols() || B.size() != A.rows() || C.size() != A.rows())
      throw ValidationError("state space: inconsistent dimensions");
    if (!(Ts > 0)) throw ValidationError("state space: sample time must be positive");
  }
  double dc_gain() const {
    const Mat I = Mat::Identity(A.rows(), A.cols());
    return (C * (I - A).partialPivLu().solve(B))(0) + D;
  }
  double spectral_radius() const { return A.eigenvalues().cwiseAbs().maxCoeff(); }
};

inline ContinuousStateSpace pz3_to_statespace(const ProcessModelPZ3& pm) {
  pm.validate();
  const double T1 = pm.Tp[0], T2 = pm.Tp[1], T3 = pm.Tp[2];
  const double P = T1 * T2 * T3;
  const double a2 = (T1 * T2 + T1 * T3 + T2 * T3) / P;
  const double a1 = (T1 + T2 + T3) / P;
  const double a0 = 1 / P;
  ContinuousStateSpace ss;
  ss.A = Mat::Zero(3, 3);
  ss.A(0, 1) = 1;
  ss.A(1, 2) = 1;
  ss.A.row(2) << -a0, -a1, -a2;
  ss.B = Vec::Zero(3);
  ss.B[2] = 1;
  ss.C.resize(3);
  ss.C << pm.Kp / P, pm.Kp * pm.Tz / P, 0;
  ss.D = 0;
  return ss;
}

/// Zero-order-hold discretization via the exponential of [[A, B], [0, 0]] Ts.
inline DiscreteStateSpace discretize_zoh(const ContinuousStateSpace& c, double Ts = 0.001) {
  if (!(Ts > 0)) throw ValidationError("discretize: sample time must be positive");
  const Eigen::Index n = c.A.rows();
  Mat M = Mat::Zero(n + 1, n + 1);
  M.topLeftCorner(n, n) = c.A * Ts;
  M.topRightCorner(n, 1) = c.B * Ts;
  const Mat E = M.exp();
  DiscreteStateSpace d;
  d.A = E.topLeftCorner(n, n);
  d.B = E.topRightCorner(n, 1);
  d.C = c.C;
  d.D = c.D;
  d.Ts = Ts;
  return d;
}

namespace detail {

inline void check_grid(const TimeSeries& u, double Ts) {
  for (std::size_t k = 1; k < u.size(); ++k) {
    const double dt = u.t()[k] - u.t()[k - 1];
    if (std::abs(dt - Ts) > 1e-6 * Ts) throw ValidationError("discrete simulation: input is not sampled at Ts");
  }
}

}  // namespace detail

inline TimeSeries simulate_discrete(const DiscreteStateSpace& ss, const TimeSeries& u,
                                    std::optional<Vec> x0 = std::nullopt) {
  ss.validate();
  detail::check_grid(u, ss.Ts);
  Vec x = x0 ? *x0 : Vec::Zero(ss.A.rows());
  if (x.size() != ss.A.rows()) throw ValidationError("discrete simulation: x0 has wrong dimension");
  std::vector<double> y(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    y[k] = ss.C.dot(x) + ss.D * u.v()[k];
    x = ss.A * x + ss.B * u.v()[k];
  }
  return {u.t(), std::move(y)};
}

/// Forced response of the process model with the input held between samples.
inline TimeSeries simulate_pz3(const ProcessModelPZ3& pm, const TimeSeries& u) {
  const double Ts = u.t()[1] - u.t()[0];
  return simulate_discrete(discretize_zoh(pz3_to_statespace(pm), Ts), u);
}

// ---------------------------------------------------------------------------
// Identification

struct Pz3FitOptions {
  NlsOptions nls{};
  int starts = 7;
};

struct Pz3Fit {
  ProcessModelPZ3 model;
  FitReport report;
};

/// Process-model identification by simulation-error least squares.
///
/// Pole time constants are searched in log space (always positive, so every
/// candidate is stable), from several starting spreads; the best fit is kept
/// and its poles are sorted in descending order.
inline Pz3Fit fit_pz3(const TimeSeries& input, const TimeSeries& output, const Pz3FitOptions& opt = {}) {
  if (!input.same_grid(output)) throw ValidationError("fit_pz3: input and output must share the time grid");
  const double Ts = input.t()[1] - input.t()[0];
  detail::check_grid(input, Ts);
  const auto [umin, umax] = std::minmax_element(input.v().begin(), input.v().end());
  if (*umax - *umin <= 0) throw ValidationError("fit_pz3: input needs at least one transition");
  const double T = input.t().back() - input.t().front();
  const Eigen::Map<const Vec> y(output.v().data(), static_cast<Eigen::Index>(output.size()));

  auto unpack = [](std::span<const double> p) {
    ProcessModelPZ3 m;
    m.Kp = p[0];
    m.Tz = p[1];
    for (int i = 0; i < 3; ++i) m.Tp[i] = std::exp(p[2 + i]);
    return m;
  };
  auto resid = [&](std::span<const double> p, Vec& r) {
    const auto sim = simulate_pz3(unpack(p), input);
    r = Eigen::Map<const Vec>(sim.v().data(), static_cast<Eigen::Index>(sim.size())) - y;
  };

  // static gain guess from the final levels
  double kp0 = 1;
  if (std::abs(input.v().back()) > 1e-300) kp0 = output.v().back() / input.v().back();
  if (!std::isfinite(kp0) || kp0 == 0) kp0 = 1;

  Bounds b;
  const double lo = std::log(Ts / 1000), hi = std::log(100 * T);
  b.lower = {-std::numeric_limits<double>::infinity(), -10 * T, lo, lo, lo};
  b.upper = {std::numeric_limits<double>::infinity(), 10 * T, hi, hi, hi};

  const std::vector<std::array<double, 3>> spreads = {
      {0.2, 0.02, 0.002}, {0.5, 0.05, 0.005}, {0.1, 0.01, 0.001}, {0.05, 0.005, 0.0005}, {0.3, 0.1, 0.03}, {1.0, 0.1, 0.01},
      {50.0, 0.01, 0.001}, {0.02, 0.004, 0.0008}, {2.0, 0.2, 0.02}};
  std::optional<Pz3Fit> best;
  std::optional<FitReport> stalled;
  for (int s = 0; s < std::min<int>(opt.starts, static_cast<int>(spreads.size())); ++s) {
    std::vector<double> p0{kp0, 0.0, 0, 0, 0};
    for (int i = 0; i < 3; ++i) p0[2 + i] = std::clamp(std::log(spreads[s][i] * T), lo, hi);
    FitReport rep;
    try {
      rep = least_squares(resid, p0, b, opt.nls);
    } catch (const NumericalError&) {
      continue;
    }
    if (!rep.converged) {
      if (!stalled || rep.residual_norm < stalled->residual_norm) stalled = rep;
      continue;
    }
    if (!best || rep.residual_norm < best->report.residual_norm) best = Pz3Fit{unpack(rep.parameters), rep};
  }
  if (!best && stalled)
    throw FitError("fit_pz3: no start converged (" + stalled->message + "), final residual norm " +
                   std::to_string(stalled->residual_norm));
  if (!best) throw FitError("fit_pz3: all starts failed");

  auto& m = best->model;
  // a pole sitting on the zero cancels it; drop the pair, refit, and keep the
  // reduced model when it explains the data as well
  for (std::size_t i = 0; i < 3; ++i) {
    if (m.Tz <= 0 || std::abs(m.Tp[i] - m.Tz) > 1e-3 * m.Tp[i]) continue;
    std::vector<double> p0{m.Kp, 0.0, std::log(m.Tp[0]), std::log(m.Tp[1]), std::log(m.Tp[2])};
    p0[2 + i] = lo;
    try {
      const auto rep = least_squares(resid, p0, b, opt.nls);
      if (rep.converged && rep.residual_norm <= best->report.residual_norm + 1e-6 * y.norm())
        *best = Pz3Fit{unpack(rep.parameters), rep};
    } catch (const NumericalError&) {
    }
    break;
  }
  std::sort(m.Tp.begin(), m.Tp.end(), std::greater<>());
  auto& rep = best->report;
  rep.parameters = {m.Kp, m.Tz, m.Tp[0], m.Tp[1], m.Tp[2]};
  rep.names = {"Kp", "Tz", "Tp1", "Tp2", "Tp3"};
  rep.std_errors.clear();  // the log-space covariance does not map onto sorted poles
  const auto sim = simulate_pz3(m, input);
  try {
    rep.r_squared = r_squared(output.v(), sim.v());
  } catch (const NumericalError&) {
    rep.r_squared = std::numeric_limits<double>::quiet_NaN();
  }
  return *best;
}

// ---------------------------------------------------------------------------
// Scheduled hybrid simulation: Hookean static prediction shaped by a discrete realization

/// Flattened realization: A row-major (9), B (3), C (3), D (1).
inline std::vector<double> to_vector(const DiscreteStateSpace& s) {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < s.A.rows(); ++i)
    for (Eigen::Index j = 0; j < s.A.cols(); ++j) v.push_back(s.A(i, j));
  for (Eigen::Index i = 0; i < s.B.size(); ++i) v.push_back(s.B[i]);
  for (Eigen::Index i = 0; i < s.C.size(); ++i) v.push_back(s.C[i]);
  v.push_back(s.D);
  return v;
}

inline DiscreteStateSpace statespace_from_vector(std::span<const double> v, double Ts) {
  if (v.size() != 16) throw ValidationError("state space vector must have 16 entries");
  DiscreteStateSpace s;
  s.A.resize(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s.A(i, j) = v[3 * i + j];
  s.B = Vec(3);
  s.C.resize(3);
  for (int i = 0; i < 3; ++i) {
    s.B[i] = v[9 + i];
    s.C[i] = v[12 + i];
  }
  s.D = v[15];
  s.Ts = Ts;
  return s;
}

struct HybridOptions {
  /// Add the static prediction to the realization output instead of using the realization output alone.
  bool superimpose_static = false;
  int stability_probe_points = 101;
};

/// Static Hookean height change for `voltage` (positive for compression with a positive modulus).
inline double hookean_height_change(const ActuatorSpec& spec, double Y, double voltage) {
  return height_change(spec, static_equilibrium_strain(spec, Hookean{Y}, std::max(voltage, 0.0)));
}

/// Drives the realization with the Hookean static height change predicted from the voltage.
/// Realization entries are interpolated linearly from `schedule` at the instantaneous voltage.
/// Voltages off the Ts grid are resampled with a sample-and-hold.
inline SimResult hybrid_static_dynamic(const ActuatorSpec& spec, double Y, const ParameterSchedule& schedule, double Ts,
                                       const TimeSeries& voltage, const HybridOptions& opt = {}) {
  spec.validate();
  if (schedule.dimension() != 16) throw ValidationError("hybrid: schedule entries must be flattened 3rd-order realizations");
  const TimeSeries u = [&] {
    bool on_grid = true;
    for (std::size_t k = 1; k < voltage.size() && on_grid; ++k)
      on_grid = std::abs(voltage.t()[k] - voltage.t()[k - 1] - Ts) <= 1e-6 * Ts;
    return on_grid ? voltage : resample_uniform(voltage, Ts, Resampling::hold);
  }();

  SimResult out;
  out.state_names = {"x1", "x2", "x3"};
  const auto [vmin, vmax] = std::minmax_element(u.v().begin(), u.v().end());
  if (!schedule.covers(*vmin) || !schedule.covers(*vmax)) {
    std::ostringstream os;
    os << "schedule clamped: drive voltage range [" << *vmin << ", " << *vmax << "] V outside breakpoints ["
       << schedule.breakpoints().front() << ", " << schedule.breakpoints().back() << "]";
    out.warnings.push_back(os.str());
  }
  // stability of the interpolated realizations over the visited voltage range
  {
    std::vector<double> probes;
    const int np = std::max(2, opt.stability_probe_points);
    for (int i = 0; i < np; ++i) probes.push_back(*vmin + (*vmax - *vmin) * i / (np - 1));
    for (double b : schedule.breakpoints())
      if (b >= *vmin && b <= *vmax) probes.push_back(b);
    double worst = 0, worst_v = 0;
    for (double v : probes) {
      const double rho = statespace_from_vector(interpolate_schedule(schedule, v), Ts).spectral_radius();
      if (rho > worst) worst = rho, worst_v = v;
    }
    if (worst >= 1) {
      std::ostringstream os;
      os << "unstable realization: spectral radius " << worst << " at " << worst_v << " V";
      out.warnings.push_back(os.str());
    }
  }

  std::vector<double> entry(16);
  Vec x = Vec::Zero(3), xn(3);
  Eigen::Matrix3d A;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double v = u.v()[k];
    interpolate_schedule(schedule, v, entry);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) A(i, j) = entry[3 * i + j];
    const double us = hookean_height_change(spec, Y, v);
    double y = entry[12] * x[0] + entry[13] * x[1] + entry[14] * x[2] + entry[15] * us;
    if (opt.superimpose_static) y += us;
    if (!std::isfinite(y)) throw DivergenceError("hybrid: non-finite output", u.t()[k]);
    out.t.push_back(u.t()[k]);
    out.dz.push_back(y);
    out.strain.push_back(y / (spec.z0 * spec.j));
    out.stress.push_back(maxwell_stress(spec, std::max(v, 0.0)) * spec.A_e / spec.A_c);
    out.states.push_back({x[0], x[1], x[2]});
    xn = A * x;
    for (int i = 0; i < 3; ++i) xn[i] += entry[9 + i] * us;
    x = xn;
  }
  return out;
}

/// Fixed realization (no scheduling).
inline SimResult hybrid_static_dynamic(const ActuatorSpec& spec, double Y, const DiscreteStateSpace& ss,
                                       const TimeSeries& voltage, const HybridOptions& opt = {}) {
  const auto e = to_vector(ss);
  return hybrid_static_dynamic(spec, Y, ParameterSchedule({0.0, 1.0}, {e, e}), ss.Ts, voltage, opt);
}

namespace published {

/// Discrete third-order realizations identified per creep voltage level (100 V .. 1200 V); D = 0.
/// The sample time is the 1 ms fixed step the realizations were simulated with.
inline std::vector<std::pair<double, DiscreteStateSpace>> statespace_table(double Ts = 0.001) {
  struct Row {
    double v;
    double a11, a12, a13, a22, a23, a33;
    double b1, b2, b3;
    double c1, c2;
  };
  const Row rows[] = {
      {100, 0.9993, 6.4406e-4, 2.8609e-6, 0.5089, 0.0051, 0.5089, 3.4098e-7, 0.0010, 0.2327, 5.0425, 56.8986},
      {200, 0.9999, 3.3094e-4, 6.2901e-7, 0.7738, 0.0020, 0.0169, 1.7194e-7, 0.0011, 0.1542, 2.6463, 70.5301},
      {300, 1.0, 2.6043e-4, 5.8339e-7, 0.7176, 0.0023, 0.0391, 1.5615e-7, 0.0012, 0.1898, 2.3209, 75.8354},
      {400, 0.9999, 2.9355e-4, 8.5537e-7, 0.6796, 0.0033, 0.1257, 2.1805e-7, 0.0015, 0.2698, 2.1903, 61.8871},
      {500, 0.9999, 2.7840e-4, 8.5286e-7, 0.6795, 0.0035, 0.1539, 2.1496e-7, 0.0016, 0.2894, 2.0592, 61.3489},
      {600, 0.9999, 2.5214e-4, 7.6350e-7, 0.6736, 0.0035, 0.1464, 1.9316e-7, 0.0016, 0.2843, 2.1173, 69.3676},
      {700, 0.9999, 2.7409e-4, 8.8431e-7, 0.6642, 0.0038, 0.1866, 2.2087e-7, 0.0017, 0.3101, 2.2137, 66.2784},
      {800, 0.9999, 2.7169e-4, 8.0427e-7, 0.6811, 0.0034, 0.1342, 2.0424e-7, 0.0016, 0.2759, 2.5810, 78.8794},
      {900, 0.9999, 2.6574e-4, 9.1313e-7, 0.7270, 0.0044, 0.2466, 2.2219e-7, 0.0019, 0.3444, 1.4773, 47.5997},
      {1000, 0.9999, 2.5498e-4, 7.6745e-7, 0.6927, 0.0035, 0.1446, 1.9374e-7, 0.0016, 0.2831, 2.5634, 84.1382},
      {1100, 0.9999, 2.4917e-4, 7.6203e-7, 0.6728, 0.0035, 0.1522, 1.9238e-7, 0.0016, 0.2882, 2.8483, 94.3725},
      {1200, 0.9999, 2.5217e-4, 9.3562e-7, 0.6929, 0.0048, 0.3183, 2.2487e-7, 0.0020, 0.3811, 1.6416, 54.4909},
  };
  std::vector<std::pair<double, DiscreteStateSpace>> out;
  for (const auto& r : rows) {
    DiscreteStateSpace s;
    s.A.resize(3, 3);
    s.A << r.a11, r.a12, r.a13, 0, r.a22, r.a23, 0, 0, r.a33;
    s.B = Vec(3);
    s.B << r.b1, r.b2, r.b3;
    s.C.resize(3);
    s.C << r.c1, r.c2, 0;
    s.D = 0;
    s.Ts = Ts;
    out.emplace_back(r.v, s);
  }
  return out;
}

inline ParameterSchedule statespace_schedule(double Ts = 0.001) {
  std::vector<double> bp;
  std::vector<std::vector<double>> e;
  for (const auto& [v, s] : statespace_table(Ts)) {
    bp.push_back(v);
    e.push_back(to_vector(s));
  }
  return {std::move(bp), std::move(e)};
}

}  // namespace published

}  // namespace dea
