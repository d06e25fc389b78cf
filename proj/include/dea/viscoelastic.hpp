#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dea/core.hpp"
#include "dea/electromech.hpp"
#include "dea/ode.hpp"
#include "dea/static_models.hpp"

namespace dea {

/// Generalized Maxwell: spring Y in parallel with three spring-damper (Maxwell) branches.
struct GMParams {
  double Y = 0;
  std::array<double, 3> k{};  ///< [Pa]
  std::array<double, 3> d{};  ///< [Pa s]

  double tau(int i) const { return d[i] / k[i]; }
  void validate() const {
    for (int i = 0; i < 3; ++i) {
      if (k[i] == 0 || d[i] == 0) throw ValidationError("GM: stiffness and damping must be non-zero");
      if (!(tau(i) > 0)) throw ValidationError("GM: time constants d_i/k_i must be positive");
    }
  }
};

/// Generalized Kelvin-Voigt: spring k0 in series with three Kelvin-Voigt elements.
/// The rates alpha_i = k_i/d_i are stored, as identified.
struct GKVParams {
  double k0 = 0;
  std::array<double, 3> k{};      ///< [Pa]
  std::array<double, 3> alpha{};  ///< [1/s]

  double d(int i) const { return k[i] / alpha[i]; }
  void validate() const {
    if (k0 == 0) throw ValidationError("GKV: k0 must be non-zero");
    for (int i = 0; i < 3; ++i) {
      if (k[i] == 0) throw ValidationError("GKV: k_i must be non-zero");
      if (!(alpha[i] > 0)) throw ValidationError("GKV: alpha_i must be positive");
    }
  }
};

/// Generalized Kelvin-Maxwell: generalized Maxwell plus a parallel damper d0.
struct GKMParams {
  GMParams gm;
  double d0 = 0;

  void validate() const {
    gm.validate();
    if (d0 < 0) throw ValidationError("GKM: d0 must be non-negative");
  }
};

using ViscoModel = std::variant<GMParams, GKVParams, GKMParams>;

inline std::string_view visco_model_name(const ViscoModel& m) {
  return std::visit(detail::overloaded{[](const GMParams&) { return std::string_view("gm"); },
                                       [](const GKVParams&) { return std::string_view("gkv"); },
                                       [](const GKMParams&) { return std::string_view("gkm"); }},
                    m);
}

inline void validate(const ViscoModel& m) {
  std::visit([](const auto& p) { p.validate(); }, m);
}

inline std::vector<std::string> visco_parameter_names(const ViscoModel& m) {
  return std::visit(
      detail::overloaded{
          [](const GMParams&) { return std::vector<std::string>{"Y", "k1", "k2", "k3", "d1", "d2", "d3"}; },
          [](const GKVParams&) {
            return std::vector<std::string>{"k0", "k1", "k2", "k3", "alpha1", "alpha2", "alpha3"};
          },
          [](const GKMParams&) { return std::vector<std::string>{"Y", "k1", "k2", "k3", "d1", "d2", "d3", "d0"}; },
      },
      m);
}

inline std::vector<double> to_vector(const ViscoModel& m) {
  return std::visit(detail::overloaded{
                        [](const GMParams& p) {
                          return std::vector<double>{p.Y, p.k[0], p.k[1], p.k[2], p.d[0], p.d[1], p.d[2]};
                        },
                        [](const GKVParams& p) {
                          return std::vector<double>{p.k0, p.k[0], p.k[1], p.k[2], p.alpha[0], p.alpha[1], p.alpha[2]};
                        },
                        [](const GKMParams& p) {
                          const auto& g = p.gm;
                          return std::vector<double>{g.Y, g.k[0], g.k[1], g.k[2], g.d[0], g.d[1], g.d[2], p.d0};
                        },
                    },
                    m);
}

/// Same variant as `like` with parameters taken from `v` (order of `visco_parameter_names`).
inline ViscoModel from_vector(const ViscoModel& like, std::span<const double> v) {
  if (v.size() != to_vector(like).size()) throw ValidationError("viscoelastic model: wrong parameter count");
  return std::visit(detail::overloaded{
                        [&](const GMParams&) -> ViscoModel {
                          return GMParams{v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}};
                        },
                        [&](const GKVParams&) -> ViscoModel {
                          return GKVParams{v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}};
                        },
                        [&](const GKMParams&) -> ViscoModel {
                          return GKMParams{GMParams{v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}}, v[7]};
                        },
                    },
                    like);
}

inline ViscoModel make_visco_model(std::string_view name) {
  if (name == "gm") return GMParams{};
  if (name == "gkv") return GKVParams{};
  if (name == "gkm") return GKMParams{};
  throw ValidationError("unknown viscoelastic model '" + std::string(name) + "'");
}

/// GKM whose d0 starts at the arithmetic mean of the GM dampers.
inline GKMParams gkm_from_gm(const GMParams& gm) { return {gm, (gm.d[0] + gm.d[1] + gm.d[2]) / 3.0}; }

namespace published {

/// Generalized Maxwell parameters identified from the 15 % relaxation test.
inline GMParams gm() { return {1.1947e6, {1.5714e5, 3.0800e4, 8.5729e4}, {5.8299e8, 7.2180e5, 9.8021e4}}; }

/// Generalized Kelvin-Voigt parameters identified per creep voltage level (100 V .. 1200 V).
inline std::vector<std::pair<double, GKVParams>> gkv_table() {
  return {
      {100, {2.4483e7, {5.9452e7, 5.6255e6, 5.6535e6}, {7.4554, 0.9950, 1.3896e-4}}},
      {200, {1.7697e7, {6.1442e7, 5.5708e6, 3.3737e6}, {2.7945, 0.9832, 1.1668e-4}}},
      {300, {1.2926e7, {6.2529e7, 5.9254e6, 3.5228e6}, {6.3679, 0.9947, 1.5514e-4}}},
      {400, {6.1435e6, {5.1562e7, 9.5358e6, 3.4654e6}, {9.2718, 0.9912, 1.0242e-4}}},
      {500, {5.3194e6, {2.5746e7, 1.2044e7, 4.5884e6}, {9.9923, 0.9172, 1.2835e-4}}},
      {600, {6.1256e6, {6.6388e6, 5.1972e7, 4.8862e6}, {10, 0.0324, 1.2531e-4}}},
      {700, {5.7461e6, {6.2274e6, 4.9139e7, 6.1582e6}, {10, 0.0256, 1.4543e-4}}},
      {800, {5.6538e6, {5.6422e6, 4.5805e7, 6.1727e6}, {10, 0.0282, 1.5695e-4}}},
      {900, {4.3561e6, {7.2194e6, 4.1366e7, 6.5396e6}, {9.6898, 0.0267, 2.3905e-4}}},
      {1000, {5.0266e6, {4.7903e6, 3.8655e7, 7.5268e6}, {10, 0.0292, 2.7670e-4}}},
      {1100, {4.6128e6, {4.5402e6, 4.5276e7, 1.8722e6}, {10, 0.0259, 5.1502e-5}}},
      {1200, {4.1804e6, {4.7878e6, 4.4427e7, 2.0907e6}, {10, 0.0280, 6.1143e-5}}},
  };
}

/// The GKV table as a voltage-indexed schedule over `to_vector` entries.
inline ParameterSchedule gkv_schedule() {
  std::vector<double> bp;
  std::vector<std::vector<double>> e;
  for (const auto& [v, p] : gkv_table()) {
    bp.push_back(v);
    e.push_back(to_vector(p));
  }
  return {std::move(bp), std::move(e)};
}

}  // namespace published

// ---------------------------------------------------------------------------
// Closed forms

/// Stress carried by the three Maxwell branches after a strain step eps0 at t = 0
/// (the parallel spring Y is not included).
inline double gm_relaxation_closed(const GMParams& p, double eps0, double t) {
  if (t < 0) throw ValidationError("relaxation: t must be non-negative");
  double s = 0;
  for (int i = 0; i < 3; ++i) s += eps0 * p.k[i] * std::exp(-p.k[i] * t / p.d[i]);
  return s;
}

/// Strain under a constant stress applied at t = 0.
inline double gkv_creep_closed(const GKVParams& p, double sigma, double t) {
  if (t < 0) throw ValidationError("creep: t must be non-negative");
  double e = sigma / p.k0;
  for (int i = 0; i < 3; ++i) e += sigma / p.k[i] * -std::expm1(-p.alpha[i] * t);
  return e;
}

/// t -> infinity limit of `gkv_creep_closed`.
inline double gkv_creep_limit(const GKVParams& p, double sigma) {
  return sigma * (1 / p.k0 + 1 / p.k[0] + 1 / p.k[1] + 1 / p.k[2]);
}

// ---------------------------------------------------------------------------
// Passive stress rate form

struct PassiveRate {
  std::array<double, 3> dstate{};
  double sigma = 0;  ///< passive stress sigma_z [Pa]
};

/// Internal-variable rate form of the passive stress.
///
/// GM/GKM: state = branch stresses, d(sigma_i)/dt = k_i deps/dt - sigma_i k_i/d_i,
/// sigma_z = Y eps + sum sigma_i (+ d0 deps/dt for GKM).
/// GKV: state = element strains, sigma_z = k0 (eps - sum eps_i), d(eps_i)/dt = (sigma_z - k_i eps_i)/d_i.
inline PassiveRate passive_stress_ode(const ViscoModel& model, std::span<const double> state, double strain,
                                      double strain_rate) {
  if (state.size() != 3) throw ValidationError("passive_stress_ode: state must have three entries");
  PassiveRate r;
  auto maxwell = [&](const GMParams& p) {
    r.sigma = p.Y * strain;
    for (int i = 0; i < 3; ++i) {
      r.dstate[i] = p.k[i] * strain_rate - state[i] * p.k[i] / p.d[i];
      r.sigma += state[i];
    }
  };
  std::visit(detail::overloaded{
                 [&](const GMParams& p) { maxwell(p); },
                 [&](const GKMParams& p) {
                   maxwell(p.gm);
                   r.sigma += p.d0 * strain_rate;
                 },
                 [&](const GKVParams& p) {
                   r.sigma = p.k0 * (strain - state[0] - state[1] - state[2]);
                   for (int i = 0; i < 3; ++i) r.dstate[i] = (r.sigma - p.k[i] * state[i]) / p.d(i);
                 },
             },
             model);
  return r;
}

// ---------------------------------------------------------------------------
// Third-order transfer form of the GKV model

/// Coefficients of D s^3 + C s^2 + B s + A (stress side) = d s^3 + c s^2 + b s + a (strain side),
/// i.e. sigma/eps = (d s^3 + c s^2 + b s + a) / (D s^3 + C s^2 + B s + A).
struct ThirdOrderCoefficients {
  double A = 0, B = 0, C = 0, D = 0;
  double a = 0, b = 0, c = 0, d = 0;
};

inline ThirdOrderCoefficients gkv_third_order(const GKVParams& p) {
  const double k0 = p.k0, k1 = p.k[0], k2 = p.k[1], k3 = p.k[2];
  const double d1 = p.d(0), d2 = p.d(1), d3 = p.d(2);
  ThirdOrderCoefficients q;
  q.D = d1 * d2 * d3;
  q.C = k0 * (d1 * d2 + d1 * d3 + d2 * d3) + k1 * d2 * d3 + k2 * d1 * d3 + k3 * d1 * d2;
  q.B = k0 * (k1 * d2 + k2 * d1 + k1 * d3 + k3 * d1 + k2 * d3 + k3 * d2) + k1 * k2 * d3 + k1 * k3 * d2 + k2 * k3 * d1;
  q.A = k1 * k2 * k3 + k0 * (k2 * k3 + k1 * k3 + k1 * k2);
  q.d = k0 * d1 * d2 * d3;
  q.c = k0 * (k1 * d2 * d3 + k2 * d1 * d3 + k3 * d1 * d2);
  q.b = k0 * (k1 * k2 * d3 + k1 * k3 * d2 + k2 * k3 * d1);
  q.a = k0 * k1 * k2 * k3;
  return q;
}

/// Single-input single-output continuous realization x' = A x + B u, y = C x + D u.
struct LinearRealization {
  Mat A;
  Vec B;
  Eigen::RowVectorXd C;
  double D = 0;
};

/// Controllable canonical realization of num(s)/den(s), both cubic, highest power first.
inline LinearRealization realize_cubic_ratio(std::array<double, 4> num, std::array<double, 4> den) {
  if (den[0] == 0) throw ValidationError("realization: leading denominator coefficient is zero");
  for (auto& x : num) x /= den[0];
  for (int i = 3; i >= 0; --i) den[i] /= den[0];
  LinearRealization r;
  r.A = Mat::Zero(3, 3);
  r.A(0, 1) = 1;
  r.A(1, 2) = 1;
  r.A(2, 0) = -den[3];
  r.A(2, 1) = -den[2];
  r.A(2, 2) = -den[1];
  r.B = Vec::Zero(3);
  r.B[2] = 1;
  r.D = num[0];
  r.C.resize(3);
  r.C << num[3] - num[0] * den[3], num[2] - num[0] * den[2], num[1] - num[0] * den[1];
  return r;
}

/// eps/sigma of the third-order form (creep compliance transfer function).
inline LinearRealization gkv_compliance_realization(const GKVParams& p) {
  const auto q = gkv_third_order(p);
  return realize_cubic_ratio({q.D, q.C, q.B, q.A}, {q.d, q.c, q.b, q.a});
}

/// Strain response to a stress step of height `sigma` at t = 0, integrating the third-order form.
inline std::vector<double> gkv_third_order_creep(const GKVParams& p, double sigma, std::span<const double> times,
                                                 const OdeOptions& opt = {}) {
  p.validate();
  const auto r = gkv_compliance_realization(p);
  OdeSystem sys;
  sys.rhs = [&](double, const Vec& x, Vec& dx) { dx = r.A * x + r.B * sigma; };
  sys.jacobian = [&](double, const Vec&, Mat& J) { J = r.A; };
  const double t1 = times.empty() ? 1.0 : std::max(times.back(), 1e-12);
  const auto tr = integrate_adaptive(sys, Vec::Zero(3), 0.0, t1, {}, times, opt);
  std::vector<double> out;
  for (const auto& x : tr.y) out.push_back(r.C.dot(x) + r.D * sigma);
  return out;
}

// ---------------------------------------------------------------------------
// Strain-controlled simulation (passive material, no drive)

struct StrainControlledResult {
  std::vector<double> t;
  std::vector<double> strain;
  std::vector<double> stress;  ///< sigma_z
  std::vector<std::array<double, 3>> states;
};

/// Integrates `passive_stress_ode` for a prescribed strain history starting from a relaxed state.
/// Strain jumps at `strain.breaks()` load the Maxwell branches elastically (delta sigma_i = k_i delta eps).
inline StrainControlledResult simulate_strain_controlled(const ViscoModel& model, const Drive& strain,
                                                         std::span<const double> times, const OdeOptions& opt = {}) {
  validate(model);
  if (times.size() < 2) throw ValidationError("strain-controlled simulation: need at least two output times");
  const bool is_gkv = std::holds_alternative<GKVParams>(model);
  const GMParams* gm = nullptr;
  if (const auto* p = std::get_if<GMParams>(&model)) gm = p;
  if (const auto* p = std::get_if<GKMParams>(&model)) gm = &p->gm;

  OdeSystem sys;
  sys.rhs = [&](double t, const Vec& y, Vec& dy) {
    const auto r = passive_stress_ode(model, std::span<const double>(y.data(), 3), strain(t), strain.slope(t));
    dy.resize(3);
    for (int i = 0; i < 3; ++i) dy[i] = r.dstate[i];
  };
  sys.jacobian = [&](double, const Vec&, Mat& J) {
    J = Mat::Zero(3, 3);
    if (is_gkv) {
      const auto& p = std::get<GKVParams>(model);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) J(i, j) = (-p.k0 - (i == j ? p.k[i] : 0.0)) / p.d(i);
    } else {
      for (int i = 0; i < 3; ++i) J(i, i) = -gm->k[i] / gm->d[i];
    }
  };
  if (gm) {
    sys.on_break = [&](double t, Vec& y) {
      const double jump = strain.jump_at(t);
      for (int i = 0; i < 3; ++i) y[i] += gm->k[i] * jump;
    };
  }
  std::vector<double> br = strain.breaks();
  const auto tr = integrate_adaptive(sys, Vec::Zero(3), times.front(), times.back(), br, times, opt);

  StrainControlledResult out;
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    const double t = tr.t[i];
    // samples at an interior break are left limits of the state, a break at the start a right limit
    const bool at_break = std::find(br.begin(), br.end(), t) != br.end();
    const double h = 1e-9 * std::max(1.0, std::abs(t));
    const double e = !at_break ? strain(t) : (t > times.front() ? strain(t - h) : strain(t + h));
    const auto r = passive_stress_ode(model, std::span<const double>(tr.y[i].data(), 3), e, strain.slope(t));
    out.t.push_back(t);
    out.strain.push_back(e);
    out.stress.push_back(r.sigma);
    out.states.push_back({tr.y[i][0], tr.y[i][1], tr.y[i][2]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Actuator simulation (force balance with electrostatic drive)

enum class SimMode { quasistatic, inertial };

inline std::string_view to_string(SimMode m) { return m == SimMode::inertial ? "inertial" : "quasistatic"; }
inline SimMode sim_mode_from_string(std::string_view s) {
  if (s == "quasistatic") return SimMode::quasistatic;
  if (s == "inertial") return SimMode::inertial;
  throw ValidationError("unknown simulation mode '" + std::string(s) + "'");
}

struct SimOptions {
  SimMode mode = SimMode::quasistatic;
  std::optional<ParameterSchedule> schedule;  ///< entries in `to_vector` order of the model
  double rtol = 1e-6;
  double atol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct SimResult {
  std::vector<double> t;
  std::vector<double> strain;  ///< per-layer compressive strain [-]
  std::vector<double> dz;      ///< stack height change [m]
  std::vector<double> stress;  ///< passive stress sigma_z [Pa]
  std::vector<std::string> state_names;
  std::vector<std::vector<double>> states;
  std::vector<std::string> warnings;
  OdeStats stats;
};

namespace detail {

// The actuator equations are linear in the state for frozen parameters:
// y' = J(t) y + g(t). Maxwell branches are written with damper strains e_i
// (sigma_i = k_i (eps - e_i)) so that neither formulation needs dV/dt.
struct ActuatorSystem {
  const ActuatorSpec& spec;
  const ViscoModel& base;
  const Drive& drive;
  const SimOptions& opt;
  bool inertial;
  bool algebraic_strain;  // quasistatic GM or GKV: eps is not a state
  mutable bool clamped = false;
  mutable double clamp_voltage = 0;

  int dim() const {
    const bool eps_state = inertial || std::holds_alternative<GKMParams>(base);
    if (!inertial && std::holds_alternative<GKMParams>(base) && std::get<GKMParams>(base).d0 == 0 && !opt.schedule)
      return 3;
    return 3 + (eps_state ? 1 : 0) + (inertial ? 1 : 0);
  }

  ViscoModel params_at(double v) const {
    if (!opt.schedule) return base;
    if (!opt.schedule->covers(v) && !clamped) {
      clamped = true;
      clamp_voltage = v;
    }
    const auto vec = interpolate_schedule(*opt.schedule, v);
    return from_vector(base, vec);
  }

  double drive_pressure(double v) const { return maxwell_stress(spec, std::max(v, 0.0)) * spec.A_e / spec.A_c; }

  double inertia_gain() const { return spec.A_c / (spec.m * spec.z0); }

  // Fills J and g; `s` receives the equivalent drive pressure.
  void linear_form(double t, Mat& J, Vec& g, double& s, ViscoModel& p) const {
    const double v = drive(t);
    s = drive_pressure(v);
    p = params_at(v);
    const int n = dim();
    J = Mat::Zero(n, n);
    g = Vec::Zero(n);
    const double G = inertia_gain();
    std::visit(overloaded{
                   [&](const GMParams& q) { maxwell_form(q, 0.0, n, s, G, J, g); },
                   [&](const GKMParams& q) { maxwell_form(q.gm, q.d0, n, s, G, J, g); },
                   [&](const GKVParams& q) {
                     if (!inertial) {
                       for (int i = 0; i < 3; ++i) {
                         J(i, i) = -q.alpha[i];
                         g[i] = s / q.d(i);
                       }
                       return;
                     }
                     // y = [eps, v, eps_1..3]; sigma = k0 (eps - sum eps_i)
                     J(0, 1) = 1;
                     J(1, 0) = -G * q.k0;
                     for (int i = 0; i < 3; ++i) J(1, 2 + i) = G * q.k0;
                     g[1] = G * s;
                     for (int i = 0; i < 3; ++i) {
                       J(2 + i, 0) = q.k0 / q.d(i);
                       for (int j = 0; j < 3; ++j) J(2 + i, 2 + j) = -q.k0 / q.d(i);
                       J(2 + i, 2 + i) -= q.alpha[i];
                     }
                   },
               },
               p);
  }

  void maxwell_form(const GMParams& q, double d0, int n, double s, double G, Mat& J, Vec& g) const {
    if (n == 3) {
      // quasistatic GM: eps = (s + sum k_j e_j) / K
      const double K = q.Y + q.k[0] + q.k[1] + q.k[2];
      for (int i = 0; i < 3; ++i) {
        const double r = q.k[i] / q.d[i];
        for (int j = 0; j < 3; ++j) J(i, j) = r * q.k[j] / K;
        J(i, i) -= r;
        g[i] = r * s / K;
      }
      return;
    }
    const double Ksum = q.Y + q.k[0] + q.k[1] + q.k[2];
    const int e0 = inertial ? 2 : 1;  // index of e_1
    if (inertial) {
      // y = [eps, v, e_1..3]
      J(0, 1) = 1;
      J(1, 0) = -G * Ksum;
      J(1, 1) = -G * d0;
      for (int i = 0; i < 3; ++i) J(1, e0 + i) = G * q.k[i];
      g[1] = G * s;
    } else {
      // quasistatic GKM: y = [eps, e_1..3], d0 eps' = s - Y eps - sum k_i (eps - e_i)
      if (d0 == 0) throw ValidationError("quasistatic GKM with a schedule requires d0 > 0");
      J(0, 0) = -Ksum / d0;
      for (int i = 0; i < 3; ++i) J(0, e0 + i) = q.k[i] / d0;
      g[0] = s / d0;
    }
    for (int i = 0; i < 3; ++i) {
      const double r = q.k[i] / q.d[i];
      J(e0 + i, 0) = r;
      J(e0 + i, e0 + i) = -r;
    }
  }

  double strain_of(const Vec& y, double s, const ViscoModel& p) const {
    if (!algebraic_strain) return y[0];
    return std::visit(overloaded{
                          [&](const GKVParams& q) { return s / q.k0 + y[0] + y[1] + y[2]; },
                          [&](const GMParams& q) {
                            return (s + q.k[0] * y[0] + q.k[1] * y[1] + q.k[2] * y[2]) / (q.Y + q.k[0] + q.k[1] + q.k[2]);
                          },
                          [&](const GKMParams& q) {
                            const auto& m = q.gm;
                            return (s + m.k[0] * y[0] + m.k[1] * y[1] + m.k[2] * y[2]) / (m.Y + m.k[0] + m.k[1] + m.k[2]);
                          },
                      },
                      p);
  }

  // Without inertia the passive stress balances the drive pressure exactly.
  double stress_of(const Vec& y, double eps, double s, const ViscoModel& p) const {
    if (!inertial) return s;
    return std::visit(overloaded{
                          [&](const GKVParams& q) { return q.k0 * (eps - y[2] - y[3] - y[4]); },
                          [&](const GMParams& q) { return maxwell_stress_of(q, 0.0, y, eps); },
                          [&](const GKMParams& q) { return maxwell_stress_of(q.gm, q.d0, y, eps); },
                      },
                      p);
  }

  double maxwell_stress_of(const GMParams& q, double d0, const Vec& y, double eps) const {
    double sig = q.Y * eps + d0 * y[1];
    for (int i = 0; i < 3; ++i) sig += q.k[i] * (eps - y[2 + i]);
    return sig;
  }

  // Inertial runs start on the quasistatic trajectory (same strain and strain rate),
  // so the structural resonance is not excited by the initial condition.
  Vec initial_state(double t0) const {
    Vec y = Vec::Zero(dim());
    if (!inertial) return y;
    const double v = drive(t0);
    const double s = drive_pressure(v);
    const double ds = (v > 0 ? 2 * maxwell_stress(spec, v) / v : 0.0) * drive.slope(t0) * spec.A_e / spec.A_c;
    const ViscoModel p = params_at(v);
    std::visit(overloaded{
                   [&](const GKVParams& q) {
                     y[0] = s / q.k0;
                     y[1] = ds / q.k0 + s * (1 / q.d(0) + 1 / q.d(1) + 1 / q.d(2));
                   },
                   [&](const GMParams& q) {
                     const double K = q.Y + q.k[0] + q.k[1] + q.k[2];
                     y[0] = s / K;
                     double rate = ds;
                     for (int i = 0; i < 3; ++i) rate += q.k[i] * q.k[i] * y[0] / q.d[i];
                     y[1] = rate / K;
                   },
                   [&](const GKMParams& q) {
                     if (q.d0 > 0) {
                       y[1] = s / q.d0;
                       return;
                     }
                     const auto& g = q.gm;
                     const double K = g.Y + g.k[0] + g.k[1] + g.k[2];
                     y[0] = s / K;
                     double rate = ds;
                     for (int i = 0; i < 3; ++i) rate += g.k[i] * g.k[i] * y[0] / g.d[i];
                     y[1] = rate / K;
                   },
               },
               p);
    return y;
  }

  std::vector<std::string> state_names() const {
    const bool gkv = std::holds_alternative<GKVParams>(base);
    const std::string inner = gkv ? "eps_kv" : "e_damper";
    std::vector<std::string> names;
    const int n = dim();
    if (n >= 4) names.push_back("strain");
    if (inertial) names.push_back("strain_rate");
    for (int i = 1; i <= 3; ++i) names.push_back(inner + std::to_string(i));
    return names;
  }
};

}  // namespace detail

/// Simulates the actuator under the drive voltage, sampled at `times` (sorted, first entry is the start).
///
/// The actuator starts with relaxed internal elements. Quasistatic mode drops the inertia
/// term; GM and GKV then have an algebraic strain, GKM keeps the strain as a state through d0.
/// Inertial mode starts on the quasistatic trajectory. GM and GKV have almost no damping at
/// the structural resonance (~200 kHz for the reference stack), so drive jumps excite ringing
/// that the integrator resolves at tight tolerances.
/// With a schedule the parameters follow the instantaneous drive voltage.
inline SimResult simulate_actuator(const ActuatorSpec& spec, const ViscoModel& model, const Drive& drive,
                                   std::span<const double> times, const SimOptions& opt = {}) {
  spec.validate();
  if (times.size() < 2) throw ValidationError("simulate: need at least two output times");
  if (!std::is_sorted(times.begin(), times.end()) || !(times.back() > times.front()))
    throw ValidationError("simulate: output times must be increasing");
  if (opt.schedule) {
    if (opt.schedule->dimension() != to_vector(model).size())
      throw ValidationError("simulate: schedule entry length does not match the model");
    for (const auto& e : opt.schedule->entries()) validate(from_vector(model, e));
  } else {
    validate(model);
  }

  const bool inertial = opt.mode == SimMode::inertial;
  detail::ActuatorSystem as{spec, model, drive, opt, inertial, false};
  const int n = as.dim();
  as.algebraic_strain = !inertial && n == 3;

  OdeSystem sys;
  Mat J;
  Vec g;
  double s = 0;
  ViscoModel p = model;
  sys.rhs = [&](double t, const Vec& y, Vec& dy) {
    as.linear_form(t, J, g, s, p);
    dy = J * y + g;
  };
  sys.jacobian = [&](double t, const Vec&, Mat& JJ) {
    Vec gg;
    double ss;
    ViscoModel pp = model;
    as.linear_form(t, JJ, gg, ss, pp);
  };

  OdeOptions oo;
  oo.rtol = opt.rtol;
  oo.atol = opt.atol;
  oo.max_step = opt.max_step;
  oo.deadline = opt.deadline;
  const auto& br = drive.breaks();
  const auto tr = integrate_adaptive(sys, as.initial_state(times.front()), times.front(), times.back(), br, times, oo);

  SimResult out;
  out.stats = tr.stats;
  out.state_names = as.state_names();
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    const double t = tr.t[i];
    const double v = drive(t);
    const double sp = as.drive_pressure(v);
    const ViscoModel pt = as.params_at(v);
    const double eps = as.strain_of(tr.y[i], sp, pt);
    if (!std::isfinite(eps)) throw DivergenceError("simulate: non-finite strain", t);
    out.t.push_back(t);
    out.strain.push_back(eps);
    out.dz.push_back(height_change(spec, eps));
    out.stress.push_back(as.stress_of(tr.y[i], eps, sp, pt));
    out.states.emplace_back(tr.y[i].data(), tr.y[i].data() + tr.y[i].size());
  }
  if (as.clamped) {
    std::ostringstream os;
    os << "schedule clamped: drive voltage " << as.clamp_voltage << " V outside breakpoints ["
       << opt.schedule->breakpoints().front() << ", " << opt.schedule->breakpoints().back() << "]";
    out.warnings.push_back(os.str());
  }
  return out;
}

}  // namespace dea
