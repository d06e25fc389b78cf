#pragma once

#include <cmath>
#include <sstream>

#include "dea/core.hpp"
#include "dea/static_models.hpp"

namespace dea {

struct DriveState {
  double voltage = 0;   ///< [V]
  double sigma_el = 0;  ///< [Pa]
  double F_active = 0;  ///< [N]
};

/// Electrostatic (Maxwell) pressure on the undeformed membrane.
inline double maxwell_stress(const ActuatorSpec& spec, double voltage) {
  if (voltage < 0) throw ValidationError("maxwell stress: voltage must be non-negative");
  const double e = voltage / spec.z0;
  return spec.eps_vac * spec.eps_r * e * e;
}

inline DriveState drive_state(const ActuatorSpec& spec, double voltage) {
  const double s = maxwell_stress(spec, voltage);
  return {voltage, s, s * spec.A_e};
}

/// Electrostatic force spread over the full cross-section: the stress that loads the elastomer.
inline double drive_pressure(const ActuatorSpec& spec, double voltage) {
  return maxwell_stress(spec, voltage) * spec.A_e / spec.A_c;
}

/// Total height change of the stack for a per-layer strain.
inline double height_change(const ActuatorSpec& spec, double strain) {
  return strain * spec.z0 * static_cast<double>(spec.j);
}

/// Per-layer strain for a stack height change (inverse of `height_change`).
inline double strain_from_height_change(const ActuatorSpec& spec, double dz) {
  return dz / (spec.z0 * static_cast<double>(spec.j));
}

/// Strain at which the passive static stress balances the electrostatic force:
/// sigma_el * A_e = sigma_static(lambda) * A_c.
///
/// The Hookean law is solved in closed form. Other models are bracketed on
/// lambda in [0.5, 1], scanning down from 1; when the coefficients carry the
/// opposite sign convention (root on the tensile side) [1, 2] is scanned instead.
inline double static_equilibrium_strain(const ActuatorSpec& spec, const StaticModel& model, double voltage) {
  const double force = maxwell_stress(spec, voltage) * spec.A_e;
  if (const auto* h = std::get_if<Hookean>(&model)) {
    if (h->Y == 0) throw SolverError("static equilibrium: Hookean modulus is zero");
    return force / (spec.A_c * h->Y);
  }
  if (force == 0) return 0.0;

  auto residual = [&](double lambda) { return true_stress(model, lambda) * spec.A_c - force; };

  // Scan outward from lambda = 1 so that the root closest to the undeformed
  // state is taken; fitted polynomial/exponential laws can change sign again
  // far outside the calibrated range.
  auto scan = [&](double from, double to, double& a, double& b, double& fa, double& fb) {
    constexpr int n = 400;
    double x0 = from, f0 = residual(from);
    for (int i = 1; i <= n; ++i) {
      const double x1 = from + (to - from) * i / n;
      const double f1 = residual(x1);
      if (f0 == 0 || f0 * f1 <= 0) {
        a = std::min(x0, x1), b = std::max(x0, x1);
        fa = (a == x0) ? f0 : f1;
        fb = (a == x0) ? f1 : f0;
        return true;
      }
      x0 = x1, f0 = f1;
    }
    return false;
  };
  double a = 0, b = 0, fa = 0, fb = 0;
  if (!scan(1.0, 0.5, a, b, fa, fb) && !scan(1.0, 2.0, a, b, fa, fb)) {
    std::ostringstream os;
    os << "static equilibrium: no root for V=" << voltage << " in lambda brackets [0.5,1] and [1,2]"
       << " (residuals " << residual(0.5) << ", " << residual(1.0) << ", " << residual(2.0) << ")";
    throw SolverError(os.str());
  }

  const double tol = 1e-9 * std::max(std::abs(force), 1.0);
  // bisection until the bracket is small, then secant polishing inside the bracket
  for (int it = 0; it < 200 && (b - a) > 1e-13; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = residual(m);
    if (fm == 0) {
      a = b = m;
      fa = fb = 0;
      break;
    }
    if ((fm < 0) == (fa < 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
      fb = fm;
    }
  }
  double x = (std::abs(fa) < std::abs(fb)) ? a : b;
  if (fb != fa) {
    const double s = b - fb * (b - a) / (fb - fa);
    if (s >= std::min(a, b) && s <= std::max(a, b) && std::abs(residual(s)) <= std::abs(residual(x))) x = s;
  }
  if (std::abs(residual(x)) > tol) {
    std::ostringstream os;
    os << "static equilibrium: residual " << residual(x) << " N above tolerance at lambda=" << x;
    throw SolverError(os.str());
  }
  return x - 1.0;
}

}  // namespace dea
