#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dea/errors.hpp"

namespace dea {

// Uniaxial, incompressible, unconfined loading in z: lambda_x = lambda_y = lambda_z^(-1/2).
// Sign convention follows the data: with negative fitted coefficients a
// compressed sample (lambda < 1) carries a positive stress.

struct Hookean {
  double Y = 0;
};
struct NeoHookean {
  double C1 = 0;
};
struct Yeoh {
  double C1 = 0, C2 = 0, C3 = 0;
};
struct Ogden {
  std::array<double, 3> mu{};
  std::array<double, 3> alpha{};
};
struct MooneyRivlin {
  double C1 = 0, C2 = 0;
};
struct Gent {
  double mu = 0;
  double Jlim = 0;
  double pole_margin = 1e-6;  ///< relative distance to the pole that is treated as a domain error
};

using StaticModel = std::variant<Hookean, NeoHookean, Yeoh, Ogden, MooneyRivlin, Gent>;

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline void check_stretch(double lambda) {
  if (!(lambda > 0) || !std::isfinite(lambda)) throw ValidationError("stretch must be positive and finite");
}

// Cancellation-free forms of the reduced invariants around lambda = 1.
inline double i1_minus_3(double l) { return (l - 1) * (l - 1) * (l + 2) / l; }
inline double i2_minus_3(double l) { return (l - 1) * (l - 1) * (2 * l + 1) / (l * l); }
inline double l2_minus_inv(double l) { return (l - 1) * (l * l + l + 1) / l; }  // lambda^2 - 1/lambda

inline double gent_denominator(const Gent& g, double l) {
  if (g.Jlim == 0) throw DomainError("Gent: Jlim must be non-zero");
  const double den = g.Jlim - i1_minus_3(l);
  if (std::abs(den) <= g.pole_margin * std::abs(g.Jlim))
    throw DomainError("Gent: stretch " + std::to_string(l) + " too close to the limiting-chain pole");
  return den;
}

inline void check_ogden(const Ogden& o) {
  for (double a : o.alpha)
    if (a == 0) throw ValidationError("Ogden: alpha_p must be non-zero");
}

}  // namespace detail

inline std::string_view model_name(const StaticModel& m) {
  return std::visit(detail::overloaded{[](const Hookean&) { return std::string_view("hookean"); },
                                       [](const NeoHookean&) { return std::string_view("neo_hookean"); },
                                       [](const Yeoh&) { return std::string_view("yeoh"); },
                                       [](const Ogden&) { return std::string_view("ogden"); },
                                       [](const MooneyRivlin&) { return std::string_view("mooney_rivlin"); },
                                       [](const Gent&) { return std::string_view("gent"); }},
                    m);
}

/// True (Cauchy) stress in z at stretch `lambda`.
inline double true_stress(const StaticModel& model, double lambda) {
  detail::check_stretch(lambda);
  using namespace detail;
  return std::visit(
      overloaded{
          [&](const Hookean& h) { return h.Y * (lambda - 1); },
          [&](const NeoHookean& n) { return 2 * n.C1 * l2_minus_inv(lambda); },
          [&](const Yeoh& y) {
            const double i = i1_minus_3(lambda);
            return 2 * l2_minus_inv(lambda) * (y.C1 + 2 * y.C2 * i + 3 * y.C3 * i * i);
          },
          [&](const Ogden& o) {
            check_ogden(o);
            const double ln = std::log(lambda);
            double s = 0;
            for (int p = 0; p < 3; ++p) {
              // lambda^a - lambda^(-a/2), written to stay exact near lambda = 1
              s += o.mu[p] * (std::expm1(o.alpha[p] * ln) - std::expm1(-0.5 * o.alpha[p] * ln));
            }
            return s;
          },
          [&](const MooneyRivlin& m) {
            return m.C1 * 2 * l2_minus_inv(lambda) + m.C2 * 2 * (lambda - 1) * (lambda * lambda + lambda + 1) / (lambda * lambda);
          },
          [&](const Gent& g) { return g.Jlim * g.mu * l2_minus_inv(lambda) / gent_denominator(g, lambda); },
      },
      model);
}

/// Strain-energy density W_s(lambda); not defined for the Hookean law.
inline double strain_energy(const StaticModel& model, double lambda) {
  detail::check_stretch(lambda);
  using namespace detail;
  return std::visit(
      overloaded{
          [&](const Hookean&) -> double {
            throw UnsupportedModelError("strain energy is not defined for the Hookean model");
          },
          [&](const NeoHookean& n) { return n.C1 * i1_minus_3(lambda); },
          [&](const Yeoh& y) {
            const double i = i1_minus_3(lambda);
            return y.C1 * i + y.C2 * i * i + y.C3 * i * i * i;
          },
          [&](const Ogden& o) {
            check_ogden(o);
            const double ln = std::log(lambda);
            double w = 0;
            for (int p = 0; p < 3; ++p) {
              const double a = o.alpha[p];
              w += o.mu[p] / a * (2 * std::expm1(-0.5 * a * ln) + std::expm1(a * ln));
            }
            return w;
          },
          [&](const MooneyRivlin& m) { return m.C1 * i1_minus_3(lambda) + m.C2 * i2_minus_3(lambda); },
          [&](const Gent& g) {
            if (g.Jlim == 0) throw DomainError("Gent: Jlim must be non-zero");
            const double x = -i1_minus_3(lambda) / g.Jlim;
            if (!(1 + x > 0)) throw DomainError("Gent: logarithm argument is not positive");
            return -0.5 * g.mu * g.Jlim * std::log1p(x);
          },
      },
      model);
}

/// Analytic d(sigma)/d(lambda).
inline double tangent_modulus(const StaticModel& model, double lambda) {
  detail::check_stretch(lambda);
  using namespace detail;
  const double l = lambda;
  return std::visit(
      overloaded{
          [&](const Hookean& h) { return h.Y; },
          [&](const NeoHookean& n) { return 2 * n.C1 * (2 * l + 1 / (l * l)); },
          [&](const Yeoh& y) {
            const double g = 2 * l2_minus_inv(l);
            const double dg = 2 * (2 * l + 1 / (l * l));
            const double i = i1_minus_3(l);
            const double di = 2 * l - 2 / (l * l);
            const double h = y.C1 + 2 * y.C2 * i + 3 * y.C3 * i * i;
            const double dh = (2 * y.C2 + 6 * y.C3 * i) * di;
            return dg * h + g * dh;
          },
          [&](const Ogden& o) {
            check_ogden(o);
            double s = 0;
            for (int p = 0; p < 3; ++p) {
              const double a = o.alpha[p];
              s += o.mu[p] * (a * std::pow(l, a - 1) + 0.5 * a * std::pow(l, -0.5 * a - 1));
            }
            return s;
          },
          [&](const MooneyRivlin& m) { return m.C1 * (4 * l + 2 / (l * l)) + m.C2 * (2 + 4 / (l * l * l)); },
          [&](const Gent& g) {
            const double den = gent_denominator(g, l);
            const double q = l2_minus_inv(l);
            const double dq = 2 * l + 1 / (l * l);
            const double di = 2 * l - 2 / (l * l);
            return g.mu * g.Jlim * (dq * den + q * di) / (den * den);
          },
      },
      model);
}

/// Coefficient names in the order used by `parameters()` / `with_parameters()`.
inline std::vector<std::string> parameter_names(const StaticModel& m) {
  return std::visit(detail::overloaded{
                        [](const Hookean&) { return std::vector<std::string>{"Y"}; },
                        [](const NeoHookean&) { return std::vector<std::string>{"C1"}; },
                        [](const Yeoh&) { return std::vector<std::string>{"C1", "C2", "C3"}; },
                        [](const Ogden&) {
                          return std::vector<std::string>{"mu1", "mu2", "mu3", "alpha1", "alpha2", "alpha3"};
                        },
                        [](const MooneyRivlin&) { return std::vector<std::string>{"C1", "C2"}; },
                        [](const Gent&) { return std::vector<std::string>{"mu", "Jlim"}; },
                    },
                    m);
}

inline std::vector<double> parameters(const StaticModel& m) {
  return std::visit(detail::overloaded{
                        [](const Hookean& h) { return std::vector<double>{h.Y}; },
                        [](const NeoHookean& n) { return std::vector<double>{n.C1}; },
                        [](const Yeoh& y) { return std::vector<double>{y.C1, y.C2, y.C3}; },
                        [](const Ogden& o) {
                          return std::vector<double>{o.mu[0], o.mu[1], o.mu[2], o.alpha[0], o.alpha[1], o.alpha[2]};
                        },
                        [](const MooneyRivlin& r) { return std::vector<double>{r.C1, r.C2}; },
                        [](const Gent& g) { return std::vector<double>{g.mu, g.Jlim}; },
                    },
                    m);
}

/// Same variant as `like`, coefficients replaced by `p`.
inline StaticModel with_parameters(const StaticModel& like, std::span<const double> p) {
  if (p.size() != parameters(like).size()) throw ValidationError("static model: wrong parameter count");
  return std::visit(detail::overloaded{
                        [&](const Hookean&) -> StaticModel { return Hookean{p[0]}; },
                        [&](const NeoHookean&) -> StaticModel { return NeoHookean{p[0]}; },
                        [&](const Yeoh&) -> StaticModel { return Yeoh{p[0], p[1], p[2]}; },
                        [&](const Ogden&) -> StaticModel { return Ogden{{p[0], p[1], p[2]}, {p[3], p[4], p[5]}}; },
                        [&](const MooneyRivlin&) -> StaticModel { return MooneyRivlin{p[0], p[1]}; },
                        [&](const Gent& g) -> StaticModel { return Gent{p[0], p[1], g.pole_margin}; },
                    },
                    like);
}

/// Zero-coefficient instance of a model named as in `model_name`.
inline StaticModel make_static_model(std::string_view name) {
  if (name == "hookean") return Hookean{};
  if (name == "neo_hookean") return NeoHookean{};
  if (name == "yeoh") return Yeoh{};
  if (name == "ogden") return Ogden{};
  if (name == "mooney_rivlin") return MooneyRivlin{};
  if (name == "gent") return Gent{};
  throw ValidationError("unknown static model '" + std::string(name) + "'");
}

/// Coefficients identified from the compression test of the reference actuator.
namespace published {
inline StaticModel hookean() { return Hookean{-1.1947e6}; }
inline StaticModel neo_hookean() { return NeoHookean{-1.9622e5}; }
inline StaticModel yeoh() { return Yeoh{-2.0653e5, 1.4537e5, -4.6806e5}; }
inline StaticModel ogden() { return Ogden{{3.4940e3, -1.4088e5, 3.4940e3}, {153.0931, 5.9611, -76.5465}}; }
inline StaticModel mooney_rivlin() { return MooneyRivlin{-1.7321e5, -1.8720e4}; }
inline StaticModel gent() { return Gent{-3.9243e5, -6.2127e6}; }
inline std::vector<StaticModel> hyperelastic() { return {neo_hookean(), yeoh(), ogden(), mooney_rivlin(), gent()}; }
}  // namespace published

}  // namespace dea
