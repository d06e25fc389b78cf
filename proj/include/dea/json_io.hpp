#pragma once

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dea/core.hpp"
#include "dea/fitting.hpp"
#include "dea/nls.hpp"
#include "dea/pso.hpp"
#include "dea/static_models.hpp"
#include "dea/sysid.hpp"
#include "dea/viscoelastic.hpp"

/// JSON serialization of parameters, reports and configuration.
namespace dea::io {

using json = nlohmann::json;

inline json read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("json: cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("json: " + p.string() + ": " + e.what());
  }
}

inline void write_file(const std::filesystem::path& p, const json& j) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw ValidationError("json: cannot write " + p.string());
  out << j.dump(2) << '\n';
}

/// Finite numbers as-is, everything else as null.
inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json numbers(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

namespace detail {

inline double get_number(const json& j, const std::string& key) {
  if (!j.contains(key) || !j.at(key).is_number()) throw ValidationError("json: missing numeric field '" + key + "'");
  return j.at(key).get<double>();
}

inline std::vector<double> get_numbers(const json& j) {
  if (!j.is_array()) throw ValidationError("json: expected an array of numbers");
  std::vector<double> v;
  for (const auto& x : j) {
    if (!x.is_number()) throw ValidationError("json: expected an array of numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

inline json named(const std::vector<std::string>& names, const std::vector<double>& values) {
  json o = json::object();
  for (std::size_t i = 0; i < names.size(); ++i) o[names[i]] = number(values[i]);
  return o;
}

inline std::vector<double> by_name(const json& j, const std::vector<std::string>& names) {
  if (!j.is_object()) throw ValidationError("json: parameters must be an object");
  std::vector<double> v;
  for (const auto& n : names) v.push_back(get_number(j, n));
  return v;
}

template <class T>
void maybe(const json& j, const char* key, T& field) {
  if (j.contains(key)) {
    try {
      field = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(std::string("json: field '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Models

inline json to_json(const StaticModel& m) {
  return {{"model", std::string(model_name(m))}, {"parameters", detail::named(parameter_names(m), parameters(m))}};
}

inline StaticModel static_model_from_json(const json& j) {
  if (!j.contains("model") || !j.at("model").is_string()) throw ValidationError("json: static model needs a 'model' tag");
  const auto like = make_static_model(j.at("model").get<std::string>());
  if (!j.contains("parameters")) throw ValidationError("json: static model needs 'parameters'");
  return with_parameters(like, detail::by_name(j.at("parameters"), parameter_names(like)));
}

inline json to_json(const ViscoModel& m) {
  return {{"model", std::string(visco_model_name(m))}, {"parameters", detail::named(visco_parameter_names(m), to_vector(m))}};
}

inline ViscoModel visco_model_from_json(const json& j) {
  if (!j.contains("model") || !j.at("model").is_string()) throw ValidationError("json: viscoelastic model needs a 'model' tag");
  const auto like = make_visco_model(j.at("model").get<std::string>());
  if (!j.contains("parameters")) throw ValidationError("json: viscoelastic model needs 'parameters'");
  auto m = from_vector(like, detail::by_name(j.at("parameters"), visco_parameter_names(like)));
  validate(m);
  return m;
}

inline json to_json(const ProcessModelPZ3& p) {
  return {{"Kp", p.Kp}, {"Tz", p.Tz}, {"Tp1", p.Tp[0]}, {"Tp2", p.Tp[1]}, {"Tp3", p.Tp[2]}};
}

inline json to_json(const DiscreteStateSpace& s) {
  json A = json::array();
  for (Eigen::Index r = 0; r < s.A.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < s.A.cols(); ++c) row.push_back(s.A(r, c));
    A.push_back(row);
  }
  json B = json::array(), C = json::array();
  for (Eigen::Index i = 0; i < s.B.size(); ++i) B.push_back(s.B(i));
  for (Eigen::Index i = 0; i < s.C.size(); ++i) C.push_back(s.C(i));
  return {{"A", A}, {"B", B}, {"C", C}, {"D", s.D}, {"Ts", s.Ts}};
}

inline DiscreteStateSpace statespace_from_json(const json& j) {
  DiscreteStateSpace s;
  if (!j.contains("A") || !j.at("A").is_array()) throw ValidationError("json: state space needs 'A'");
  const auto& A = j.at("A");
  const auto n = static_cast<Eigen::Index>(A.size());
  s.A.resize(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = detail::get_numbers(A.at(static_cast<std::size_t>(r)));
    if (static_cast<Eigen::Index>(row.size()) != n) throw ValidationError("json: state space 'A' must be square");
    for (Eigen::Index c = 0; c < n; ++c) s.A(r, c) = row[static_cast<std::size_t>(c)];
  }
  const auto B = detail::get_numbers(j.value("B", json::array()));
  const auto C = detail::get_numbers(j.value("C", json::array()));
  s.B = Eigen::Map<const Vec>(B.data(), static_cast<Eigen::Index>(B.size()));
  s.C = Eigen::Map<const Eigen::RowVectorXd>(C.data(), static_cast<Eigen::Index>(C.size()));
  s.D = detail::get_number(j, "D");
  s.Ts = detail::get_number(j, "Ts");
  s.validate();
  return s;
}

inline json to_json(const ParameterSchedule& s, const std::vector<std::string>& names = {}) {
  json e = json::array();
  for (const auto& row : s.entries()) e.push_back(numbers(row));
  json o = {{"breakpoints", numbers(s.breakpoints())}, {"entries", e}};
  if (!names.empty()) o["names"] = names;
  return o;
}

inline ParameterSchedule schedule_from_json(const json& j) {
  if (!j.contains("breakpoints") || !j.contains("entries")) throw ValidationError("json: schedule needs breakpoints and entries");
  std::vector<std::vector<double>> e;
  for (const auto& row : j.at("entries")) e.push_back(detail::get_numbers(row));
  return {detail::get_numbers(j.at("breakpoints")), std::move(e)};
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const FitReport& r) {
  return {{"parameters", detail::named(r.names, r.parameters)},
          {"std_errors", r.std_errors.size() == r.names.size() ? detail::named(r.names, r.std_errors) : json(nullptr)},
          {"residual_norm", number(r.residual_norm)},
          {"r_squared", number(r.r_squared)},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"message", r.message}};
}

inline json to_json(const OptimizationRun& r) {
  return {{"best", numbers(r.best)},
          {"best_objective", number(r.best_objective)},
          {"best_penalized", r.best_penalized},
          {"history", numbers(r.history)},
          {"evaluations", r.evaluations},
          {"timed_out", r.timed_out},
          {"failed", r.failed},
          {"iterations", r.iterations},
          {"refined", r.refined},
          {"stop_reason", r.stop_reason}};
}

// ---------------------------------------------------------------------------
// Configuration

inline json to_json(const ActuatorSpec& s) {
  return {{"z0", s.z0}, {"L_elast", s.L_elast}, {"A_e", s.A_e}, {"A_c", s.A_c},
          {"m", s.m},   {"j", s.j},             {"eps_vac", s.eps_vac}, {"eps_r", s.eps_r}};
}

/// Fields present in `j` override `base`.
inline ActuatorSpec actuator_from_json(const json& j, ActuatorSpec base = {}) {
  detail::maybe(j, "z0", base.z0);
  detail::maybe(j, "L_elast", base.L_elast);
  detail::maybe(j, "A_e", base.A_e);
  detail::maybe(j, "A_c", base.A_c);
  detail::maybe(j, "m", base.m);
  detail::maybe(j, "j", base.j);
  detail::maybe(j, "eps_vac", base.eps_vac);
  detail::maybe(j, "eps_r", base.eps_r);
  base.validate();
  return base;
}

inline json to_json(const SignalSpec& s) {
  return {{"waveform", std::string(to_string(s.waveform))},
          {"frequency", s.frequency},
          {"offset", s.offset},
          {"amplitude", s.amplitude},
          {"duration", s.duration}};
}

inline SignalSpec signal_from_json(const json& j, SignalSpec base = {}) {
  if (j.contains("waveform")) base.waveform = waveform_from_string(j.at("waveform").get<std::string>());
  detail::maybe(j, "frequency", base.frequency);
  detail::maybe(j, "offset", base.offset);
  detail::maybe(j, "amplitude", base.amplitude);
  detail::maybe(j, "duration", base.duration);
  base.validate();
  return base;
}

inline void apply(const json& j, PreprocessConfig& c) {
  detail::maybe(j, "downsample_factor", c.downsample_factor);
  if (j.contains("median_smoothing_factor")) {
    if (j.at("median_smoothing_factor").is_null()) c.median_smoothing_factor.reset();
    else c.median_smoothing_factor = j.at("median_smoothing_factor").get<double>();
  }
  detail::maybe(j, "delay_removal", c.delay_removal);
  detail::maybe(j, "initial_fit_fraction", c.initial_fit_fraction);
  detail::maybe(j, "hold_start", c.hold_start);
  detail::maybe(j, "creep_history", c.creep_history);
  c.validate();
}

inline void apply(const json& j, PsoConfig& c) {
  detail::maybe(j, "swarm_size", c.swarm_size);
  detail::maybe(j, "max_iter", c.max_iter);
  detail::maybe(j, "ftol", c.ftol);
  detail::maybe(j, "stall_iter", c.stall_iter);
  detail::maybe(j, "inertia_start", c.inertia_start);
  detail::maybe(j, "inertia_end", c.inertia_end);
  detail::maybe(j, "c1", c.c1);
  detail::maybe(j, "c2", c.c2);
  detail::maybe(j, "eval_timeout", c.eval_timeout);
  detail::maybe(j, "penalty", c.penalty);
  detail::maybe(j, "local_refine", c.local_refine);
  detail::maybe(j, "refine_max_evals", c.refine_max_evals);
  detail::maybe(j, "threads", c.threads);
}

inline void apply(const json& j, SimOptions& o) {
  if (j.contains("mode")) o.mode = sim_mode_from_string(j.at("mode").get<std::string>());
  detail::maybe(j, "rtol", o.rtol);
  detail::maybe(j, "atol", o.atol);
  detail::maybe(j, "max_step", o.max_step);
  if (!(o.rtol > 0) || !(o.atol > 0) || !(o.max_step > 0)) throw ValidationError("simulation: tolerances must be positive");
}

}  // namespace dea::io
