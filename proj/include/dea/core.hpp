#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dea/errors.hpp"

namespace dea {

/// Geometry and electrical constants of a stacked actuator.
///
/// Units are SI throughout. `eps_vac` defaults to the value used for the
/// published parameter tables (3.8542e-12), not the CODATA constant; override
/// it explicitly when physical permittivity is wanted.
struct ActuatorSpec {
  double z0 = 25e-6;          ///< single membrane thickness [m]
  double L_elast = 0.010412;  ///< elastomer stack height [m]
  double A_e = 7.5107e-5;     ///< electrode area [m^2]
  double A_c = 1.1387e-4;     ///< total cross-section [m^2]
  double m = 3.4962e-6;       ///< moving mass [kg]
  int j = 399;                ///< layer count
  double eps_vac = 3.8542e-12;
  double eps_r = 2.8;

  void validate() const {
    if (!(z0 > 0) || !(L_elast > 0) || !(A_e > 0) || !(A_c > 0))
      throw ValidationError("actuator: geometric fields must be positive");
    if (A_e > A_c) throw ValidationError("actuator: electrode area exceeds cross-section");
    if (j < 1) throw ValidationError("actuator: layer count must be >= 1");
    if (!(m > 0)) throw ValidationError("actuator: mass must be positive");
    if (!(eps_vac > 0) || !(eps_r > 0)) throw ValidationError("actuator: permittivities must be positive");
  }

  /// Actuator used for compression, relaxation and validation runs.
  static ActuatorSpec reference() { return {}; }

  /// Second actuator used for creep identification and optimisation.
  static ActuatorSpec creep() {
    ActuatorSpec s;
    s.L_elast = 0.010261;
    s.A_e = 7.5602e-5;
    s.A_c = 1.450e-4;
    return s;
  }
};

/// Sampled signal with strictly increasing time stamps.
class TimeSeries {
 public:
  TimeSeries() = default;
  TimeSeries(std::vector<double> t, std::vector<double> v) : t_(std::move(t)), v_(std::move(v)) {
    if (t_.size() != v_.size()) throw ValidationError("time series: length mismatch");
    if (t_.size() < 2) throw ValidationError("time series: need at least two samples");
    for (std::size_t i = 1; i < t_.size(); ++i)
      if (!(t_[i] > t_[i - 1])) throw ValidationError("time series: time stamps must be strictly increasing");
  }

  std::size_t size() const noexcept { return t_.size(); }
  bool empty() const noexcept { return t_.empty(); }
  const std::vector<double>& t() const noexcept { return t_; }
  const std::vector<double>& v() const noexcept { return v_; }
  double t_front() const { return t_.front(); }
  double t_back() const { return t_.back(); }
  double span() const { return t_.back() - t_.front(); }

  /// Linear interpolation, clamped to the end values outside the sampled range.
  double at(double time) const {
    if (time <= t_.front()) return v_.front();
    if (time >= t_.back()) return v_.back();
    const auto it = std::upper_bound(t_.begin(), t_.end(), time);
    const auto i = static_cast<std::size_t>(it - t_.begin());
    const double w = (time - t_[i - 1]) / (t_[i] - t_[i - 1]);
    return v_[i - 1] + w * (v_[i] - v_[i - 1]);
  }

  /// Slope of the piecewise-linear interpolant (zero outside the range).
  double slope_at(double time) const {
    if (time < t_.front() || time > t_.back()) return 0.0;
    auto it = std::upper_bound(t_.begin(), t_.end(), time);
    if (it == t_.end()) --it;
    const auto i = std::max<std::size_t>(1, static_cast<std::size_t>(it - t_.begin()));
    return (v_[i] - v_[i - 1]) / (t_[i] - t_[i - 1]);
  }

  bool same_grid(const TimeSeries& other, double tol = 1e-12) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (std::abs(t_[i] - other.t_[i]) > tol * std::max(1.0, std::abs(t_[i]))) return false;
    return true;
  }

 private:
  std::vector<double> t_;
  std::vector<double> v_;
};

enum class Waveform { sine, triangle, rectangle, step, constant };

inline std::string_view to_string(Waveform w) {
  switch (w) {
    case Waveform::sine: return "sine";
    case Waveform::triangle: return "triangle";
    case Waveform::rectangle: return "rectangle";
    case Waveform::step: return "step";
    case Waveform::constant: return "constant";
  }
  return "?";
}

inline Waveform waveform_from_string(std::string_view s) {
  if (s == "sine") return Waveform::sine;
  if (s == "triangle") return Waveform::triangle;
  if (s == "rectangle") return Waveform::rectangle;
  if (s == "step") return Waveform::step;
  if (s == "constant") return Waveform::constant;
  throw ValidationError("unknown waveform '" + std::string(s) + "'");
}

/// Drive-voltage description.
///
/// Periodic waveforms start at phase 0: sine and triangle at the offset and
/// rising, rectangle in its high state. `step` holds `offset` at t <= 0 and
/// `offset + amplitude` afterwards; `constant` is `offset` everywhere.
struct SignalSpec {
  Waveform waveform = Waveform::sine;
  double frequency = 1.0;  ///< [Hz]
  double offset = 650.0;   ///< [V]
  double amplitude = 400.0;
  double duration = 1.0;   ///< [s]

  bool periodic() const {
    return waveform == Waveform::sine || waveform == Waveform::triangle || waveform == Waveform::rectangle;
  }

  void validate() const {
    if (!(amplitude >= 0)) throw ValidationError("signal: amplitude must be non-negative");
    if (!(duration > 0)) throw ValidationError("signal: duration must be positive");
    if (periodic() && !(frequency > 0)) throw ValidationError("signal: frequency must be positive");
    const double vmin = periodic() ? offset - amplitude : offset;
    if (vmin < 0) throw ValidationError("signal: drive voltage would become negative");
  }

  double value(double t) const {
    switch (waveform) {
      case Waveform::constant: return offset;
      case Waveform::step: return t > 0 ? offset + amplitude : offset;
      case Waveform::sine: return offset + amplitude * std::sin(2.0 * std::numbers::pi * frequency * t);
      case Waveform::triangle: {
        const double p = phase(t);
        double u;
        if (p < 0.25) u = 4.0 * p;
        else if (p < 0.75) u = 2.0 - 4.0 * p;
        else u = 4.0 * p - 4.0;
        return offset + amplitude * u;
      }
      case Waveform::rectangle: return phase(t) < 0.5 ? offset + amplitude : offset - amplitude;
    }
    return offset;
  }

  double derivative(double t) const {
    switch (waveform) {
      case Waveform::constant:
      case Waveform::step:
      case Waveform::rectangle: return 0.0;
      case Waveform::sine: {
        const double w = 2.0 * std::numbers::pi * frequency;
        return amplitude * w * std::cos(w * t);
      }
      case Waveform::triangle: {
        const double p = phase(t);
        const double s = 4.0 * amplitude * frequency;
        return (p >= 0.25 && p < 0.75) ? -s : s;
      }
    }
    return 0.0;
  }

  /// Times in (0, until] where the value (rectangle, step) or slope (triangle) jumps.
  std::vector<double> switching_times(double until) const {
    std::vector<double> out;
    if (waveform == Waveform::step) {
      out.push_back(0.0);
      return out;
    }
    if (waveform != Waveform::rectangle && waveform != Waveform::triangle) return out;
    const double period = 1.0 / frequency;
    for (long k = 0;; ++k) {
      const double base = static_cast<double>(k) * period;
      if (base > until) break;
      const double offs[2] = {waveform == Waveform::rectangle ? 0.5 : 0.25, waveform == Waveform::rectangle ? 1.0 : 0.75};
      for (double o : offs) {
        const double tk = base + o * period;
        if (tk > 0 && tk <= until) out.push_back(tk);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  double phase(double t) const {
    const double x = t * frequency;
    return x - std::floor(x);
  }
};

/// Sample a waveform at `sample_rate` over [0, duration].
inline TimeSeries generate_signal(const SignalSpec& spec, double sample_rate) {
  spec.validate();
  if (!(sample_rate > 0)) throw ValidationError("signal: sample rate must be positive");
  if (spec.periodic() && sample_rate < 20.0 * spec.frequency)
    throw ValidationError("signal: sample rate must be at least 20x the signal frequency");
  const auto n = static_cast<std::size_t>(std::floor(spec.duration * sample_rate + 1e-9)) + 1;
  if (n < 2) throw ValidationError("signal: duration shorter than one sample interval");
  std::vector<double> t(n), v(n);
  for (std::size_t k = 0; k < n; ++k) {
    t[k] = static_cast<double>(k) / sample_rate;
    v[k] = spec.value(t[k]);
  }
  return {std::move(t), std::move(v)};
}

/// Continuous-time input u(t) with known non-smooth points.
///
/// Integrators restart at every entry of `breaks()`, so jumps in value or
/// slope never fall inside a step.
class Drive {
 public:
  using Fn = std::function<double(double)>;

  Drive() : value_([](double) { return 0.0; }), slope_([](double) { return 0.0; }) {}
  Drive(Fn value, Fn slope, std::vector<double> breaks)
      : value_(std::move(value)), slope_(std::move(slope)), breaks_(std::move(breaks)) {
    std::sort(breaks_.begin(), breaks_.end());
  }

  static Drive constant(double level) {
    return {[level](double) { return level; }, [](double) { return 0.0; }, {}};
  }

  static Drive from_signal(const SignalSpec& spec) {
    spec.validate();
    return {[spec](double t) { return spec.value(t); }, [spec](double t) { return spec.derivative(t); },
            spec.switching_times(spec.duration)};
  }

  /// How a registered jump is reproduced between its two samples.
  enum class Jump {
    ramp,  ///< linear across the sample interval
    step,  ///< previous level held, switch just before the later sample
  };

  /// Linear interpolation of samples. Jumps larger than `jump_fraction` of the
  /// signal range within one sample interval are registered as breaks.
  static Drive from_series(const TimeSeries& ts, double jump_fraction = 0.05, Jump shape = Jump::ramp) {
    std::vector<double> br;
    std::vector<std::size_t> jumps;  // index of the later sample
    const auto [lo, hi] = std::minmax_element(ts.v().begin(), ts.v().end());
    const double range = *hi - *lo;
    if (range > 0) {
      for (std::size_t i = 1; i < ts.size(); ++i) {
        if (std::abs(ts.v()[i] - ts.v()[i - 1]) > jump_fraction * range) {
          jumps.push_back(i);
          if (shape == Jump::ramp) {
            br.push_back(ts.t()[i - 1]);
            br.push_back(ts.t()[i]);
          } else {
            br.push_back(step_time(ts, i));
          }
        }
      }
    }
    br.erase(std::unique(br.begin(), br.end()), br.end());
    if (shape == Jump::ramp || jumps.empty())
      return {[ts](double t) { return ts.at(t); }, [ts](double t) { return ts.slope_at(t); }, std::move(br)};
    // inside a jump interval the earlier level holds until the switch
    auto in_jump = [ts, jumps](double t) -> std::optional<std::size_t> {
      const auto& tt = ts.t();
      const auto k = static_cast<std::size_t>(std::upper_bound(tt.begin(), tt.end(), t) - tt.begin());
      if (k == 0 || k >= tt.size() || !std::binary_search(jumps.begin(), jumps.end(), k)) return std::nullopt;
      return k;
    };
    auto value = [ts, in_jump](double t) {
      if (const auto k = in_jump(t)) return t < step_time(ts, *k) ? ts.v()[*k - 1] : ts.v()[*k];
      return ts.at(t);
    };
    auto slope = [ts, in_jump](double t) { return in_jump(t) ? 0.0 : ts.slope_at(t); };
    return {std::move(value), std::move(slope), std::move(br)};
  }

  /// Piecewise-constant levels: `levels[i]` holds on (times[i-1], times[i]], `levels[0]` before times[0].
  static Drive piecewise_constant(std::vector<double> times, std::vector<double> levels) {
    if (levels.size() != times.size() + 1) throw ValidationError("piecewise drive: need one more level than switch time");
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) throw ValidationError("piecewise drive: switch times must increase");
    auto fn = [times, levels](double t) {
      const auto it = std::lower_bound(times.begin(), times.end(), t);
      return levels[static_cast<std::size_t>(it - times.begin())];
    };
    return {std::move(fn), [](double) { return 0.0; }, times};
  }

  double operator()(double t) const { return value_(t); }
  double slope(double t) const { return slope_(t); }
  const std::vector<double>& breaks() const noexcept { return breaks_; }

  /// Right limit minus left limit at t.
  double jump_at(double t) const {
    const double h = 1e-9 * std::max(1.0, std::abs(t));
    return value_(t + h) - value_(t - h);
  }

 private:
  /// Switch instant for a step between samples k-1 and k.
  static double step_time(const TimeSeries& ts, std::size_t k) {
    return ts.t()[k] - 1e-6 * (ts.t()[k] - ts.t()[k - 1]);
  }

  Fn value_;
  Fn slope_;
  std::vector<double> breaks_;
};

/// Voltage-indexed parameter vectors with linear interpolation between breakpoints.
class ParameterSchedule {
 public:
  ParameterSchedule() = default;
  ParameterSchedule(std::vector<double> breakpoints, std::vector<std::vector<double>> entries)
      : bp_(std::move(breakpoints)), entries_(std::move(entries)) {
    if (bp_.size() < 2) throw ValidationError("schedule: need at least two breakpoints");
    if (bp_.size() != entries_.size()) throw ValidationError("schedule: one entry per breakpoint required");
    for (std::size_t i = 1; i < bp_.size(); ++i)
      if (!(bp_[i] > bp_[i - 1])) throw ValidationError("schedule: breakpoints must be strictly increasing");
    for (const auto& e : entries_)
      if (e.size() != entries_.front().size()) throw ValidationError("schedule: entries differ in length");
  }

  const std::vector<double>& breakpoints() const noexcept { return bp_; }
  const std::vector<std::vector<double>>& entries() const noexcept { return entries_; }
  std::size_t dimension() const { return entries_.empty() ? 0 : entries_.front().size(); }
  bool covers(double v) const { return v >= bp_.front() && v <= bp_.back(); }

 private:
  std::vector<double> bp_;
  std::vector<std::vector<double>> entries_;
};

/// Piecewise-linear lookup; voltages outside the breakpoint range clamp to the end entries.
inline void interpolate_schedule(const ParameterSchedule& s, double voltage, std::span<double> out) {
  const auto& bp = s.breakpoints();
  const auto& e = s.entries();
  const std::size_t n = s.dimension();
  if (out.size() != n) throw ValidationError("schedule: output size mismatch");
  if (voltage <= bp.front()) {
    std::copy(e.front().begin(), e.front().end(), out.begin());
    return;
  }
  if (voltage >= bp.back()) {
    std::copy(e.back().begin(), e.back().end(), out.begin());
    return;
  }
  const auto i = static_cast<std::size_t>(std::upper_bound(bp.begin(), bp.end(), voltage) - bp.begin());
  const double w = (voltage - bp[i - 1]) / (bp[i] - bp[i - 1]);
  for (std::size_t k = 0; k < n; ++k) out[k] = e[i - 1][k] + w * (e[i][k] - e[i - 1][k]);
}

inline std::vector<double> interpolate_schedule(const ParameterSchedule& s, double voltage) {
  std::vector<double> out(s.dimension());
  interpolate_schedule(s, voltage, out);
  return out;
}

enum class Resampling { linear, hold };

/// Resampling onto t0, t0 + dt, ... <= tN. `hold` keeps the latest sample at
/// or before each instant, the input convention of zero-order-hold models.
inline TimeSeries resample_uniform(const TimeSeries& ts, double dt, Resampling how = Resampling::linear) {
  if (!(dt > 0)) throw ValidationError("resample: dt must be positive");
  const double span = ts.span();
  if (dt > span) throw ValidationError("resample: dt larger than the series span");
  const auto n = static_cast<std::size_t>(std::floor(span / dt + 1e-9)) + 1;
  std::vector<double> t(n), v(n);
  for (std::size_t k = 0; k < n; ++k) {
    t[k] = ts.t_front() + static_cast<double>(k) * dt;
    if (how == Resampling::linear) {
      v[k] = ts.at(t[k]);
    } else {
      const auto& tt = ts.t();
      const auto it = std::upper_bound(tt.begin(), tt.end(), t[k] + 1e-9 * dt);
      v[k] = ts.v()[static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - tt.begin() - 1, 0))];
    }
  }
  return {std::move(t), std::move(v)};
}

}  // namespace dea
