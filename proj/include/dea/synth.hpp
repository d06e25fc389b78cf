#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dea/core.hpp"
#include "dea/electromech.hpp"
#include "dea/fitting.hpp"
#include "dea/static_models.hpp"
#include "dea/sysid.hpp"
#include "dea/viscoelastic.hpp"

/// Synthetic experiments standing in for laboratory records.
namespace dea::synth {

/// Gaussian noise: `absolute` is a standard deviation in signal units,
/// `relative` a multiplicative standard deviation (0.005 = 0.5 %).
struct NoiseSpec {
  double absolute = 0;
  double relative = 0;
  void validate() const {
    if (!(absolute >= 0) || !(relative >= 0)) throw ValidationError("noise levels must be non-negative");
  }
};

inline void add_noise(std::vector<double>& v, const NoiseSpec& n, std::mt19937_64& rng) {
  n.validate();
  if (n.absolute == 0 && n.relative == 0) return;
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& x : v) {
    if (n.relative > 0) x *= 1 + n.relative * g(rng);
    if (n.absolute > 0) x += n.absolute * g(rng);
  }
}

inline std::size_t sample_count(double duration, double rate) {
  if (!(duration > 0) || !(rate > 0)) throw ValidationError("synth: duration and sample rate must be positive");
  return static_cast<std::size_t>(std::llround(duration * rate)) + 1;
}

// ---------------------------------------------------------------------------

struct CompressionConfig {
  double rate = 1e-5;       ///< plate speed [m/s]
  double depth = 0.20;      ///< maximum compression as a share of the stack height
  int cycles = 3;
  double sample_rate = 10;  ///< [Hz]
};

struct CompressionRecord {
  std::vector<double> t, position, force;
};

/// Triangular compression cycles starting at contact (position = stack height).
/// Force follows the engineering stress of `truth` (compression positive).
inline CompressionRecord compression(const StaticModel& truth, const ActuatorSpec& spec, const CompressionConfig& cfg,
                                     const NoiseSpec& noise, std::mt19937_64& rng) {
  spec.validate();
  if (!(cfg.depth > 0 && cfg.depth < 1) || cfg.cycles < 1 || !(cfg.rate > 0))
    throw ValidationError("synth compression: invalid protocol");
  const double L0 = spec.L_elast, half = cfg.depth * L0 / cfg.rate;
  const std::size_t n = sample_count(2 * half * cfg.cycles, cfg.sample_rate);
  CompressionRecord r;
  r.t.resize(n);
  r.position.resize(n);
  r.force.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / cfg.sample_rate;
    const double ph = std::fmod(t, 2 * half);
    const double x = L0 - cfg.rate * (ph <= half ? ph : 2 * half - ph);
    const double lam = x / L0;
    r.t[i] = t;
    r.position[i] = x;
    r.force[i] = lam >= 1 ? 0.0 : true_stress(truth, lam) * spec.A_c / lam;
  }
  add_noise(r.force, noise, rng);
  return r;
}

// ---------------------------------------------------------------------------

struct RelaxationConfig {
  double strain = 0.15;
  double duration = 300;     ///< [s]
  double sample_rate = 100;  ///< [Hz]
};

struct RelaxationRecord {
  std::vector<double> t, strain, stress;
};

/// Ideal strain step held constant: stress = Y eps + branch relaxation.
inline RelaxationRecord relaxation(const GMParams& truth, const RelaxationConfig& cfg, const NoiseSpec& noise,
                                   std::mt19937_64& rng) {
  truth.validate();
  if (!(cfg.strain > 0 && cfg.strain < 1)) throw ValidationError("synth relaxation: strain must lie in (0, 1)");
  const std::size_t n = sample_count(cfg.duration, cfg.sample_rate);
  RelaxationRecord r;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / cfg.sample_rate;
    r.t.push_back(t);
    r.strain.push_back(cfg.strain);
    r.stress.push_back(truth.Y * cfg.strain + gm_relaxation_closed(truth, cfg.strain, t));
  }
  add_noise(r.stress, noise, rng);
  return r;
}

// ---------------------------------------------------------------------------

/// Creep protocol: `pulses` preconditioning pulses of `pulse` seconds, each
/// followed by a `pause`, then a step held for `hold` seconds. Voltage switches
/// fall on sample instants and take effect at that sample.
struct CreepProtocol {
  double pulse = 30;
  double pause = 30;
  int pulses = 2;
  double hold = 600;
  double sample_rate = 1000;  ///< [Hz]
  double delay = 0.02;        ///< acquisition lag of the height signal [s]

  double hold_start() const { return pulses * (pulse + pause); }
  double duration() const { return hold_start() + hold; }

  void validate() const {
    if (pulses < 0 || !(pulse > 0) || !(pause > 0) || !(hold > 0) || !(sample_rate > 0) || !(delay >= 0))
      throw ValidationError("synth creep: invalid protocol");
  }

  /// Switch instants (on, off, on, off, ..., hold on).
  std::vector<double> switches() const {
    std::vector<double> s;
    for (int p = 0; p < pulses; ++p) {
      s.push_back(p * (pulse + pause));
      s.push_back(p * (pulse + pause) + pulse);
    }
    s.push_back(hold_start());
    return s;
  }
};

/// Creep record at one voltage level. GKV responses are built by exact
/// superposition of step responses; other models are integrated.
inline CreepRecord creep(const ActuatorSpec& spec, const ViscoModel& truth, double voltage, const CreepProtocol& proto,
                         const NoiseSpec& noise, std::mt19937_64& rng, const SimOptions& sim = {}) {
  spec.validate();
  proto.validate();
  validate(truth);
  if (!(voltage > 0)) throw ValidationError("synth creep: voltage must be positive");
  const std::size_t n = sample_count(proto.duration(), proto.sample_rate);
  const auto sw = proto.switches();
  // switch k sits on sample index idx[k]; levels alternate on/off and end on
  std::vector<long long> idx;
  for (double s : sw) idx.push_back(std::llround(s * proto.sample_rate));
  const auto lag = std::llround(proto.delay * proto.sample_rate);

  CreepRecord r;
  r.voltage = voltage;
  r.t.resize(n);
  r.v_target.resize(n);
  r.dz.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    r.t[i] = static_cast<double>(i) / proto.sample_rate;
    int on = 0;
    for (long long k : idx) on += static_cast<long long>(i) >= k ? 1 : 0;
    r.v_target[i] = on % 2 == 1 ? voltage : 0.0;
  }
  r.v_high = r.v_target;

  const double s_on = drive_pressure(spec, voltage);
  if (const auto* g = std::get_if<GKVParams>(&truth)) {
    for (std::size_t i = 0; i < n; ++i) {
      const long long m = static_cast<long long>(i) - lag;  // response sample seen at i
      double e = 0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (m < idx[k]) break;
        const double sign = k % 2 == 0 ? 1.0 : -1.0;
        e += sign * gkv_creep_closed(*g, s_on, static_cast<double>(m - idx[k]) / proto.sample_rate);
      }
      r.dz[i] = height_change(spec, e);
    }
  } else {
    // integrate from a rest lead-in; switches nudged just before their sample
    const double eps = 1e-7;
    std::vector<double> times{-1.0};
    for (std::size_t i = 0; i < n; ++i) {
      const long long m = static_cast<long long>(i) - lag;
      if (m >= 0) times.push_back(static_cast<double>(m) / proto.sample_rate);
    }
    std::vector<double> st, lv{0.0};
    for (std::size_t k = 0; k < sw.size(); ++k) {
      st.push_back(sw[k] - eps);
      lv.push_back(k % 2 == 0 ? voltage : 0.0);
    }
    const auto res = simulate_actuator(spec, truth, Drive::piecewise_constant(st, lv), times, sim);
    for (std::size_t i = 0, j = 1; i < n; ++i)
      if (static_cast<long long>(i) >= lag) r.dz[i] = res.dz[j++];
  }
  add_noise(r.dz, noise, rng);
  return r;
}

/// Creep record at one voltage level from a discrete realization driven by
/// the Hookean static height change. The record rate must divide 1/Ts.
inline CreepRecord creep_statespace(const ActuatorSpec& spec, double Y, const DiscreteStateSpace& ss, double voltage,
                                    const CreepProtocol& proto, const NoiseSpec& noise, std::mt19937_64& rng) {
  spec.validate();
  proto.validate();
  ss.validate();
  if (!(voltage > 0)) throw ValidationError("synth creep: voltage must be positive");
  const double ratio = 1.0 / (proto.sample_rate * ss.Ts);
  const auto stride = std::llround(ratio);
  if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-9 * ratio)
    throw ValidationError("synth creep: the sample period must be a whole multiple of the realization step");
  const std::size_t n = sample_count(proto.duration(), proto.sample_rate);
  const std::size_t nf = (n - 1) * static_cast<std::size_t>(stride) + 1;
  std::vector<long long> idx;
  for (double s : proto.switches()) idx.push_back(std::llround(s / ss.Ts));
  const auto lag = std::llround(proto.delay * proto.sample_rate);

  std::vector<double> tf(nf), vf(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    tf[i] = static_cast<double>(i) * ss.Ts;
    int on = 0;
    for (long long k : idx) on += static_cast<long long>(i) >= k ? 1 : 0;
    vf[i] = on % 2 == 1 ? voltage : 0.0;
  }
  const auto res = hybrid_static_dynamic(spec, Y, ss, TimeSeries(tf, vf));

  CreepRecord r;
  r.voltage = voltage;
  r.t.resize(n);
  r.v_target.resize(n);
  r.dz.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    r.t[i] = static_cast<double>(i) / proto.sample_rate;
    r.v_target[i] = vf[i * static_cast<std::size_t>(stride)];
    const long long m = static_cast<long long>(i) - lag;
    if (m >= 0) r.dz[i] = res.dz[static_cast<std::size_t>(m * stride)];
  }
  r.v_high = r.v_target;
  add_noise(r.dz, noise, rng);
  return r;
}

}  // namespace dea::synth
