#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dea/core.hpp"
#include "dea/csv.hpp"
#include "dea/electromech.hpp"
#include "dea/fitting.hpp"
#include "dea/json_io.hpp"
#include "dea/optimize.hpp"
#include "dea/pso.hpp"
#include "dea/static_models.hpp"
#include "dea/synth.hpp"
#include "dea/sysid.hpp"
#include "dea/viscoelastic.hpp"

/// Command implementations behind the `dea` executable. Every command reads
/// its inputs, writes its artifacts below `WorkspaceConfig::out` and returns
/// a JSON summary.
namespace dea::workflow {

namespace fs = std::filesystem;
using io::json;

struct WorkspaceConfig {
  ActuatorSpec actuator = ActuatorSpec::reference();  ///< compression, relaxation, validation
  ActuatorSpec creep_actuator = ActuatorSpec::creep();
  std::string model = "gkv";
  PreprocessConfig preprocess;
  PsoConfig pso;
  SimOptions sim;
  fs::path out = "out";
  std::uint64_t seed = 1;

  synth::NoiseSpec noise;
  synth::CompressionConfig compression;
  synth::RelaxationConfig relaxation;
  synth::CreepProtocol creep;
  std::vector<double> creep_voltages{100, 200, 300, 400, 500, 600, 700, 800, 900, 1000, 1100, 1200};

  double validation_rate = 1000;   ///< [Hz]
  double validation_periods = 2;   ///< signal length in periods of the drive frequency
  double validation_min_duration = 1;  ///< [s]

  double factor_lower = 0.6;
  double factor_upper = 1.4;
  double d0_lower = 1e-4;
  double d0_upper = 1e4;
};

namespace detail {

inline ActuatorSpec actuator_entry(const json& j, const fs::path& base_dir, ActuatorSpec base) {
  if (j.is_string()) {
    fs::path p = j.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!fs::exists(p)) throw ValidationError("config: actuator file not found: " + p.string());
    return io::actuator_from_json(io::read_file(p), base);
  }
  return io::actuator_from_json(j, base);
}

template <class T>
void maybe(const json& j, const char* key, T& field) {
  io::detail::maybe(j, key, field);
}

}  // namespace detail

/// Reads a workspace JSON. Actuator entries may be inline objects or paths
/// (relative to the config file) to an actuator JSON.
inline WorkspaceConfig load_config(const fs::path& path) {
  const auto j = io::read_file(path);
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  WorkspaceConfig c;
  const auto dir = path.parent_path();
  if (j.contains("actuator")) c.actuator = detail::actuator_entry(j.at("actuator"), dir, c.actuator);
  if (j.contains("creep_actuator")) c.creep_actuator = detail::actuator_entry(j.at("creep_actuator"), dir, c.creep_actuator);
  detail::maybe(j, "model", c.model);
  if (j.contains("preprocess")) io::apply(j.at("preprocess"), c.preprocess);
  if (j.contains("pso")) io::apply(j.at("pso"), c.pso);
  if (j.contains("simulation")) io::apply(j.at("simulation"), c.sim);
  if (j.contains("out")) c.out = j.at("out").get<std::string>();
  detail::maybe(j, "seed", c.seed);
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    if (s.contains("noise")) {
      detail::maybe(s.at("noise"), "absolute", c.noise.absolute);
      detail::maybe(s.at("noise"), "relative", c.noise.relative);
      c.noise.validate();
    }
    if (s.contains("compression")) {
      const auto& q = s.at("compression");
      detail::maybe(q, "rate", c.compression.rate);
      detail::maybe(q, "depth", c.compression.depth);
      detail::maybe(q, "cycles", c.compression.cycles);
      detail::maybe(q, "sample_rate", c.compression.sample_rate);
    }
    if (s.contains("relaxation")) {
      const auto& q = s.at("relaxation");
      detail::maybe(q, "strain", c.relaxation.strain);
      detail::maybe(q, "duration", c.relaxation.duration);
      detail::maybe(q, "sample_rate", c.relaxation.sample_rate);
    }
    if (s.contains("creep")) {
      const auto& q = s.at("creep");
      detail::maybe(q, "pulse", c.creep.pulse);
      detail::maybe(q, "pause", c.creep.pause);
      detail::maybe(q, "pulses", c.creep.pulses);
      detail::maybe(q, "hold", c.creep.hold);
      detail::maybe(q, "sample_rate", c.creep.sample_rate);
      detail::maybe(q, "delay", c.creep.delay);
      detail::maybe(q, "voltages", c.creep_voltages);
      c.creep.validate();
    }
  }
  if (j.contains("validation")) {
    const auto& q = j.at("validation");
    detail::maybe(q, "sample_rate", c.validation_rate);
    detail::maybe(q, "periods", c.validation_periods);
    detail::maybe(q, "min_duration", c.validation_min_duration);
  }
  if (j.contains("optimize")) {
    const auto& q = j.at("optimize");
    detail::maybe(q, "factor_lower", c.factor_lower);
    detail::maybe(q, "factor_upper", c.factor_upper);
    detail::maybe(q, "d0_lower", c.d0_lower);
    detail::maybe(q, "d0_upper", c.d0_upper);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Model artifacts

/// A dynamic model as written by the fit, identification and optimization
/// commands: fixed parameters, a voltage schedule, or both.
struct ModelArtifact {
  std::string model;  ///< gm, gkv, gkm or statespace
  std::optional<ActuatorSpec> actuator;
  ViscoModel like = GKVParams{};
  std::optional<ViscoModel> fixed;
  std::optional<DiscreteStateSpace> ss;
  std::optional<ParameterSchedule> schedule;
  double Y = 0;  ///< Hookean modulus of the static backbone (state space only)
  double Ts = 0.001;

  bool statespace() const { return model == "statespace"; }
  bool has_fixed() const { return statespace() ? ss.has_value() : fixed.has_value(); }
};

inline json to_json(const ModelArtifact& a) {
  json j = {{"model", a.model}};
  if (a.actuator) j["actuator"] = io::to_json(*a.actuator);
  if (a.statespace()) {
    j["Y"] = a.Y;
    j["Ts"] = a.Ts;
    if (a.ss) j["statespace"] = io::to_json(*a.ss);
    if (a.schedule) j["schedule"] = io::to_json(*a.schedule);
  } else {
    if (a.fixed) j["parameters"] = io::to_json(*a.fixed)["parameters"];
    if (a.schedule) j["schedule"] = io::to_json(*a.schedule, visco_parameter_names(a.like));
  }
  return j;
}

inline ModelArtifact artifact_from_json(const json& j) {
  if (!j.is_object() || !j.contains("model") || !j.at("model").is_string())
    throw ValidationError("model file: needs a 'model' tag");
  ModelArtifact a;
  a.model = j.at("model").get<std::string>();
  if (j.contains("actuator")) a.actuator = io::actuator_from_json(j.at("actuator"));
  if (j.contains("schedule")) a.schedule = io::schedule_from_json(j.at("schedule"));
  if (a.statespace()) {
    a.Y = io::detail::get_number(j, "Y");
    if (!(a.Y > 0)) throw ValidationError("model file: state-space backbone needs Y > 0");
    if (j.contains("Ts")) a.Ts = io::detail::get_number(j, "Ts");
    if (j.contains("statespace")) a.ss = io::statespace_from_json(j.at("statespace"));
    if (a.schedule && a.schedule->dimension() != 16)
      throw ValidationError("model file: state-space schedule entries must have 16 values");
  } else {
    a.like = make_visco_model(a.model);
    if (j.contains("parameters")) a.fixed = io::visco_model_from_json({{"model", a.model}, {"parameters", j.at("parameters")}});
    if (a.schedule && a.schedule->dimension() != to_vector(a.like).size())
      throw ValidationError("model file: schedule entries do not match the " + a.model + " parameter count");
  }
  if (!a.has_fixed() && !a.schedule) throw ValidationError("model file: neither fixed parameters nor a schedule");
  return a;
}

inline ModelArtifact load_artifact(const fs::path& p) { return artifact_from_json(io::read_file(p)); }

/// The schedule entry at breakpoint `voltage` as a fixed model.
inline ModelArtifact at_level(const ModelArtifact& a, double voltage) {
  if (!a.schedule) throw ValidationError("model file: no schedule to select a level from");
  const auto& bp = a.schedule->breakpoints();
  const auto it = std::find_if(bp.begin(), bp.end(), [&](double b) { return std::abs(b - voltage) <= 1e-9 * std::max(1.0, std::abs(b)); });
  if (it == bp.end()) throw ValidationError("model file: " + std::to_string(voltage) + " V is not a schedule breakpoint");
  const auto& e = a.schedule->entries()[static_cast<std::size_t>(it - bp.begin())];
  ModelArtifact f = a;
  f.schedule.reset();
  if (a.statespace()) f.ss = statespace_from_vector(e, a.Ts);
  else f.fixed = from_vector(a.like, e);
  return f;
}

/// Published parameter sets as artifacts (used as synthetic truth by default).
inline ModelArtifact published_artifact(const std::string& model, double Ts = 0.001) {
  ModelArtifact a;
  a.model = model;
  if (model == "gm") {
    a.like = published::gm();
    a.fixed = a.like;
    a.actuator = ActuatorSpec::reference();
  } else if (model == "gkm") {
    a.like = gkm_from_gm(published::gm());
    a.fixed = a.like;
    a.actuator = ActuatorSpec::reference();
  } else if (model == "gkv") {
    a.like = GKVParams{};
    a.schedule = published::gkv_schedule();
    a.actuator = ActuatorSpec::creep();
  } else if (model == "statespace") {
    a.Y = std::abs(std::get<Hookean>(published::hookean()).Y);
    a.Ts = Ts;
    a.schedule = published::statespace_schedule(Ts);
    a.actuator = ActuatorSpec::creep();
  } else {
    throw ValidationError("unknown dynamic model '" + model + "'");
  }
  return a;
}

// ---------------------------------------------------------------------------
// Simulation

/// Drive: either a generated signal or a recorded voltage series.
struct DriveInput {
  std::optional<SignalSpec> signal;
  std::optional<TimeSeries> series;
  double sample_rate = 1000;  ///< output rate for generated signals [Hz]
};

struct Simulation {
  std::vector<double> t, voltage, strain, dz;
  std::vector<std::string> warnings;
};

inline Simulation simulate_artifact(const ModelArtifact& a, bool scheduled, const ActuatorSpec& fallback,
                                    const DriveInput& in, SimOptions sim) {
  const ActuatorSpec spec = a.actuator.value_or(fallback);
  if (scheduled && !a.schedule) throw ValidationError("simulate: model file has no schedule");
  if (!scheduled && !a.has_fixed()) throw ValidationError("simulate: model file has no fixed parameter set");
  if (in.signal.has_value() == in.series.has_value()) throw ValidationError("simulate: need exactly one of signal or input series");
  Simulation out;
  if (a.statespace()) {
    TimeSeries v = in.signal ? generate_signal(*in.signal, 1.0 / a.Ts) : resample_uniform(*in.series, a.Ts, Resampling::hold);
    const auto res = scheduled ? hybrid_static_dynamic(spec, a.Y, *a.schedule, a.Ts, v)
                               : hybrid_static_dynamic(spec, a.Y, *a.ss, v);
    out.t = res.t;
    out.voltage = v.v();
    out.strain = res.strain;
    out.dz = res.dz;
    out.warnings = res.warnings;
    return out;
  }
  Drive drive = in.signal ? Drive::from_signal(*in.signal) : Drive::from_series(*in.series, 0.05, Drive::Jump::step);
  std::vector<double> times;
  if (in.signal) {
    times = generate_signal(*in.signal, in.sample_rate).t();
  } else {
    times = in.series->t();
  }
  sim.schedule.reset();
  ViscoModel model = a.like;
  if (scheduled) sim.schedule = *a.schedule;
  else model = *a.fixed;
  const auto res = simulate_actuator(spec, model, drive, times, sim);
  out.t = res.t;
  for (double t : out.t) out.voltage.push_back(drive(t));
  out.strain = res.strain;
  out.dz = res.dz;
  out.warnings = res.warnings;
  return out;
}

inline void write_simulation(const fs::path& p, const Simulation& s) {
  csv::write(p, csv::Table{{"t", "strain", "dz"}, {s.t, s.strain, s.dz}});
}

// ---------------------------------------------------------------------------
// Creep records on disk

inline std::string voltage_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline void write_creep(const fs::path& p, const CreepRecord& r) {
  csv::write(p, csv::Table{{"t", "v_target", "v_high", "dz"}, {r.t, r.v_target, r.v_high, r.dz}});
}

/// Voltage level taken as the largest commanded voltage in the record.
inline CreepRecord read_creep(const fs::path& p) {
  const auto tab = csv::read(p);
  CreepRecord r;
  r.t = tab.column("t");
  r.v_target = tab.column("v_target");
  r.v_high = tab.column("v_high");
  r.dz = tab.column("dz");
  r.voltage = *std::max_element(r.v_target.begin(), r.v_target.end());
  r.validate();
  return r;
}

/// All creep CSVs of a directory, ascending by voltage level.
inline std::vector<CreepRecord> read_creep_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("creep data: not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv" && e.path().filename().string().rfind("creep_", 0) == 0)
      files.push_back(e.path());
  if (files.empty()) throw ValidationError("creep data: no creep_*.csv files in " + dir.string());
  std::vector<CreepRecord> out;
  for (const auto& f : files) out.push_back(read_creep(f));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.voltage < b.voltage; });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].voltage == out[i - 1].voltage)
      throw ValidationError("creep data: two records at " + voltage_label(out[i].voltage) + " V");
  return out;
}

// ---------------------------------------------------------------------------
// Validation signal set

struct ValidationCase {
  Waveform waveform;
  double frequency;
  std::string label() const { return std::string(to_string(waveform)) + "_" + voltage_label(frequency) + "Hz"; }
};

inline std::vector<ValidationCase> validation_cases() {
  std::vector<ValidationCase> c;
  for (auto w : {Waveform::sine, Waveform::triangle, Waveform::rectangle})
    for (double f : {0.1, 1.0, 10.0}) c.push_back({w, f});
  return c;
}

inline SignalSpec validation_signal(const ValidationCase& c, const WorkspaceConfig& cfg) {
  SignalSpec s;
  s.waveform = c.waveform;
  s.frequency = c.frequency;
  s.offset = 650;
  s.amplitude = 400;
  s.duration = std::max(cfg.validation_periods / c.frequency, cfg.validation_min_duration);
  return s;
}

// ---------------------------------------------------------------------------
// Commands

/// Synthetic experiments. `truth` (optional) is a static model JSON for
/// compression, a GM JSON for relaxation and a model file otherwise.
inline json cmd_synth(const WorkspaceConfig& cfg, const std::string& kind, const std::optional<fs::path>& truth) {
  std::mt19937_64 rng(cfg.seed);
  json side = {{"kind", kind}, {"seed", cfg.seed}, {"noise", {{"absolute", cfg.noise.absolute}, {"relative", cfg.noise.relative}}}};
  json files = json::array();
  if (kind == "compression") {
    const StaticModel m = truth ? io::static_model_from_json(io::read_file(*truth)) : published::hookean();
    const auto r = synth::compression(m, cfg.actuator, cfg.compression, cfg.noise, rng);
    const auto p = cfg.out / "compression.csv";
    csv::write(p, csv::Table{{"t", "position", "force"}, {r.t, r.position, r.force}});
    files.push_back(p.string());
    side["truth"] = io::to_json(m);
    side["actuator"] = io::to_json(cfg.actuator);
  } else if (kind == "relaxation") {
    ViscoModel m = published::gm();
    if (truth) m = io::visco_model_from_json(io::read_file(*truth));
    if (!std::holds_alternative<GMParams>(m)) throw ValidationError("synth relaxation: truth must be a gm model");
    const auto r = synth::relaxation(std::get<GMParams>(m), cfg.relaxation, cfg.noise, rng);
    const auto p = cfg.out / "relaxation.csv";
    csv::write(p, csv::Table{{"t", "strain", "stress"}, {r.t, r.strain, r.stress}});
    files.push_back(p.string());
    side["truth"] = io::to_json(m);
  } else if (kind == "creep") {
    const ModelArtifact a = truth ? load_artifact(*truth) : published_artifact(cfg.model);
    const ActuatorSpec spec = a.actuator.value_or(cfg.creep_actuator);
    json levels = json::array();
    for (double v : cfg.creep_voltages) {
      CreepRecord r;
      json level_truth;
      if (a.statespace()) {
        const auto ss = a.ss ? *a.ss : statespace_from_vector(interpolate_schedule(*a.schedule, v), a.Ts);
        r = synth::creep_statespace(spec, a.Y, ss, v, cfg.creep, cfg.noise, rng);
        level_truth = io::to_json(ss);
      } else {
        ViscoModel m = a.fixed.value_or(a.like);
        if (!a.fixed) m = from_vector(a.like, interpolate_schedule(*a.schedule, v));
        r = synth::creep(spec, m, v, cfg.creep, cfg.noise, rng, cfg.sim);
        level_truth = io::to_json(m);
      }
      const auto p = cfg.out / ("creep_" + voltage_label(v) + "V.csv");
      write_creep(p, r);
      files.push_back(p.string());
      levels.push_back({{"voltage", v}, {"truth", level_truth}});
    }
    if (a.statespace()) side["Y"] = a.Y;
    side["levels"] = levels;
    side["actuator"] = io::to_json(spec);
    side["protocol"] = {{"pulse", cfg.creep.pulse},     {"pause", cfg.creep.pause},
                        {"pulses", cfg.creep.pulses},   {"hold", cfg.creep.hold},
                        {"sample_rate", cfg.creep.sample_rate}, {"delay", cfg.creep.delay}};
  } else if (kind == "validation") {
    ModelArtifact a = truth ? load_artifact(*truth) : published_artifact(cfg.model);
    if (!a.actuator) a.actuator = a.statespace() || a.model == "gkv" ? cfg.creep_actuator : cfg.actuator;
    const bool scheduled = !a.has_fixed();
    SimOptions fine = cfg.sim;
    fine.rtol = std::min(fine.rtol, 1e-8);
    fine.atol = std::min(fine.atol, 1e-14);
    for (const auto& c : validation_cases()) {
      DriveInput in;
      in.signal = validation_signal(c, cfg);
      in.sample_rate = cfg.validation_rate;
      auto s = simulate_artifact(a, scheduled, cfg.actuator, in, fine);
      synth::add_noise(s.dz, cfg.noise, rng);
      const auto p = cfg.out / ("validation_" + c.label() + ".csv");
      csv::write(p, csv::Table{{"t", "voltage", "dz"}, {s.t, s.voltage, s.dz}});
      files.push_back(p.string());
    }
    side["truth"] = to_json(a);
    side["mode"] = scheduled ? "scheduled" : "fixed";
  } else {
    throw ValidationError("synth: unknown kind '" + kind + "' (compression, relaxation, creep, validation)");
  }
  side["files"] = files;
  io::write_file(cfg.out / (kind + "_truth.json"), side);
  return side;
}

inline json cmd_fit_static(const WorkspaceConfig& cfg, const fs::path& data, const std::string& model, int cycle = 3) {
  const auto tab = csv::read(data);
  const TimeSeries pos(tab.column("t"), tab.column("position"));
  const TimeSeries force(tab.column("t"), tab.column("force"));
  StaticFitOptions opt;
  opt.cycle = cycle;
  opt.initial_fraction = cfg.preprocess.initial_fit_fraction;
  const auto r = fit_static(pos, force, cfg.actuator.A_c, make_static_model(model), opt);
  json j = io::to_json(r.model);
  j["report"] = io::to_json(r.report);
  j["initial_length"] = r.initial_length;
  j["area"] = cfg.actuator.A_c;
  io::write_file(cfg.out / "static_fit.json", j);
  return j;
}

/// Generalized Maxwell fit; with `as_gkm` the result is extended by the
/// parallel damper d0 (mean of the branch dampers).
inline json cmd_fit_relax(const WorkspaceConfig& cfg, const fs::path& data, std::optional<double> Y, bool as_gkm = false) {
  if (!Y) throw ValidationError("fit-relax: the elastic modulus Y is required");
  const auto tab = csv::read(data);
  const TimeSeries stress(tab.column("t"), tab.column("stress"));
  const TimeSeries strain(tab.column("t"), tab.column("strain"));
  const auto r = fit_relaxation(stress, strain, *Y);
  ModelArtifact a;
  a.model = as_gkm ? "gkm" : "gm";
  a.like = as_gkm ? ViscoModel(gkm_from_gm(r.params)) : ViscoModel(r.params);
  a.fixed = a.like;
  a.actuator = cfg.actuator;
  json j = to_json(a);
  j["report"] = io::to_json(r.report);
  io::write_file(cfg.out / (a.model + "_fit.json"), j);
  return j;
}

inline json cmd_fit_creep(const WorkspaceConfig& cfg, const fs::path& dir) {
  const auto records = read_creep_dir(dir);
  json levels = json::array();
  std::vector<double> bp;
  std::vector<std::vector<double>> entries;
  for (const auto& r : records) {
    const auto hold = preprocess_creep(r.height(), cfg.preprocess, r.voltage);
    std::vector<LoadStep> history;
    if (cfg.preprocess.creep_history) history = creep_load_history(r, cfg.preprocess.hold_start);
    const auto f = fit_creep_record(cfg.creep_actuator, hold, r.voltage, {}, history);
    levels.push_back({{"voltage", r.voltage},
                      {"smoothing_factor", cfg.preprocess.median_smoothing_factor.value_or(smoothing_factor_for_voltage(r.voltage))},
                      {"history_steps", history.size()},
                      {"parameters", io::to_json(ViscoModel(f.params))["parameters"]},
                      {"report", io::to_json(f.report)}});
    bp.push_back(r.voltage);
    entries.push_back(to_vector(f.params));
  }
  ModelArtifact a;
  a.model = "gkv";
  a.actuator = cfg.creep_actuator;
  if (bp.size() >= 2) a.schedule = ParameterSchedule(bp, entries);
  else a.fixed = from_vector(GKVParams{}, entries.front());
  json j = to_json(a);
  j["levels"] = levels;
  io::write_file(cfg.out / "gkv_fit.json", j);
  return j;
}

/// Per-level PZ3 identification on the Hookean static input channel, then
/// conversion and ZOH discretization at `Ts`.
inline json cmd_ident_ss(const WorkspaceConfig& cfg, const fs::path& dir, double Y, double Ts) {
  if (!(Y > 0)) throw ValidationError("ident-ss: Y must be positive");
  if (!(Ts > 0)) throw ValidationError("ident-ss: Ts must be positive");
  const auto records = read_creep_dir(dir);
  json levels = json::array();
  std::vector<double> bp;
  std::vector<std::vector<double>> entries;
  for (const auto& r : records) {
    const auto ds = align_creep_record(r, cfg.preprocess.downsample_factor, cfg.preprocess.delay_removal);
    std::vector<double> u;
    for (double v : ds.drive.v()) u.push_back(hookean_height_change(cfg.creep_actuator, Y, v));
    const auto fit = fit_pz3(TimeSeries(ds.drive.t(), u), ds.dz);
    const auto d = discretize_zoh(pz3_to_statespace(fit.model), Ts);
    levels.push_back({{"voltage", r.voltage},
                      {"pz3", io::to_json(fit.model)},
                      {"report", io::to_json(fit.report)},
                      {"statespace", io::to_json(d)},
                      {"spectral_radius", d.spectral_radius()}});
    bp.push_back(r.voltage);
    entries.push_back(to_vector(d));
  }
  ModelArtifact a;
  a.model = "statespace";
  a.actuator = cfg.creep_actuator;
  a.Y = Y;
  a.Ts = Ts;
  if (bp.size() >= 2) a.schedule = ParameterSchedule(bp, entries);
  else a.ss = statespace_from_vector(entries.front(), Ts);
  json j = to_json(a);
  j["levels"] = levels;
  io::write_file(cfg.out / "statespace.json", j);
  return j;
}

/// Two-stage optimization. The seed is the fixed parameter set of a model
/// file (a scheduled file contributes the entry of its lowest breakpoint).
inline json cmd_optimize(const WorkspaceConfig& cfg, const fs::path& seed_file, const fs::path& dir,
                         const std::function<void(int, double, int)>& progress = {}) {
  const auto sa = load_artifact(seed_file);
  if (sa.statespace()) throw ValidationError("optimize: the seed must be a viscoelastic model");
  const ViscoModel seed = sa.fixed ? *sa.fixed : from_vector(sa.like, sa.schedule->entries().front());
  const auto records = read_creep_dir(dir);
  std::vector<CreepDataset> data;
  for (const auto& r : records)
    data.push_back(align_creep_record(r, cfg.preprocess.downsample_factor, cfg.preprocess.delay_removal));

  ModelOptimizationConfig oc;
  oc.spec = sa.actuator.value_or(cfg.creep_actuator);
  oc.pso = cfg.pso;
  oc.pso.seed = cfg.seed;
  oc.pso.progress = progress;
  oc.sim = cfg.sim;
  oc.factor_lower = cfg.factor_lower;
  oc.factor_upper = cfg.factor_upper;
  oc.d0_lower = cfg.d0_lower;
  oc.d0_upper = cfg.d0_upper;

  const auto levels = optimize_model_per_voltage(seed, data, oc);
  ModelArtifact a;
  a.model = std::string(visco_model_name(seed));
  a.like = seed;
  a.actuator = oc.spec;
  json lv = json::array();
  for (const auto& l : levels)
    lv.push_back({{"voltage", l.voltage},
                  {"factors", io::numbers(l.factors)},
                  {"parameters", io::to_json(from_vector(seed, l.parameters))["parameters"]},
                  {"run", io::to_json(l.run)}});
  json j;
  if (levels.size() >= 2) {
    a.schedule = schedule_from(levels);
    const auto avg = average_and_reoptimize(seed, levels, data, oc);
    a.fixed = from_vector(seed, avg.parameters);
    j = to_json(a);
    j["averaged"] = {{"start_factors", io::numbers(avg.start_factors)},
                     {"start_objective", io::number(avg.start_objective)},
                     {"factors", io::numbers(avg.factors)},
                     {"objective", io::number(avg.objective)},
                     {"run", io::to_json(avg.run)}};
  } else {
    a.fixed = from_vector(seed, levels.front().parameters);
    j = to_json(a);
  }
  j["seed_parameters"] = io::to_json(seed)["parameters"];
  j["levels"] = lv;
  io::write_file(cfg.out / "optimized.json", j);
  return j;
}

/// With `level` the schedule entry at that breakpoint is simulated as a fixed model.
inline json cmd_simulate(const WorkspaceConfig& cfg, const fs::path& model_file, bool scheduled, const DriveInput& in,
                         const std::string& name = "simulation", std::optional<double> level = std::nullopt) {
  auto a = load_artifact(model_file);
  if (level) {
    if (scheduled) throw ValidationError("simulate: --level selects a fixed model and cannot be combined with --scheduled");
    a = at_level(a, *level);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = simulate_artifact(a, scheduled, cfg.actuator, in, cfg.sim);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto p = cfg.out / (name + ".csv");
  write_simulation(p, s);
  json j = {{"file", p.string()}, {"samples", s.t.size()}, {"wall_time_s", wall}, {"warnings", s.warnings},
            {"mode", scheduled ? "scheduled" : "fixed"}};
  if (level) j["level"] = *level;
  return j;
}

/// Simulates the nine validation signals in every mode the model file
/// supports. R^2 is computed against `reference_dir/validation_<case>.csv`
/// when given, otherwise against a fine-tolerance re-simulation of the same
/// model (a self-consistency check, not a validation against measurements).
inline json cmd_validate(const WorkspaceConfig& cfg, const fs::path& model_file,
                         const std::optional<fs::path>& reference_dir) {
  const auto a = load_artifact(model_file);
  std::vector<bool> modes;
  if (a.has_fixed()) modes.push_back(false);
  if (a.schedule) modes.push_back(true);
  SimOptions fine = cfg.sim;
  fine.rtol = 1e-10;
  fine.atol = 1e-16;
  json results = json::array();
  for (bool scheduled : modes) {
    for (const auto& c : validation_cases()) {
      json r = {{"signal", std::string(to_string(c.waveform))},
                {"frequency", c.frequency},
                {"mode", scheduled ? "scheduled" : "fixed"}};
      try {
        DriveInput in;
        in.signal = validation_signal(c, cfg);
        in.sample_rate = cfg.validation_rate;
        const auto t0 = std::chrono::steady_clock::now();
        const auto s = simulate_artifact(a, scheduled, cfg.actuator, in, cfg.sim);
        r["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::vector<double> ref;
        if (reference_dir) {
          const auto tab = csv::read(*reference_dir / ("validation_" + c.label() + ".csv"));
          const TimeSeries rs(tab.column("t"), tab.column("dz"));
          for (double t : s.t) ref.push_back(rs.at(t));
        } else {
          ref = simulate_artifact(a, scheduled, cfg.actuator, in, fine).dz;
        }
        r["r_squared"] = io::number(r_squared(ref, s.dz));
        r["mae"] = mean_abs_error(ref, s.dz);
        r["warnings"] = s.warnings;
        const auto p = cfg.out / ("validate_" + std::string(scheduled ? "scheduled_" : "fixed_") + c.label() + ".csv");
        csv::write(p, csv::Table{{"t", "voltage", "dz_model", "dz_reference"}, {s.t, s.voltage, s.dz, ref}});
        r["file"] = p.string();
        r["status"] = "ok";
      } catch (const NumericalError& e) {
        r["status"] = "failed";
        r["error"] = e.what();
      }
      results.push_back(r);
    }
  }
  json j = {{"model", a.model},
            {"reference", reference_dir ? "external reference traces from " + reference_dir->string()
                                        : std::string("self-consistency: fine-tolerance re-simulation of the same model")},
            {"results", results}};
  io::write_file(cfg.out / "validation_report.json", j);
  return j;
}

}  // namespace dea::workflow
