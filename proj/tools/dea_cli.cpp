#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "dea/workflow.hpp"

using namespace dea;
namespace wf = dea::workflow;

namespace {

template <class T>
std::optional<T> opt_if(const CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stacked dielectric elastomer actuator modelling toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  auto* config_opt = app.add_option("--config", config_path, "Workspace JSON")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (noise, swarm)");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic experiment records");
  std::string kind, truth, model;
  double noise_rel = 0, noise_abs = 0;
  synth->add_option("kind", kind, "compression | relaxation | creep | validation")->required();
  auto* truth_opt = synth->add_option("--truth", truth, "Ground-truth parameter file")->check(CLI::ExistingFile);
  auto* model_opt = synth->add_option("--model", model, "Published truth for creep and validation: gm | gkv | gkm | statespace");
  auto* nrel_opt = synth->add_option("--noise-rel", noise_rel, "Multiplicative Gaussian noise (standard deviation)");
  auto* nabs_opt = synth->add_option("--noise-abs", noise_abs, "Additive Gaussian noise (standard deviation)");

  // fit-static
  auto* fstatic = app.add_subcommand("fit-static", "Fit a static model to a compression record");
  std::string data;
  std::string static_model = "hookean";
  int cycle = 3;
  fstatic->add_option("--data", data, "Compression CSV (t,position,force)")->required();
  fstatic->add_option("--model", static_model, "hookean | neo_hookean | yeoh | ogden | mooney_rivlin | gent");
  fstatic->add_option("--cycle", cycle, "Loading cycle used for the fit (1-based)");

  // fit-relax
  auto* frelax = app.add_subcommand("fit-relax", "Fit generalized Maxwell branches to a relaxation record");
  double Y = 0;
  bool as_gkm = false;
  frelax->add_option("--data", data, "Relaxation CSV (t,strain,stress)")->required();
  auto* y_opt = frelax->add_option("--Y", Y, "Elastic modulus of the parallel spring [Pa]");
  frelax->add_flag("--gkm", as_gkm, "Emit the Kelvin-Maxwell extension with d0 = mean damper");

  // fit-creep
  auto* fcreep = app.add_subcommand("fit-creep", "Fit Kelvin-Voigt chains to creep records, one per voltage");
  std::string data_dir;
  fcreep->add_option("--data-dir", data_dir, "Directory with creep_*.csv")->required();

  // ident-ss
  auto* ident = app.add_subcommand("ident-ss", "Identify per-voltage discrete state-space models");
  double ss_Y = std::abs(std::get<Hookean>(published::hookean()).Y), Ts = 0.001;
  ident->add_option("--data-dir", data_dir, "Directory with creep_*.csv")->required();
  ident->add_option("--Y", ss_Y, "Hookean modulus of the static input channel [Pa]");
  ident->add_option("--Ts", Ts, "Discretization step [s]");

  // optimize
  auto* optim = app.add_subcommand("optimize", "Two-stage particle swarm optimization on creep records");
  std::string seed_model;
  bool quiet = false;
  optim->add_option("--seed-model", seed_model, "Model file providing the seed parameters")->required()->check(CLI::ExistingFile);
  optim->add_option("--data-dir", data_dir, "Directory with creep_*.csv")->required();
  optim->add_flag("--quiet", quiet, "Suppress progress lines");

  // simulate
  auto* simc = app.add_subcommand("simulate", "Simulate a model file for a signal or recorded voltage");
  std::string model_file, input, name = "simulation";
  bool scheduled = false;
  SignalSpec sig;
  std::string waveform = "sine";
  double rate = 1000;
  simc->add_option("--model-file", model_file, "Model file")->required()->check(CLI::ExistingFile);
  simc->add_flag("--scheduled", scheduled, "Use the voltage schedule instead of the fixed set");
  auto* input_opt = simc->add_option("--input", input, "Voltage CSV (t,value) or creep CSV (uses v_high)")->check(CLI::ExistingFile);
  simc->add_option("--signal", waveform, "sine | triangle | rectangle | step | constant");
  simc->add_option("--frequency", sig.frequency, "[Hz]");
  simc->add_option("--offset", sig.offset, "[V]");
  simc->add_option("--amplitude", sig.amplitude, "[V]");
  simc->add_option("--duration", sig.duration, "[s]");
  simc->add_option("--rate", rate, "Output sample rate [Hz]");
  simc->add_option("--name", name, "Output file stem");
  double level = 0;
  auto* level_opt = simc->add_option("--level", level, "Simulate the schedule entry at this breakpoint voltage as a fixed model");

  // validate
  auto* val = app.add_subcommand("validate", "Run the nine validation signals");
  std::string ref_dir;
  val->add_option("--model-file", model_file, "Model file")->required()->check(CLI::ExistingFile);
  auto* ref_opt = val->add_option("--reference-dir", ref_dir, "Directory with validation_<signal>_<f>Hz.csv")
                      ->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    wf::WorkspaceConfig cfg = config_opt->count() ? wf::load_config(config_path) : wf::WorkspaceConfig{};
    if (seed_opt->count()) cfg.seed = seed;
    if (out_opt->count()) cfg.out = out_dir;
    io::json result;

    if (synth->parsed()) {
      if (model_opt->count()) cfg.model = model;
      if (nrel_opt->count()) cfg.noise.relative = noise_rel;
      if (nabs_opt->count()) cfg.noise.absolute = noise_abs;
      result = wf::cmd_synth(cfg, kind, opt_if<std::filesystem::path>(truth_opt, truth));
    } else if (fstatic->parsed()) {
      result = wf::cmd_fit_static(cfg, data, static_model, cycle);
    } else if (frelax->parsed()) {
      result = wf::cmd_fit_relax(cfg, data, opt_if(y_opt, Y), as_gkm);
    } else if (fcreep->parsed()) {
      result = wf::cmd_fit_creep(cfg, data_dir);
    } else if (ident->parsed()) {
      result = wf::cmd_ident_ss(cfg, data_dir, ss_Y, Ts);
    } else if (optim->parsed()) {
      std::function<void(int, double, int)> progress;
      if (!quiet) {
        std::puts("iter,best_mae,stall_count");
        progress = [](int it, double best, int stall) { std::printf("%d,%.9g,%d\n", it, best, stall); };
      }
      result = wf::cmd_optimize(cfg, seed_model, data_dir, progress);
      std::fprintf(stderr, "wrote %s\n", (cfg.out / "optimized.json").string().c_str());
      return 0;
    } else if (simc->parsed()) {
      wf::DriveInput in;
      in.sample_rate = rate;
      if (input_opt->count()) {
        const auto tab = csv::read(input);
        in.series = TimeSeries(tab.column("t"), tab.has("v_high") ? tab.column("v_high") : tab.column("value"));
      } else {
        sig.waveform = waveform_from_string(waveform);
        in.signal = sig;
      }
      result = wf::cmd_simulate(cfg, model_file, scheduled, in, name, opt_if(level_opt, level));
    } else if (val->parsed()) {
      result = wf::cmd_validate(cfg, model_file, opt_if<std::filesystem::path>(ref_opt, ref_dir));
    }
    std::cout << result.dump(2) << '\n';
    return 0;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const io::json::exception& e) {
    std::fprintf(stderr, "error: malformed JSON input: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
