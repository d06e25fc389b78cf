/// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <json.hpp>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "dea/core.hpp"
#include "dea/csv.hpp"
#include "dea/fitting.hpp"
#include "dea/optimize.hpp"
#include "dea/pso.hpp"
#include "dea/static_models.hpp"
#include "dea/synth.hpp"
#include "dea/sysid.hpp"
#include "dea/viscoelastic.hpp"

using namespace dea;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> grid(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// ---------------------------------------------------------------------------
// 1. Hyperelastic consistency

Outcome hyperelastic_consistency() {
  double worst = 0;
  for (const auto& m : published::hyperelastic()) {
    for (double l : grid(0.80, 0.999, 50)) {
      // fourth-order central difference of the strain energy, independent of the
      // library's derivative; the Ogden exponents (153, -76.5) need the higher order
      const double h = 1e-4 * l;
      auto W = [&](double x) { return strain_energy(m, x); };
      const double dW = (-W(l + 2 * h) + 8 * W(l + h) - 8 * W(l - h) + W(l - 2 * h)) / (12 * h);
      const double s = true_stress(m, l);
      worst = std::max(worst, std::abs(s - l * dW) / std::abs(s));
    }
  }
  return {worst < 1e-6, fmt("5 models x 50 stretches, max relative mismatch %.3g (limit 1e-6)", worst)};
}

// ---------------------------------------------------------------------------
// 2. GM closed form vs ODE

Outcome gm_closed_vs_ode() {
  const auto p = published::gm();
  OdeOptions o;
  o.rtol = 1e-9;
  o.atol = 1e-6;
  const auto ts = grid(0, 300, 3001);
  const auto r = simulate_strain_controlled(p, Drive::piecewise_constant({0.0}, {0.0, 0.15}), ts, o);
  double worst = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double branch = r.states[i][0] + r.states[i][1] + r.states[i][2];
    double ref = 0;
    for (int b = 0; b < 3; ++b) ref += 0.15 * p.k[b] * std::exp(-ts[i] * p.k[b] / p.d[b]);
    worst = std::max(worst, rel(branch, ref));
  }
  return {worst < 1e-4, fmt("15 %% step, 3001 samples on [0, 300] s, max relative error %.3g (limit 1e-4)", worst)};
}

// ---------------------------------------------------------------------------
// 3. GKV internal-variable form vs third-order ODE

Outcome gkv_form_equivalence() {
  // time constants d_i/k_i = 10, 1, 0.1 s
  const GKVParams p{5e6, {8e6, 2e7, 4e6}, {0.1, 1.0, 10.0}};
  const double sigma = 3e4;
  OdeOptions o;
  o.rtol = 1e-11;
  o.atol = 1e-18;
  const auto ts = grid(0, 60, 601);
  OdeSystem sys;
  sys.rhs = [&](double, const Vec& y, Vec& dy) {
    // strain-side internal variables with the total stress held at sigma
    dy.resize(3);
    for (int i = 0; i < 3; ++i) dy[i] = (sigma - p.k[i] * y[i]) / p.d(i);
  };
  const auto tr = integrate_adaptive(sys, Vec::Zero(3), 0.0, 60.0, {}, ts, o);
  const auto third = gkv_third_order_creep(p, sigma, ts, o);
  double worst = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double e = sigma / p.k0 + tr.y[i].sum();
    worst = std::max(worst, rel(third[i], e));
  }
  return {worst < 1e-6, fmt("601 samples on [0, 60] s, max relative difference %.3g (limit 1e-6)", worst)};
}

// ---------------------------------------------------------------------------
// 4. Identification round trips

Outcome round_trips() {
  std::ostringstream os;
  bool ok = true;

  // relaxation
  const auto gm = published::gm();
  const auto t = grid(0, 300, 30001);
  std::vector<double> s;
  for (double x : t) {
    double v = gm.Y * 0.15;
    for (int b = 0; b < 3; ++b) v += 0.15 * gm.k[b] * std::exp(-x * gm.k[b] / gm.d[b]);
    s.push_back(v);
  }
  const auto rf = fit_relaxation(TimeSeries(t, s), 0.15, gm.Y);
  auto sorted_pairs = [](const GMParams& g) {
    std::vector<std::pair<double, double>> v;  // (tau, k)
    for (int b = 0; b < 3; ++b) v.push_back({g.d[b] / g.k[b], g.k[b]});
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto tr = sorted_pairs(gm), fr = sorted_pairs(rf.params);
  double relax_err = 0;
  for (int b = 0; b < 3; ++b) relax_err = std::max({relax_err, rel(fr[b].first, tr[b].first), rel(fr[b].second, tr[b].second)});
  ok &= relax_err < 5e-3;
  os << fmt("relaxation %.3g (limit 5e-3)", relax_err);

  // creep at 600 V
  const auto gkv = published::gkv_table()[5].second;
  const double sigma = drive_pressure(ActuatorSpec::creep(), 600);
  const auto tc = grid(0, 600, 60001);
  std::vector<double> e;
  for (double x : tc) {
    double v = sigma / gkv.k0;
    for (int b = 0; b < 3; ++b) v += sigma / gkv.k[b] * (1 - std::exp(-gkv.alpha[b] * x));
    e.push_back(v);
  }
  const auto cf = fit_creep(TimeSeries(tc, e), sigma);
  auto sorted_gkv = [](const GKVParams& g) {
    std::vector<std::pair<double, double>> v;  // (alpha, k)
    for (int b = 0; b < 3; ++b) v.push_back({g.alpha[b], g.k[b]});
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto ct = sorted_gkv(gkv), cfit = sorted_gkv(cf.params);
  double creep_err = rel(cf.params.k0, gkv.k0);
  for (int b = 0; b < 3; ++b) creep_err = std::max({creep_err, rel(cfit[b].first, ct[b].first), rel(cfit[b].second, ct[b].second)});
  ok &= creep_err < 1e-2;
  os << fmt(", creep 600 V %.3g (limit 1e-2)", creep_err);

  // PZ3 on a staircase input
  const ProcessModelPZ3 truth{2.0, 0.1, {1.0, 0.2, 0.05}};
  std::vector<double> tu, u;
  for (int i = 0; i < 1601; ++i) {
    tu.push_back(0.005 * i);
    const double x = 0.005 * i;
    u.push_back(x < 0.5 ? 0.0 : x < 3 ? 1.0 : x < 5 ? -0.5 : 0.8);
  }
  const TimeSeries ut(tu, u);
  const auto pf = fit_pz3(ut, simulate_pz3(truth, ut));
  double pz_err = std::max({rel(pf.model.Kp, truth.Kp), rel(pf.model.Tz, truth.Tz), rel(pf.model.Tp[0], 1.0),
                            rel(pf.model.Tp[1], 0.2), rel(pf.model.Tp[2], 0.05)});
  ok &= pz_err < 5e-3;
  os << fmt(", PZ3 %.3g (limit 5e-3); max relative parameter errors", pz_err);
  return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 5. Noise robustness

Outcome noise_robustness() {
  const auto gm = published::gm();
  int passed = 0;
  double worst = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const auto r = synth::relaxation(gm, {}, synth::NoiseSpec{0, 0.005}, rng);
    const auto f = fit_relaxation(TimeSeries(r.t, r.stress), TimeSeries(r.t, r.strain), gm.Y);
    std::vector<std::pair<double, double>> a, b;  // (tau, k)
    for (int i = 0; i < 3; ++i) {
      a.push_back({gm.d[i] / gm.k[i], gm.k[i]});
      b.push_back({f.params.d[i] / f.params.k[i], f.params.k[i]});
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double err = 0;
    for (int i = 0; i < 3; ++i) err = std::max(err, rel(b[i].second, a[i].second));
    worst = std::max(worst, err);
    passed += err < 0.05 ? 1 : 0;
  }
  return {passed >= 18, fmt("0.5 %% multiplicative noise, %d/20 seeds with all k_i within 5 %% (need 18), worst %.3g", passed, worst)};
}

// ---------------------------------------------------------------------------
// 6. ZOH DC gain

/// Continuous counterpart of a ZOH realization from the matrix logarithm of [[A, B], [0, 1]].
ContinuousStateSpace d2c(const DiscreteStateSpace& d) {
  const auto n = d.A.rows();
  Mat M = Mat::Zero(n + 1, n + 1);
  M.topLeftCorner(n, n) = d.A;
  M.topRightCorner(n, 1) = d.B;
  M(n, n) = 1;
  const Mat L = M.log() / d.Ts;
  ContinuousStateSpace c;
  c.A = L.topLeftCorner(n, n);
  c.B = L.topRightCorner(n, 1);
  c.C = d.C;
  c.D = d.D;
  return c;
}

Outcome zoh_dc_gain() {
  double worst_table = 0, worst_random = 0;
  for (auto [v, d] : published::statespace_table()) {
    // the 300 V entry rounds its slow pole to exactly 1, an integrator with no
    // finite DC gain; use the neighbouring levels' 0.9999
    if (d.A(0, 0) >= 1) d.A(0, 0) = 0.9999;
    const auto c = d2c(d);
    const auto z = discretize_zoh(c, d.Ts);
    worst_table = std::max(worst_table, rel(z.dc_gain(), c.dc_gain()));
  }
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> lt(-3, 1), kp(-5, 5), tz(-0.5, 0.5), entry(-1, 1);
  for (int trial = 0; trial < 100; ++trial) {
    // random stable system: random poles, random basis, random B and C
    Mat V(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) V(i, j) = entry(rng) + (i == j ? 2.0 : 0.0);
    Mat P = Mat::Zero(3, 3);
    for (int i = 0; i < 3; ++i) P(i, i) = -1.0 / std::pow(10, lt(rng));
    ContinuousStateSpace c;
    c.A = V * P * V.inverse();
    c.B = Vec(3);
    c.C.resize(3);
    for (int i = 0; i < 3; ++i) c.B[i] = entry(rng), c.C[i] = entry(rng);
    c.D = 0;
    const auto z = discretize_zoh(c, 0.001);
    worst_random = std::max(worst_random, rel(z.dc_gain(), c.dc_gain()));
  }
  const double worst = std::max(worst_table, worst_random);
  return {worst < 1e-9, fmt("12 table-scale realizations %.3g, 100 random stable systems %.3g (limit 1e-9)", worst_table, worst_random)};
}

// ---------------------------------------------------------------------------
// 7. Discrete first step

Outcome discrete_first_step() {
  const auto ss = published::statespace_table()[0].second;
  std::vector<double> t, u;
  for (int i = 0; i < 5; ++i) t.push_back(0.001 * i), u.push_back(1.0);
  const auto y = simulate_discrete(ss, TimeSeries(t, u));
  // C B by hand from the 100 V entries: 5.0425 * 3.4098e-7 + 56.8986 * 0.0010 + 0 * 0.2327.
  // 5.69003e-2 is this value at six significant digits, so the 1e-12 check is
  // made against the unrounded product
  const double cb = 5.0425 * 3.4098e-7 + 56.8986 * 0.0010;
  const double err = std::abs(y.v()[1] - cb);
  const bool rounds = fmt("%.5e", y.v()[1]) == "5.69003e-02";
  return {err < 1e-12 && rounds && y.v()[0] == 0.0,
          fmt("y[1] = %.12g, |y[1] - C B| = %.3g (limit 1e-12), six-digit value %s", y.v()[1], err, fmt("%.5e", y.v()[1]).c_str())};
}

// ---------------------------------------------------------------------------
// 8. PSO

Outcome pso_checks() {
  PsoConfig cfg;
  cfg.lower.assign(6, -5);
  cfg.upper.assign(6, 5);
  cfg.max_iter = 2000;
  cfg.seed = 42;
  const auto run = pso_minimize(
      [](std::span<const double> x, const EvalContext&) {
        double s = 0;
        for (double v : x) s += v * v;
        return s;
      },
      cfg);
  bool monotone = true;
  for (std::size_t i = 1; i < run.history.size(); ++i) monotone &= run.history[i] <= run.history[i - 1];
  bool in_bounds = true;
  for (double v : run.best) in_bounds &= v >= -5 && v <= 5;

  // the raw objective is smallest where evaluations fail
  PsoConfig c2;
  c2.lower = {-2};
  c2.upper = {2};
  c2.max_iter = 200;
  c2.seed = 7;
  const auto fenced = pso_minimize(
      [](std::span<const double> x, const EvalContext&) {
        if (std::abs(x[0]) < 0.5) throw NumericalError("evaluation failed");
        return x[0] * x[0];
      },
      c2);
  const bool feasible_wins = !fenced.best_penalized && std::abs(fenced.best[0]) >= 0.5 && fenced.failed > 0;

  // optimum on the bound: exact bound satisfaction
  PsoConfig c3;
  c3.lower.assign(3, 1);
  c3.upper.assign(3, 4);
  c3.max_iter = 300;
  c3.seed = 3;
  const auto edge = pso_minimize(
      [](std::span<const double> x, const EvalContext&) {
        double s = 0;
        for (double v : x) s += v * v;
        return s;
      },
      c3);
  bool edge_exact = true;
  for (double v : edge.best) edge_exact &= v >= 1.0 && v <= 4.0;

  const bool ok = run.best_objective < 1e-4 && run.iterations <= 2000 && monotone && in_bounds && !run.best_penalized &&
                  feasible_wins && edge_exact;
  return {ok, fmt("sphere best %.3g in %d iterations (limit 1e-4), history monotone %s, bounds %s, failed region "
                  "avoided %s (%zu failed evaluations)",
                  run.best_objective, run.iterations, monotone ? "yes" : "no", in_bounds && edge_exact ? "exact" : "violated",
                  feasible_wins ? "yes" : "no", fenced.failed)};
}

// ---------------------------------------------------------------------------
// 9. Two-stage optimization round trip

Outcome two_stage_round_trip() {
  const auto spec = ActuatorSpec::creep();
  const GKVParams seed{6e6, {1e7, 2e7, 8e6}, {5.0, 0.3, 0.02}};
  auto tv = to_vector(seed);
  for (double& v : tv) v *= 1.2;
  const auto truth = from_vector(seed, tv);
  synth::CreepProtocol proto;
  proto.sample_rate = 20;
  std::vector<CreepDataset> data;
  std::mt19937_64 rng(1);
  for (double v : {300.0, 600.0, 900.0})
    data.push_back(align_creep_record(synth::creep(spec, truth, v, proto, {}, rng), 1, proto.delay));

  ModelOptimizationConfig cfg;
  cfg.spec = spec;
  // the mean absolute error is of order 1e-10 m near the optimum, far below the
  // absolute floor of the stall test, so the runs are bounded by iterations only
  cfg.pso.swarm_size = 60;
  cfg.pso.max_iter = 200;
  cfg.pso.stall_iter = 200;
  cfg.pso.ftol = 0;
  cfg.pso.refine_max_evals = 2000;
  cfg.pso.seed = 5;
  cfg.pso.threads = std::max(1u, std::thread::hardware_concurrency());
  const auto levels = optimize_model_per_voltage(seed, data, cfg);
  const auto avg = average_and_reoptimize(seed, levels, data, cfg);
  double worst = 0;
  std::ostringstream fs_;
  for (std::size_t i = 0; i < avg.factors.size(); ++i) {
    worst = std::max(worst, rel(avg.factors[i], 1.2));
    fs_ << (i ? " " : "") << fmt("%.4f", avg.factors[i]);
  }
  return {worst < 0.03, fmt("3 levels at 20 Hz, factors [%s], max deviation from 1.2 %.3g (limit 0.03), mean MAE %.3g m",
                            fs_.str().c_str(), worst, avg.objective)};
}

// ---------------------------------------------------------------------------
// 10. End-to-end loop through the CLI

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& tag) {
    dir = fs::temp_directory_path() / ("dea_acceptance_" + std::to_string(::getpid()) + "_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  void config(const json& j) const { std::ofstream(dir / "cfg.json") << j.dump(); }
  /// Runs the CLI with the workspace config; returns stdout parsed as JSON.
  json run(const std::string& args, const fs::path& out_dir = {}) const {
    const auto out = dir / "stdout.json";
    const std::string cmd = std::string("\"") + DEA_CLI_PATH + "\" --config \"" + (dir / "cfg.json").string() + "\" --out \"" +
                            (out_dir.empty() ? dir : out_dir).string() + "\" " + args + " > \"" + out.string() + "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
    if (std::system(cmd.c_str()) != 0) {
      std::ifstream err(dir / "stderr.txt");
      std::stringstream ss;
      ss << err.rdbuf();
      throw std::runtime_error("cli failed: " + args + ": " + ss.str());
    }
    std::ifstream in(out);
    return json::parse(in);
  }
};

double min_validation_r2(const json& report, const std::string& mode) {
  double m = 1;
  for (const auto& r : report.at("results")) {
    if (r.at("mode") != mode) continue;
    if (r.at("status") != "ok" || r.at("r_squared").is_null()) return -1;
    m = std::min(m, r.at("r_squared").get<double>());
  }
  return m;
}

Outcome end_to_end() {
  std::ostringstream os;
  bool ok = true;
  const double Y = 1.1947e6;

  {  // GM and GKM from one relaxation record
    Workspace w("relax");
    w.config(json::object());
    w.run("synth relaxation");
    w.run("fit-relax --data \"" + (w.dir / "relaxation.csv").string() + "\" --Y " + std::to_string(Y));
    w.run("fit-relax --data \"" + (w.dir / "relaxation.csv").string() + "\" --Y " + std::to_string(Y) + " --gkm");
    for (const std::string m : {"gm", "gkm"}) {
      const auto ref = w.dir / ("ref_" + m);
      w.run("synth validation --model " + m, ref);
      const auto rep = w.run("validate --model-file \"" + (w.dir / (m + "_fit.json")).string() + "\" --reference-dir \"" +
                             ref.string() + "\"");
      const double r2 = min_validation_r2(rep, "fixed");
      ok &= r2 > 0.999;
      os << fmt("%s %.9f, ", m.c_str(), r2);
    }
  }

  const json creep_cfg = {{"synth", {{"creep", {{"sample_rate", 100}}}}}, {"preprocess", {{"downsample_factor", 1}}}};
  {  // GKV: per-level creep fits, scheduled
    Workspace w("gkv");
    w.config(creep_cfg);
    w.run("synth creep --model gkv");
    w.run("fit-creep --data-dir \"" + w.dir.string() + "\"");
    const auto ref = w.dir / "ref";
    w.run("synth validation --model gkv", ref);
    const auto rep = w.run("validate --model-file \"" + (w.dir / "gkv_fit.json").string() + "\" --reference-dir \"" + ref.string() + "\"");
    const double r2 = min_validation_r2(rep, "scheduled");
    ok &= r2 > 0.999;
    os << fmt("gkv %.9f, ", r2);
  }

  {  // state space: per-level identification, each level simulated on its own record
    Workspace w("ss");
    json cfg = creep_cfg;
    cfg["synth"]["creep"]["voltages"] = {100, 300, 600, 1200};
    w.config(cfg);
    w.run("synth creep --model statespace");
    w.run("ident-ss --data-dir \"" + w.dir.string() + "\"");
    double worst = 1;
    for (int v : {100, 300, 600, 1200}) {
      const auto rec = (w.dir / ("creep_" + std::to_string(v) + "V.csv")).string();
      w.run("simulate --model-file \"" + (w.dir / "statespace.json").string() + "\" --level " + std::to_string(v) + " --input \"" +
            rec + "\" --name sim_" + std::to_string(v));
      const auto truth = csv::read(rec);
      const auto sim = csv::read(w.dir / ("sim_" + std::to_string(v) + ".csv"));
      const TimeSeries s(sim.column("t"), sim.column("dz"));
      // the record carries the 20 ms acquisition delay; the simulation does not
      std::vector<double> ref, model;
      for (std::size_t i = 0; i < truth.column("t").size(); ++i) {
        const double t = truth.column("t")[i] - 0.02;
        if (t < 0) continue;
        ref.push_back(truth.column("dz")[i]);
        model.push_back(s.at(t));
      }
      worst = std::min(worst, r_squared(ref, model));
    }
    ok &= worst > 0.999;
    os << fmt("statespace %.9f", worst);
  }
  return {ok, "min R^2 per path (limit 0.999): " + os.str()};
}

// ---------------------------------------------------------------------------
// 11. Static fit sanity

Outcome static_fit_sanity() {
  std::mt19937_64 rng(1);
  const auto spec = ActuatorSpec::reference();
  const auto r = synth::compression(published::hookean(), spec, {}, {}, rng);
  const auto fit = fit_static(TimeSeries(r.t, r.position), TimeSeries(r.t, r.force), spec.A_c, Hookean{});
  const double Yfit = std::abs(std::get<Hookean>(fit.model).Y);
  const double err = rel(Yfit, 1.1947e6);
  // manufacturer figure 1.4e6 Pa is about 17 % above the fitted modulus; reported only
  return {err < 0.01, fmt("Y = %.6g Pa, relative error %.3g (limit 0.01); manufacturer 1.4e6 Pa differs by %.1f %% (not asserted)",
                          Yfit, err, 100 * (1.4e6 - Yfit) / Yfit)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget;  ///< runtime limit [s]
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "hyperelastic consistency", 1, hyperelastic_consistency},
      {2, "GM closed form vs ODE", 5, gm_closed_vs_ode},
      {3, "GKV formulation equivalence", 5, gkv_form_equivalence},
      {4, "identification round trips", 30, round_trips},
      {5, "noise robustness", 120, noise_robustness},
      {6, "ZOH DC gain", 1, zoh_dc_gain},
      {7, "discrete first step", 1, discrete_first_step},
      {8, "PSO", 30, pso_checks},
      {9, "two-stage optimization round trip", 600, two_stage_round_trip},
      {10, "end-to-end loop", 600, end_to_end},
      {11, "static fit sanity", 5, static_fit_sanity},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = wall < c.budget;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s [%d] %s: %s; %.2f s (limit %g s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), wall,
                c.budget, in_time ? "" : " over time");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
