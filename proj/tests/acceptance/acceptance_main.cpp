// One pass/fail line per acceptance criterion; exit status is nonzero if any fails.

#include "filtstab/duality.hpp"
#include "filtstab/ensemble.hpp"
#include "filtstab/experiment.hpp"
#include "filtstab/report.hpp"
#include "../test_support.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace filtstab;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;
  std::function<Outcome()> run;
};

struct Command {
  int status = -1;
  std::string out;
};

Command run_cli(const std::string& args) {
  const std::string cmd = std::string(FILTSTAB_CLI_PATH) + " " + args + " 2>/dev/null";
  Command c;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return c;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) c.out.append(buf, n);
  const int raw = pclose(p);
  c.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("filtstab_acceptance_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string fmt(double v) { return format_number(v); }

const FilterModel kExample1 = testing::example1_model();
const ProbabilityVector kMu = ProbabilityVector::from_weights(Vector{{0.9, 0.1}});

/// Ensembles shared by criteria 5 and 6.
const DualEnsembles& example1_dual() {
  static const DualEnsembles e = [] {
    MonteCarloOptions o;
    o.dt = 1e-3;
    o.n_trials = 10000;
    o.windows = 4;
    o.seed = 1;
    return simulate_dual_ensembles(kExample1, kMu, invariant_measure(kExample1.generator), 2.0, o);
  }();
  return e;
}

Outcome criterion1() {
  const auto dir = scratch("c1");
  write_text_file(dir / "model.json", R"({"dim": 2, "rates": [[-1, 1], [2, -2]]})");
  const Command c = run_cli("constants " + (dir / "model.json").string());
  if (c.status != 0) return {false, "constants exited with " + std::to_string(c.status)};
  const json j = json::parse(c.out);
  const double col = j["constants"]["min_column_sum"].get<double>();
  const double c0 = j["constants"]["standard_c0"].get<double>();
  const bool ok = std::abs(col - 3.0) <= 1e-9 && std::abs(c0 - 6.0) <= 1e-9;
  return {ok, "min_column_sum=" + fmt(col) + " standard_c0=" + fmt(c0)};
}

Outcome criterion2() {
  ExperimentConfig cfg = preset("counterexample");
  cfg.checks = {Check::PiConstants, Check::Counterexample};
  const ExperimentReport r = run_experiment(cfg);
  const json& k = r.checks.at(0).body.at("constants");
  const json& b = r.checks.at(1).body;
  bool ok = r.checks.at(1).error.empty();
  for (const auto& w : r.checks.at(0).body.at("mu_bar")) ok = ok && std::abs(w.get<double>() - 0.25) <= 1e-12;
  const double c0 = k.at("standard_c0").get<double>();
  const double en = b.at("conditional_energy").get<double>();
  const double var = b.at("conditional_variance").get<double>();
  ok = ok && std::abs(c0 - 2.0) <= 1e-12 && std::abs(en) <= 1e-12 && std::abs(var - 1.0) <= 1e-12;
  for (const char* name : {"min_column_sum", "geometric_mean_min", "doeblin", "min_row_average"})
    ok = ok && std::abs(k.at(name).get<double>()) <= 1e-12;
  return {ok, "c0=" + fmt(c0) + " enr=" + fmt(en) + " var=" + fmt(var) + " conditional constants all zero=" +
                  (b.at("conditional_constants_all_zero").get<bool>() ? "yes" : "no")};
}

Outcome criterion3() {
  const auto mub = invariant_measure(kExample1.generator);
  const StateFunction f{1.0, 0.0};
  std::vector<std::pair<double, double>> series;
  bool ok = true;
  double worst = -1e300;
  for (double T : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    const auto r = stochastic_stability_bound(kExample1.generator, mub, kMu, f, T);
    ok = ok && r.theorem.verdict && r.theorem.tolerance <= 1e-10;
    worst = std::max(worst, r.theorem.lhs - r.theorem.rhs);
    series.emplace_back(T, r.deviation);
  }
  const RateEstimate rate = estimate_decay_rate(series, 0.0, 5.0);
  ok = ok && std::abs(rate.slope + 3.0) <= 1e-6;
  return {ok, "max(lhs-rhs)=" + fmt(worst) + " slope=" + fmt(rate.slope)};
}

Outcome criterion4() {
  std::mt19937_64 g(4);
  double worst = 0.0;
  int failures = 0;
  for (int i = 0; i < 100; ++i) {
    const Index d = 2 + i % 9;
    const Generator A = i % 2 ? testing::random_generator(g, d) : testing::random_sparse_generator(g, d);
    const StateFunction yT(testing::random_vector(g, d));
    const auto mub = invariant_measure(A);
    const auto r = check_markov_variance_dissipation(A, mub, yT, dissipation_grid(A, 1.0));
    worst = std::max(worst, r.identity.lhs / r.var_terminal);
    if (!r.identity.verdict) ++failures;
  }
  return {failures == 0, "100 instances, max relative residual=" + fmt(worst)};
}

Outcome criterion5() {
  const Prop3Report r = prop3_diagnostics(example1_dual(), kMu);
  bool ok = r.part2_max_error <= 1e-10;
  double worst = 0.0;
  std::size_t gating = 0;
  for (const auto& d : r.diagnostics) {
    if (d.informational) continue;
    ++gating;
    ok = ok && d.verdict;
    if (d.standard_error > 0.0) worst = std::max(worst, std::abs(d.increment_mean) / d.standard_error);
  }
  return {ok, "part2 max err=" + fmt(r.part2_max_error) + ", " + std::to_string(gating) +
                  " increment tests, max |mean|/SE=" + fmt(worst)};
}

Outcome criterion6() {
  const auto mub = invariant_measure(kExample1.generator);
  const auto& E = example1_dual().under_mubar;
  const auto b = check_backward_variance_inequality(E, kExample1.generator, kMu, mub, 3.0);
  const auto beta = check_beta_weighted_inequality(E, mub, BetaKind::MinRow);
  const bool ok = b.bound.verdict && beta.bound.verdict;
  return {ok, "var(Y_0)=" + fmt(b.bound.lhs) + " <= " + fmt(b.bound.rhs) + " (+" + fmt(b.bound.tolerance) +
                  "); min_row beta form " + fmt(beta.bound.lhs) + " <= " + fmt(beta.bound.rhs) + " (+" +
                  fmt(beta.bound.tolerance) + ")"};
}

Outcome criterion7() {
  const ExperimentConfig cfg = preset("example4");
  const double dt = cfg.dt > 0.0 ? cfg.dt : default_time_step(cfg.model.generator);
  const auto r = ergodic_beta_average(cfg.model, 200.0, 32, dt, cfg.seed);
  return {r.verdict(), "average=" + fmt(r.average.mean) + " +- " + fmt(r.average.standard_error) +
                           " target=" + fmt(r.target)};
}

Outcome criterion8() {
  const auto mub = invariant_measure(kExample1.generator);
  MonteCarloOptions o;
  o.dt = 1e-3;
  o.n_trials = 10000;
  o.seed = 1;
  const RtEstimate rt = rt_estimators(kExample1, kMu, mub, 2.0, o);
  const double a = prior_ratio_floor(kMu, mub);
  bool ok = rt.rt_lower_bound == a * a && !rt.unstable && rt.prop5.verdict;
  std::string detail = "a^2=" + fmt(rt.rt_lower_bound) + " rt_part3=" + fmt(rt.rt_part3) + " +- " + fmt(rt.rt_part3_se);

  const Theorem1Report t1 =
      filter_stability_bound(kExample1, kMu, mub, StateFunction{1.0, 0.0}, {0.5, 1.0, 2.0, 4.0}, std::nullopt, o, 0.1);
  ok = ok && t1.verdict() && t1.bounds.size() == 4;
  std::vector<std::pair<double, double>> series;
  for (const auto& p : t1.l1_series) series.emplace_back(p.t, p.value.mean);
  const RateEstimate rate = estimate_decay_rate(series, 2.0, 4.0);
  const double c = t1.c.value_or(0.0);
  ok = ok && rate.slope <= -0.5 * c + 3.0 * rate.slope_standard_error;
  detail += "; stability bound at 4 horizons " + std::string(t1.verdict() ? "holds" : "fails") +
            "; L1 slope=" + fmt(rate.slope) + " vs -c/2=" + fmt(-0.5 * c);
  return {ok, detail};
}

Outcome criterion9() {
  const Command c = run_cli("preset counterexample --strict --trials 1000");
  if (c.status == 0) return {false, "exit status 0"};
  const json j = json::parse(c.out);
  bool certified_rate = false;
  for (const auto& chk : j["checks"]) {
    if (chk["check"] != "theorem1") continue;
    for (const auto& f : chk["result"]["test_functions"])
      certified_rate = certified_rate || f["certified"].get<bool>() || !f["c"].is_null();
  }
  return {!certified_rate, "exit status " + std::to_string(c.status) +
                               (certified_rate ? ", a rate was certified" : ", no certified rate")};
}

Outcome criterion10() {
  const auto dir = scratch("c10");
  write_text_file(dir / "cfg.json", R"({
    "model": {"dim": 2, "rates": [[-1, 1], [2, -2]], "h": [[1], [0]], "R": [[1]]},
    "mu": [0.9, 0.1], "mu_bar": "invariant", "test_functions": [[1, 0]],
    "horizons": [0.25, 0.5], "dt": 0.001, "n_trials": 1000, "seed": 5, "windows": 2,
    "checks": ["pi_constants", "stochastic_stability", "prop3", "backward_ineq", "beta_ineq",
               "rt", "theorem1", "rate_regression"]})");
  const std::string cfg = (dir / "cfg.json").string();
  const Command a = run_cli("run " + cfg + " --out " + (dir / "a").string());
  const Command b = run_cli("run " + cfg + " --out " + (dir / "b").string());
  if (a.status != 0 || b.status != 0) return {false, "run exited nonzero"};
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "a")) {
    ++files;
    const auto other = dir / "b" / e.path().filename();
    if (!std::filesystem::exists(other) || slurp(e.path()) != slurp(other))
      return {false, e.path().filename().string() + " differs"};
  }
  std::size_t other_files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "b")) ++other_files;
  return {files > 1 && files == other_files, std::to_string(files) + " output files byte-identical"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "two-state constants", 1.0, criterion1},
      {2, "counterexample preset", 1.0, criterion2},
      {3, "stochastic stability bound and rate", 1.0, criterion3},
      {4, "dissipation identity", 10.0, criterion4},
      {5, "martingale diagnostics", 120.0, criterion5},
      {6, "backward variance inequality", 0.0, criterion6},
      {7, "ergodic beta average", 60.0, criterion7},
      {8, "R_T lower bound, filter stability bound and L1 rate", 300.0, criterion8},
      {9, "counterexample guard", 0.0, criterion9},
      {10, "determinism", 0.0, criterion10},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_seconds > 0.0 && secs > c.budget_seconds) {
      o.pass = false;
      o.detail += "; over the " + fmt(c.budget_seconds) + " s budget";
    }
    if (!o.pass) ++failed;
    std::printf("[%s] criterion %d: %s (%s) %.2fs\n", o.pass ? "PASS" : "FAIL", c.id, c.title.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
