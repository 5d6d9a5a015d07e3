#pragma once

#include "filtstab/chain_core.hpp"
#include "filtstab/duality.hpp"
#include "filtstab/simulate.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace filtstab {

enum class Check {
  PiConstants,
  Counterexample,
  StochasticStability,
  Prop3,
  BackwardIneq,
  BetaIneq,
  Rt,
  Theorem1,
  RateRegression,
  ErgodicBeta,
};

const char* check_name(Check c);
Check parse_check(const std::string& name);

struct ExperimentConfig {
  ExperimentConfig(FilterModel model, ProbabilityVector mu, ProbabilityVector mu_bar)
      : model(std::move(model)), mu(std::move(mu)), mu_bar(std::move(mu_bar)) {}

  std::string name = "experiment";
  FilterModel model;
  /// File the model came from, or "inline" / "preset".
  std::string model_source = "inline";
  ProbabilityVector mu;
  ProbabilityVector mu_bar;
  bool mu_bar_invariant = true;
  std::vector<StateFunction> test_functions;
  /// Strictly increasing, positive.
  std::vector<double> horizons;
  /// Horizon of the dual ensembles (prop3, backward_ineq, beta_ineq); defaults to the last horizon.
  std::optional<double> dual_horizon;
  /// 0 selects the default step for the generator.
  double dt = 0.0;
  std::size_t n_trials = 10000;
  std::uint64_t seed = 1;
  std::size_t windows = 4;
  /// Rate for theorem1 and backward_ineq; defaults to the best certified constant.
  std::optional<double> c;
  /// Regression window; defaults to [T_max / 2, T_max].
  std::optional<std::pair<double, double>> rate_window;
  double series_step = 0.1;
  std::vector<BetaKind> beta_kinds{BetaKind::MinRow};
  /// Conditional energy / variance probe used by the counterexample check.
  std::optional<Vector> probe_pi;
  std::optional<Vector> probe_f;
  double ergodic_horizon = 200.0;
  std::size_t ergodic_paths = 32;
  FilterScheme scheme = FilterScheme::Splitting;
  std::vector<Check> checks;
};

/// Parses a config object; relative model paths resolve against base_dir.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

std::vector<std::string> preset_names();
/// Built-in configurations for the worked examples.
ExperimentConfig preset(const std::string& name);

struct RateEstimate {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  double slope_standard_error = 0.0;
  std::size_t points = 0;
};

/// OLS of log(value) on t over the points with t in [lo, hi].
RateEstimate estimate_decay_rate(const std::vector<std::pair<double, double>>& series, double lo, double hi);

nlohmann::json to_json(const RateEstimate& r);

struct CheckResult {
  Check check;
  nlohmann::json body;
  /// Gating verdict; empty when the check only reports values.
  std::optional<bool> verdict;
  std::string error;
};

struct ExperimentReport {
  std::vector<CheckResult> checks;
  /// File name -> CSV text.
  std::map<std::string, std::string> series;
  nlohmann::json config;

  bool all_pass() const;
  nlohmann::json to_json() const;
};

ExperimentReport run_experiment(const ExperimentConfig& config);

/// report.json plus one CSV per series.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace filtstab
