#include "filtstab/experiment.hpp"
#include "filtstab/model_io.hpp"
#include "filtstab/report.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace filtstab;
using nlohmann::json;

namespace {

json two_state_config() {
  return json::parse(R"({
    "name": "small",
    "model": {"dim": 2, "rates": [[-1, 1], [2, -2]], "h": [[1], [0]], "R": [[1]]},
    "mu": [0.9, 0.1],
    "mu_bar": "invariant",
    "test_functions": [[1, 0]],
    "horizons": [0.1, 0.2, 0.3],
    "dt": 0.001,
    "n_trials": 1000,
    "seed": 11,
    "windows": 2,
    "series_step": 0.05,
    "checks": ["pi_constants", "stochastic_stability", "prop3", "backward_ineq", "theorem1"]
  })");
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("filtstab_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(DecayRate, RecoversExactExponential) {
  std::vector<std::pair<double, double>> s;
  for (int k = 0; k <= 20; ++k) s.emplace_back(0.25 * k, 0.7 * std::exp(-3.0 * 0.25 * k));
  const RateEstimate r = estimate_decay_rate(s, 1.0, 5.0);
  EXPECT_NEAR(r.slope, -3.0, 1e-12);
  EXPECT_NEAR(std::exp(r.intercept), 0.7, 1e-12);
  EXPECT_EQ(r.points, 17u);
  EXPECT_NEAR(r.r_squared, 1.0, 1e-12);
}

TEST(DecayRate, RejectsNonpositiveValuesAndShortWindows) {
  std::vector<std::pair<double, double>> s{{0.0, 1.0}, {1.0, 0.5}, {2.0, 0.0}, {3.0, 0.1}};
  EXPECT_THROW(estimate_decay_rate(s, 0.0, 3.0), std::domain_error);
  EXPECT_THROW(estimate_decay_rate(s, 0.0, 1.0), std::invalid_argument);
}

TEST(Presets, ReproduceWorkedExampleConstants) {
  {
    const ExperimentReport r = run_experiment([] {
      auto c = preset("example1");
      c.checks = {Check::PiConstants};
      return c;
    }());
    const json& k = r.checks.at(0).body.at("constants");
    EXPECT_NEAR(k.at("min_column_sum").get<double>(), 3.0, 1e-9);
    EXPECT_NEAR(k.at("standard_c0").get<double>(), 6.0, 1e-9);
  }
  {
    auto c = preset("counterexample");
    c.checks = {Check::Counterexample};
    const ExperimentReport r = run_experiment(c);
    const json& b = r.checks.at(0).body;
    EXPECT_NEAR(b.at("conditional_energy").get<double>(), 0.0, 1e-12);
    EXPECT_NEAR(b.at("conditional_variance").get<double>(), 1.0, 1e-12);
    EXPECT_NEAR(b.at("standard_c0").get<double>(), 2.0, 1e-12);
    EXPECT_TRUE(b.at("conditional_constants_all_zero").get<bool>());
    EXPECT_FALSE(b.at("rate_certified").get<bool>());
    for (double w : c.mu_bar.weights()) EXPECT_NEAR(w, 0.25, 1e-12);
  }
  EXPECT_THROW(preset("nope"), std::invalid_argument);
}

TEST(Config, RoundTripsThroughJson) {
  const ExperimentConfig a = config_from_json(two_state_config());
  const ExperimentConfig b = config_from_json(config_to_json(a));
  EXPECT_EQ(config_to_json(a).dump(), config_to_json(b).dump());
  EXPECT_EQ(a.checks.size(), 5u);
  EXPECT_NEAR(a.mu_bar.weights()(0), 2.0 / 3.0, 1e-15);
}

TEST(Config, RejectsMalformedInput) {
  auto bad = [](auto edit) {
    json j = two_state_config();
    edit(j);
    return j;
  };
  EXPECT_THROW(config_from_json(bad([](json& j) { j.erase("model"); })), std::invalid_argument);
  EXPECT_THROW(config_from_json(bad([](json& j) { j["checks"] = {"bogus"}; })), std::invalid_argument);
  EXPECT_THROW(config_from_json(bad([](json& j) { j["horizons"] = {0.2, 0.1}; })), std::invalid_argument);
  EXPECT_THROW(config_from_json(bad([](json& j) { j["mu"] = {0.5, 0.6}; })), ModelError);
  EXPECT_THROW(config_from_json(bad([](json& j) { j["mu"] = {0.2, 0.3, 0.5}; })), DimensionMismatch);
  EXPECT_THROW(config_from_json(bad([](json& j) { j["model"]["rates"] = {{-1, 2}, {2, -2}}; })), ModelError);
  EXPECT_THROW(config_from_json(bad([](json& j) { j["rate_window"] = {2.0, 1.0}; })), std::invalid_argument);
}

TEST(Config, ResolvesModelPathRelativeToConfig) {
  const auto dir = scratch_dir("paths");
  std::filesystem::create_directories(dir / "models");
  json model = two_state_config()["model"];
  write_text_file(dir / "models" / "m.json", model.dump());
  json cfg = two_state_config();
  cfg["model"] = "models/m.json";
  write_text_file(dir / "cfg.json", cfg.dump());
  const ExperimentConfig c = load_config(dir / "cfg.json");
  EXPECT_EQ(c.model.dim(), 2);
  EXPECT_EQ(c.model.generator(1, 0), 2.0);
}

TEST(Experiment, SmallRunPassesAndIsByteIdenticalOnRerun) {
  const ExperimentConfig cfg = config_from_json(two_state_config());
  const ExperimentReport a = run_experiment(cfg);
  for (const auto& c : a.checks) EXPECT_TRUE(c.verdict.value_or(true)) << check_name(c.check) << " " << c.error;
  EXPECT_TRUE(a.all_pass());
  const ExperimentReport b = run_experiment(cfg);
  EXPECT_EQ(a.to_json().dump(2), b.to_json().dump(2));
  EXPECT_EQ(a.series, b.series);
  EXPECT_FALSE(a.series.empty());

  const auto dir = scratch_dir("report");
  write_report(a, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
  for (const auto& [name, text] : a.series) EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
}

TEST(Experiment, CheckErrorsAreReportedNotThrown) {
  json j = two_state_config();
  j["checks"] = {"counterexample"};
  const ExperimentReport r = run_experiment(config_from_json(j));
  ASSERT_EQ(r.checks.size(), 1u);
  EXPECT_FALSE(r.checks[0].error.empty());
  EXPECT_FALSE(r.all_pass());
}

TEST(Report, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.0, 1e22}) EXPECT_EQ(std::stod(format_number(v)), v);
  EXPECT_EQ(format_number(3.0), "3");
  CsvTable t({"t", "x"});
  t.add_row({0.5, 0.25});
  EXPECT_EQ(t.text(), "t,x\n0.5,0.25\n");
  EXPECT_THROW(t.add_row({1.0}), std::invalid_argument);
}
