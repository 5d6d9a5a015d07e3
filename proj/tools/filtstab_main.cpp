#include "filtstab/experiment.hpp"
#include "filtstab/model_io.hpp"
#include "filtstab/report.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct RunFlags {
  std::optional<std::size_t> trials;
  std::optional<double> dt;
  std::optional<std::uint64_t> seed;
  bool strict = false;
  std::string out;
};

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("--trials", flags.trials, "Monte Carlo trials per ensemble")->check(CLI::PositiveNumber);
  cmd->add_option("--dt", flags.dt, "Filter time step")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", flags.seed, "Base seed");
  cmd->add_flag("--strict", flags.strict, "Exit nonzero when any verdict fails");
  cmd->add_option("--out", flags.out, "Directory for report.json and CSV series");
}

int execute(filtstab::ExperimentConfig cfg, const RunFlags& flags) {
  if (flags.trials) cfg.n_trials = *flags.trials;
  if (flags.dt) cfg.dt = *flags.dt;
  if (flags.seed) cfg.seed = *flags.seed;
  const filtstab::ExperimentReport report = filtstab::run_experiment(cfg);
  if (flags.out.empty()) {
    std::cout << report.to_json().dump(2) << '\n';
  } else {
    filtstab::write_report(report, flags.out);
  }
  for (const auto& c : report.checks) {
    const char* tag = !c.verdict ? "info" : (*c.verdict ? "pass" : "FAIL");
    std::cerr << filtstab::check_name(c.check) << ": " << tag;
    if (!c.error.empty()) std::cerr << " (" << c.error << ')';
    std::cerr << '\n';
  }
  if (!report.all_pass()) {
    std::cerr << "one or more checks failed\n";
    if (flags.strict) return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Filter stability lab for finite-state Wonham filters"};
  app.require_subcommand(1);

  RunFlags flags;
  std::string config_path, preset_name, model_path;

  auto* run = app.add_subcommand("run", "Run the checks listed in a JSON config");
  run->add_option("config", config_path, "Experiment config")->required()->check(CLI::ExistingFile);
  add_run_flags(run, flags);

  auto* pre = app.add_subcommand("preset", "Run a built-in example configuration");
  std::string names;
  for (const auto& n : filtstab::preset_names()) names += (names.empty() ? "" : ", ") + n;
  pre->add_option("name", preset_name, "One of: " + names)->required();
  add_run_flags(pre, flags);

  auto* constants = app.add_subcommand("constants", "Print the invariant measure and Poincare constants of a model");
  constants->add_option("model", model_path, "Model JSON (dim and rates)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*constants) {
      const filtstab::Generator A = filtstab::generator_from_json(filtstab::read_json_file(model_path));
      const filtstab::ProbabilityVector mu_bar = filtstab::invariant_measure(A);
      const nlohmann::json j = {{"mu_bar", filtstab::to_json(mu_bar.weights())},
                                {"constants", filtstab::to_json(filtstab::conditional_pi_constants(A, mu_bar))}};
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*run) return execute(filtstab::load_config(config_path), flags);
    return execute(filtstab::preset(preset_name), flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
