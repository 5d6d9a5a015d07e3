#include "filtstab/experiment.hpp"

#include "filtstab/ensemble.hpp"
#include "filtstab/model_io.hpp"
#include "filtstab/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace filtstab {

namespace {

constexpr const char* kVersion = "1.0.0";

struct CheckEntry {
  Check check;
  const char* name;
};

constexpr CheckEntry kChecks[] = {
    {Check::PiConstants, "pi_constants"},
    {Check::Counterexample, "counterexample"},
    {Check::StochasticStability, "stochastic_stability"},
    {Check::Prop3, "prop3"},
    {Check::BackwardIneq, "backward_ineq"},
    {Check::BetaIneq, "beta_ineq"},
    {Check::Rt, "rt"},
    {Check::Theorem1, "theorem1"},
    {Check::RateRegression, "rate_regression"},
    {Check::ErgodicBeta, "ergodic_beta"},
};

BetaKind parse_beta_kind(const std::string& s) {
  if (s == "min_row") return BetaKind::MinRow;
  if (s == "exact_rayleigh") return BetaKind::ExactRayleigh;
  throw std::invalid_argument("config: unknown beta kind '" + s + "'");
}

ProbabilityVector prior_from_json(const nlohmann::json& j, const char* field) {
  return ProbabilityVector::from_weights(vector_from_json(j.at(field), field));
}

bool has(const ExperimentConfig& cfg, Check c) {
  return std::find(cfg.checks.begin(), cfg.checks.end(), c) != cfg.checks.end();
}

MonteCarloOptions mc_options(const ExperimentConfig& cfg) {
  MonteCarloOptions o;
  o.dt = cfg.dt;
  o.n_trials = cfg.n_trials;
  o.seed = cfg.seed;
  o.windows = cfg.windows;
  o.filter.scheme = cfg.scheme;
  return o;
}

std::optional<double> rate_for(const ExperimentConfig& cfg) {
  if (cfg.c) return cfg.c;
  return conditional_pi_constants(cfg.model.generator, cfg.mu_bar).best_certified();
}

std::pair<double, double> regression_window(const ExperimentConfig& cfg) {
  if (cfg.rate_window) return *cfg.rate_window;
  const double t_max = cfg.horizons.back();
  return {0.5 * t_max, t_max};
}

std::string suffix(std::size_t fi) { return "_f" + std::to_string(fi + 1); }

/// Lazily built state shared by the checks of one run.
class RunState {
 public:
  explicit RunState(const ExperimentConfig& cfg) : cfg_(cfg) {}

  const DualEnsembles& dual() {
    if (!dual_) {
      MonteCarloOptions o = mc_options(cfg_);
      o.track_exact_beta = has(cfg_, Check::BetaIneq) &&
                           std::find(cfg_.beta_kinds.begin(), cfg_.beta_kinds.end(), BetaKind::ExactRayleigh) !=
                               cfg_.beta_kinds.end();
      const double T = cfg_.dual_horizon.value_or(cfg_.horizons.back());
      const std::size_t reps = has(cfg_, Check::BackwardIneq) ? 2 : 1;
      dual_.emplace(simulate_dual_ensembles(cfg_.model, cfg_.mu, cfg_.mu_bar, T, o, reps));
    }
    return *dual_;
  }

  const Theorem1Report& theorem1(std::size_t fi) {
    if (theorem1_.size() < cfg_.test_functions.size()) theorem1_.resize(cfg_.test_functions.size());
    if (!theorem1_[fi]) {
      theorem1_[fi].emplace(filter_stability_bound(cfg_.model, cfg_.mu, cfg_.mu_bar, cfg_.test_functions[fi],
                                                   cfg_.horizons, cfg_.c, mc_options(cfg_), cfg_.series_step));
    }
    return *theorem1_[fi];
  }

 private:
  const ExperimentConfig& cfg_;
  std::optional<DualEnsembles> dual_;
  std::vector<std::optional<Theorem1Report>> theorem1_;
};

struct Outcome {
  nlohmann::json body;
  std::optional<bool> verdict;
};

bool all_gating(const std::vector<BoundReport>& bounds) {
  return std::all_of(bounds.begin(), bounds.end(), [](const BoundReport& b) { return !b.gating || b.verdict; });
}

Outcome run_pi_constants(const ExperimentConfig& cfg) {
  const PiConstants pc = conditional_pi_constants(cfg.model.generator, cfg.mu_bar);
  return {{{"mu_bar", to_json(invariant_measure(cfg.model.generator).weights())}, {"constants", to_json(pc)}},
          std::nullopt};
}

Outcome run_counterexample(const ExperimentConfig& cfg) {
  if (!cfg.probe_pi || !cfg.probe_f) throw std::invalid_argument("counterexample: config needs probe.pi and probe.f");
  const ProbabilityVector pi = ProbabilityVector::from_weights(*cfg.probe_pi);
  const StateFunction F(*cfg.probe_f);
  const PiConstants pc = conditional_pi_constants(cfg.model.generator, cfg.mu_bar);
  const bool all_zero =
      pc.min_column_sum == 0.0 && pc.geometric_mean_min == 0.0 && pc.doeblin == 0.0 && pc.min_row_average == 0.0;
  return {{{"probe_pi", to_json(*cfg.probe_pi)},
           {"probe_f", to_json(*cfg.probe_f)},
           {"conditional_energy", conditional_energy(pi, cfg.model.generator, F)},
           {"conditional_variance", conditional_variance(pi, F)},
           {"standard_c0", pc.standard_c0},
           {"conditional_constants_all_zero", all_zero},
           {"rate_certified", pc.best_certified().has_value()}},
          std::nullopt};
}

Outcome run_stochastic_stability(const ExperimentConfig& cfg, std::map<std::string, std::string>& series) {
  nlohmann::json per_f = nlohmann::json::array();
  std::vector<BoundReport> all;
  const double t_max = cfg.horizons.back();
  for (std::size_t fi = 0; fi < cfg.test_functions.size(); ++fi) {
    const StateFunction& f = cfg.test_functions[fi];
    nlohmann::json bounds = nlohmann::json::array();
    for (double T : cfg.horizons) {
      const auto r = stochastic_stability_bound(cfg.model.generator, cfg.mu_bar, cfg.mu, f, T);
      bounds.push_back(to_json(r.theorem));
      bounds.push_back(to_json(r.variance_decay));
      all.push_back(r.theorem);
      all.push_back(r.variance_decay);
    }
    CsvTable table({"t", "deviation", "bound"});
    const auto n = static_cast<std::size_t>(std::llround(t_max / cfg.series_step));
    for (std::size_t k = 1; k <= n; ++k) {
      const double t = t_max * static_cast<double>(k) / static_cast<double>(n);
      const auto r = stochastic_stability_bound(cfg.model.generator, cfg.mu_bar, cfg.mu, f, t);
      table.add_row({t, r.deviation, std::sqrt(r.theorem.rhs)});
    }
    series["stochastic_stability" + suffix(fi) + ".csv"] = table.text();
    per_f.push_back({{"f", to_json(f.values())}, {"bounds", bounds}});
  }
  return {{{"test_functions", per_f}}, all_gating(all)};
}

Outcome run_prop3(const ExperimentConfig& cfg, RunState& state) {
  const Prop3Report r = prop3_diagnostics(state.dual(), cfg.mu);
  nlohmann::json diags = nlohmann::json::array();
  for (const auto& d : r.diagnostics) diags.push_back(to_json(d));
  return {{{"part2_max_error", r.part2_max_error},
           {"dual_initial", to_json(r.dual_initial.value)},
           {"dual_initial_se", to_json(r.dual_initial.standard_error)},
           {"diagnostics", diags}},
          r.verdict()};
}

Outcome run_backward(const ExperimentConfig& cfg, RunState& state) {
  const auto c = rate_for(cfg);
  if (!c) {
    throw std::invalid_argument(
        "backward_ineq: no positive constant c is available; use beta_ineq for the beta-weighted form");
  }
  const auto r = check_backward_variance_inequality(state.dual().under_mubar, cfg.model.generator, cfg.mu, cfg.mu_bar, *c);
  return {{{"c", r.c},
           {"bound", to_json(r.bound)},
           {"energy_form", to_json(r.energy_form)},
           {"gamma_candidate", to_json(r.gamma_candidate)},
           {"var_initial", r.var_initial},
           {"var_initial_se", r.var_initial_se},
           {"var_terminal", to_json(r.var_terminal)},
           {"integrated_energy", r.integrated_energy},
           {"integrated_energy_se", r.integrated_energy_se}},
          all_gating({r.bound, r.energy_form, r.gamma_candidate})};
}

Outcome run_beta(const ExperimentConfig& cfg, RunState& state) {
  nlohmann::json out = nlohmann::json::array();
  bool ok = true;
  for (BetaKind kind : cfg.beta_kinds) {
    const auto r = check_beta_weighted_inequality(state.dual().under_mubar, cfg.mu_bar, kind);
    out.push_back({{"kind", beta_kind_name(kind)},
                   {"bound", to_json(r.bound)},
                   {"weighted_variance", to_json(r.weighted_variance)},
                   {"beta_integral", to_json(r.beta_integral)},
                   {"decay_certified", r.decay_certified}});
    ok = ok && r.bound.verdict;
  }
  return {{{"kinds", out}}, ok};
}

Outcome run_rt(const ExperimentConfig& cfg) {
  const MonteCarloOptions o = mc_options(cfg);
  if (o.n_trials < o.min_trials) {
    throw std::invalid_argument("rt: need at least " + std::to_string(o.min_trials) + " trials");
  }
  EnsembleConfig ec;
  ec.horizon = cfg.horizons.back();
  ec.dt = resolve_dt(o, cfg.model.generator);
  ec.n_trials = o.n_trials;
  ec.seed = o.seed;
  ec.filter = o.filter;
  ec.snapshot_times = cfg.horizons;
  const Ensemble e_mu = simulate_ensemble(cfg.model, cfg.mu, cfg.mu_bar, SignalPrior::Mu, ec);
  const Ensemble e_bar = simulate_ensemble(cfg.model, cfg.mu, cfg.mu_bar, SignalPrior::MuBar, ec);
  nlohmann::json rows = nlohmann::json::array();
  bool ok = true;
  for (std::size_t s = 0; s < cfg.horizons.size(); ++s) {
    const RtEstimate r = rt_estimators(e_mu, e_bar, cfg.mu, cfg.mu_bar, s);
    rows.push_back({{"horizon", e_bar.times()[s]},
                    {"a", r.a},
                    {"rt_lower_bound", r.rt_lower_bound},
                    {"rt_part3", r.rt_part3},
                    {"rt_part3_se", r.rt_part3_se},
                    {"rt_part4", r.rt_part4},
                    {"rt_part4_se", r.rt_part4_se},
                    {"s_under_mu", to_json(r.s_under_mu)},
                    {"s_under_mubar", to_json(r.s_under_mubar)},
                    {"as_under_mubar", to_json(r.as_under_mubar)},
                    {"unstable", r.unstable},
                    {"prop5", to_json(r.prop5)}});
    if (!r.unstable) ok = ok && r.prop5.verdict;
  }
  return {{{"horizons", rows}}, ok};
}

Outcome run_theorem1(const ExperimentConfig& cfg, RunState& state, std::map<std::string, std::string>& series) {
  nlohmann::json per_f = nlohmann::json::array();
  bool ok = true;
  for (std::size_t fi = 0; fi < cfg.test_functions.size(); ++fi) {
    const Theorem1Report& r = state.theorem1(fi);
    nlohmann::json bounds = nlohmann::json::array();
    for (const auto& b : r.bounds) bounds.push_back(to_json(b));
    nlohmann::json entry = {{"f", to_json(cfg.test_functions[fi].values())},
                            {"certified", r.certified},
                            {"c", r.c ? nlohmann::json(*r.c) : nlohmann::json(nullptr)},
                            {"a", r.a},
                            {"bounds", bounds},
                            {"verdict", r.verdict()}};
    if (!r.note.empty()) entry["note"] = r.note;
    per_f.push_back(entry);
    CsvTable table({"t", "l1_mean", "l1_se"});
    for (const auto& p : r.l1_series) table.add_row({p.t, p.value.mean, p.value.standard_error});
    series["theorem1_l1" + suffix(fi) + ".csv"] = table.text();
    ok = ok && r.verdict();
  }
  return {{{"test_functions", per_f}}, ok};
}

Outcome run_rate_regression(const ExperimentConfig& cfg, RunState& state) {
  const auto [lo, hi] = regression_window(cfg);
  const double c0 = standard_pi_constant(cfg.model.generator, cfg.mu_bar);
  const auto c = rate_for(cfg);
  nlohmann::json per_f = nlohmann::json::array();
  bool ok = true;
  for (std::size_t fi = 0; fi < cfg.test_functions.size(); ++fi) {
    const StateFunction& f = cfg.test_functions[fi];
    std::vector<std::pair<double, double>> markov;
    constexpr int kPoints = 21;
    for (int k = 0; k < kPoints; ++k) {
      const double t = lo + (hi - lo) * k / (kPoints - 1);
      markov.emplace_back(t, stochastic_stability_bound(cfg.model.generator, cfg.mu_bar, cfg.mu, f, t).deviation);
    }
    nlohmann::json entry = {{"f", to_json(f.values())}};
    const RateEstimate m = estimate_decay_rate(markov, lo, hi);
    const bool markov_ok = m.slope <= -0.5 * c0 + 1e-6;
    entry["markov"] = {{"rate", to_json(m)}, {"threshold", -0.5 * c0}, {"verdict", markov_ok}};
    ok = ok && markov_ok;

    const Theorem1Report& t1 = state.theorem1(fi);
    std::vector<std::pair<double, double>> filt;
    for (const auto& p : t1.l1_series) filt.emplace_back(p.t, p.value.mean);
    const RateEstimate r = estimate_decay_rate(filt, lo, hi);
    nlohmann::json fj = {{"rate", to_json(r)}};
    if (c) {
      const bool v = r.slope <= -0.5 * *c + 3.0 * r.slope_standard_error;
      fj["threshold"] = -0.5 * *c;
      fj["verdict"] = v;
      ok = ok && v;
    } else {
      fj["threshold"] = nullptr;
      fj["note"] = "no positive constant; slope reported without a certified threshold";
    }
    entry["filter_l1"] = fj;
    per_f.push_back(entry);
  }
  return {{{"window", {lo, hi}}, {"test_functions", per_f}}, ok};
}

Outcome run_ergodic(const ExperimentConfig& cfg) {
  const double dt = cfg.dt > 0.0 ? cfg.dt : default_time_step(cfg.model.generator);
  FilterOptions fo;
  fo.scheme = cfg.scheme;
  const auto r = ergodic_beta_average(cfg.model, cfg.ergodic_horizon, cfg.ergodic_paths, dt, cfg.seed, fo);
  return {{{"horizon", r.horizon}, {"average", to_json(r.average)}, {"target", r.target}, {"verdict", r.verdict()}},
          r.verdict()};
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.mu.dim() != cfg.model.dim() || cfg.mu_bar.dim() != cfg.model.dim()) {
    throw DimensionMismatch("config: priors do not match the model dimension");
  }
  for (const auto& f : cfg.test_functions)
    if (f.dim() != cfg.model.dim()) throw DimensionMismatch("config: test function has the wrong dimension");
  if (cfg.n_trials < 1) throw std::invalid_argument("config: n_trials must be at least 1");
  for (std::size_t i = 0; i < cfg.horizons.size(); ++i) {
    if (!(cfg.horizons[i] > 0.0)) throw std::invalid_argument("config: horizons must be positive");
    if (i > 0 && !(cfg.horizons[i] > cfg.horizons[i - 1])) {
      throw std::invalid_argument("config: horizons must be strictly increasing");
    }
  }
  const bool needs_horizons = std::any_of(cfg.checks.begin(), cfg.checks.end(), [](Check c) {
    return c != Check::PiConstants && c != Check::Counterexample && c != Check::ErgodicBeta;
  });
  if (needs_horizons && cfg.horizons.empty()) throw std::invalid_argument("config: horizons list is empty");
  const bool needs_f = has(cfg, Check::StochasticStability) || has(cfg, Check::Theorem1) || has(cfg, Check::RateRegression);
  if (needs_f && cfg.test_functions.empty()) throw std::invalid_argument("config: test_functions is empty");
}

}  // namespace

const char* check_name(Check c) {
  for (const auto& e : kChecks)
    if (e.check == c) return e.name;
  return "unknown";
}

Check parse_check(const std::string& name) {
  for (const auto& e : kChecks)
    if (name == e.name) return e.check;
  throw std::invalid_argument("config: unknown check '" + name + "'");
}

ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  if (!j.contains("model")) throw std::invalid_argument("config: missing 'model'");
  std::optional<FilterModel> model;
  std::string source = "inline";
  if (j["model"].is_string()) {
    std::filesystem::path p = j["model"].get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw std::invalid_argument("config: model file " + p.string() + " does not exist");
    model.emplace(load_model(p));
    source = j["model"].get<std::string>();
  } else {
    model.emplace(model_from_json(j["model"]));
  }
  const Index d = model->dim();
  bool invariant = true;
  ProbabilityVector mu_bar = invariant_measure(model->generator);
  if (j.contains("mu_bar") && !(j["mu_bar"].is_string() && j["mu_bar"] == "invariant")) {
    mu_bar = prior_from_json(j, "mu_bar");
    invariant = false;
  }
  ProbabilityVector mu = j.contains("mu") ? prior_from_json(j, "mu") : ProbabilityVector::uniform(d);

  ExperimentConfig cfg(std::move(*model), std::move(mu), std::move(mu_bar));
  cfg.model_source = source;
  cfg.mu_bar_invariant = invariant;
  cfg.name = j.value("name", cfg.name);
  if (j.contains("test_functions")) {
    for (const auto& f : j["test_functions"]) cfg.test_functions.emplace_back(vector_from_json(f, "test_functions"));
  }
  if (j.contains("horizons")) cfg.horizons = j["horizons"].get<std::vector<double>>();
  if (j.contains("dual_horizon")) cfg.dual_horizon = j["dual_horizon"].get<double>();
  cfg.dt = j.value("dt", cfg.dt);
  if (j.contains("n_trials")) {
    const auto n = j["n_trials"].get<long long>();
    if (n < 1) throw std::invalid_argument("config: n_trials must be at least 1");
    cfg.n_trials = static_cast<std::size_t>(n);
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.windows = j.value("windows", cfg.windows);
  if (j.contains("c") && !j["c"].is_null()) cfg.c = j["c"].get<double>();
  if (j.contains("rate_window")) {
    const auto w = j["rate_window"].get<std::vector<double>>();
    if (w.size() != 2 || !(w[0] < w[1])) throw std::invalid_argument("config: rate_window must be [lo, hi] with lo < hi");
    cfg.rate_window = std::make_pair(w[0], w[1]);
  }
  cfg.series_step = j.value("series_step", cfg.series_step);
  if (j.contains("beta_kinds")) {
    cfg.beta_kinds.clear();
    for (const auto& k : j["beta_kinds"]) cfg.beta_kinds.push_back(parse_beta_kind(k.get<std::string>()));
  }
  if (j.contains("probe")) {
    if (!j["probe"].contains("pi") || !j["probe"].contains("f")) throw std::invalid_argument("config: probe needs pi and f");
    cfg.probe_pi = vector_from_json(j["probe"]["pi"], "probe.pi");
    cfg.probe_f = vector_from_json(j["probe"]["f"], "probe.f");
  }
  if (j.contains("ergodic")) {
    cfg.ergodic_horizon = j["ergodic"].value("horizon", cfg.ergodic_horizon);
    cfg.ergodic_paths = j["ergodic"].value("paths", cfg.ergodic_paths);
  }
  if (j.contains("scheme")) {
    const auto s = j["scheme"].get<std::string>();
    if (s == "splitting") cfg.scheme = FilterScheme::Splitting;
    else if (s == "euler") cfg.scheme = FilterScheme::Euler;
    else throw std::invalid_argument("config: unknown scheme '" + s + "'");
  }
  if (!j.contains("checks")) throw std::invalid_argument("config: missing 'checks'");
  for (const auto& c : j["checks"]) cfg.checks.push_back(parse_check(c.get<std::string>()));
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path), path.parent_path());
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["model_source"] = cfg.model_source;
  j["model"] = model_to_json(cfg.model);
  j["mu"] = to_json(cfg.mu.weights());
  j["mu_bar"] = cfg.mu_bar_invariant ? nlohmann::json("invariant") : to_json(cfg.mu_bar.weights());
  nlohmann::json fs = nlohmann::json::array();
  for (const auto& f : cfg.test_functions) fs.push_back(to_json(f.values()));
  j["test_functions"] = fs;
  j["horizons"] = cfg.horizons;
  if (cfg.dual_horizon) j["dual_horizon"] = *cfg.dual_horizon;
  j["dt"] = cfg.dt > 0.0 ? cfg.dt : default_time_step(cfg.model.generator);
  j["n_trials"] = cfg.n_trials;
  j["seed"] = cfg.seed;
  j["windows"] = cfg.windows;
  if (cfg.c) j["c"] = *cfg.c;
  if (cfg.rate_window) j["rate_window"] = {cfg.rate_window->first, cfg.rate_window->second};
  j["series_step"] = cfg.series_step;
  nlohmann::json kinds = nlohmann::json::array();
  for (BetaKind k : cfg.beta_kinds) kinds.push_back(beta_kind_name(k));
  j["beta_kinds"] = kinds;
  if (cfg.probe_pi && cfg.probe_f) j["probe"] = {{"pi", to_json(*cfg.probe_pi)}, {"f", to_json(*cfg.probe_f)}};
  j["ergodic"] = {{"horizon", cfg.ergodic_horizon}, {"paths", cfg.ergodic_paths}};
  j["scheme"] = scheme_name(cfg.scheme);
  nlohmann::json checks = nlohmann::json::array();
  for (Check c : cfg.checks) checks.push_back(check_name(c));
  j["checks"] = checks;
  return j;
}

std::vector<std::string> preset_names() { return {"example1", "counterexample", "example4"}; }

ExperimentConfig preset(const std::string& name) {
  nlohmann::json j;
  if (name == "example1") {
    j = {{"name", "example1"},
         {"model", {{"dim", 2}, {"rates", {{-1.0, 1.0}, {2.0, -2.0}}}, {"h", {{1.0}, {0.0}}}, {"R", {{1.0}}}}},
         {"mu", {0.9, 0.1}},
         {"mu_bar", "invariant"},
         {"test_functions", {{1.0, 0.0}}},
         {"horizons", {0.5, 1.0, 2.0, 4.0}},
         {"dual_horizon", 2.0},
         {"dt", 1e-3},
         {"n_trials", 10000},
         {"seed", 1},
         {"checks",
          {"pi_constants", "stochastic_stability", "prop3", "backward_ineq", "beta_ineq", "rt", "theorem1",
           "rate_regression"}}};
  } else if (name == "counterexample") {
    j = {{"name", "counterexample"},
         {"model",
          {{"dim", 4},
           {"rates", {{-1.0, 1.0, 0.0, 0.0}, {0.0, -1.0, 1.0, 0.0}, {0.0, 0.0, -1.0, 1.0}, {1.0, 0.0, 0.0, -1.0}}},
           {"h", {{1.0}, {0.0}, {1.0}, {0.0}}},
           {"R", {{1.0}}}}},
         {"mu", {0.7, 0.1, 0.1, 0.1}},
         {"mu_bar", "invariant"},
         {"test_functions", {{1.0, 1.0, -1.0, -1.0}}},
         {"horizons", {0.5, 1.0, 2.0, 4.0}},
         {"dt", 1e-3},
         {"n_trials", 2000},
         {"seed", 1},
         {"probe", {{"pi", {0.5, 0.0, 0.5, 0.0}}, {"f", {1.0, 1.0, -1.0, -1.0}}}},
         {"checks", {"pi_constants", "counterexample", "stochastic_stability", "theorem1"}}};
  } else if (name == "example4") {
    j = {{"name", "example4"},
         {"model",
          {{"dim", 3},
           {"rates", {{-1.5, 1.0, 0.5}, {0.5, -1.0, 0.5}, {2.0, 1.0, -3.0}}},
           {"h", {{1.0}, {0.0}, {-1.0}}},
           {"R", {{1.0}}}}},
         {"mu", {0.6, 0.3, 0.1}},
         {"mu_bar", "invariant"},
         {"test_functions", {{1.0, 0.0, 0.0}}},
         {"horizons", {0.5, 1.0, 2.0}},
         {"n_trials", 1000},
         {"seed", 1},
         {"ergodic", {{"horizon", 200.0}, {"paths", 32}}},
         {"checks", {"pi_constants", "stochastic_stability", "ergodic_beta"}}};
  } else {
    std::ostringstream os;
    os << "unknown preset '" << name << "'; available:";
    for (const auto& n : preset_names()) os << ' ' << n;
    throw std::invalid_argument(os.str());
  }
  ExperimentConfig cfg = config_from_json(j);
  cfg.model_source = "preset";
  return cfg;
}

RateEstimate estimate_decay_rate(const std::vector<std::pair<double, double>>& series, double lo, double hi) {
  std::vector<double> ts, ys;
  std::vector<double> bad;
  for (const auto& [t, v] : series) {
    if (t < lo - 1e-12 || t > hi + 1e-12) continue;
    if (!(v > 0.0)) {
      bad.push_back(t);
      continue;
    }
    ts.push_back(t);
    ys.push_back(std::log(v));
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "decay rate: nonpositive values at horizons";
    for (double t : bad) os << ' ' << t;
    throw std::domain_error(os.str());
  }
  if (ts.size() < 3) throw std::invalid_argument("decay rate: need at least 3 points in the window");
  const auto n = static_cast<double>(ts.size());
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    tm += ts[i];
    ym += ys[i];
  }
  tm /= n;
  ym /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sxx += (ts[i] - tm) * (ts[i] - tm);
    sxy += (ts[i] - tm) * (ys[i] - ym);
    syy += (ys[i] - ym) * (ys[i] - ym);
  }
  RateEstimate r;
  r.slope = sxy / sxx;
  r.intercept = ym - r.slope * tm;
  double sse = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double e = ys[i] - (r.intercept + r.slope * ts[i]);
    sse += e * e;
  }
  r.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
  r.slope_standard_error = std::sqrt(sse / (n - 2.0) / sxx);
  r.window_lo = ts.front();
  r.window_hi = ts.back();
  r.points = ts.size();
  return r;
}

nlohmann::json to_json(const RateEstimate& r) {
  return {{"slope", r.slope},
          {"intercept", r.intercept},
          {"r_squared", r.r_squared},
          {"window", {r.window_lo, r.window_hi}},
          {"slope_standard_error", r.slope_standard_error},
          {"points", r.points}};
}

bool ExperimentReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.verdict.value_or(true); });
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json out;
  out["tool"] = "filtstab";
  out["version"] = kVersion;
  out["config"] = config;
  nlohmann::json list = nlohmann::json::array();
  nlohmann::json verdicts = nlohmann::json::object();
  for (const auto& c : checks) {
    nlohmann::json e = {{"check", check_name(c.check)}};
    e["verdict"] = c.verdict ? nlohmann::json(*c.verdict) : nlohmann::json(nullptr);
    if (!c.error.empty()) e["error"] = c.error;
    e["result"] = c.body;
    list.push_back(e);
    verdicts[check_name(c.check)] = e["verdict"];
  }
  out["checks"] = list;
  out["verdicts"] = verdicts;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& [name, text] : series) files.push_back(name);
  out["series"] = files;
  out["all_pass"] = all_pass();
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  ExperimentReport report;
  report.config = config_to_json(cfg);
  RunState state(cfg);
  for (Check check : cfg.checks) {
    CheckResult result{check, nlohmann::json::object(), std::nullopt, {}};
    try {
      Outcome o;
      switch (check) {
        case Check::PiConstants: o = run_pi_constants(cfg); break;
        case Check::Counterexample: o = run_counterexample(cfg); break;
        case Check::StochasticStability: o = run_stochastic_stability(cfg, report.series); break;
        case Check::Prop3: o = run_prop3(cfg, state); break;
        case Check::BackwardIneq: o = run_backward(cfg, state); break;
        case Check::BetaIneq: o = run_beta(cfg, state); break;
        case Check::Rt: o = run_rt(cfg); break;
        case Check::Theorem1: o = run_theorem1(cfg, state, report.series); break;
        case Check::RateRegression: o = run_rate_regression(cfg, state); break;
        case Check::ErgodicBeta: o = run_ergodic(cfg); break;
      }
      result.body = std::move(o.body);
      result.verdict = o.verdict;
    } catch (const std::exception& e) {
      result.error = std::string(check_name(check)) + ": " + e.what();
      result.verdict = false;
    }
    report.checks.push_back(std::move(result));
  }
  return report;
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "report.json", report.to_json().dump(2) + "\n");
  for (const auto& [name, text] : report.series) write_text_file(dir / name, text);
}

}  // namespace filtstab
