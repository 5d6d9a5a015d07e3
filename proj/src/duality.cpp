#include "filtstab/duality.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace filtstab {

namespace {

constexpr double kSigmas = 3.0;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double weighted_variance(const Vector& weights, const Vector& f) {
  const double mean = weights.dot(f);
  return weights.dot((f.array() - mean).square().matrix());
}

/// Composite Simpson on an even number of intervals, trapezoid otherwise.
double integrate_samples(const std::vector<double>& v, double h) {
  const std::size_t n = v.size() - 1;
  double s = 0.0;
  if (n % 2 == 0) {
    for (std::size_t k = 0; k < n; k += 2) s += v[k] + 4.0 * v[k + 1] + v[k + 2];
    return s * h / 3.0;
  }
  for (std::size_t k = 0; k < n; ++k) s += v[k] + v[k + 1];
  return s * h / 2.0;
}

/// Sum_i pi(i) sum_j A(i,j) (u_i - u_j)(v_i - v_j); unbiased for the
/// conditional energy of Y when u, v are independent unbiased draws of Y.
double bilinear_energy(std::span<const double> pi, const Generator& A, std::span<const double> u,
                       std::span<const double> v) {
  const Index d = A.dim();
  double s = 0.0;
  for (Index i = 0; i < d; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    double row = 0.0;
    for (Index j = 0; j < d; ++j) {
      if (j == i) continue;
      const auto jj = static_cast<std::size_t>(j);
      row += A(i, j) * (u[ii] - u[jj]) * (v[ii] - v[jj]);
    }
    s += pi[ii] * row;
  }
  return s;
}

void require_trials(const MonteCarloOptions& options) {
  if (options.n_trials < options.min_trials) {
    std::ostringstream os;
    os << "need at least " << options.min_trials << " trials for 3-SE diagnostics, got " << options.n_trials;
    throw std::invalid_argument(os.str());
  }
}

std::size_t snapshot_index(const Ensemble& e, double t) {
  for (std::size_t s = 0; s < e.n_snapshots(); ++s)
    if (std::abs(e.times()[s] - t) <= 1e-9 * std::max(1.0, t)) return s;
  std::ostringstream os;
  os << "ensemble: no snapshot at t = " << t;
  throw std::invalid_argument(os.str());
}

MeanEstimate difference(const MeanEstimate& a, double b, double b_se) {
  MeanEstimate out;
  out.mean = a.mean - b;
  out.standard_error = std::sqrt(a.standard_error * a.standard_error + b_se * b_se);
  out.n = a.n;
  return out;
}

}  // namespace

BoundReport make_bound(std::string inequality, double lhs, double rhs, double tolerance, double horizon,
                       std::size_t n_trials, std::string note) {
  BoundReport r;
  r.inequality = std::move(inequality);
  r.lhs = lhs;
  r.rhs = rhs;
  r.tolerance = tolerance;
  r.verdict = lhs <= rhs + tolerance;
  r.horizon = horizon;
  r.n_trials = n_trials;
  r.note = std::move(note);
  return r;
}

MartingaleDiagnostic make_diagnostic(std::string label, double t0, double t1, const MeanEstimate& est,
                                     bool informational) {
  MartingaleDiagnostic d;
  d.label = std::move(label);
  d.window_start = t0;
  d.window_end = t1;
  d.increment_mean = est.mean;
  d.standard_error = est.standard_error;
  d.n_trials = est.n;
  d.verdict = std::abs(est.mean) <= kSigmas * est.standard_error;
  d.informational = informational;
  return d;
}

// ---------------------------------------------------------------------------
// Deterministic dual

StateFunction DualOdePath::at(std::size_t k) const {
  return StateFunction(values.row(static_cast<Index>(k)).transpose());
}

DualOdePath dual_backward_ode(const Generator& A, const StateFunction& yT, const TimeGrid& grid) {
  if (yT.dim() != A.dim()) throw DimensionMismatch("dual ode: terminal value has the wrong dimension");
  const Matrix P = (A.rates() * grid.dt).exp();
  DualOdePath path;
  path.grid = grid;
  path.values.resize(static_cast<Index>(grid.steps + 1), A.dim());
  Vector y = yT.values();
  path.values.row(static_cast<Index>(grid.steps)) = y.transpose();
  for (std::size_t k = grid.steps; k-- > 0;) {
    y = P * y;
    path.values.row(static_cast<Index>(k)) = y.transpose();
  }
  return path;
}

TimeGrid dissipation_grid(const Generator& A, double horizon) {
  const double per_step = 1e-3 / std::max(A.max_exit_rate(), 1e-300);
  auto steps = static_cast<std::size_t>(std::max(1000.0, std::ceil(horizon / per_step)));
  steps += steps % 2;
  return TimeGrid{horizon / static_cast<double>(steps), steps};
}

DissipationReport check_markov_variance_dissipation(const Generator& A, const ProbabilityVector& mu_bar,
                                                    const StateFunction& yT, const TimeGrid& grid) {
  const DualOdePath dual = dual_backward_ode(A, yT, grid);
  std::vector<double> enr(grid.steps + 1);
  for (std::size_t k = 0; k <= grid.steps; ++k) enr[k] = energy(mu_bar, A, dual.at(k));
  const double integral = integrate_samples(enr, grid.dt);

  DissipationReport r;
  r.var_initial = variance(mu_bar, dual.at(0));
  r.var_terminal = variance(mu_bar, yT);
  r.integrated_energy = integral;
  r.c0 = standard_pi_constant(A, mu_bar);
  const double T = grid.horizon();
  const double residual = std::abs(r.var_initial + integral - r.var_terminal);
  r.identity = make_bound("var(y_0) + int enr(y_t) dt = var(y_T) (relative residual)", residual,
                          1e-6 * r.var_terminal, 1e-15, T, 0, grid.steps % 2 ? "trapezoid quadrature" : "Simpson quadrature");
  r.decay = make_bound("var(y_0) <= exp(-c0 T) var(y_T)", r.var_initial, std::exp(-r.c0 * T) * r.var_terminal,
                       1e-12 * std::max(r.var_terminal, 1e-300) + 1e-15, T);
  return r;
}

StochasticStabilityReport stochastic_stability_bound(const Generator& A, const ProbabilityVector& mu_bar,
                                                     const ProbabilityVector& mu0, const StateFunction& f, double T) {
  if (!mu_bar.everywhere_positive()) throw std::domain_error("stochastic stability: invariant measure has a zero entry");
  if (mu0.dim() != A.dim() || f.dim() != A.dim() || mu_bar.dim() != A.dim()) {
    throw DimensionMismatch("stochastic stability: inputs do not share a state space");
  }
  const Matrix P = (A.rates() * T).exp();
  const Vector pi_T = (mu0.weights().transpose() * P).transpose();
  const Vector gamma0 = mu0.weights().cwiseQuotient(mu_bar.weights());
  const Vector gammaT = pi_T.cwiseQuotient(mu_bar.weights());
  const double var_gamma0 = weighted_variance(mu_bar.weights(), gamma0);
  const double var_gammaT = weighted_variance(mu_bar.weights(), gammaT);
  const double var_f = variance(mu_bar, f);

  StochasticStabilityReport r;
  r.c0 = standard_pi_constant(A, mu_bar);
  const double decay = std::exp(-r.c0 * T);
  r.deviation = std::abs(pi_T.dot(f.values()) - expectation(mu_bar, f));
  r.variance_decay = make_bound("var(gamma_T) <= exp(-c0 T) var(gamma_0)", var_gammaT, decay * var_gamma0, 1e-10, T);
  r.theorem = make_bound("|pi_T^mu(f) - mubar(f)|^2 <= exp(-c0 T) var(gamma_0) var(f)", r.deviation * r.deviation,
                         decay * var_gamma0 * var_f, 1e-10, T);
  return r;
}

// ---------------------------------------------------------------------------
// Ensembles

double resolve_dt(const MonteCarloOptions& options, const Generator& A) {
  return options.dt > 0.0 ? options.dt : default_time_step(A);
}

DualEnsembles simulate_dual_ensembles(const FilterModel& model, const ProbabilityVector& mu,
                                      const ProbabilityVector& mu_bar, double T, const MonteCarloOptions& options,
                                      std::size_t dual_replicates) {
  require_trials(options);
  if (options.windows == 0) throw std::invalid_argument("dual ensembles: need at least one window");
  EnsembleConfig cfg;
  cfg.horizon = T;
  cfg.dt = resolve_dt(options, model.generator);
  cfg.n_trials = options.n_trials;
  cfg.seed = options.seed;
  cfg.filter = options.filter;
  cfg.martingale_form = options.martingale_form;
  cfg.dual_estimates = true;
  for (std::size_t j = 0; j <= options.windows; ++j) {
    cfg.snapshot_times.push_back(T * static_cast<double>(j) / static_cast<double>(options.windows));
  }
  // snap window boundaries onto the grid
  const TimeGrid grid = TimeGrid::covering(T, cfg.dt);
  for (double& t : cfg.snapshot_times) t = grid.time(static_cast<std::size_t>(std::llround(t / cfg.dt)));

  EnsembleConfig mu_cfg = cfg;
  mu_cfg.dual_replicates = 1;
  EnsembleConfig mubar_cfg = cfg;
  mubar_cfg.dual_replicates = std::max<std::size_t>(1, dual_replicates);
  mubar_cfg.track_exact_beta = options.filter.scheme == FilterScheme::Splitting && options.track_exact_beta;
  return DualEnsembles{simulate_ensemble(model, mu, mu_bar, SignalPrior::Mu, mu_cfg),
                       simulate_ensemble(model, mu, mu_bar, SignalPrior::MuBar, mubar_cfg)};
}

DualInitialEstimate estimate_dual_initial(const Ensemble& e) {
  if (!e.has_dual()) throw std::invalid_argument("dual initial value: ensemble has no dual estimates");
  const auto d = static_cast<std::size_t>(e.dim());
  DualInitialEstimate out;
  out.value.resize(e.dim());
  out.standard_error.resize(e.dim());
  std::vector<double> samples(e.n_trials() * e.dual_replicates());
  for (std::size_t x = 0; x < d; ++x) {
    for (std::size_t i = 0; i < e.n_trials(); ++i)
      for (std::size_t r = 0; r < e.dual_replicates(); ++r) samples[i * e.dual_replicates() + r] = e.dual(i, 0, r)[x];
    const MeanEstimate est = mean_estimate(samples);
    out.value(static_cast<Index>(x)) = est.mean;
    out.standard_error(static_cast<Index>(x)) = est.standard_error;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Martingale diagnostics

bool Prop3Report::verdict() const {
  return std::all_of(diagnostics.begin(), diagnostics.end(),
                     [](const MartingaleDiagnostic& d) { return d.informational || d.verdict; });
}

Prop3Report prop3_diagnostics(const DualEnsembles& ens, const ProbabilityVector& mu) {
  const Ensemble& E_mu = ens.under_mu;
  const Ensemble& E_bar = ens.under_mubar;
  const std::size_t n = E_mu.n_trials();
  const std::size_t last = E_mu.n_snapshots() - 1;
  const auto& times = E_mu.times();
  Prop3Report report;
  report.dual_initial = estimate_dual_initial(E_bar);

  // Part 2, pathwise: pi^mubar(gamma) = sum pi^mu = 1.
  double max_err = 0.0;
  for (const Ensemble* e : {&E_mu, &E_bar}) {
    for (std::size_t i = 0; i < e->n_trials(); ++i) {
      for (std::size_t s = 0; s < e->n_snapshots(); ++s) {
        const auto pm = e->pi_mu(i, s);
        const auto pb = e->pi_mubar(i, s);
        double v = 0.0;
        for (std::size_t x = 0; x < pm.size(); ++x) v += pb[x] * (pm[x] / pb[x]);
        max_err = std::max(max_err, std::abs(v - 1.0));
      }
    }
  }
  report.part2_max_error = max_err;
  MartingaleDiagnostic part2;
  part2.label = "part2_pathwise_identity";
  part2.window_start = 0.0;
  part2.window_end = times[last];
  part2.increment_mean = max_err;
  part2.n_trials = n;
  part2.verdict = max_err <= 1e-10;
  report.diagnostics.push_back(part2);

  std::vector<double> samples(n);
  // Part 2 for the dual estimates: E[pi_t^mubar(Y_t) - 1] = 0.
  for (std::size_t s = 0; s < last; ++s) {
    for (std::size_t i = 0; i < E_bar.n_trials(); ++i) samples[i] = dot(E_bar.pi_mubar(i, s), E_bar.dual(i, s, 0)) - 1.0;
    report.diagnostics.push_back(make_diagnostic("part2_dual_mean", times[s], times[s], mean_estimate(samples)));
  }

  auto pi_mu_Y = [](const Ensemble& e, std::size_t i, std::size_t s) { return dot(e.pi_mu(i, s), e.dual(i, s, 0)); };
  auto pi_mu_gamma = [](const Ensemble& e, std::size_t i, std::size_t s) { return e.gamma_variance(i, s) + 1.0; };

  for (std::size_t s = 0; s < last; ++s) {
    for (std::size_t i = 0; i < n; ++i) samples[i] = pi_mu_Y(E_mu, i, s + 1) - pi_mu_Y(E_mu, i, s);
    report.diagnostics.push_back(make_diagnostic("part3_increment", times[s], times[s + 1], mean_estimate(samples)));
  }
  for (std::size_t s = 0; s < last; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      samples[i] = std::exp(E_bar.log_martingale(i, s + 1)) * pi_mu_Y(E_bar, i, s + 1) -
                   std::exp(E_bar.log_martingale(i, s)) * pi_mu_Y(E_bar, i, s);
    }
    report.diagnostics.push_back(make_diagnostic("part4_increment", times[s], times[s + 1], mean_estimate(samples)));
  }

  // Terminal cross-checks against mu(Y_0) from the P^mubar ensemble.
  const double mu_y0 = mu.weights().dot(report.dual_initial.value);
  const double mu_y0_se =
      std::sqrt(mu.weights().cwiseProduct(report.dual_initial.standard_error).squaredNorm());
  for (std::size_t i = 0; i < n; ++i) samples[i] = pi_mu_gamma(E_mu, i, last);
  report.diagnostics.push_back(
      make_diagnostic("part3_terminal_vs_mu_Y0", 0.0, times[last], difference(mean_estimate(samples), mu_y0, mu_y0_se)));
  for (std::size_t i = 0; i < n; ++i) samples[i] = std::exp(E_bar.log_martingale(i, last)) * pi_mu_gamma(E_bar, i, last);
  report.diagnostics.push_back(
      make_diagnostic("part4_terminal_vs_mu_Y0", 0.0, times[last], difference(mean_estimate(samples), mu_y0, mu_y0_se)));

  for (std::size_t i = 0; i < n; ++i) samples[i] = std::exp(E_bar.log_martingale(i, last)) - 1.0;
  report.diagnostics.push_back(make_diagnostic("exp_martingale_mean_one", 0.0, times[last], mean_estimate(samples)));

  // The forward likelihood ratio gamma_t as a stand-in for Y_t.
  for (std::size_t s = 0; s < last; ++s) {
    for (std::size_t i = 0; i < n; ++i) samples[i] = pi_mu_gamma(E_mu, i, s + 1) - pi_mu_gamma(E_mu, i, s);
    report.diagnostics.push_back(
        make_diagnostic("part3_increment_gamma_candidate", times[s], times[s + 1], mean_estimate(samples), true));
  }
  for (std::size_t s = 0; s < last; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      samples[i] = std::exp(E_bar.log_martingale(i, s + 1)) * pi_mu_gamma(E_bar, i, s + 1) -
                   std::exp(E_bar.log_martingale(i, s)) * pi_mu_gamma(E_bar, i, s);
    }
    report.diagnostics.push_back(
        make_diagnostic("part4_increment_gamma_candidate", times[s], times[s + 1], mean_estimate(samples), true));
  }
  return report;
}

Prop3Report prop3_diagnostics(const FilterModel& model, const ProbabilityVector& mu, const ProbabilityVector& mu_bar,
                              double T, const MonteCarloOptions& options) {
  return prop3_diagnostics(simulate_dual_ensembles(model, mu, mu_bar, T, options, 1), mu);
}

// ---------------------------------------------------------------------------
// Backward variance inequalities

namespace {

struct DualInitialVariance {
  double value = 0.0;
  double standard_error = 0.0;
};

DualInitialVariance dual_initial_variance(const Ensemble& e, const ProbabilityVector& mu_bar) {
  const DualInitialEstimate y0 = estimate_dual_initial(e);
  const Vector& w = mu_bar.weights();
  const double mean = w.dot(y0.value);
  DualInitialVariance out;
  out.value = weighted_variance(w, y0.value);
  // delta method; the centering term has zero derivative
  double var = 0.0;
  for (Index x = 0; x < w.size(); ++x) {
    const double g = 2.0 * w(x) * (y0.value(x) - mean);
    var += g * g * y0.standard_error(x) * y0.standard_error(x);
  }
  out.standard_error = std::sqrt(var);
  return out;
}

}  // namespace

BackwardInequalityReport check_backward_variance_inequality(const Ensemble& E, const Generator& A,
                                                            const ProbabilityVector& mu,
                                                            const ProbabilityVector& mu_bar, double c) {
  if (!(c > 0.0)) {
    throw std::invalid_argument(
        "backward variance inequality: c must be positive; without a positive constant use the beta-weighted form");
  }
  if (E.prior() != SignalPrior::MuBar) throw std::invalid_argument("backward variance inequality: needs a P^mubar ensemble");
  const std::size_t n = E.n_trials();
  const std::size_t last = E.n_snapshots() - 1;
  const double T = E.times()[last];
  const double decay = std::exp(-c * T);

  BackwardInequalityReport r;
  r.c = c;
  const DualInitialVariance v0 = dual_initial_variance(E, mu_bar);
  r.var_initial = v0.value;
  r.var_initial_se = v0.standard_error;

  std::vector<double> terminal(n), energy_int(n), gap(n);
  for (std::size_t i = 0; i < n; ++i) terminal[i] = E.gamma_variance(i, last);
  r.var_terminal = mean_estimate(terminal);

  // int enr_t(Y_t) dt by the trapezoid rule on the window boundaries.
  const std::size_t reps = E.dual_replicates();
  for (std::size_t i = 0; i < n; ++i) {
    double integral = 0.0;
    double prev = 0.0;
    for (std::size_t s = 0; s <= last; ++s) {
      const auto pb = E.pi_mubar(i, s);
      const auto u = E.dual(i, s, 0);
      const auto v = (s == last || reps < 2) ? u : E.dual(i, s, 1);
      const double e_s = bilinear_energy(pb, A, u, v);
      if (s > 0) integral += 0.5 * (prev + e_s) * (E.times()[s] - E.times()[s - 1]);
      prev = e_s;
    }
    energy_int[i] = integral;
    gap[i] = integral - terminal[i];
  }
  const MeanEstimate energy_est = mean_estimate(energy_int);
  r.integrated_energy = energy_est.mean;
  r.integrated_energy_se = energy_est.standard_error;

  const double tol = kSigmas * std::hypot(v0.standard_error, decay * r.var_terminal.standard_error);
  r.bound = make_bound("var(Y_0) <= exp(-cT) var_T(Y_T)", r.var_initial, decay * r.var_terminal.mean, tol, T, n,
                       "Y_0 estimated from the dual representation");
  const MeanEstimate gap_est = mean_estimate(gap);
  r.energy_form = make_bound("var(Y_0) + int enr_t(Y_t) dt <= var_T(Y_T)", r.var_initial + r.integrated_energy,
                             r.var_terminal.mean, kSigmas * std::hypot(v0.standard_error, gap_est.standard_error), T, n,
                             "energy integral by trapezoid on the window boundaries only; coarse, not gating");
  r.energy_form.gating = false;
  const Vector gamma0 = mu.weights().cwiseQuotient(mu_bar.weights());
  r.gamma_candidate =
      make_bound("var(gamma_0) <= exp(-cT) var_T(gamma_T)", weighted_variance(mu_bar.weights(), gamma0),
                 decay * r.var_terminal.mean, kSigmas * decay * r.var_terminal.standard_error, T, n,
                 "gamma_t used as the dual process; informational");
  r.gamma_candidate.gating = false;
  return r;
}

BackwardInequalityReport check_backward_variance_inequality(const FilterModel& model, const ProbabilityVector& mu,
                                                            const ProbabilityVector& mu_bar, double T, double c,
                                                            const MonteCarloOptions& options) {
  if (!(c > 0.0)) {
    throw std::invalid_argument(
        "backward variance inequality: c must be positive; without a positive constant use the beta-weighted form");
  }
  const DualEnsembles ens = simulate_dual_ensembles(model, mu, mu_bar, T, options, 2);
  return check_backward_variance_inequality(ens.under_mubar, model.generator, mu, mu_bar, c);
}

BetaInequalityReport check_beta_weighted_inequality(const Ensemble& E, const ProbabilityVector& mu_bar, BetaKind kind) {
  const std::size_t n = E.n_trials();
  const std::size_t last = E.n_snapshots() - 1;
  const double T = E.times()[last];
  std::vector<double> weighted(n), integral(n);
  for (std::size_t i = 0; i < n; ++i) {
    integral[i] = kind == BetaKind::MinRow ? E.beta_min_row_integral(i, last) : E.beta_exact_integral(i, last);
    weighted[i] = std::exp(-integral[i]) * E.gamma_variance(i, last);
  }
  if (kind == BetaKind::ExactRayleigh &&
      std::all_of(integral.begin(), integral.end(), [](double v) { return v == 0.0; })) {
    throw std::invalid_argument("beta-weighted inequality: exact Rayleigh beta was not tracked in this ensemble");
  }
  BetaInequalityReport r;
  r.kind = kind;
  r.weighted_variance = mean_estimate(weighted);
  r.beta_integral = mean_estimate(integral);
  r.decay_certified = std::any_of(integral.begin(), integral.end(), [](double v) { return v > 0.0; });
  const DualInitialVariance v0 = dual_initial_variance(E, mu_bar);
  std::string note = std::string("beta = ") + beta_kind_name(kind);
  if (!r.decay_certified) note += "; int beta dt = 0 on every path, no decay implied";
  r.bound = make_bound("var(Y_0) <= E[exp(-int beta dt) V_T(Y_T)]", v0.value, r.weighted_variance.mean,
                       kSigmas * std::hypot(v0.standard_error, r.weighted_variance.standard_error), T, n, note);
  return r;
}

BetaInequalityReport check_beta_weighted_inequality(const FilterModel& model, const ProbabilityVector& mu,
                                                    const ProbabilityVector& mu_bar, double T, BetaKind kind,
                                                    const MonteCarloOptions& options) {
  MonteCarloOptions opts = options;
  opts.track_exact_beta = kind == BetaKind::ExactRayleigh;
  const DualEnsembles ens = simulate_dual_ensembles(model, mu, mu_bar, T, opts, 1);
  return check_beta_weighted_inequality(ens.under_mubar, mu_bar, kind);
}

// ---------------------------------------------------------------------------
// R_T and the filter stability bound

double prior_ratio_floor(const ProbabilityVector& mu, const ProbabilityVector& mu_bar) {
  double a = std::numeric_limits<double>::infinity();
  for (Index x = 0; x < mu.dim(); ++x)
    if (mu(x) > 0.0) a = std::min(a, mu_bar(x) / mu(x));
  return a;
}

namespace {

/// Squared ratio of means with a delta-method standard error.
std::pair<double, double> squared_ratio(std::span<const double> num, std::span<const double> den) {
  const MeanEstimate a = mean_estimate(num);
  const MeanEstimate b = mean_estimate(den);
  const double cov = mean_covariance(num, den);
  const double r = a.mean / b.mean;
  const double var_r = (a.standard_error * a.standard_error - 2.0 * r * cov + r * r * b.standard_error * b.standard_error) /
                       (b.mean * b.mean);
  return {r * r, 2.0 * std::abs(r) * std::sqrt(std::max(var_r, 0.0))};
}

}  // namespace

RtEstimate rt_estimators(const Ensemble& E_mu, const Ensemble& E_bar, const ProbabilityVector& mu,
                         const ProbabilityVector& mu_bar, std::size_t snapshot) {
  if (E_mu.n_trials() != E_bar.n_trials()) throw std::invalid_argument("rt: ensembles must have equal trial counts");
  const std::size_t n = E_mu.n_trials();
  std::vector<double> s_mu(n), s_bar(n), as_bar(n);
  for (std::size_t i = 0; i < n; ++i) {
    s_mu[i] = E_mu.gamma_variance(i, snapshot);
    s_bar[i] = E_bar.gamma_variance(i, snapshot);
    as_bar[i] = std::exp(E_bar.log_martingale(i, snapshot)) * s_bar[i];
  }
  RtEstimate r;
  r.a = prior_ratio_floor(mu, mu_bar);
  r.rt_lower_bound = r.a * r.a;
  r.s_under_mu = mean_estimate(s_mu);
  r.s_under_mubar = mean_estimate(s_bar);
  r.as_under_mubar = mean_estimate(as_bar);
  r.unstable = std::abs(r.s_under_mubar.mean) <= r.s_under_mubar.standard_error;
  const double T = E_bar.times()[snapshot];
  if (r.unstable) {
    r.rt_part3 = r.rt_part4 = std::numeric_limits<double>::quiet_NaN();
    r.prop5 = make_bound("a^2 <= R_T (part 3)", r.rt_lower_bound, r.rt_part3, 0.0, T, n,
                         "E^mubar[S_T] within one SE of zero; ratio unstable, no verdict");
    r.prop5.verdict = false;
    return r;
  }
  std::tie(r.rt_part3, r.rt_part3_se) = squared_ratio(s_mu, s_bar);
  std::tie(r.rt_part4, r.rt_part4_se) = squared_ratio(as_bar, s_bar);
  r.prop5 = make_bound("a^2 <= R_T (part 3)", r.rt_lower_bound, r.rt_part3, kSigmas * r.rt_part3_se, T, n);
  return r;
}

RtEstimate rt_estimators(const FilterModel& model, const ProbabilityVector& mu, const ProbabilityVector& mu_bar,
                         double T, const MonteCarloOptions& options) {
  require_trials(options);
  EnsembleConfig cfg;
  cfg.horizon = T;
  cfg.dt = resolve_dt(options, model.generator);
  cfg.n_trials = options.n_trials;
  cfg.seed = options.seed;
  cfg.filter = options.filter;
  cfg.martingale_form = options.martingale_form;
  cfg.snapshot_times = {TimeGrid::covering(T, cfg.dt).horizon()};
  const Ensemble E_mu = simulate_ensemble(model, mu, mu_bar, SignalPrior::Mu, cfg);
  const Ensemble E_bar = simulate_ensemble(model, mu, mu_bar, SignalPrior::MuBar, cfg);
  return rt_estimators(E_mu, E_bar, mu, mu_bar, 0);
}

bool Theorem1Report::verdict() const {
  return certified && std::all_of(bounds.begin(), bounds.end(), [](const BoundReport& b) { return b.verdict; });
}

Theorem1Report filter_stability_bound(const FilterModel& model, const ProbabilityVector& mu,
                                      const ProbabilityVector& mu_bar, const StateFunction& f,
                                      const std::vector<double>& horizons, std::optional<double> c,
                                      const MonteCarloOptions& options, double series_step) {
  require_trials(options);
  if (horizons.empty()) throw std::invalid_argument("theorem 1: need at least one horizon");
  if (f.dim() != model.dim()) throw DimensionMismatch("theorem 1: test function has the wrong dimension");
  Theorem1Report report;
  report.a = prior_ratio_floor(mu, mu_bar);
  if (!c) c = conditional_pi_constants(model.generator, mu_bar).best_certified();
  if (c && *c > 0.0) {
    report.c = c;
    report.certified = true;
  } else {
    report.note = "no positive conditional Poincare constant; no decay rate is certified";
  }

  const double dt = resolve_dt(options, model.generator);
  const double t_max = *std::max_element(horizons.begin(), horizons.end());
  const TimeGrid grid = TimeGrid::covering(t_max, dt);
  std::vector<std::size_t> steps;
  for (double t : horizons) steps.push_back(grid.index_of(t));
  if (series_step > 0.0) {
    const std::size_t stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(series_step / dt)));
    for (std::size_t k = 0; k <= grid.steps; k += stride) steps.push_back(k);
  }
  steps.push_back(grid.steps);
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());

  EnsembleConfig cfg;
  cfg.horizon = grid.horizon();
  cfg.dt = dt;
  cfg.n_trials = options.n_trials;
  cfg.seed = options.seed;
  cfg.filter = options.filter;
  cfg.martingale_form = options.martingale_form;
  for (std::size_t k : steps) cfg.snapshot_times.push_back(grid.time(k));
  const Ensemble E = simulate_ensemble(model, mu, mu_bar, SignalPrior::MuBar, cfg);

  const std::size_t n = E.n_trials();
  std::vector<double> samples(n);
  for (std::size_t s = 0; s < E.n_snapshots(); ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto pm = E.pi_mu(i, s);
      const auto pb = E.pi_mubar(i, s);
      double diff = 0.0;
      for (std::size_t x = 0; x < pm.size(); ++x) diff += (pm[x] - pb[x]) * f(static_cast<Index>(x));
      samples[i] = std::abs(diff);
    }
    report.l1_series.push_back(SeriesPoint{E.times()[s], mean_estimate(samples)});
  }

  if (!report.certified) return report;
  const Vector gamma0 = mu.weights().cwiseQuotient(mu_bar.weights());
  const double var_gamma0 = weighted_variance(mu_bar.weights(), gamma0);
  const double var_f = variance(mu_bar, f);
  const double a2 = report.a * report.a;
  for (double t : horizons) {
    const MeanEstimate& l1 = report.l1_series[snapshot_index(E, grid.time(grid.index_of(t)))].value;
    const double lhs = a2 * l1.mean * l1.mean;
    const double lhs_se = a2 * 2.0 * l1.mean * l1.standard_error;
    report.bounds.push_back(make_bound("a^2 (E^mubar|pi_T^mu(f) - pi_T^mubar(f)|)^2 <= exp(-cT) var(gamma_0) var(f)",
                                       lhs, std::exp(-*report.c * t) * var_gamma0 * var_f, kSigmas * lhs_se, t, n));
  }
  return report;
}

}  // namespace filtstab
