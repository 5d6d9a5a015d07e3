#pragma once

#include "filtstab/chain_core.hpp"
#include "filtstab/ensemble.hpp"
#include "filtstab/montecarlo.hpp"
#include "filtstab/simulate.hpp"

#include <optional>
#include <string>
#include <vector>

namespace filtstab {

/// Result of checking lhs <= rhs.
struct BoundReport {
  std::string inequality;
  double lhs = 0.0;
  double rhs = 0.0;
  double tolerance = 0.0;
  bool verdict = false;
  double horizon = 0.0;
  std::size_t n_trials = 0;
  std::string note;
  /// False for reported findings that do not enter the overall verdict.
  bool gating = true;

  double slack() const { return rhs - lhs; }
};

BoundReport make_bound(std::string inequality, double lhs, double rhs, double tolerance, double horizon = 0.0,
                       std::size_t n_trials = 0, std::string note = {});

/// Zero-mean test of a martingale increment: verdict is |mean| <= 3 SE.
struct MartingaleDiagnostic {
  std::string label;
  double window_start = 0.0;
  double window_end = 0.0;
  double increment_mean = 0.0;
  double standard_error = 0.0;
  std::size_t n_trials = 0;
  bool verdict = false;
  /// Reported finding that does not gate the overall verdict.
  bool informational = false;
};

MartingaleDiagnostic make_diagnostic(std::string label, double t0, double t1, const MeanEstimate& est,
                                     bool informational = false);

// ---------------------------------------------------------------------------
// Deterministic dual: -dy/dt = A y

struct DualOdePath {
  TimeGrid grid;
  /// Row k is y at t_k.
  Matrix values;

  StateFunction at(std::size_t k) const;
};

DualOdePath dual_backward_ode(const Generator& A, const StateFunction& yT, const TimeGrid& grid);

/// Grid on [0, T] with dt * max exit rate <= 1e-3 (at least 1000 steps).
TimeGrid dissipation_grid(const Generator& A, double horizon);

struct DissipationReport {
  /// |var(y_0) + int enr(y_t) dt - var(y_T)| against 1e-6 var(y_T).
  BoundReport identity;
  /// var(y_0) <= exp(-c0 T) var(y_T).
  BoundReport decay;
  double var_initial = 0.0;
  double var_terminal = 0.0;
  double integrated_energy = 0.0;
  double c0 = 0.0;
};

DissipationReport check_markov_variance_dissipation(const Generator& A, const ProbabilityVector& mu_bar,
                                                    const StateFunction& yT, const TimeGrid& grid);

struct StochasticStabilityReport {
  /// var(gamma_T) <= exp(-c0 T) var(gamma_0).
  BoundReport variance_decay;
  /// |pi_T^mu(f) - mubar(f)|^2 <= exp(-c0 T) var(gamma_0) var(f).
  BoundReport theorem;
  double c0 = 0.0;
  /// |pi_T^mu(f) - mubar(f)|.
  double deviation = 0.0;
};

StochasticStabilityReport stochastic_stability_bound(const Generator& A, const ProbabilityVector& mu_bar,
                                                     const ProbabilityVector& mu0, const StateFunction& f, double T);

// ---------------------------------------------------------------------------
// Filter duality, Monte Carlo

struct MonteCarloOptions {
  /// 0 selects default_time_step(A).
  double dt = 0.0;
  std::size_t n_trials = 10000;
  std::uint64_t seed = 1;
  /// Number of disjoint windows for martingale increments.
  std::size_t windows = 4;
  std::size_t min_trials = 1000;
  FilterOptions filter;
  ExpMartingaleForm martingale_form = ExpMartingaleForm::DensityRatio;
  /// Also integrate the exact Rayleigh beta along each mubar filter path.
  bool track_exact_beta = false;
};

double resolve_dt(const MonteCarloOptions& options, const Generator& A);

/// Coupled ensembles under P^mu and P^mubar with dual estimates at the
/// window boundaries.
struct DualEnsembles {
  Ensemble under_mu;
  Ensemble under_mubar;
};

DualEnsembles simulate_dual_ensembles(const FilterModel& model, const ProbabilityVector& mu,
                                      const ProbabilityVector& mu_bar, double T, const MonteCarloOptions& options,
                                      std::size_t dual_replicates = 2);

struct DualInitialEstimate {
  Vector value;
  Vector standard_error;
};

/// Y_0(x) = E^{delta_x}[pi_T^{delta_x}(gamma_T)], averaged over trials and replicates.
DualInitialEstimate estimate_dual_initial(const Ensemble& ensemble);

struct Prop3Report {
  std::vector<MartingaleDiagnostic> diagnostics;
  /// max |pi_t^mubar(gamma_t) - 1| over trials and window boundaries.
  double part2_max_error = 0.0;
  DualInitialEstimate dual_initial;
  bool verdict() const;
};

Prop3Report prop3_diagnostics(const DualEnsembles& ensembles, const ProbabilityVector& mu);
Prop3Report prop3_diagnostics(const FilterModel& model, const ProbabilityVector& mu, const ProbabilityVector& mu_bar,
                              double T, const MonteCarloOptions& options);

struct BackwardInequalityReport {
  /// var(Y_0) <= exp(-cT) var_T(Y_T), Y_T = gamma_T.
  BoundReport bound;
  /// var(Y_0) + int enr_t(Y_t) dt <= var_T(Y_T), quadrature on the window grid.
  BoundReport energy_form;
  /// Same inequality with gamma_0 in place of Y_0; reported, not gating.
  BoundReport gamma_candidate;
  double c = 0.0;
  MeanEstimate var_terminal;
  double var_initial = 0.0;
  double var_initial_se = 0.0;
  double integrated_energy = 0.0;
  double integrated_energy_se = 0.0;
};

BackwardInequalityReport check_backward_variance_inequality(const Ensemble& under_mubar, const Generator& A,
                                                            const ProbabilityVector& mu,
                                                            const ProbabilityVector& mu_bar, double c);
BackwardInequalityReport check_backward_variance_inequality(const FilterModel& model, const ProbabilityVector& mu,
                                                            const ProbabilityVector& mu_bar, double T, double c,
                                                            const MonteCarloOptions& options);

struct BetaInequalityReport {
  /// var(Y_0) <= E[exp(-int beta) V_T(Y_T)].
  BoundReport bound;
  BetaKind kind = BetaKind::MinRow;
  MeanEstimate weighted_variance;
  MeanEstimate beta_integral;
  /// False when int beta dt vanishes on every path: no decay is implied.
  bool decay_certified = false;
};

BetaInequalityReport check_beta_weighted_inequality(const Ensemble& under_mubar, const ProbabilityVector& mu_bar,
                                                    BetaKind kind);
BetaInequalityReport check_beta_weighted_inequality(const FilterModel& model, const ProbabilityVector& mu,
                                                    const ProbabilityVector& mu_bar, double T, BetaKind kind,
                                                    const MonteCarloOptions& options);

struct RtEstimate {
  double a = 0.0;
  double rt_lower_bound = 0.0;
  double rt_part3 = 0.0;
  double rt_part3_se = 0.0;
  double rt_part4 = 0.0;
  double rt_part4_se = 0.0;
  MeanEstimate s_under_mu;
  MeanEstimate s_under_mubar;
  MeanEstimate as_under_mubar;
  /// E^mubar[S_T] within one SE of zero: ratios carry no information.
  bool unstable = false;
  /// a^2 <= rt_part3 + 3 SE; only meaningful when !unstable.
  BoundReport prop5;
};

/// a = min_x mubar(x) / mu(x).
double prior_ratio_floor(const ProbabilityVector& mu, const ProbabilityVector& mu_bar);

RtEstimate rt_estimators(const Ensemble& under_mu, const Ensemble& under_mubar, const ProbabilityVector& mu,
                         const ProbabilityVector& mu_bar, std::size_t snapshot);
RtEstimate rt_estimators(const FilterModel& model, const ProbabilityVector& mu, const ProbabilityVector& mu_bar,
                         double T, const MonteCarloOptions& options);

struct SeriesPoint {
  double t = 0.0;
  MeanEstimate value;
};

struct Theorem1Report {
  /// Empty when no positive rate is available.
  std::optional<double> c;
  bool certified = false;
  double a = 0.0;
  std::vector<BoundReport> bounds;
  /// E^mubar |pi_t^mu(f) - pi_t^mubar(f)| on the snapshot grid.
  std::vector<SeriesPoint> l1_series;
  std::string note;
  bool verdict() const;
};

/// c defaults to the best certified conditional constant of the generator.
Theorem1Report filter_stability_bound(const FilterModel& model, const ProbabilityVector& mu,
                                      const ProbabilityVector& mu_bar, const StateFunction& f,
                                      const std::vector<double>& horizons, std::optional<double> c,
                                      const MonteCarloOptions& options, double series_step = 0.1);

}  // namespace filtstab
