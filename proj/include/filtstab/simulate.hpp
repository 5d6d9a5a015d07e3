#pragma once

#include "filtstab/chain_core.hpp"
#include "filtstab/montecarlo.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace filtstab {

/// Uniform grid t_k = k * dt, k = 0..steps.
struct TimeGrid {
  double dt = 0.0;
  std::size_t steps = 0;

  /// Grid on [0, horizon]; dt must divide the horizon up to rounding.
  static TimeGrid covering(double horizon, double dt);

  double horizon() const { return dt * static_cast<double>(steps); }
  double time(std::size_t k) const { return dt * static_cast<double>(k); }
  /// Index of the grid point closest to t; t must lie on the grid.
  std::size_t index_of(double t) const;
};

/// 1e-3 / max_i |A(i,i)|, or 1e-3 for a chain with no jumps.
double default_time_step(const Generator& A);

inline constexpr double kDefaultPositivityFloor = 1e-14;

// ---------------------------------------------------------------------------
// Signal and observations

struct CtmcPath {
  Index initial_state = 0;
  std::vector<double> jump_times;
  /// states[0] is the initial state, states[k] the state after jump k.
  std::vector<Index> states;
  double horizon = 0.0;
  std::optional<std::string> warning;

  Index state_at(double t) const;
  /// Left-endpoint state at every step of the grid (size grid.steps).
  std::vector<Index> grid_states(const TimeGrid& grid) const;
};

/// Exact jump-chain sampling. The initial state is drawn from mu0 by
/// inverting its CDF with the first uniform of `rng`.
CtmcPath sample_ctmc_path(const Generator& A, const ProbabilityVector& mu0, double horizon, Rng& rng);
CtmcPath sample_ctmc_path(const Generator& A, const ProbabilityVector& mu0, double horizon, std::uint64_t seed);
CtmcPath sample_ctmc_path_from(const Generator& A, Index state, double horizon, Rng& rng);

struct ObservationPath {
  TimeGrid grid;
  Index channels = 0;
  /// Row-major steps x channels.
  std::vector<double> increments;

  std::span<const double> increment(std::size_t k) const {
    return {increments.data() + k * static_cast<std::size_t>(channels), static_cast<std::size_t>(channels)};
  }
};

/// dZ_k = h(X_{t_k}) dt + sqrt(dt) R^{1/2} xi_k.
ObservationPath sample_observations(const CtmcPath& path, const ObservationModel& obs, const TimeGrid& grid, Rng& rng);
ObservationPath sample_observations(const CtmcPath& path, const ObservationModel& obs, const TimeGrid& grid,
                                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Filters

enum class FilterScheme { Splitting, Euler };

const char* scheme_name(FilterScheme scheme);

struct FilterOptions {
  FilterScheme scheme = FilterScheme::Splitting;
  double positivity_floor = kDefaultPositivityFloor;
};

/// One step of the Wonham filter on a fixed grid.
///
/// Splitting: the increment dZ_k carries the likelihood of X_{t_k}, so the
/// step multiplies by exp(h^T R^{-1} dZ - h^T R^{-1} h dt / 2), normalizes,
/// then propagates with exp(A dt). Euler discretizes the Wonham SDE directly.
class WonhamStepper {
 public:
  WonhamStepper(const FilterModel& model, double dt, FilterOptions options = {});

  Index dim() const { return transition_.rows(); }
  double dt() const { return dt_; }
  const Matrix& transition() const { return transition_; }
  const FilterOptions& options() const { return options_; }

  /// Per-state log-likelihood of one increment.
  void log_weights(std::span<const double> dz, std::span<double> out) const;

  /// exp(log_w - max log_w); shared by every filter driven by the same dZ.
  void likelihood(std::span<const double> log_w, std::span<double> out) const;
  /// Splitting step using weights from log_weights().
  void correct_predict(std::span<double> pi, std::span<const double> log_w, std::size_t step) const;
  /// Splitting step using weights from likelihood().
  void correct_predict_scaled(std::span<double> pi, std::span<const double> lik, std::size_t step) const;
  void euler(std::span<double> pi, std::span<const double> dz, std::size_t step) const;
  void advance(std::span<double> pi, std::span<const double> dz, std::size_t step) const;

  /// pi <- pi exp(A dt), no observation.
  void predict(std::span<double> pi) const;

 private:
  void apply_floor(std::span<double> pi) const;

  Matrix rates_;
  ObservationModel obs_;
  double dt_;
  FilterOptions options_;
  Matrix transition_;
};

struct FilterTrajectory {
  TimeGrid grid;
  /// Row k is the distribution at t_k.
  Matrix distributions;
  Vector prior;
  std::string scheme;
  std::uint64_t seed = 0;

  ProbabilityVector at(std::size_t k) const;
  Index dim() const { return distributions.cols(); }
};

FilterTrajectory run_wonham(const FilterModel& model, const ObservationPath& Z, const ProbabilityVector& pi0,
                            FilterOptions options = {});

/// pi_t = mu0 exp(t A) on every grid point.
FilterTrajectory kolmogorov_forward(const Generator& A, const ProbabilityVector& mu0, const TimeGrid& grid);

/// gamma(x) = pi_mu(x) / pi_mubar(x).
StateFunction likelihood_ratio(const ProbabilityVector& pi_mu, const ProbabilityVector& pi_mubar);

double conditional_energy(const ProbabilityVector& pi, const Generator& A, const StateFunction& F);
double conditional_variance(const ProbabilityVector& pi, const StateFunction& F);

// ---------------------------------------------------------------------------
// Pathwise Rayleigh quotients

enum class BetaKind { ExactRayleigh, MinRow };

const char* beta_kind_name(BetaKind kind);

struct BetaPath {
  TimeGrid grid;
  BetaKind kind = BetaKind::MinRow;
  std::vector<double> values;
  /// Set where pi sits on a single state; values there are +infinity.
  std::vector<bool> degenerate;
};

/// sum_i pi(i) min_{j != i} A(i, j), given the row minima.
double beta_min_row(std::span<const double> pi, const Vector& row_minima);
double beta_exact_rayleigh(std::span<const double> pi, const Generator& A);

BetaPath pathwise_beta(const FilterTrajectory& traj, const Generator& A, BetaKind kind);

// ---------------------------------------------------------------------------
// Exponential martingale of the innovations gap

enum class ExpMartingaleForm {
  /// log sum_x pi^mu(x) L(x) - log sum_x pi^mubar(x) L(x), L(x) the Gaussian
  /// likelihood of dZ given X = x. Exact density ratio of the discretely
  /// observed increments, so E^mubar[A_t] = 1 holds on the grid.
  DensityRatio,
  /// D^T R^{-1} (dZ - pi_mubar(h) dt) - D^T R^{-1} D dt / 2; mean one up to O(dt).
  NoisePrecision,
  /// Unweighted exponent, as displayed for R = I.
  Literal,
};

const char* martingale_form_name(ExpMartingaleForm form);

/// DensityRatio increment from the two pre-step filters and the weights of
/// WonhamStepper::likelihood (any common scale cancels).
double log_density_ratio_increment(std::span<const double> pi_mu, std::span<const double> pi_mubar,
                                   std::span<const double> lik);

/// Increment of log A over one step, given pi^mu(h), pi^mubar(h) and dZ.
/// Not valid for DensityRatio, which needs the full distributions.
double log_martingale_increment(std::span<const double> h_mu, std::span<const double> h_mubar,
                                std::span<const double> dz, const ObservationModel& obs, double dt,
                                ExpMartingaleForm form);

/// A_t on every grid point, accumulated in the log domain; A_0 = 1.
std::vector<double> exponential_martingale(const FilterTrajectory& traj_mu, const FilterTrajectory& traj_mubar,
                                           const ObservationModel& obs, const ObservationPath& Z,
                                           ExpMartingaleForm form = ExpMartingaleForm::DensityRatio);

}  // namespace filtstab
