#pragma once

#include "filtstab/montecarlo.hpp"
#include "filtstab/simulate.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace filtstab {

/// Law of X_0 used to draw the signal: P^mu or P^mubar.
enum class SignalPrior { Mu, MuBar };

struct EnsembleConfig {
  double horizon = 1.0;
  double dt = 1e-3;
  std::size_t n_trials = 1000;
  std::uint64_t seed = 1;
  /// Grid times at which trial state is recorded.
  std::vector<double> snapshot_times;
  /// Estimate the dual process Y_t(x) at every snapshot before the horizon.
  bool dual_estimates = false;
  std::size_t dual_replicates = 1;
  bool track_exact_beta = false;
  FilterOptions filter;
  ExpMartingaleForm martingale_form = ExpMartingaleForm::DensityRatio;
};

/// Per-trial records of the pair of Wonham filters started from mu and
/// mubar on a common observation path.
///
/// Trial i of two ensembles built with the same seed shares its random
/// numbers, so the mu and mubar ensembles are coupled trial by trial.
///
/// Dual estimates: for a snapshot at t < T, replicate r holds, per state x,
/// one draw of pi_T^{t,x}(gamma_T) where the signal restarts from x at t,
/// fresh observations follow, and the filters for mu and mubar continue from
/// their time-t values. Its conditional mean given the observations up to t
/// is Y_t(x), the solution of the dual backward equation with terminal value
/// gamma_T. At t = T the record is gamma_T itself.
class Ensemble {
 public:
  std::size_t n_trials() const { return n_trials_; }
  std::size_t n_snapshots() const { return times_.size(); }
  Index dim() const { return dim_; }
  const std::vector<double>& times() const { return times_; }
  double horizon() const { return horizon_; }
  SignalPrior prior() const { return prior_; }
  std::size_t dual_replicates() const { return replicates_; }
  bool has_dual() const { return replicates_ > 0; }

  std::span<const double> pi_mu(std::size_t trial, std::size_t snap) const;
  std::span<const double> pi_mubar(std::size_t trial, std::size_t snap) const;
  double log_martingale(std::size_t trial, std::size_t snap) const { return scalar(trial, snap, 0); }
  double beta_min_row_integral(std::size_t trial, std::size_t snap) const { return scalar(trial, snap, 1); }
  double beta_exact_integral(std::size_t trial, std::size_t snap) const { return scalar(trial, snap, 2); }
  std::span<const double> dual(std::size_t trial, std::size_t snap, std::size_t replicate) const;

  /// pi^mu(gamma) - 1, evaluated as sum_x (pi_mu(x) - pi_mubar(x))^2 / pi_mubar(x).
  double gamma_variance(std::size_t trial, std::size_t snap) const;

 private:
  friend Ensemble simulate_ensemble(const FilterModel&, const ProbabilityVector&, const ProbabilityVector&,
                                    SignalPrior, const EnsembleConfig&);
  double scalar(std::size_t trial, std::size_t snap, std::size_t field) const {
    return scalars_[(trial * times_.size() + snap) * kScalars + field];
  }

  static constexpr std::size_t kScalars = 3;
  std::size_t n_trials_ = 0;
  Index dim_ = 0;
  double horizon_ = 0.0;
  SignalPrior prior_ = SignalPrior::MuBar;
  std::size_t replicates_ = 0;
  std::vector<double> times_;
  std::vector<double> pis_;
  std::vector<double> scalars_;
  std::vector<double> duals_;
};

Ensemble simulate_ensemble(const FilterModel& model, const ProbabilityVector& mu, const ProbabilityVector& mu_bar,
                           SignalPrior prior, const EnsembleConfig& config);

/// (1/T) int_0^T beta_t dt for min-row beta along the filter started at
/// mubar with X_0 ~ mubar, one value per independent path.
struct ErgodicBetaAverage {
  MeanEstimate average;
  /// sum_i mubar(i) min_{j != i} A(i, j).
  double target = 0.0;
  double horizon = 0.0;
  bool verdict() const { return std::abs(average.mean - target) <= 3.0 * average.standard_error; }
};

ErgodicBetaAverage ergodic_beta_average(const FilterModel& model, double horizon, std::size_t n_paths, double dt,
                                        std::uint64_t seed, FilterOptions filter = {});

}  // namespace filtstab
