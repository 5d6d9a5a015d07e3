#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace filtstab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Raised when a model object violates one of its type invariants.
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when two objects that must live on the same state space do not.
class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by operations that need an irreducible generator.
/// `from` cannot reach `to` along positive-rate transitions.
class ReducibleGeneratorError : public std::domain_error {
 public:
  ReducibleGeneratorError(Index from, Index to);
  Index from;
  Index to;
};

inline constexpr double kRowSumTolerance = 1e-12;
inline constexpr double kSimplexTolerance = 1e-12;

/// Rate matrix of a continuous-time Markov chain on {0, ..., d-1}.
///
/// Off-diagonal entries are nonnegative and every row sums to zero within
/// kRowSumTolerance. Invalid matrices are rejected, never repaired.
class Generator {
 public:
  static Generator from_rates(Matrix rates);

  Index dim() const { return rates_.rows(); }
  const Matrix& rates() const { return rates_; }
  double operator()(Index i, Index j) const { return rates_(i, j); }
  double exit_rate(Index i) const { return -rates_(i, i); }
  double max_exit_rate() const;

  /// Strong connectivity of the digraph i -> j for A(i,j) > 0.
  bool is_irreducible() const;
  /// First ordered pair (i, j) with j unreachable from i, if any.
  std::optional<std::pair<Index, Index>> non_communicating_pair() const;

 private:
  explicit Generator(Matrix rates) : rates_(std::move(rates)) {}
  Matrix rates_;
};

/// Point of the probability simplex on d states.
class ProbabilityVector {
 public:
  static ProbabilityVector from_weights(Vector weights);
  static ProbabilityVector uniform(Index dim);
  static ProbabilityVector point_mass(Index dim, Index state);

  Index dim() const { return weights_.size(); }
  const Vector& weights() const { return weights_; }
  double operator()(Index i) const { return weights_(i); }

  bool everywhere_positive(double floor = 0.0) const;

 private:
  explicit ProbabilityVector(Vector w) : weights_(std::move(w)) {}
  Vector weights_;
};

/// Real function on the state space, stored as its d values.
class StateFunction {
 public:
  StateFunction() = default;
  explicit StateFunction(Vector values);
  StateFunction(std::initializer_list<double> values);

  Index dim() const { return values_.size(); }
  const Vector& values() const { return values_; }
  double operator()(Index i) const { return values_(i); }

 private:
  Vector values_;
};

/// Observation function h (d x m) and noise covariance R (m x m, SPD).
class ObservationModel {
 public:
  static ObservationModel create(Matrix h, Matrix noise_cov);

  Index dim() const { return h_.rows(); }
  Index channels() const { return h_.cols(); }
  const Matrix& h() const { return h_; }
  const Matrix& noise_cov() const { return noise_cov_; }
  const Matrix& noise_precision() const { return noise_precision_; }
  /// Lower Cholesky factor of R.
  const Matrix& noise_sqrt() const { return noise_sqrt_; }
  /// h R^{-1}, row x is h(x)^T R^{-1}.
  const Matrix& h_precision() const { return h_precision_; }
  /// h(x)^T R^{-1} h(x) per state.
  const Vector& h_energy() const { return h_energy_; }

 private:
  ObservationModel() = default;
  Matrix h_;
  Matrix noise_cov_;
  Matrix noise_precision_;
  Matrix noise_sqrt_;
  Matrix h_precision_;
  Vector h_energy_;
};

/// Signal generator together with its observation channel.
struct FilterModel {
  Generator generator;
  ObservationModel observation;

  static FilterModel create(Generator generator, ObservationModel observation);
  Index dim() const { return generator.dim(); }
};

struct PiConstants {
  double standard_c0 = 0.0;
  double min_column_sum = 0.0;
  double geometric_mean_min = 0.0;
  double doeblin = 0.0;
  double min_row_average = 0.0;

  /// Positive values among the constants that certify the conditional
  /// inequality for every horizon (column sum, geometric mean, Doeblin).
  std::vector<std::pair<std::string, double>> certified() const;
  /// Largest certified constant; empty when none is positive.
  std::optional<double> best_certified() const;
};

ProbabilityVector invariant_measure(const Generator& A);

StateFunction carre_du_champ(const Generator& A, const StateFunction& f);

double energy(const ProbabilityVector& mu, const Generator& A, const StateFunction& f);
double variance(const ProbabilityVector& mu, const StateFunction& f);
double expectation(const ProbabilityVector& mu, const StateFunction& f);

/// Infimum over nonconstant f of sum_i w(i) Gamma(f)(i) / Var_w(f).
///
/// Solved as a dense symmetric eigenproblem on the complement of constants.
/// Returns +infinity when w is concentrated on a single state.
double min_rayleigh_quotient(const Vector& weights, const Generator& A);

/// Best constant in energy >= c0 * variance under mu_bar. Returns 0 for a
/// reducible generator.
double standard_pi_constant(const Generator& A, const ProbabilityVector& mu_bar);

PiConstants conditional_pi_constants(const Generator& A, const ProbabilityVector& mu_bar);

/// min_{j != i} A(i, j) per state; 0 for a single-state chain.
Vector min_off_diagonal_rows(const Generator& A);

}  // namespace filtstab
