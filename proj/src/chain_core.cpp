#include "filtstab/chain_core.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace filtstab {

namespace {

std::string pair_message(Index from, Index to) {
  std::ostringstream os;
  os << "generator is reducible: state " << to << " is not reachable from state " << from;
  return os.str();
}

void require_dim(Index expected, Index got, const char* what) {
  if (expected != got) {
    std::ostringstream os;
    os << what << ": dimension " << got << " does not match state space of size " << expected;
    throw DimensionMismatch(os.str());
  }
}

std::vector<bool> reachable_from(const Matrix& rates, Index start, bool reverse) {
  const Index d = rates.rows();
  std::vector<bool> seen(static_cast<std::size_t>(d), false);
  std::vector<Index> stack{start};
  seen[static_cast<std::size_t>(start)] = true;
  while (!stack.empty()) {
    const Index i = stack.back();
    stack.pop_back();
    for (Index j = 0; j < d; ++j) {
      const double rate = reverse ? rates(j, i) : rates(i, j);
      if (j != i && rate > 0.0 && !seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = true;
        stack.push_back(j);
      }
    }
  }
  return seen;
}

}  // namespace

ReducibleGeneratorError::ReducibleGeneratorError(Index from_state, Index to_state)
    : std::domain_error(pair_message(from_state, to_state)), from(from_state), to(to_state) {}

// ---------------------------------------------------------------------------
// Generator

Generator Generator::from_rates(Matrix rates) {
  const Index d = rates.rows();
  if (d < 1 || rates.cols() != d) {
    throw ModelError("generator: rate matrix must be square with at least one state");
  }
  for (Index i = 0; i < d; ++i) {
    double row_sum = 0.0;
    for (Index j = 0; j < d; ++j) {
      const double a = rates(i, j);
      if (!std::isfinite(a)) {
        std::ostringstream os;
        os << "generator: entry (" << i << ", " << j << ") is not finite";
        throw ModelError(os.str());
      }
      if (i != j && a < 0.0) {
        std::ostringstream os;
        os << "generator: off-diagonal entry (" << i << ", " << j << ") = " << a << " is negative";
        throw ModelError(os.str());
      }
      row_sum += a;
    }
    if (std::abs(row_sum) > kRowSumTolerance) {
      std::ostringstream os;
      os << "generator: row " << i << " sums to " << row_sum << " (tolerance " << kRowSumTolerance << ")";
      throw ModelError(os.str());
    }
  }
  return Generator(std::move(rates));
}

double Generator::max_exit_rate() const {
  double m = 0.0;
  for (Index i = 0; i < dim(); ++i) m = std::max(m, exit_rate(i));
  return m;
}

std::optional<std::pair<Index, Index>> Generator::non_communicating_pair() const {
  // Strongly connected iff every state reaches 0 and 0 reaches every state.
  const auto forward = reachable_from(rates_, 0, false);
  for (Index j = 0; j < dim(); ++j) {
    if (!forward[static_cast<std::size_t>(j)]) return std::make_pair(Index{0}, j);
  }
  const auto backward = reachable_from(rates_, 0, true);
  for (Index i = 0; i < dim(); ++i) {
    if (!backward[static_cast<std::size_t>(i)]) return std::make_pair(i, Index{0});
  }
  return std::nullopt;
}

bool Generator::is_irreducible() const { return !non_communicating_pair().has_value(); }

// ---------------------------------------------------------------------------
// ProbabilityVector / StateFunction

ProbabilityVector ProbabilityVector::from_weights(Vector weights) {
  if (weights.size() < 1) throw ModelError("probability vector: empty");
  double total = 0.0;
  for (Index i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights(i)) || weights(i) < 0.0) {
      std::ostringstream os;
      os << "probability vector: entry " << i << " = " << weights(i) << " is negative or not finite";
      throw ModelError(os.str());
    }
    total += weights(i);
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "probability vector: entries sum to " << total << ", not 1";
    throw ModelError(os.str());
  }
  return ProbabilityVector(std::move(weights));
}

ProbabilityVector ProbabilityVector::uniform(Index dim) {
  return ProbabilityVector(Vector::Constant(dim, 1.0 / static_cast<double>(dim)));
}

ProbabilityVector ProbabilityVector::point_mass(Index dim, Index state) {
  if (state < 0 || state >= dim) throw ModelError("probability vector: point mass outside state space");
  Vector w = Vector::Zero(dim);
  w(state) = 1.0;
  return ProbabilityVector(std::move(w));
}

bool ProbabilityVector::everywhere_positive(double floor) const {
  return (weights_.array() > floor).all();
}

StateFunction::StateFunction(Vector values) : values_(std::move(values)) {
  if (!values_.allFinite()) throw ModelError("state function: entries must be finite");
}

StateFunction::StateFunction(std::initializer_list<double> values)
    : StateFunction(Vector(Eigen::Map<const Vector>(values.begin(), static_cast<Index>(values.size())))) {}

// ---------------------------------------------------------------------------
// ObservationModel

ObservationModel ObservationModel::create(Matrix h, Matrix noise_cov) {
  if (h.rows() < 1 || h.cols() < 1) throw ModelError("observation model: h must be d x m with d, m >= 1");
  if (!h.allFinite()) throw ModelError("observation model: h has non-finite entries");
  const Index m = h.cols();
  if (noise_cov.rows() != m || noise_cov.cols() != m) {
    std::ostringstream os;
    os << "observation model: R must be " << m << " x " << m;
    throw ModelError(os.str());
  }
  if (!noise_cov.allFinite()) throw ModelError("observation model: R has non-finite entries");
  const double scale = std::max(1.0, noise_cov.cwiseAbs().maxCoeff());
  if ((noise_cov - noise_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ModelError("observation model: R is not symmetric");
  }
  Eigen::LLT<Matrix> llt(noise_cov);
  if (llt.info() != Eigen::Success || (llt.matrixL().toDenseMatrix().diagonal().array() <= 0.0).any()) {
    throw ModelError("observation model: R is not positive definite");
  }
  ObservationModel obs;
  obs.noise_sqrt_ = llt.matrixL();
  obs.noise_precision_ = llt.solve(Matrix::Identity(m, m));
  obs.h_precision_ = h * obs.noise_precision_;
  obs.h_energy_ = (obs.h_precision_.array() * h.array()).rowwise().sum();
  obs.h_ = std::move(h);
  obs.noise_cov_ = std::move(noise_cov);
  return obs;
}

FilterModel FilterModel::create(Generator generator, ObservationModel observation) {
  require_dim(generator.dim(), observation.dim(), "observation function h");
  return FilterModel{std::move(generator), std::move(observation)};
}

// ---------------------------------------------------------------------------
// Functionals

ProbabilityVector invariant_measure(const Generator& A) {
  if (auto pair = A.non_communicating_pair()) throw ReducibleGeneratorError(pair->first, pair->second);
  const Index d = A.dim();
  Matrix system = A.rates().transpose();
  system.row(d - 1).setOnes();
  Vector rhs = Vector::Zero(d);
  rhs(d - 1) = 1.0;
  Vector mu = system.fullPivLu().solve(rhs);

  const double residual = (mu.transpose() * A.rates()).cwiseAbs().maxCoeff();
  if (residual > 1e-10 * std::max(1.0, A.max_exit_rate()) || (mu.array() <= 0.0).any()) {
    std::ostringstream os;
    os << "invariant measure: solve failed (residual " << residual << ")";
    throw std::runtime_error(os.str());
  }
  mu /= mu.sum();
  return ProbabilityVector::from_weights(std::move(mu));
}

StateFunction carre_du_champ(const Generator& A, const StateFunction& f) {
  require_dim(A.dim(), f.dim(), "carre du champ");
  const Index d = A.dim();
  Vector g = Vector::Zero(d);
  for (Index x = 0; x < d; ++x) {
    double acc = 0.0;
    for (Index j = 0; j < d; ++j) {
      if (j == x) continue;
      const double diff = f(x) - f(j);
      acc += A(x, j) * diff * diff;
    }
    g(x) = acc;
  }
  return StateFunction(std::move(g));
}

double expectation(const ProbabilityVector& mu, const StateFunction& f) {
  require_dim(mu.dim(), f.dim(), "expectation");
  return mu.weights().dot(f.values());
}

double energy(const ProbabilityVector& mu, const Generator& A, const StateFunction& f) {
  require_dim(mu.dim(), A.dim(), "energy");
  return mu.weights().dot(carre_du_champ(A, f).values());
}

double variance(const ProbabilityVector& mu, const StateFunction& f) {
  const double mean = expectation(mu, f);
  return mu.weights().dot((f.values().array() - mean).square().matrix());
}

double min_rayleigh_quotient(const Vector& weights, const Generator& A) {
  require_dim(A.dim(), weights.size(), "Rayleigh quotient weights");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Index d = A.dim();
  if (d < 2) return kInf;

  // States carrying less than this fraction of the largest weight are
  // eliminated by a Schur complement instead of being rescaled by
  // w^{-1/2}, which would destroy the absolute accuracy of small eigenvalues.
  constexpr double kLightFraction = 1e-9;
  const double wmax = weights.maxCoeff();
  std::vector<Index> heavy;
  std::vector<Index> light;
  for (Index i = 0; i < d; ++i) (weights(i) > kLightFraction * wmax ? heavy : light).push_back(i);
  if (heavy.size() < 2) return kInf;

  // E(f) = sum_{i<j} (w_i A_ij + w_j A_ji) (f_i - f_j)^2 = f^T L f.
  Matrix L = Matrix::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = i + 1; j < d; ++j) {
      const double s = weights(i) * A(i, j) + weights(j) * A(j, i);
      L(i, j) -= s;
      L(j, i) -= s;
      L(i, i) += s;
      L(j, j) += s;
    }
  }

  const auto nh = static_cast<Index>(heavy.size());
  const auto nl = static_cast<Index>(light.size());
  Matrix Lhh(nh, nh);
  for (Index a = 0; a < nh; ++a)
    for (Index b = 0; b < nh; ++b) Lhh(a, b) = L(heavy[a], heavy[b]);
  if (nl > 0) {
    Matrix Lhl(nh, nl);
    Matrix Lll(nl, nl);
    for (Index a = 0; a < nh; ++a)
      for (Index b = 0; b < nl; ++b) Lhl(a, b) = L(heavy[a], light[b]);
    for (Index a = 0; a < nl; ++a)
      for (Index b = 0; b < nl; ++b) Lll(a, b) = L(light[a], light[b]);
    Lhh -= Lhl * Lll.completeOrthogonalDecomposition().pseudoInverse() * Lhl.transpose();
  }

  Vector wh(nh);
  for (Index a = 0; a < nh; ++a) wh(a) = weights(heavy[a]);
  wh /= wh.sum();
  const Vector inv_sqrt = wh.array().rsqrt();
  const Matrix M = inv_sqrt.asDiagonal() * Lhh * inv_sqrt.asDiagonal();

  // sqrt(w) spans the constants after scaling; restrict to its complement.
  const Vector u = wh.array().sqrt();
  Eigen::HouseholderQR<Matrix> qr(u);
  const Matrix Q = qr.householderQ();
  const Matrix basis = Q.rightCols(nh - 1);
  const Matrix reduced = basis.transpose() * M * basis;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(reduced, Eigen::EigenvaluesOnly);
  return std::max(0.0, eig.eigenvalues().minCoeff());
}

double standard_pi_constant(const Generator& A, const ProbabilityVector& mu_bar) {
  require_dim(A.dim(), mu_bar.dim(), "invariant measure");
  if (!A.is_irreducible()) return 0.0;
  if (A.dim() < 2) return 0.0;
  return min_rayleigh_quotient(mu_bar.weights(), A);
}

Vector min_off_diagonal_rows(const Generator& A) {
  const Index d = A.dim();
  Vector out = Vector::Zero(d);
  if (d < 2) return out;
  for (Index i = 0; i < d; ++i) {
    double m = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < d; ++j)
      if (j != i) m = std::min(m, A(i, j));
    out(i) = m;
  }
  return out;
}

PiConstants conditional_pi_constants(const Generator& A, const ProbabilityVector& mu_bar) {
  require_dim(A.dim(), mu_bar.dim(), "invariant measure");
  const Index d = A.dim();
  PiConstants pc;
  pc.standard_c0 = standard_pi_constant(A, mu_bar);
  if (d < 2) return pc;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  double geo = kInf;
  double doeblin = -kInf;
  for (Index j = 0; j < d; ++j) {
    double column_min = kInf;
    for (Index i = 0; i < d; ++i) {
      if (i == j) continue;
      column_min = std::min(column_min, A(i, j));
      geo = std::min(geo, std::sqrt(A(i, j) * A(j, i)));
    }
    pc.min_column_sum += column_min;
    doeblin = std::max(doeblin, column_min);
  }
  pc.geometric_mean_min = geo;
  pc.doeblin = doeblin;
  pc.min_row_average = mu_bar.weights().dot(min_off_diagonal_rows(A));
  return pc;
}

std::vector<std::pair<std::string, double>> PiConstants::certified() const {
  std::vector<std::pair<std::string, double>> out;
  if (min_column_sum > 0.0) out.emplace_back("min_column_sum", min_column_sum);
  if (geometric_mean_min > 0.0) out.emplace_back("geometric_mean_min", geometric_mean_min);
  if (doeblin > 0.0) out.emplace_back("doeblin", doeblin);
  return out;
}

std::optional<double> PiConstants::best_certified() const {
  std::optional<double> best;
  for (const auto& [name, value] : certified()) {
    if (!best || value > *best) best = value;
  }
  return best;
}

}  // namespace filtstab
