#include "filtstab/chain_core.hpp"
#include "filtstab/simulate.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace filtstab;
using namespace filtstab::testing;

namespace {

// Direct transcription of Gamma(f)(x) = sum_j A(x,j) (f(x) - f(j))^2.
double energy_by_definition(const Vector& w, const Matrix& A, const Vector& f) {
  double s = 0.0;
  for (Index x = 0; x < A.rows(); ++x)
    for (Index j = 0; j < A.cols(); ++j) s += w(x) * A(x, j) * (f(x) - f(j)) * (f(x) - f(j));
  return s;
}

double variance_by_definition(const Vector& w, const Vector& f) {
  const double m = w.dot(f);
  double s = 0.0;
  for (Index x = 0; x < w.size(); ++x) s += w(x) * (f(x) - m) * (f(x) - m);
  return s;
}

/// Energy and variance as symmetric matrices by polarization of the library
/// quadratic forms, then steepest descent on the Rayleigh quotient with an
/// exact two-dimensional line search.
double descend_rayleigh(const ProbabilityVector& w, const Generator& A, Vector f) {
  const Index d = A.dim();
  Matrix E(d, d), V(d, d);
  auto basis = [d](Index i) { return Vector(Vector::Unit(d, i)); };
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      const StateFunction p(basis(i) + basis(j)), m(basis(i) - basis(j));
      E(i, j) = 0.25 * (energy(w, A, p) - energy(w, A, m));
      V(i, j) = 0.25 * (variance(w, p) - variance(w, m));
    }
  }
  auto rq = [&](const Vector& v) { return v.dot(E * v) / v.dot(V * v); };
  for (int it = 0; it < 5000; ++it) {
    f -= Vector::Constant(d, w.weights().dot(f));
    f /= std::sqrt(f.dot(V * f));
    const double r = rq(f);
    Vector g = E * f - r * (V * f);
    g -= Vector::Constant(d, w.weights().dot(g));
    if (g.norm() < 1e-15) break;
    // minimize over span{f, g}: 2x2 generalized eigenproblem
    Matrix B(d, 2);
    B << f, g;
    const Matrix e2 = B.transpose() * E * B;
    const Matrix v2 = B.transpose() * V * B;
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(e2, v2);
    if (es.info() != Eigen::Success) break;
    f = B * es.eigenvectors().col(0);
  }
  return rq(f);
}

}  // namespace

TEST(Generator, AcceptsValidRatesAndRejectsInvalid) {
  EXPECT_NO_THROW(two_state(1.0, 2.0));
  Matrix neg(2, 2);
  neg << 1.0, -1.0, 2.0, -2.0;
  EXPECT_THROW(Generator::from_rates(neg), ModelError);
  Matrix rows(2, 2);
  rows << -1.0, 1.0 + 1e-9, 2.0, -2.0;
  EXPECT_THROW(Generator::from_rates(rows), ModelError);
  Matrix tiny(2, 2);
  tiny << -1.0, 1.0 + 1e-14, 2.0, -2.0;
  EXPECT_NO_THROW(Generator::from_rates(tiny));
  EXPECT_THROW(Generator::from_rates(Matrix(2, 3)), ModelError);
}

TEST(Generator, DetectsReducibility) {
  Matrix A(3, 3);
  A << -1, 1, 0, 0, -1, 1, 0, 0, 0;
  const Generator G = Generator::from_rates(A);
  EXPECT_FALSE(G.is_irreducible());
  ASSERT_TRUE(G.non_communicating_pair().has_value());
  EXPECT_THROW(invariant_measure(G), ReducibleGeneratorError);
  EXPECT_EQ(standard_pi_constant(G, ProbabilityVector::uniform(3)), 0.0);
  EXPECT_TRUE(four_cycle().is_irreducible());
}

TEST(ProbabilityVector, ValidatesSimplex) {
  EXPECT_NO_THROW(ProbabilityVector::from_weights(Vector{{0.25, 0.75}}));
  EXPECT_THROW(ProbabilityVector::from_weights(Vector{{-0.1, 1.1}}), ModelError);
  EXPECT_THROW(ProbabilityVector::from_weights(Vector{{0.5, 0.6}}), ModelError);
  EXPECT_FALSE(ProbabilityVector::point_mass(3, 1).everywhere_positive());
}

TEST(ObservationModel, RejectsBadNoise) {
  Matrix h(2, 1);
  h << 1, 0;
  Matrix R(1, 1);
  R << -1.0;
  EXPECT_THROW(ObservationModel::create(h, R), ModelError);
  Matrix R2(2, 2);
  R2 << 1.0, 0.5, 0.4, 1.0;
  EXPECT_THROW(ObservationModel::create(Matrix::Ones(2, 2), R2), ModelError);
  R << 1.0;
  const ObservationModel obs = ObservationModel::create(Matrix::Ones(3, 1), R);
  EXPECT_THROW(FilterModel::create(two_state(1, 2), obs), DimensionMismatch);
}

TEST(InvariantMeasure, TwoStateClosedForm) {
  const auto mu = invariant_measure(two_state(1.0, 2.0));
  EXPECT_NEAR(mu(0), 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(mu(1), 1.0 / 3.0, 1e-14);
  const auto cyc = invariant_measure(four_cycle());
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(cyc(i), 0.25, 1e-14);
}

TEST(InvariantMeasure, MatchesPowerIterationOnRandomChains) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const Index d = 2 + trial % 8;
    const Generator A = trial % 2 ? random_generator(rng, d) : random_sparse_generator(rng, d);
    const Vector mu = invariant_measure(A).weights();
    EXPECT_LT((mu.transpose() * A.rates()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(mu.sum(), 1.0, 1e-12);
    EXPECT_LT((mu - power_iteration_invariant(A)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Energy, MatchesDefinitionAndGeneratorIdentity) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = 2 + trial % 7;
    const Generator A = random_generator(rng, d);
    const Vector w = random_simplex(rng, d);
    const Vector f = random_vector(rng, d);
    const auto pw = ProbabilityVector::from_weights(w);
    const double e = energy(pw, A, StateFunction(f));
    EXPECT_NEAR(e, energy_by_definition(w, A.rates(), f), 1e-10 * (1.0 + std::abs(e)));
    EXPECT_NEAR(variance(pw, StateFunction(f)), variance_by_definition(w, f), 1e-12);
    const Vector gamma = carre_du_champ(A, StateFunction(f)).values();
    EXPECT_NEAR(w.dot(gamma), e, 1e-10 * (1.0 + std::abs(e)));
    // under the invariant law, energy is -2 mubar(f A f)
    const auto mu = invariant_measure(A);
    const Vector Af = A.rates() * f;
    EXPECT_NEAR(energy(mu, A, StateFunction(f)), -2.0 * mu.weights().dot(f.cwiseProduct(Af)), 1e-10);
  }
}

TEST(StandardPi, ExampleConstants) {
  const Generator A = two_state(1.0, 2.0);
  EXPECT_NEAR(standard_pi_constant(A, invariant_measure(A)), 6.0, 1e-9);
  const Generator C = four_cycle();
  EXPECT_NEAR(standard_pi_constant(C, invariant_measure(C)), 2.0, 1e-12);
  for (double l1 : {0.3, 1.0, 5.0}) {
    for (double l2 : {0.1, 2.0, 7.5}) {
      const Generator B = two_state(l1, l2);
      EXPECT_NEAR(standard_pi_constant(B, invariant_measure(B)), 2.0 * (l1 + l2), 1e-9 * (l1 + l2));
    }
  }
}

TEST(StandardPi, AgreesWithBruteForceOracle) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = 3 + trial % 4;
    const Generator A = trial % 3 == 0 ? random_sparse_generator(rng, d) : random_generator(rng, d);
    const auto mu = invariant_measure(A);
    const double c0 = standard_pi_constant(A, mu);
    // random search never beats the minimum
    double best = std::numeric_limits<double>::infinity();
    Vector best_f;
    for (int k = 0; k < 10000; ++k) {
      const Vector f = random_vector(rng, d);
      const double v = variance(mu, StateFunction(f));
      if (v < 1e-12) continue;
      const double r = energy(mu, A, StateFunction(f)) / v;
      if (r < best) {
        best = r;
        best_f = f;
      }
    }
    EXPECT_GE(best, c0 - 1e-9);
    // descent from the best random point reaches it
    const double refined = descend_rayleigh(mu, A, best_f);
    EXPECT_GE(refined, c0 - 1e-9 * c0);
    EXPECT_NEAR(refined, c0, 1e-6 * c0);
  }
}

TEST(RayleighQuotient, TwoStateClosedFormForAnyWeights) {
  const Generator A = two_state(1.0, 2.0);
  for (double p : {0.05, 0.3, 0.5, 0.9}) {
    const Vector w{{p, 1.0 - p}};
    const double expected = (p * 1.0 + (1.0 - p) * 2.0) / (p * (1.0 - p));
    EXPECT_NEAR(min_rayleigh_quotient(w, A), expected, 1e-10 * expected);
  }
  EXPECT_TRUE(std::isinf(min_rayleigh_quotient(Vector{{1.0, 0.0}}, A)));
}

TEST(ConditionalPi, ExampleConstants) {
  const Generator A = two_state(1.0, 2.0);
  const auto pc = conditional_pi_constants(A, invariant_measure(A));
  EXPECT_NEAR(pc.min_column_sum, 3.0, 1e-12);
  EXPECT_NEAR(pc.geometric_mean_min, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(pc.doeblin, 2.0, 1e-12);
  EXPECT_NEAR(pc.min_row_average, 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(pc.standard_c0, 6.0, 1e-9);
  ASSERT_TRUE(pc.best_certified().has_value());
  EXPECT_NEAR(*pc.best_certified(), 3.0, 1e-12);

  Matrix K = Matrix::Ones(3, 3);
  K.diagonal().setConstant(-2.0);
  const Generator G = Generator::from_rates(K);
  const auto pk = conditional_pi_constants(G, invariant_measure(G));
  EXPECT_NEAR(pk.min_column_sum, 3.0, 1e-12);
  EXPECT_NEAR(pk.geometric_mean_min, 1.0, 1e-12);
  EXPECT_NEAR(pk.doeblin, 1.0, 1e-12);
  EXPECT_NEAR(pk.min_row_average, 1.0, 1e-12);
}

TEST(ConditionalPi, CounterexampleHasNoConstant) {
  const Generator C = four_cycle();
  const auto mu = invariant_measure(C);
  const auto pc = conditional_pi_constants(C, mu);
  EXPECT_EQ(pc.min_column_sum, 0.0);
  EXPECT_EQ(pc.geometric_mean_min, 0.0);
  EXPECT_EQ(pc.doeblin, 0.0);
  EXPECT_EQ(pc.min_row_average, 0.0);
  EXPECT_TRUE(pc.certified().empty());
  EXPECT_FALSE(pc.best_certified().has_value());
  const auto pi = ProbabilityVector::from_weights(Vector{{0.5, 0.0, 0.5, 0.0}});
  const StateFunction F{1.0, 1.0, -1.0, -1.0};
  EXPECT_NEAR(conditional_energy(pi, C, F), 0.0, 1e-12);
  EXPECT_NEAR(conditional_variance(pi, F), 1.0, 1e-12);
}

TEST(ConditionalPi, SingleStateHasZeroConstants) {
  const Generator A = Generator::from_rates(Matrix::Zero(1, 1));
  const auto pc = conditional_pi_constants(A, ProbabilityVector::uniform(1));
  EXPECT_EQ(pc.min_column_sum, 0.0);
  EXPECT_EQ(pc.doeblin, 0.0);
  EXPECT_FALSE(pc.best_certified().has_value());
}

// Every certified constant bounds energy below by variance for every pi.
TEST(ConditionalPi, CertifiedConstantsHoldPointwise) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const Index d = 2 + trial % 6;
    const Generator A = random_generator(rng, d);
    const auto pc = conditional_pi_constants(A, invariant_measure(A));
    for (int k = 0; k < 20; ++k) {
      const auto pi = ProbabilityVector::from_weights(random_simplex(rng, d));
      const StateFunction F(random_vector(rng, d));
      const double e = conditional_energy(pi, A, F);
      const double v = conditional_variance(pi, F);
      for (const auto& [name, c] : pc.certified()) EXPECT_GE(e, c * v - 1e-10) << name;
    }
  }
}

TEST(ConditionalPi, TwoStateRandomPairs) {
  std::mt19937_64 rng(15);
  const Generator A = two_state(1.0, 2.0);
  for (int k = 0; k < 1000; ++k) {
    const auto pi = ProbabilityVector::from_weights(random_simplex(rng, 2));
    const StateFunction F(random_vector(rng, 2));
    EXPECT_GE(conditional_energy(pi, A, F), 3.0 * conditional_variance(pi, F) - 1e-12);
  }
}

TEST(ConditionalPi, MinRowAverageIsWeightedRowMinimum) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const Generator A = random_sparse_generator(rng, 5);
    const auto mu = invariant_measure(A);
    double expected = 0.0;
    for (Index i = 0; i < 5; ++i) {
      double m = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < 5; ++j)
        if (j != i) m = std::min(m, A(i, j));
      expected += mu(i) * m;
    }
    EXPECT_NEAR(conditional_pi_constants(A, mu).min_row_average, expected, 1e-14);
  }
}
