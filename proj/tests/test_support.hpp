#pragma once

#include "filtstab/chain_core.hpp"

#include <cmath>
#include <random>

namespace filtstab::testing {

inline Generator two_state(double l1, double l2) {
  Matrix A(2, 2);
  A << -l1, l1, l2, -l2;
  return Generator::from_rates(A);
}

inline Generator four_cycle() {
  Matrix A(4, 4);
  A << -1, 1, 0, 0, 0, -1, 1, 0, 0, 0, -1, 1, 1, 0, 0, -1;
  return Generator::from_rates(A);
}

inline FilterModel scalar_model(const Generator& A, std::initializer_list<double> h, double r = 1.0) {
  Matrix hm(static_cast<Index>(h.size()), 1);
  Index i = 0;
  for (double v : h) hm(i++, 0) = v;
  Matrix R(1, 1);
  R << r;
  return FilterModel::create(A, ObservationModel::create(hm, R));
}

inline FilterModel example1_model() { return scalar_model(two_state(1.0, 2.0), {1.0, 0.0}); }

/// Dense generator with off-diagonal rates uniform in [lo, hi].
inline Generator random_generator(std::mt19937_64& rng, Index d, double lo = 0.1, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix A = Matrix::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    double s = 0.0;
    for (Index j = 0; j < d; ++j) {
      if (i == j) continue;
      A(i, j) = u(rng);
      s += A(i, j);
    }
    A(i, i) = -s;
  }
  return Generator::from_rates(A);
}

/// Irreducible generator with some zero rates: a directed cycle plus random extra edges.
inline Generator random_sparse_generator(std::mt19937_64& rng, Index d) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::bernoulli_distribution keep(0.4);
  Matrix A = Matrix::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    A(i, (i + 1) % d) = u(rng);
    for (Index j = 0; j < d; ++j)
      if (j != i && j != (i + 1) % d && keep(rng)) A(i, j) = u(rng);
    A(i, i) = -(A.row(i).sum());
  }
  return Generator::from_rates(A);
}

inline Vector random_simplex(std::mt19937_64& rng, Index d, double floor = 0.0) {
  std::exponential_distribution<double> e(1.0);
  Vector w(d);
  for (Index i = 0; i < d; ++i) w(i) = e(rng) + floor;
  return w / w.sum();
}

inline Vector random_vector(std::mt19937_64& rng, Index d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v(i) = n(rng);
  return v;
}

/// exp(M) by scaling and squaring with a long Taylor series; independent of
/// the Pade-based routine used in the library.
inline Matrix taylor_expm(const Matrix& M) {
  const double norm = M.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  double scale = 1.0;
  while (norm * scale > 0.05) {
    scale *= 0.5;
    ++squarings;
  }
  const Matrix S = M * scale;
  Matrix term = Matrix::Identity(M.rows(), M.cols());
  Matrix sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * S / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// Invariant law by power iteration on the uniformized chain.
inline Vector power_iteration_invariant(const Generator& A) {
  const Index d = A.dim();
  const double q = 1.1 * A.max_exit_rate();
  const Matrix P = Matrix::Identity(d, d) + A.rates() / q;
  Vector p = Vector::Constant(d, 1.0 / static_cast<double>(d));
  for (int it = 0; it < 200000; ++it) {
    const Vector next = (p.transpose() * P).transpose();
    if ((next - p).cwiseAbs().maxCoeff() < 1e-16) return next;
    p = next;
  }
  return p;
}

}  // namespace filtstab::testing
