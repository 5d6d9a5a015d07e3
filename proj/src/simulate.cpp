#include "filtstab/simulate.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace filtstab {

namespace {

constexpr std::size_t kStackStates = 64;

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

Index draw_state(const Vector& weights, double u) {
  double cumulative = 0.0;
  const Index d = weights.size();
  for (Index i = 0; i < d; ++i) {
    cumulative += weights(i);
    if (u < cumulative) return i;
  }
  // u landed in the rounding gap above the last partial sum
  for (Index i = d - 1; i >= 0; --i)
    if (weights(i) > 0.0) return i;
  return d - 1;
}

void require_same_dim(Index a, Index b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": dimensions " << a << " and " << b << " differ";
    throw DimensionMismatch(os.str());
  }
}

Eigen::Map<const Vector> as_vector(std::span<const double> s) {
  return {s.data(), static_cast<Index>(s.size())};
}

}  // namespace

// ---------------------------------------------------------------------------
// TimeGrid

TimeGrid TimeGrid::covering(double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon >= 0.0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("time grid: need dt > 0 and a finite horizon >= 0");
  }
  const double ratio = horizon / dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-6 * std::max(1.0, ratio)) {
    std::ostringstream os;
    os << "time grid: dt = " << dt << " does not divide horizon " << horizon;
    throw std::invalid_argument(os.str());
  }
  return TimeGrid{dt, static_cast<std::size_t>(rounded)};
}

std::size_t TimeGrid::index_of(double t) const {
  const double ratio = t / dt;
  const double rounded = std::round(ratio);
  if (rounded < 0.0 || rounded > static_cast<double>(steps) || std::abs(ratio - rounded) > 1e-6 * std::max(1.0, ratio)) {
    std::ostringstream os;
    os << "time grid: t = " << t << " is not a grid point";
    throw std::invalid_argument(os.str());
  }
  return static_cast<std::size_t>(rounded);
}

double default_time_step(const Generator& A) {
  const double rate = A.max_exit_rate();
  return rate > 0.0 ? 1e-3 / rate : 1e-3;
}

// ---------------------------------------------------------------------------
// Signal

Index CtmcPath::state_at(double t) const {
  const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
  return states[static_cast<std::size_t>(it - jump_times.begin())];
}

std::vector<Index> CtmcPath::grid_states(const TimeGrid& grid) const {
  std::vector<Index> out(grid.steps);
  std::size_t next_jump = 0;
  for (std::size_t k = 0; k < grid.steps; ++k) {
    const double t = grid.time(k);
    while (next_jump < jump_times.size() && jump_times[next_jump] <= t) ++next_jump;
    out[k] = states[next_jump];
  }
  return out;
}

CtmcPath sample_ctmc_path_from(const Generator& A, Index state, double horizon, Rng& rng) {
  if (!(horizon > 0.0)) throw std::invalid_argument("ctmc path: horizon must be positive");
  if (state < 0 || state >= A.dim()) throw std::invalid_argument("ctmc path: initial state out of range");
  CtmcPath path;
  path.initial_state = state;
  path.horizon = horizon;
  path.states.push_back(state);
  double t = 0.0;
  Index current = state;
  for (;;) {
    const double q = A.exit_rate(current);
    if (q <= 0.0) {
      std::ostringstream os;
      os << "absorbing state " << current << " reached at t = " << t;
      path.warning = os.str();
      break;
    }
    t += -std::log1p(-uniform01(rng)) / q;
    if (t >= horizon) break;
    const double target = uniform01(rng) * q;
    double cumulative = 0.0;
    Index next = current;
    for (Index j = 0; j < A.dim(); ++j) {
      if (j == current || A(current, j) <= 0.0) continue;
      cumulative += A(current, j);
      next = j;
      if (target < cumulative) break;
    }
    path.jump_times.push_back(t);
    path.states.push_back(next);
    current = next;
  }
  return path;
}

CtmcPath sample_ctmc_path(const Generator& A, const ProbabilityVector& mu0, double horizon, Rng& rng) {
  require_same_dim(A.dim(), mu0.dim(), "ctmc path");
  const Index x0 = draw_state(mu0.weights(), uniform01(rng));
  return sample_ctmc_path_from(A, x0, horizon, rng);
}

CtmcPath sample_ctmc_path(const Generator& A, const ProbabilityVector& mu0, double horizon, std::uint64_t seed) {
  Rng rng = stream_rng(seed, 0, streams::kSignal);
  return sample_ctmc_path(A, mu0, horizon, rng);
}

ObservationPath sample_observations(const CtmcPath& path, const ObservationModel& obs, const TimeGrid& grid, Rng& rng) {
  if (std::abs(path.horizon - grid.horizon()) > 1e-9 * std::max(1.0, path.horizon)) {
    throw std::invalid_argument("observations: grid does not cover the signal path horizon");
  }
  const Index m = obs.channels();
  ObservationPath Z;
  Z.grid = grid;
  Z.channels = m;
  Z.increments.resize(grid.steps * static_cast<std::size_t>(m));
  const auto states = path.grid_states(grid);
  const double sqrt_dt = std::sqrt(grid.dt);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Matrix& L = obs.noise_sqrt();
  std::array<double, kStackStates> xi_stack{};
  std::vector<double> xi_heap;
  double* xi = xi_stack.data();
  if (static_cast<std::size_t>(m) > kStackStates) {
    xi_heap.resize(static_cast<std::size_t>(m));
    xi = xi_heap.data();
  }
  for (std::size_t k = 0; k < grid.steps; ++k) {
    for (Index c = 0; c < m; ++c) xi[c] = normal(rng);
    double* out = Z.increments.data() + k * static_cast<std::size_t>(m);
    const Index x = states[k];
    for (Index r = 0; r < m; ++r) {
      double noise = 0.0;
      for (Index c = 0; c <= r; ++c) noise += L(r, c) * xi[c];
      out[r] = obs.h()(x, r) * grid.dt + sqrt_dt * noise;
    }
  }
  return Z;
}

ObservationPath sample_observations(const CtmcPath& path, const ObservationModel& obs, const TimeGrid& grid,
                                    std::uint64_t seed) {
  Rng rng = stream_rng(seed, 0, streams::kObservation);
  return sample_observations(path, obs, grid, rng);
}

// ---------------------------------------------------------------------------
// Filters

const char* scheme_name(FilterScheme scheme) {
  switch (scheme) {
    case FilterScheme::Splitting: return "splitting";
    case FilterScheme::Euler: return "euler";
  }
  return "unknown";
}

WonhamStepper::WonhamStepper(const FilterModel& model, double dt, FilterOptions options)
    : rates_(model.generator.rates()),
      obs_(model.observation),
      dt_(dt),
      options_(options),
      transition_((model.generator.rates() * dt).exp()) {
  if (!(dt > 0.0)) throw std::invalid_argument("wonham: dt must be positive");
  if (!(options.positivity_floor >= 0.0)) throw std::invalid_argument("wonham: positivity floor must be >= 0");
}

void WonhamStepper::log_weights(std::span<const double> dz, std::span<double> out) const {
  const Index d = dim();
  const Index m = obs_.channels();
  const Matrix& hp = obs_.h_precision();
  const Vector& he = obs_.h_energy();
  for (Index x = 0; x < d; ++x) {
    double s = 0.0;
    for (Index c = 0; c < m; ++c) s += hp(x, c) * dz[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(x)] = s - 0.5 * he(x) * dt_;
  }
}

void WonhamStepper::apply_floor(std::span<double> pi) const {
  const double floor = options_.positivity_floor;
  bool clamped = false;
  for (double& p : pi) {
    if (p < floor) {
      p = floor;
      clamped = true;
    }
  }
  if (clamped) {
    double total = 0.0;
    for (double p : pi) total += p;
    for (double& p : pi) p /= total;
  }
}

void WonhamStepper::predict(std::span<double> pi) const {
  const auto d = static_cast<std::size_t>(dim());
  std::array<double, kStackStates> stack;
  std::vector<double> heap;
  double* tmp = stack.data();
  if (d > kStackStates) {
    heap.resize(d);
    tmp = heap.data();
  }
  // column j of the column-major transition matrix is contiguous
  const double* P = transition_.data();
  for (std::size_t j = 0; j < d; ++j) {
    const double* col = P + j * d;
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += pi[i] * col[i];
    tmp[j] = s;
  }
  for (std::size_t j = 0; j < d; ++j) pi[j] = tmp[j];
}

void WonhamStepper::likelihood(std::span<const double> log_w, std::span<double> out) const {
  double shift = -std::numeric_limits<double>::infinity();
  for (double w : log_w) shift = std::max(shift, w);
  for (std::size_t x = 0; x < log_w.size(); ++x) out[x] = std::exp(log_w[x] - shift);
}

void WonhamStepper::correct_predict_scaled(std::span<double> pi, std::span<const double> lik, std::size_t step) const {
  double total = 0.0;
  for (std::size_t x = 0; x < pi.size(); ++x) {
    pi[x] *= lik[x];
    total += pi[x];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    std::ostringstream os;
    os << "wonham: normalization constant underflow at step " << step;
    throw std::runtime_error(os.str());
  }
  for (double& p : pi) p /= total;
  predict(pi);
  apply_floor(pi);
}

void WonhamStepper::correct_predict(std::span<double> pi, std::span<const double> log_w, std::size_t step) const {
  std::array<double, kStackStates> stack;
  std::vector<double> heap;
  std::span<double> lik(stack.data(), pi.size());
  if (pi.size() > kStackStates) {
    heap.resize(pi.size());
    lik = heap;
  }
  likelihood(log_w, lik);
  correct_predict_scaled(pi, lik, step);
}

void WonhamStepper::euler(std::span<double> pi, std::span<const double> dz, std::size_t step) const {
  const Index d = dim();
  const Index m = obs_.channels();
  const Matrix& h = obs_.h();
  const Matrix& prec = obs_.noise_precision();
  std::array<double, kStackStates> mean_h{};
  std::array<double, kStackStates> innov{};
  if (m > static_cast<Index>(kStackStates) || d > static_cast<Index>(kStackStates)) {
    throw std::invalid_argument("wonham: euler scheme supports at most 64 states and channels");
  }
  for (Index c = 0; c < m; ++c) {
    double s = 0.0;
    for (Index x = 0; x < d; ++x) s += pi[static_cast<std::size_t>(x)] * h(x, c);
    mean_h[static_cast<std::size_t>(c)] = s;
  }
  // R^{-1} (dZ - pi(h) dt)
  for (Index r = 0; r < m; ++r) {
    double s = 0.0;
    for (Index c = 0; c < m; ++c) s += prec(r, c) * (dz[static_cast<std::size_t>(c)] - mean_h[static_cast<std::size_t>(c)] * dt_);
    innov[static_cast<std::size_t>(r)] = s;
  }
  std::array<double, kStackStates> next{};
  for (Index x = 0; x < d; ++x) {
    double drift = 0.0;
    for (Index i = 0; i < d; ++i) drift += pi[static_cast<std::size_t>(i)] * rates_(i, x);
    double gain = 0.0;
    for (Index c = 0; c < m; ++c) gain += (h(x, c) - mean_h[static_cast<std::size_t>(c)]) * innov[static_cast<std::size_t>(c)];
    const double p = pi[static_cast<std::size_t>(x)];
    next[static_cast<std::size_t>(x)] = p + drift * dt_ + p * gain;
  }
  double total = 0.0;
  for (Index x = 0; x < d; ++x) {
    double& v = next[static_cast<std::size_t>(x)];
    v = std::max(v, options_.positivity_floor);
    total += v;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    std::ostringstream os;
    os << "wonham: euler step produced an invalid distribution at step " << step;
    throw std::runtime_error(os.str());
  }
  for (Index x = 0; x < d; ++x) pi[static_cast<std::size_t>(x)] = next[static_cast<std::size_t>(x)] / total;
}

void WonhamStepper::advance(std::span<double> pi, std::span<const double> dz, std::size_t step) const {
  if (options_.scheme == FilterScheme::Euler) {
    euler(pi, dz, step);
    return;
  }
  std::array<double, kStackStates> stack{};
  std::vector<double> heap;
  std::span<double> w(stack.data(), pi.size());
  if (pi.size() > kStackStates) {
    heap.resize(pi.size());
    w = heap;
  }
  log_weights(dz, w);
  correct_predict(pi, w, step);
}

ProbabilityVector FilterTrajectory::at(std::size_t k) const {
  return ProbabilityVector::from_weights(distributions.row(static_cast<Index>(k)).transpose());
}

FilterTrajectory run_wonham(const FilterModel& model, const ObservationPath& Z, const ProbabilityVector& pi0,
                            FilterOptions options) {
  require_same_dim(model.dim(), pi0.dim(), "wonham prior");
  if (Z.channels != model.observation.channels()) throw DimensionMismatch("wonham: observation channel count differs");
  const WonhamStepper stepper(model, Z.grid.dt, options);
  const Index d = model.dim();
  FilterTrajectory traj;
  traj.grid = Z.grid;
  traj.prior = pi0.weights();
  traj.scheme = scheme_name(options.scheme);
  // row-major scratch; Eigen storage is column-major
  std::vector<double> pi(pi0.weights().data(), pi0.weights().data() + d);
  traj.distributions.resize(static_cast<Index>(Z.grid.steps + 1), d);
  traj.distributions.row(0) = pi0.weights().transpose();
  for (std::size_t k = 0; k < Z.grid.steps; ++k) {
    stepper.advance(pi, Z.increment(k), k);
    traj.distributions.row(static_cast<Index>(k + 1)) = as_vector(pi).transpose();
  }
  return traj;
}

FilterTrajectory kolmogorov_forward(const Generator& A, const ProbabilityVector& mu0, const TimeGrid& grid) {
  require_same_dim(A.dim(), mu0.dim(), "kolmogorov initial law");
  const Matrix P = (A.rates() * grid.dt).exp();
  FilterTrajectory traj;
  traj.grid = grid;
  traj.prior = mu0.weights();
  traj.scheme = "kolmogorov";
  traj.distributions.resize(static_cast<Index>(grid.steps + 1), A.dim());
  Eigen::RowVectorXd pi = mu0.weights().transpose();
  traj.distributions.row(0) = pi;
  for (std::size_t k = 0; k < grid.steps; ++k) {
    pi = pi * P;
    traj.distributions.row(static_cast<Index>(k + 1)) = pi;
  }
  return traj;
}

StateFunction likelihood_ratio(const ProbabilityVector& pi_mu, const ProbabilityVector& pi_mubar) {
  require_same_dim(pi_mu.dim(), pi_mubar.dim(), "likelihood ratio");
  Vector gamma(pi_mu.dim());
  for (Index x = 0; x < pi_mu.dim(); ++x) {
    if (!(pi_mubar(x) > 0.0)) {
      std::ostringstream os;
      os << "likelihood ratio: reference posterior vanishes at state " << x
         << "; filter outputs are kept above the positivity floor, so this prior violates that contract";
      throw std::domain_error(os.str());
    }
    gamma(x) = pi_mu(x) / pi_mubar(x);
  }
  return StateFunction(std::move(gamma));
}

double conditional_energy(const ProbabilityVector& pi, const Generator& A, const StateFunction& F) {
  return energy(pi, A, F);
}

double conditional_variance(const ProbabilityVector& pi, const StateFunction& F) { return variance(pi, F); }

// ---------------------------------------------------------------------------
// Beta

const char* beta_kind_name(BetaKind kind) {
  switch (kind) {
    case BetaKind::ExactRayleigh: return "exact_rayleigh";
    case BetaKind::MinRow: return "min_row";
  }
  return "unknown";
}

double beta_min_row(std::span<const double> pi, const Vector& row_minima) {
  double s = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) s += pi[i] * row_minima(static_cast<Index>(i));
  return s;
}

double beta_exact_rayleigh(std::span<const double> pi, const Generator& A) {
  return min_rayleigh_quotient(as_vector(pi), A);
}

BetaPath pathwise_beta(const FilterTrajectory& traj, const Generator& A, BetaKind kind) {
  require_same_dim(A.dim(), traj.dim(), "pathwise beta");
  BetaPath out;
  out.grid = traj.grid;
  out.kind = kind;
  const auto n = static_cast<std::size_t>(traj.distributions.rows());
  out.values.resize(n);
  out.degenerate.resize(n);
  const Vector minima = min_off_diagonal_rows(A);
  Vector row(traj.dim());
  for (std::size_t k = 0; k < n; ++k) {
    row = traj.distributions.row(static_cast<Index>(k)).transpose();
    const std::span<const double> pi(row.data(), static_cast<std::size_t>(row.size()));
    const double v = kind == BetaKind::MinRow ? beta_min_row(pi, minima) : beta_exact_rayleigh(pi, A);
    out.values[k] = v;
    out.degenerate[k] = std::isinf(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exponential martingale

const char* martingale_form_name(ExpMartingaleForm form) {
  switch (form) {
    case ExpMartingaleForm::DensityRatio: return "density_ratio";
    case ExpMartingaleForm::NoisePrecision: return "noise_precision";
    case ExpMartingaleForm::Literal: return "literal";
  }
  return "unknown";
}

double log_density_ratio_increment(std::span<const double> pi_mu, std::span<const double> pi_mubar,
                                   std::span<const double> lik) {
  double a = 0.0, b = 0.0;
  for (std::size_t x = 0; x < lik.size(); ++x) {
    a += pi_mu[x] * lik[x];
    b += pi_mubar[x] * lik[x];
  }
  return std::log(a) - std::log(b);
}

double log_martingale_increment(std::span<const double> h_mu, std::span<const double> h_mubar,
                                std::span<const double> dz, const ObservationModel& obs, double dt,
                                ExpMartingaleForm form) {
  if (form == ExpMartingaleForm::DensityRatio) {
    throw std::invalid_argument("log_martingale_increment: the density-ratio form needs the filter distributions");
  }
  const auto m = static_cast<Index>(dz.size());
  double linear = 0.0;
  double quadratic = 0.0;
  if (form == ExpMartingaleForm::Literal) {
    for (Index c = 0; c < m; ++c) {
      const auto i = static_cast<std::size_t>(c);
      const double gap = h_mu[i] - h_mubar[i];
      linear += gap * (dz[i] - h_mubar[i] * dt);
      quadratic += gap * gap;
    }
  } else {
    const Matrix& prec = obs.noise_precision();
    for (Index r = 0; r < m; ++r) {
      for (Index c = 0; c < m; ++c) {
        const auto ir = static_cast<std::size_t>(r);
        const auto ic = static_cast<std::size_t>(c);
        const double gap_r = h_mu[ir] - h_mubar[ir];
        linear += gap_r * prec(r, c) * (dz[ic] - h_mubar[ic] * dt);
        quadratic += gap_r * prec(r, c) * (h_mu[ic] - h_mubar[ic]);
      }
    }
  }
  return linear - 0.5 * quadratic * dt;
}

std::vector<double> exponential_martingale(const FilterTrajectory& traj_mu, const FilterTrajectory& traj_mubar,
                                           const ObservationModel& obs, const ObservationPath& Z,
                                           ExpMartingaleForm form) {
  if (traj_mu.grid.steps != Z.grid.steps || traj_mubar.grid.steps != Z.grid.steps ||
      std::abs(traj_mu.grid.dt - Z.grid.dt) > 1e-15 || std::abs(traj_mubar.grid.dt - Z.grid.dt) > 1e-15) {
    throw std::invalid_argument("exponential martingale: trajectories and observations are on different grids");
  }
  const Matrix h_mu = traj_mu.distributions * obs.h();
  const Matrix h_mubar = traj_mubar.distributions * obs.h();
  const auto m = static_cast<std::size_t>(obs.channels());
  std::vector<double> values(Z.grid.steps + 1);
  double log_a = 0.0;
  values[0] = 1.0;
  if (form == ExpMartingaleForm::DensityRatio) {
    const Index d = obs.h().rows();
    Vector pm(d), pb(d), lik(d);
    for (std::size_t k = 0; k < Z.grid.steps; ++k) {
      const auto dz = Z.increment(k);
      for (Index x = 0; x < d; ++x) {
        double s = 0.0;
        for (std::size_t c = 0; c < m; ++c) s += obs.h_precision()(x, static_cast<Index>(c)) * dz[c];
        lik(x) = s - 0.5 * obs.h_energy()(x) * Z.grid.dt;
      }
      lik = (lik.array() - lik.maxCoeff()).exp().matrix();
      pm = traj_mu.distributions.row(static_cast<Index>(k)).transpose();
      pb = traj_mubar.distributions.row(static_cast<Index>(k)).transpose();
      log_a += log_density_ratio_increment(std::span<const double>(pm.data(), static_cast<std::size_t>(d)),
                                           std::span<const double>(pb.data(), static_cast<std::size_t>(d)),
                                           std::span<const double>(lik.data(), static_cast<std::size_t>(d)));
      values[k + 1] = std::exp(log_a);
    }
    return values;
  }
  std::vector<double> a(m), b(m);
  for (std::size_t k = 0; k < Z.grid.steps; ++k) {
    for (std::size_t c = 0; c < m; ++c) {
      a[c] = h_mu(static_cast<Index>(k), static_cast<Index>(c));
      b[c] = h_mubar(static_cast<Index>(k), static_cast<Index>(c));
    }
    log_a += log_martingale_increment(a, b, Z.increment(k), obs, Z.grid.dt, form);
    values[k + 1] = std::exp(log_a);
  }
  return values;
}

}  // namespace filtstab
