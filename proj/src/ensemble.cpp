#include "filtstab/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace filtstab {

namespace {

struct TrialContext {
  const FilterModel& model;
  const WonhamStepper& stepper;
  const TimeGrid& grid;
  const EnsembleConfig& config;
  const Vector& row_minima;
};

/// One draw of pi_N^{k,x}(gamma_N), continuing the mu / mubar filters from
/// their step-k values on fresh observations from a signal restarted at x.
double dual_draw(const TrialContext& ctx, std::size_t trial, std::size_t window, std::size_t replicate, Index x,
                 std::size_t k, std::span<const double> pm0, std::span<const double> pb0) {
  const auto d = static_cast<std::size_t>(ctx.model.dim());
  const std::size_t remaining = ctx.grid.steps - k;
  std::vector<double> px(d, 0.0), pm(pm0.begin(), pm0.end()), pb(pb0.begin(), pb0.end()), w(d);
  px[static_cast<std::size_t>(x)] = 1.0;

  Rng sig = stream_rng(ctx.config.seed, trial, streams::inner(window, static_cast<std::size_t>(x), replicate, false));
  Rng noise = stream_rng(ctx.config.seed, trial, streams::inner(window, static_cast<std::size_t>(x), replicate, true));
  const TimeGrid sub{ctx.grid.dt, remaining};
  const CtmcPath path = sample_ctmc_path_from(ctx.model.generator, x, sub.horizon(), sig);
  const ObservationPath Z = sample_observations(path, ctx.model.observation, sub, noise);
  for (std::size_t j = 0; j < remaining; ++j) {
    if (ctx.stepper.options().scheme == FilterScheme::Splitting) {
      ctx.stepper.log_weights(Z.increment(j), w);
      ctx.stepper.likelihood(w, w);
      ctx.stepper.correct_predict_scaled(px, w, k + j);
      ctx.stepper.correct_predict_scaled(pm, w, k + j);
      ctx.stepper.correct_predict_scaled(pb, w, k + j);
    } else {
      ctx.stepper.euler(px, Z.increment(j), k + j);
      ctx.stepper.euler(pm, Z.increment(j), k + j);
      ctx.stepper.euler(pb, Z.increment(j), k + j);
    }
  }
  double value = 0.0;
  for (std::size_t y = 0; y < d; ++y) value += px[y] * pm[y] / pb[y];
  return value;
}

}  // namespace

std::span<const double> Ensemble::pi_mu(std::size_t trial, std::size_t snap) const {
  const auto d = static_cast<std::size_t>(dim_);
  return {pis_.data() + ((trial * times_.size() + snap) * 2) * d, d};
}

std::span<const double> Ensemble::pi_mubar(std::size_t trial, std::size_t snap) const {
  const auto d = static_cast<std::size_t>(dim_);
  return {pis_.data() + ((trial * times_.size() + snap) * 2 + 1) * d, d};
}

std::span<const double> Ensemble::dual(std::size_t trial, std::size_t snap, std::size_t replicate) const {
  if (replicates_ == 0) throw std::logic_error("ensemble: no dual estimates were recorded");
  const auto d = static_cast<std::size_t>(dim_);
  return {duals_.data() + ((trial * times_.size() + snap) * replicates_ + replicate) * d, d};
}

double Ensemble::gamma_variance(std::size_t trial, std::size_t snap) const {
  const auto pm = pi_mu(trial, snap);
  const auto pb = pi_mubar(trial, snap);
  double s = 0.0;
  // chi-square form: nonnegative, and exactly zero when the filters agree
  for (std::size_t x = 0; x < pm.size(); ++x) s += (pm[x] - pb[x]) * (pm[x] - pb[x]) / pb[x];
  return s;
}

Ensemble simulate_ensemble(const FilterModel& model, const ProbabilityVector& mu, const ProbabilityVector& mu_bar,
                           SignalPrior prior, const EnsembleConfig& config) {
  if (mu.dim() != model.dim() || mu_bar.dim() != model.dim()) {
    throw DimensionMismatch("ensemble: priors do not match the model dimension");
  }
  if (!mu_bar.everywhere_positive()) throw std::domain_error("ensemble: reference prior must be everywhere positive");
  if (config.n_trials == 0) throw std::invalid_argument("ensemble: need at least one trial");
  const TimeGrid grid = TimeGrid::covering(config.horizon, config.dt);
  if (grid.steps == 0) throw std::invalid_argument("ensemble: horizon must be positive");

  std::vector<std::size_t> snap_steps;
  for (double t : config.snapshot_times) snap_steps.push_back(grid.index_of(t));
  if (!std::is_sorted(snap_steps.begin(), snap_steps.end()) ||
      std::adjacent_find(snap_steps.begin(), snap_steps.end()) != snap_steps.end()) {
    throw std::invalid_argument("ensemble: snapshot times must be strictly increasing");
  }

  const auto d = static_cast<std::size_t>(model.dim());
  const std::size_t n_snap = snap_steps.size();
  Ensemble out;
  out.n_trials_ = config.n_trials;
  out.dim_ = model.dim();
  out.horizon_ = grid.horizon();
  out.prior_ = prior;
  out.replicates_ = config.dual_estimates ? std::max<std::size_t>(1, config.dual_replicates) : 0;
  for (std::size_t s : snap_steps) out.times_.push_back(grid.time(s));
  out.pis_.resize(config.n_trials * n_snap * 2 * d);
  out.scalars_.resize(config.n_trials * n_snap * Ensemble::kScalars);
  out.duals_.resize(config.n_trials * n_snap * out.replicates_ * d);

  const WonhamStepper stepper(model, grid.dt, config.filter);
  const Vector row_minima = min_off_diagonal_rows(model.generator);
  const TrialContext ctx{model, stepper, grid, config, row_minima};
  const ProbabilityVector& signal_law = prior == SignalPrior::Mu ? mu : mu_bar;
  const auto m = static_cast<std::size_t>(model.observation.channels());

  parallel_for(config.n_trials, [&](std::size_t trial) {
    Rng sig = stream_rng(config.seed, trial, streams::kSignal);
    Rng noise = stream_rng(config.seed, trial, streams::kObservation);
    const CtmcPath path = sample_ctmc_path(model.generator, signal_law, grid.horizon(), sig);
    const ObservationPath Z = sample_observations(path, model.observation, grid, noise);

    std::vector<double> pm(mu.weights().data(), mu.weights().data() + d);
    std::vector<double> pb(mu_bar.weights().data(), mu_bar.weights().data() + d);
    std::vector<double> w(d), h_mu(m), h_mubar(m);
    double log_a = 0.0;
    double beta_row_int = 0.0;
    double beta_exact_int = 0.0;
    double beta_row_prev = beta_min_row(pb, row_minima);
    double beta_exact_prev = config.track_exact_beta ? beta_exact_rayleigh(pb, model.generator) : 0.0;

    std::size_t next_snap = 0;
    for (std::size_t k = 0; k <= grid.steps; ++k) {
      if (next_snap < n_snap && snap_steps[next_snap] == k) {
        const std::size_t base = (trial * n_snap + next_snap);
        std::copy(pm.begin(), pm.end(), out.pis_.begin() + static_cast<std::ptrdiff_t>(base * 2 * d));
        std::copy(pb.begin(), pb.end(), out.pis_.begin() + static_cast<std::ptrdiff_t>((base * 2 + 1) * d));
        double* sc = out.scalars_.data() + base * Ensemble::kScalars;
        sc[0] = log_a;
        sc[1] = beta_row_int;
        sc[2] = beta_exact_int;
        for (std::size_t r = 0; r < out.replicates_; ++r) {
          double* dst = out.duals_.data() + (base * out.replicates_ + r) * d;
          for (std::size_t x = 0; x < d; ++x) {
            dst[x] = k == grid.steps ? pm[x] / pb[x]
                                     : dual_draw(ctx, trial, next_snap, r, static_cast<Index>(x), k, pm, pb);
          }
        }
        ++next_snap;
      }
      if (k == grid.steps) break;

      const auto dz = Z.increment(k);
      stepper.log_weights(dz, w);
      stepper.likelihood(w, w);
      if (config.martingale_form == ExpMartingaleForm::DensityRatio) {
        log_a += log_density_ratio_increment(pm, pb, w);
      } else {
        for (std::size_t c = 0; c < m; ++c) {
          double a = 0.0, b = 0.0;
          for (std::size_t x = 0; x < d; ++x) {
            const double hx = model.observation.h()(static_cast<Index>(x), static_cast<Index>(c));
            a += pm[x] * hx;
            b += pb[x] * hx;
          }
          h_mu[c] = a;
          h_mubar[c] = b;
        }
        log_a += log_martingale_increment(h_mu, h_mubar, dz, model.observation, grid.dt, config.martingale_form);
      }

      if (config.filter.scheme == FilterScheme::Splitting) {
        stepper.correct_predict_scaled(pm, w, k);
        stepper.correct_predict_scaled(pb, w, k);
      } else {
        stepper.euler(pm, dz, k);
        stepper.euler(pb, dz, k);
      }

      const double beta_row = beta_min_row(pb, row_minima);
      beta_row_int += 0.5 * (beta_row_prev + beta_row) * grid.dt;
      beta_row_prev = beta_row;
      if (config.track_exact_beta) {
        const double beta_exact = beta_exact_rayleigh(pb, model.generator);
        beta_exact_int += 0.5 * (beta_exact_prev + beta_exact) * grid.dt;
        beta_exact_prev = beta_exact;
      }
    }
  });
  return out;
}

ErgodicBetaAverage ergodic_beta_average(const FilterModel& model, double horizon, std::size_t n_paths, double dt,
                                        std::uint64_t seed, FilterOptions filter) {
  if (n_paths < 2) throw std::invalid_argument("ergodic average: need at least two paths for a standard error");
  const ProbabilityVector mu_bar = invariant_measure(model.generator);
  EnsembleConfig cfg;
  cfg.horizon = horizon;
  cfg.dt = dt;
  cfg.n_trials = n_paths;
  cfg.seed = seed;
  cfg.filter = filter;
  cfg.snapshot_times = {TimeGrid::covering(horizon, dt).horizon()};
  const Ensemble e = simulate_ensemble(model, mu_bar, mu_bar, SignalPrior::MuBar, cfg);
  std::vector<double> averages(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) averages[i] = e.beta_min_row_integral(i, 0) / e.horizon();
  ErgodicBetaAverage out;
  out.average = mean_estimate(averages);
  out.target = mu_bar.weights().dot(min_off_diagonal_rows(model.generator));
  out.horizon = e.horizon();
  return out;
}

}  // namespace filtstab
