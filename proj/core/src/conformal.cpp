#include "vvlab/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vvlab/error.hpp"

namespace vvlab::conformal {

double RidgeRegressor::predict(std::span<const double> window) const {
  if (static_cast<Eigen::Index>(window.size()) != weights.size()) {
    throw PreconditionError("lag window length does not match the model");
  }
  double y = bias;
  for (std::size_t k = 0; k < window.size(); ++k) y += weights[static_cast<Eigen::Index>(k)] * window[k];
  return y;
}

namespace {

// Ridge fit with an unpenalized intercept. Solving the augmented least-squares
// system [Xc; sqrt(l) I] w = [yc; 0] by complete orthogonal decomposition also
// covers ridge = 0 with rank-deficient lags (minimum-norm solution).
RidgeRegressor fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double ridge) {
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  Eigen::MatrixXd a(n + d, d);
  a.topRows(n) = x.rowwise() - x_mean;
  a.bottomRows(d) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + d);
  rhs.head(n) = y.array() - y_mean;
  RidgeRegressor reg;
  reg.weights = a.completeOrthogonalDecomposition().solve(rhs);
  reg.bias = y_mean - x_mean.dot(reg.weights);
  return reg;
}

}  // namespace

EnsembleModel fit(std::span<const double> history, const FitOptions& opts, std::uint64_t seed) {
  if (opts.ensemble_size < 2) throw PreconditionError("ensemble size must be >= 2");
  if (opts.lag < 1) throw PreconditionError("lag order must be >= 1");
  if (!(opts.ridge >= 0.0)) throw PreconditionError("ridge penalty must be >= 0");
  const auto lag = static_cast<std::size_t>(opts.lag);
  if (history.size() <= lag + 10) {
    throw PreconditionError("insufficient history: need more than lag + 10 = " +
                            std::to_string(lag + 10) + " points, got " + std::to_string(history.size()));
  }
  const std::size_t pairs = history.size() - lag;
  const auto b_count = static_cast<std::size_t>(opts.ensemble_size);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pairs - 1);
  std::vector<std::vector<std::size_t>> draws(b_count, std::vector<std::size_t>(pairs));
  for (auto& draw : draws) {
    for (auto& i : draw) i = pick(rng);
  }

  EnsembleModel model;
  model.lag = opts.lag;
  model.in_sample.assign(b_count, std::vector<bool>(pairs, false));
  auto rebuild_masks = [&] {
    for (std::size_t b = 0; b < b_count; ++b) {
      std::fill(model.in_sample[b].begin(), model.in_sample[b].end(), false);
      for (std::size_t i : draws[b]) model.in_sample[b][i] = true;
    }
  };
  rebuild_masks();

  // Repair pairs drawn by every member: in a round-robin member, replace each
  // occurrence of such a pair with a pair that some other member leaves out.
  // Replacements stay excluded elsewhere, so one pass settles every pair.
  std::size_t victim = 0;
  for (std::size_t i = 0; i < pairs; ++i) {
    bool everywhere = true;
    for (std::size_t b = 0; b < b_count && everywhere; ++b) everywhere = model.in_sample[b][i];
    if (!everywhere) continue;
    const std::size_t b = victim++ % b_count;
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < pairs; ++j) {
      if (j == i) continue;
      for (std::size_t o = 0; o < b_count; ++o) {
        if (o != b && !model.in_sample[o][j]) {
          candidates.push_back(j);
          break;
        }
      }
    }
    if (candidates.empty()) throw Error("bootstrap repair found no replacement pair");
    std::uniform_int_distribution<std::size_t> pick_candidate(0, candidates.size() - 1);
    for (auto& j : draws[b]) {
      if (j == i) j = candidates[pick_candidate(rng)];
    }
    std::fill(model.in_sample[b].begin(), model.in_sample[b].end(), false);
    for (std::size_t j : draws[b]) model.in_sample[b][j] = true;
  }

  model.members.reserve(b_count);
  for (std::size_t b = 0; b < b_count; ++b) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(pairs), opts.lag);
    Eigen::VectorXd y(static_cast<Eigen::Index>(pairs));
    for (std::size_t r = 0; r < pairs; ++r) {
      const std::size_t i = draws[b][r];
      for (std::size_t k = 0; k < lag; ++k) {
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = history[i + k];
      }
      y[static_cast<Eigen::Index>(r)] = history[i + lag];
    }
    model.members.push_back(fit_ridge(x, y, opts.ridge));
  }
  return model;
}

double loo_predict(const EnsembleModel& model, std::span<const double> window,
                   std::optional<std::size_t> index) {
  if (window.size() != static_cast<std::size_t>(model.lag)) {
    throw PreconditionError("lag window length " + std::to_string(window.size()) + " != " +
                            std::to_string(model.lag));
  }
  if (index && *index >= model.pair_count()) throw PreconditionError("training index out of range");
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < model.members.size(); ++b) {
    if (index && model.in_sample[b][*index]) continue;
    sum += model.members[b].predict(window);
    ++used;
  }
  if (used == 0) throw Error("no ensemble member leaves out training pair " + std::to_string(*index));
  return sum / static_cast<double>(used);
}

ResidualWindow::ResidualWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw PreconditionError("residual window capacity must be positive");
}

void ResidualWindow::push(double residual) {
  if (values_.size() == capacity_) values_.pop_front();
  values_.push_back(residual);
}

double residual_quantile(std::span<const double> residuals, double alpha) {
  if (residuals.empty()) throw PreconditionError("empty residual window");
  if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("alpha must lie in (0, 1)");
  const std::size_t n = residuals.size();
  // The small slack keeps exact products such as 0.8 * 5 from rounding up.
  const double raw = (1.0 - alpha) * static_cast<double>(n + 1);
  auto rank = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::vector<double> sorted(residuals.begin(), residuals.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

PredictionInterval interval(const EnsembleModel& model, std::span<const double> window,
                            const ResidualWindow& residuals, double alpha,
                            std::optional<std::size_t> index) {
  const std::vector<double> values = residuals.values();
  const double half = residual_quantile(values, alpha);
  const double point = loo_predict(model, window, index);
  return {point, point - half, point + half, alpha};
}

void update(ResidualWindow& window, double truth, double point) { window.push(std::abs(truth - point)); }

IntervalTrack build_track(std::span<const double> series, std::size_t train_len,
                          const TrackOptions& opts, std::uint64_t seed) {
  if (train_len > series.size()) throw PreconditionError("train_len exceeds series length");
  const EnsembleModel model = fit(series.first(train_len), opts.fit, seed);
  const auto lag = static_cast<std::size_t>(model.lag);

  IntervalTrack track;
  track.intervals.assign(series.size(), std::nullopt);
  track.first_valid = series.size();
  ResidualWindow residuals(opts.window);
  for (std::size_t t = lag; t < series.size(); ++t) {
    const std::span<const double> window = series.subspan(t - lag, lag);
    // Pair index t - lag is in-sample while its target lies in the training range.
    const std::optional<std::size_t> index =
        t < train_len ? std::optional<std::size_t>(t - lag) : std::nullopt;
    const double point = loo_predict(model, window, index);
    if (!residuals.empty()) {
      const double half = residual_quantile(residuals.values(), opts.alpha);
      track.intervals[t] = PredictionInterval{point, point - half, point + half, opts.alpha};
      track.first_valid = std::min(track.first_valid, t);
    }
    update(residuals, series[t], point);
  }
  return track;
}

}  // namespace vvlab::conformal
