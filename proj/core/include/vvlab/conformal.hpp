#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace vvlab::conformal {

// Ridge regressor on a lag window: y = bias + weights . window.
struct RidgeRegressor {
  Eigen::VectorXd weights;
  double bias = 0.0;

  double predict(std::span<const double> window) const;
};

// Bootstrap ensemble for leave-one-out (EnbPI-style) prediction.
//
// Training pair i maps history[i .. i+lag) to history[i+lag]. in_sample[b][i]
// records whether member b's bootstrap draw contains pair i; fit guarantees
// every pair is left out by at least one member.
struct EnsembleModel {
  int lag = 0;
  std::vector<RidgeRegressor> members;
  std::vector<std::vector<bool>> in_sample;

  std::size_t pair_count() const { return in_sample.empty() ? 0 : in_sample.front().size(); }
};

struct FitOptions {
  int ensemble_size = 20;  // B
  int lag = 48;            // M
  double ridge = 1e-3;
};

// Throws PreconditionError if history.size() <= lag + 10 or B < 2.
EnsembleModel fit(std::span<const double> history, const FitOptions& opts, std::uint64_t seed);

// Mean prediction over members that left out pair `index`; with no index,
// mean over all members.
double loo_predict(const EnsembleModel& model, std::span<const double> window,
                   std::optional<std::size_t> index = std::nullopt);

// Sliding FIFO of the most recent absolute residuals.
class ResidualWindow {
 public:
  explicit ResidualWindow(std::size_t capacity);

  void push(double residual);
  std::size_t size() const { return values_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return values_.empty(); }
  std::vector<double> values() const { return {values_.begin(), values_.end()}; }

 private:
  std::size_t capacity_;
  std::deque<double> values_;
};

struct PredictionInterval {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double alpha = 0.05;

  double width() const { return upper - lower; }
  bool contains(double y) const { return y >= lower && y <= upper; }
};

// Conservative empirical (1 - alpha) quantile: order statistic of rank
// ceil((1 - alpha)(n + 1)), capped at n.
double residual_quantile(std::span<const double> residuals, double alpha);

PredictionInterval interval(const EnsembleModel& model, std::span<const double> window,
                            const ResidualWindow& residuals, double alpha,
                            std::optional<std::size_t> index = std::nullopt);

// Pushes |truth - point|.
void update(ResidualWindow& window, double truth, double point);

struct TrackOptions {
  FitOptions fit;
  std::size_t window = 200;  // T
  double alpha = 0.05;
};

// One-step-ahead intervals over a whole series. The model is fitted on
// series[0, train_len); in-sample steps use the leave-one-out estimator and
// later steps the full ensemble. Residuals feed the sliding window in time
// order, so the interval at t depends only on series[0, t).
//
// intervals[t] is empty where no interval exists yet (t <= lag: no lag window
// or no residuals).
struct IntervalTrack {
  std::vector<std::optional<PredictionInterval>> intervals;
  std::size_t first_valid = 0;
};

IntervalTrack build_track(std::span<const double> series, std::size_t train_len,
                          const TrackOptions& opts, std::uint64_t seed);

}  // namespace vvlab::conformal
