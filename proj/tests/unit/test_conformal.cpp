#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "vvlab/conformal.hpp"
#include "vvlab/error.hpp"

namespace vvlab::conformal {
namespace {

std::vector<double> ar_series(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> y(n, 0.0);
  for (std::size_t t = 2; t < n; ++t) y[t] = 5.0 + 0.6 * y[t - 1] - 0.2 * y[t - 2] + noise(rng);
  return y;
}

TEST(Fit, ConstantSeriesPredictsConstant) {
  const std::vector<double> y(80, 3.5);
  const auto model = fit(y, {5, 4, 1e-3}, 1);
  const std::vector<double> window(4, 3.5);
  for (const auto& m : model.members) EXPECT_NEAR(m.predict(window), 3.5, 1e-12);
  EXPECT_NEAR(loo_predict(model, window), 3.5, 1e-12);
  for (std::size_t i = 0; i < model.pair_count(); ++i) EXPECT_NEAR(loo_predict(model, window, i), 3.5, 1e-12);
}

TEST(Fit, NoiselessRampMatchesLeastSquaresOracle) {
  std::vector<double> y(60);
  for (std::size_t t = 0; t < y.size(); ++t) y[t] = 2.0 + 0.25 * static_cast<double>(t);
  const int lag = 3;
  const auto model = fit(y, {6, lag, 0.0}, 3);

  // Oracle: minimum-norm least squares on [1, lags] via SVD over all pairs.
  const std::size_t pairs = y.size() - lag;
  Eigen::MatrixXd x(pairs, lag + 1);
  Eigen::VectorXd target(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    x(i, 0) = 1.0;
    for (int k = 0; k < lag; ++k) x(i, k + 1) = y[i + k];
    target[i] = y[i + lag];
  }
  const Eigen::VectorXd coef = x.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(target);
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::span<const double> window(y.data() + i, lag);
    const double oracle = x.row(i).dot(coef);
    EXPECT_NEAR(loo_predict(model, window, i), oracle, 1e-6);
    EXPECT_NEAR(loo_predict(model, window, i), y[i + lag], 1e-6);
  }
  const std::vector<double> future = {y.back() + 0.25, y.back() + 0.5, y.back() + 0.75};
  EXPECT_NEAR(loo_predict(model, future), y.back() + 1.0, 1e-6);
}

TEST(Fit, EveryPairIsLeftOutSomewhere) {
  const auto y = ar_series(300, 4);
  for (int b : {2, 3, 20}) {
    const auto model = fit(y, {b, 8, 1e-3}, 99);
    EXPECT_EQ(model.pair_count(), y.size() - 8);
    for (std::size_t i = 0; i < model.pair_count(); ++i) {
      bool excluded = false;
      for (const auto& mask : model.in_sample) excluded = excluded || !mask[i];
      EXPECT_TRUE(excluded) << "B=" << b << " pair " << i;
    }
  }
}

TEST(Fit, DeterministicFromSeed) {
  const auto y = ar_series(200, 5);
  const auto a = fit(y, {5, 6, 1e-3}, 42);
  const auto b = fit(y, {5, 6, 1e-3}, 42);
  EXPECT_EQ(a.in_sample, b.in_sample);
  for (std::size_t m = 0; m < a.members.size(); ++m) {
    EXPECT_EQ(a.members[m].weights, b.members[m].weights);
    EXPECT_EQ(a.members[m].bias, b.members[m].bias);
  }
}

TEST(Fit, RejectsShortHistory) {
  const std::vector<double> y(20, 1.0);
  EXPECT_THROW(fit(y, {5, 10, 1e-3}, 1), PreconditionError);
  EXPECT_THROW(fit(y, {1, 2, 1e-3}, 1), PreconditionError);
}

TEST(LooPredict, AveragesOnlyExcludingMembers) {
  EnsembleModel model;
  model.lag = 1;
  model.members = {{Eigen::VectorXd::Zero(1), 1.0}, {Eigen::VectorXd::Zero(1), 3.0}, {Eigen::VectorXd::Zero(1), 10.0}};
  model.in_sample = {{false}, {false}, {true}};
  const std::vector<double> w = {0.0};
  EXPECT_DOUBLE_EQ(loo_predict(model, w, 0), 2.0);
  EXPECT_DOUBLE_EQ(loo_predict(model, w), 14.0 / 3.0);
  model.in_sample = {{true}, {true}, {true}};
  EXPECT_THROW(loo_predict(model, w, 0), Error);
  EXPECT_THROW(loo_predict(model, std::vector<double>{1.0, 2.0}), PreconditionError);
}

TEST(ResidualQuantile, MatchesOrderStatistic) {
  std::vector<double> r(100);
  for (int i = 0; i < 100; ++i) r[i] = 100 - i;
  EXPECT_DOUBLE_EQ(residual_quantile(r, 0.05), 96.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial * 7;
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (double alpha : {0.01, 0.05, 0.1, 0.2, 0.5}) {
      // Smallest k with k >= (1 - alpha)(n + 1), counted in integers.
      std::size_t k = 1;
      while (static_cast<double>(k) * 100.0 < (100.0 - alpha * 100.0) * static_cast<double>(n + 1) - 1e-6) ++k;
      k = std::min(k, n);
      EXPECT_DOUBLE_EQ(residual_quantile(v, alpha), sorted[k - 1]) << "n=" << n << " alpha=" << alpha;
    }
  }
}

TEST(ResidualQuantile, ConstantResiduals) {
  const std::vector<double> r(30, 0.7);
  for (double alpha : {0.01, 0.2, 0.9}) EXPECT_DOUBLE_EQ(residual_quantile(r, alpha), 0.7);
  EXPECT_THROW(residual_quantile({}, 0.1), PreconditionError);
  EXPECT_THROW(residual_quantile(r, 0.0), PreconditionError);
}

TEST(ResidualWindow, KeepsLastTInOrder) {
  ResidualWindow w(3);
  for (double v : {1.0, 2.0, 3.0, 4.0, 5.0}) w.push(v);
  EXPECT_EQ(w.size(), 3u);
  EXPECT_EQ(w.values(), (std::vector<double>{3.0, 4.0, 5.0}));
  update(w, 2.0, 2.0);
  EXPECT_EQ(w.values().back(), 0.0);
  update(w, 1.0, 3.5);
  EXPECT_EQ(w.values().back(), 2.5);
}

TEST(Interval, WidthShrinksAsAlphaGrows) {
  const auto y = ar_series(400, 8);
  const auto model = fit(std::span<const double>(y).first(300), {10, 4, 1e-3}, 2);
  ResidualWindow res(100);
  std::mt19937_64 rng(1);
  std::exponential_distribution<double> e(1.0);
  for (int i = 0; i < 100; ++i) res.push(e(rng));
  const std::span<const double> window(y.data() + 350, 4);
  double prev = INFINITY;
  for (double alpha : {0.01, 0.05, 0.1, 0.2}) {
    const auto iv = interval(model, window, res, alpha);
    EXPECT_LE(iv.lower, iv.point);
    EXPECT_LE(iv.point, iv.upper);
    EXPECT_LE(iv.width(), prev);
    prev = iv.width();
  }
  EXPECT_THROW(interval(model, window, ResidualWindow(4), 0.1), PreconditionError);
}

TEST(Track, CoversAutoregressiveSeries) {
  const auto y = ar_series(1500, 21);
  const auto track = build_track(y, 500, {{10, 6, 1e-3}, 200, 0.1}, 5);
  EXPECT_EQ(track.first_valid, 7u);
  std::size_t hits = 0;
  std::size_t n = 0;
  for (std::size_t t = 500; t < y.size(); ++t) {
    ASSERT_TRUE(track.intervals[t].has_value());
    hits += track.intervals[t]->contains(y[t]) ? 1 : 0;
    ++n;
  }
  EXPECT_GE(static_cast<double>(hits) / static_cast<double>(n), 0.86);
}

TEST(Track, IntervalsUseOnlyThePast) {
  auto y = ar_series(400, 22);
  const auto a = build_track(y, 200, {{5, 4, 1e-3}, 50, 0.1}, 9);
  y[350] += 100.0;
  const auto b = build_track(y, 200, {{5, 4, 1e-3}, 50, 0.1}, 9);
  for (std::size_t t = 0; t <= 350; ++t) {
    ASSERT_EQ(a.intervals[t].has_value(), b.intervals[t].has_value());
    if (a.intervals[t]) {
      EXPECT_EQ(a.intervals[t]->lower, b.intervals[t]->lower) << t;
      EXPECT_EQ(a.intervals[t]->upper, b.intervals[t]->upper) << t;
    }
  }
}

}  // namespace
}  // namespace vvlab::conformal
