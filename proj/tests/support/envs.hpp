#pragma once

#include "vvlab/config.hpp"
#include "vvlab/vvenv.hpp"

namespace vvlab::testing {

// Truth, 5%-noise forecasts and conformal intervals fitted on the first
// `train_days` days.
inline env::EpisodeData episode_data(const Network& net, int days, int train_days, std::uint64_t seed) {
  const TimeSeriesSet truth = generate(net, days, seed);
  const ForecastSet forecast = make_forecasts(truth, 0.05, seed + 1);
  const auto tracks = fit_channel_tracks(truth, static_cast<std::size_t>(train_days) * 48, {}, seed + 2);
  return {truth, forecast, interval_table(tracks)};
}

}  // namespace vvlab::testing
