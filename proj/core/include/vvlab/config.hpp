#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vvlab/conformal.hpp"
#include "vvlab/ddpg.hpp"
#include "vvlab/scenario.hpp"
#include "vvlab/vvenv.hpp"

namespace vvlab {

struct EvaluationConfig {
  int oracle_q_levels = 5;
  std::optional<int> oracle_tap_lo;  // default: regulator range
  std::optional<int> oracle_tap_hi;
  int max_days = 0;                  // 0 = every held-out day
};

// Everything a pipeline run needs. JSON keys mirror the member names; nested
// objects for scenario, conformal, train, costs and evaluation.
struct RunConfig {
  std::filesystem::path network;
  std::filesystem::path data_dir;
  std::filesystem::path intervals;
  std::filesystem::path model_dir;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;

  int days = 30;
  ScenarioConfig scenario;
  SplitSpec split;
  conformal::TrackOptions conformal;
  ddpg::TrainConfig train;
  env::CostConfig costs;
  env::BoundsMode bounds = env::BoundsMode::kConformal;
  EvaluationConfig evaluation;

  // Throws ValidationError naming the offending key.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_json(const nlohmann::json& j, RunConfig base);
  nlohmann::json to_json() const;
  void validate() const;
  std::uint64_t require_seed() const;
};

RunConfig load_config(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

const char* to_string(env::BoundsMode mode);
env::BoundsMode parse_bounds_mode(const std::string& text);

// Days whose steps all lie in [begin, end) of the series.
std::vector<std::size_t> days_within(const TimeSeriesSet& ts, std::size_t begin, std::size_t end);

// Whole days on each side of the chronological split at floor(fraction * length).
struct DaySplit {
  std::size_t train_len = 0;
  std::vector<std::size_t> train_days;
  std::vector<std::size_t> test_days;
};
DaySplit split_days(const TimeSeriesSet& ts, const SplitSpec& spec);

// One-step-ahead conformal tracks for every channel, fitted on the first
// train_len steps of the truth series. Channel c uses seed mixed with c.
std::vector<conformal::IntervalTrack> fit_channel_tracks(const TimeSeriesSet& truth, std::size_t train_len,
                                                         const conformal::TrackOptions& opts, std::uint64_t seed);
std::vector<std::vector<std::optional<conformal::PredictionInterval>>> interval_table(
    const std::vector<conformal::IntervalTrack>& tracks);

// Interval CSV: timestamp,channel,point,lower,upper,alpha. Steps without an
// interval are omitted.
void write_interval_csv(const std::filesystem::path& path, const TimeSeriesSet& ts,
                        const std::vector<std::vector<std::optional<conformal::PredictionInterval>>>& table);
std::vector<std::vector<std::optional<conformal::PredictionInterval>>> read_interval_csv(
    const std::filesystem::path& path, const TimeSeriesSet& ts, std::size_t channels);

}  // namespace vvlab
