#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vvlab/netmodel.hpp"

namespace vvlab {

// Synchronized half-hourly load and PV series.
//
// Load entities are the network's loaded buses (Network::load_bus_ids order);
// PV entities are the network's inverters in declaration order. Series are
// stored entity-major: load_p_kw[k][t].
struct TimeSeriesSet {
  std::int64_t start_unix = 0;  // seconds, UTC
  int step_minutes = 30;
  std::vector<int> load_bus_ids;
  std::vector<std::vector<double>> load_p_kw;
  std::vector<std::vector<double>> load_q_kvar;
  std::vector<std::vector<double>> pv_kw;

  std::size_t length() const;
  std::size_t steps_per_day() const { return static_cast<std::size_t>(24 * 60 / step_minutes); }
  std::size_t day_count() const { return length() / steps_per_day(); }
  std::int64_t timestamp(std::size_t t) const { return start_unix + static_cast<std::int64_t>(t) * step_minutes * 60; }
  // Half-open slice [begin, end) with start time shifted accordingly.
  TimeSeriesSet slice(std::size_t begin, std::size_t end) const;
  // Throws ValidationError unless every series has the same length.
  void check_shape() const;
};

// Forecasts share the truth schema and alignment.
using ForecastSet = TimeSeriesSet;

// Distribution parameters of the synthetic generator. None of these values
// come from measured data; they are defaults chosen to reproduce the usual
// residential load shape and a clear-sky PV bell.
struct ScenarioConfig {
  std::vector<double> load_profile;  // 48 per-unit multipliers; empty = built-in template
  double load_sigma = 0.05;          // relative std of load around the profile
  double pv_sigma = 0.2;             // std of log-irradiance
  std::optional<double> pv_log_mean; // defaults to -pv_sigma^2/2 (unit-mean irradiance)
  double pv_peak_fraction = 0.8;     // clear-sky noon output as a fraction of rated_kw
  double sunrise_hour = 6.0;
  double sunset_hour = 18.0;
  double forecast_noise = 0.05;
  std::int64_t start_unix = 1704067200;  // 2024-01-01T00:00:00Z
};

const std::vector<double>& default_load_profile();

// Clear-sky PV shape in [0, 1]: a raised-cosine bell between sunrise and sunset.
double clear_sky_shape(double hour, double sunrise, double sunset);

TimeSeriesSet generate(const Network& net, int days, std::uint64_t seed,
                       const ScenarioConfig& cfg = {});

// forecast = truth * (1 + N(0, noise_std)), PV clipped at zero.
ForecastSet make_forecasts(const TimeSeriesSet& truth, double noise_std, std::uint64_t seed);

struct SplitSpec {
  double train_fraction = 0.7;
};

// Chronological split at floor(fraction * length).
std::pair<TimeSeriesSet, TimeSeriesSet> split(const TimeSeriesSet& ts, const SplitSpec& spec);

std::string format_iso8601(std::int64_t unix_seconds);
std::int64_t parse_iso8601(const std::string& text);

// CSV schema: timestamp,entity_type,entity_id,p_kw,q_kvar. Load rows carry the
// bus id; PV rows carry the inverter index and q_kvar = 0.
void write_series_csv(const std::filesystem::path& path, const TimeSeriesSet& ts);
TimeSeriesSet read_series_csv(const std::filesystem::path& path, const Network& net);

}  // namespace vvlab
