#include "vvlab/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>

#include "vvlab/csv.hpp"
#include "vvlab/error.hpp"

namespace vvlab {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream_id};
  return std::mt19937_64(seq);
}

}  // namespace

std::size_t TimeSeriesSet::length() const {
  if (!load_p_kw.empty()) return load_p_kw.front().size();
  if (!pv_kw.empty()) return pv_kw.front().size();
  return 0;
}

void TimeSeriesSet::check_shape() const {
  const std::size_t n = length();
  if (load_p_kw.size() != load_bus_ids.size() || load_q_kvar.size() != load_bus_ids.size()) {
    throw ValidationError("load series count does not match load bus count");
  }
  auto same = [n](const std::vector<std::vector<double>>& s) {
    return std::all_of(s.begin(), s.end(), [n](const auto& v) { return v.size() == n; });
  };
  if (!same(load_p_kw) || !same(load_q_kvar) || !same(pv_kw)) {
    throw ValidationError("time series have unequal lengths");
  }
}

TimeSeriesSet TimeSeriesSet::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > length()) throw PreconditionError("slice out of range");
  auto cut = [&](const std::vector<std::vector<double>>& s) {
    std::vector<std::vector<double>> out;
    out.reserve(s.size());
    for (const auto& v : s) out.emplace_back(v.begin() + static_cast<std::ptrdiff_t>(begin),
                                             v.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  };
  TimeSeriesSet out;
  out.start_unix = timestamp(begin);
  out.step_minutes = step_minutes;
  out.load_bus_ids = load_bus_ids;
  out.load_p_kw = cut(load_p_kw);
  out.load_q_kvar = cut(load_q_kvar);
  out.pv_kw = cut(pv_kw);
  return out;
}

const std::vector<double>& default_load_profile() {
  // Half-hourly residential shape: overnight trough, morning rise, flat
  // midday, evening peak at 19:00.
  static const std::vector<double> profile = {
      0.52, 0.48, 0.45, 0.43, 0.41, 0.40, 0.39, 0.38, 0.38, 0.39, 0.41, 0.45,
      0.50, 0.56, 0.62, 0.67, 0.70, 0.71, 0.70, 0.68, 0.66, 0.65, 0.64, 0.64,
      0.65, 0.65, 0.64, 0.63, 0.62, 0.62, 0.63, 0.65, 0.68, 0.73, 0.79, 0.86,
      0.92, 0.97, 1.00, 0.99, 0.96, 0.92, 0.86, 0.79, 0.72, 0.65, 0.60, 0.56};
  return profile;
}

double clear_sky_shape(double hour, double sunrise, double sunset) {
  if (hour <= sunrise || hour >= sunset) return 0.0;
  const double phase = (hour - sunrise) / (sunset - sunrise);
  return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * phase));
}

TimeSeriesSet generate(const Network& net, int days, std::uint64_t seed, const ScenarioConfig& cfg) {
  if (days < 1) throw PreconditionError("days must be >= 1");
  const std::vector<double>& profile = cfg.load_profile.empty() ? default_load_profile() : cfg.load_profile;
  constexpr std::size_t kStepsPerDay = 48;
  if (profile.size() != kStepsPerDay) throw ValidationError("load profile must have 48 entries");
  if (cfg.load_sigma < 0.0 || cfg.pv_sigma < 0.0) throw ValidationError("negative sigma");

  TimeSeriesSet ts;
  ts.start_unix = cfg.start_unix;
  ts.step_minutes = 30;
  ts.load_bus_ids = net.load_bus_ids();
  const std::size_t n = static_cast<std::size_t>(days) * kStepsPerDay;
  const std::size_t loads = ts.load_bus_ids.size();
  const std::size_t invs = net.inverters().size();
  ts.load_p_kw.assign(loads, std::vector<double>(n));
  ts.load_q_kvar.assign(loads, std::vector<double>(n));
  ts.pv_kw.assign(invs, std::vector<double>(n));

  std::mt19937_64 load_rng = stream(seed, 1);
  std::mt19937_64 pv_rng = stream(seed, 2);
  std::normal_distribution<double> unit(0.0, 1.0);

  for (std::size_t t = 0; t < n; ++t) {
    const double base = profile[t % kStepsPerDay];
    for (std::size_t k = 0; k < loads; ++k) {
      const Bus& bus = net.buses()[net.index_of(ts.load_bus_ids[k])];
      // One draw scales the complex load, keeping its power factor.
      const double scale = base * (1.0 + cfg.load_sigma * unit(load_rng));
      ts.load_p_kw[k][t] = bus.load_p_kw * scale;
      ts.load_q_kvar[k][t] = bus.load_q_kvar * scale;
    }
  }

  const double log_mean = cfg.pv_log_mean.value_or(-0.5 * cfg.pv_sigma * cfg.pv_sigma);
  for (int d = 0; d < days; ++d) {
    for (std::size_t k = 0; k < invs; ++k) {
      // Daily irradiance factor, lognormal.
      const double irradiance = std::exp(log_mean + cfg.pv_sigma * unit(pv_rng));
      const double rated = net.inverters()[k].rated_kw;
      for (std::size_t s = 0; s < kStepsPerDay; ++s) {
        const double hour = 0.5 * static_cast<double>(s);
        const double shape = clear_sky_shape(hour, cfg.sunrise_hour, cfg.sunset_hour);
        const double p = rated * cfg.pv_peak_fraction * shape * irradiance;
        ts.pv_kw[k][static_cast<std::size_t>(d) * kStepsPerDay + s] = std::clamp(p, 0.0, rated);
      }
    }
  }
  return ts;
}

ForecastSet make_forecasts(const TimeSeriesSet& truth, double noise_std, std::uint64_t seed) {
  if (noise_std < 0.0) throw PreconditionError("noise_std must be >= 0");
  ForecastSet f = truth;
  std::mt19937_64 rng = stream(seed, 3);
  std::normal_distribution<double> unit(0.0, 1.0);
  const std::size_t n = truth.length();
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t k = 0; k < f.load_p_kw.size(); ++k) {
      const double scale = 1.0 + noise_std * unit(rng);
      f.load_p_kw[k][t] *= scale;
      f.load_q_kvar[k][t] *= scale;
    }
    for (auto& pv : f.pv_kw) {
      pv[t] = std::max(0.0, pv[t] * (1.0 + noise_std * unit(rng)));
    }
  }
  return f;
}

std::pair<TimeSeriesSet, TimeSeriesSet> split(const TimeSeriesSet& ts, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw PreconditionError("train fraction must lie in (0, 1)");
  }
  const std::size_t n = ts.length();
  if (n < 2) throw PreconditionError("need at least 2 timesteps to split");
  auto boundary = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n)));
  boundary = std::clamp<std::size_t>(boundary, 1, n - 1);
  return {ts.slice(0, boundary), ts.slice(boundary, n)};
}

std::string format_iso8601(std::int64_t unix_seconds) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{unix_seconds}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

std::int64_t parse_iso8601(const std::string& text) {
  int y = 0;
  unsigned mo = 0;
  unsigned d = 0;
  int h = 0;
  int mi = 0;
  int s = 0;
  char tail = 0;
  const int got = std::sscanf(text.c_str(), "%d-%u-%uT%d:%d:%d%c", &y, &mo, &d, &h, &mi, &s, &tail);
  if ((got != 6 && !(got == 7 && tail == 'Z')) || h > 23 || mi > 59 || s > 59 || h < 0 || mi < 0 || s < 0) {
    throw ParseError("bad ISO-8601 timestamp '" + text + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok()) throw ParseError("bad calendar date '" + text + "'");
  return (sys_days{ymd}.time_since_epoch() / 1s) + h * 3600 + mi * 60 + s;
}

void write_series_csv(const std::filesystem::path& path, const TimeSeriesSet& ts) {
  ts.check_shape();
  std::ofstream out = csv::open_for_write(path);
  out << "timestamp,entity_type,entity_id,p_kw,q_kvar\n";
  for (std::size_t t = 0; t < ts.length(); ++t) {
    const std::string stamp = format_iso8601(ts.timestamp(t));
    for (std::size_t k = 0; k < ts.load_bus_ids.size(); ++k) {
      out << stamp << ",load," << ts.load_bus_ids[k] << ',' << csv::format(ts.load_p_kw[k][t]) << ','
          << csv::format(ts.load_q_kvar[k][t]) << '\n';
    }
    for (std::size_t k = 0; k < ts.pv_kw.size(); ++k) {
      out << stamp << ",pv," << k << ',' << csv::format(ts.pv_kw[k][t]) << ",0\n";
    }
  }
}

TimeSeriesSet read_series_csv(const std::filesystem::path& path, const Network& net) {
  const csv::Table table = csv::read(path, {"timestamp", "entity_type", "entity_id", "p_kw", "q_kvar"});
  TimeSeriesSet ts;
  ts.load_bus_ids = net.load_bus_ids();
  const std::size_t loads = ts.load_bus_ids.size();
  const std::size_t invs = net.inverters().size();
  std::map<int, std::size_t> load_slot;
  for (std::size_t k = 0; k < loads; ++k) load_slot[ts.load_bus_ids[k]] = k;

  // Timestamps must appear in nondecreasing order, each with a full set of rows.
  std::vector<std::int64_t> stamps;
  std::vector<std::vector<bool>> seen_load;
  std::vector<std::vector<bool>> seen_pv;
  ts.load_p_kw.assign(loads, {});
  ts.load_q_kvar.assign(loads, {});
  ts.pv_kw.assign(invs, {});

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path.string() + ":" + std::to_string(table.line_numbers[r]);
    std::int64_t stamp = 0;
    try {
      stamp = parse_iso8601(row[0]);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (stamps.empty() || stamp > stamps.back()) {
      stamps.push_back(stamp);
      for (auto& v : ts.load_p_kw) v.push_back(0.0);
      for (auto& v : ts.load_q_kvar) v.push_back(0.0);
      for (auto& v : ts.pv_kw) v.push_back(0.0);
      seen_load.emplace_back(loads, false);
      seen_pv.emplace_back(invs, false);
    } else if (stamp < stamps.back()) {
      throw ParseError(where + ": timestamps out of order");
    }
    const std::size_t t = stamps.size() - 1;
    const auto id = static_cast<int>(csv::parse_int(row[2], where + " entity_id"));
    const double p = csv::parse_double(row[3], where + " p_kw");
    const double q = csv::parse_double(row[4], where + " q_kvar");
    if (row[1] == "load") {
      auto it = load_slot.find(id);
      if (it == load_slot.end()) throw ParseError(where + ": no loaded bus with id " + row[2]);
      if (seen_load[t][it->second]) throw ParseError(where + ": duplicate row");
      seen_load[t][it->second] = true;
      ts.load_p_kw[it->second][t] = p;
      ts.load_q_kvar[it->second][t] = q;
    } else if (row[1] == "pv") {
      if (id < 0 || static_cast<std::size_t>(id) >= invs) throw ParseError(where + ": no inverter " + row[2]);
      if (seen_pv[t][static_cast<std::size_t>(id)]) throw ParseError(where + ": duplicate row");
      seen_pv[t][static_cast<std::size_t>(id)] = true;
      ts.pv_kw[static_cast<std::size_t>(id)][t] = p;
    } else {
      throw ParseError(where + ": entity_type must be 'load' or 'pv'");
    }
  }
  for (std::size_t t = 0; t < stamps.size(); ++t) {
    const bool full = std::all_of(seen_load[t].begin(), seen_load[t].end(), [](bool b) { return b; }) &&
                      std::all_of(seen_pv[t].begin(), seen_pv[t].end(), [](bool b) { return b; });
    if (!full) throw ParseError(path.string() + ": timestamp " + format_iso8601(stamps[t]) + " is missing entities");
  }
  if (stamps.size() >= 2) {
    const std::int64_t step = stamps[1] - stamps[0];
    for (std::size_t t = 1; t < stamps.size(); ++t) {
      if (stamps[t] - stamps[t - 1] != step) throw ParseError(path.string() + ": irregular timestamp spacing");
    }
    if (step % 60 != 0) throw ParseError(path.string() + ": step must be whole minutes");
    ts.step_minutes = static_cast<int>(step / 60);
  }
  ts.start_unix = stamps.empty() ? 0 : stamps.front();
  return ts;
}

}  // namespace vvlab
