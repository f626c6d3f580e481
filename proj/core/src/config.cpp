#include "vvlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "vvlab/csv.hpp"
#include "vvlab/error.hpp"

namespace vvlab {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ValidationError("unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
  }
}

template <typename T>
void take(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + where + key + "' has the wrong type");
  }
}

void take_path(const json& j, const char* key, std::filesystem::path& out) {
  std::string s;
  take(j, key, s, "");
  if (j.contains(key)) out = s;
}

}  // namespace

const char* to_string(env::BoundsMode mode) {
  return mode == env::BoundsMode::kConformal ? "conformal" : "zero_width";
}

env::BoundsMode parse_bounds_mode(const std::string& text) {
  if (text == "conformal") return env::BoundsMode::kConformal;
  if (text == "zero_width") return env::BoundsMode::kZeroWidth;
  throw ValidationError("bounds must be 'conformal' or 'zero_width', got '" + text + "'");
}

RunConfig RunConfig::from_json(const json& j) { return from_json(j, RunConfig{}); }

RunConfig RunConfig::from_json(const json& j, RunConfig c) {
  check_keys(j, "", {"network", "data_dir", "intervals", "model_dir", "out_dir", "seed", "days", "scenario", "split",
                     "conformal", "train", "costs", "bounds", "evaluation"});
  take_path(j, "network", c.network);
  take_path(j, "data_dir", c.data_dir);
  take_path(j, "intervals", c.intervals);
  take_path(j, "model_dir", c.model_dir);
  take_path(j, "out_dir", c.out_dir);
  if (j.contains("seed") && !j.at("seed").is_null()) {
    std::uint64_t s = 0;
    take(j, "seed", s, "");
    c.seed = s;
  }
  take(j, "days", c.days, "");
  if (j.contains("bounds")) {
    std::string b;
    take(j, "bounds", b, "");
    c.bounds = parse_bounds_mode(b);
  }
  if (j.contains("scenario")) {
    const json& s = j.at("scenario");
    check_keys(s, "scenario", {"load_profile", "load_sigma", "pv_sigma", "pv_log_mean", "pv_peak_fraction",
                               "sunrise_hour", "sunset_hour", "forecast_noise", "start"});
    const std::string w = "scenario.";
    take(s, "load_profile", c.scenario.load_profile, w);
    take(s, "load_sigma", c.scenario.load_sigma, w);
    take(s, "pv_sigma", c.scenario.pv_sigma, w);
    if (s.contains("pv_log_mean") && !s.at("pv_log_mean").is_null()) {
      double m = 0.0;
      take(s, "pv_log_mean", m, w);
      c.scenario.pv_log_mean = m;
    }
    take(s, "pv_peak_fraction", c.scenario.pv_peak_fraction, w);
    take(s, "sunrise_hour", c.scenario.sunrise_hour, w);
    take(s, "sunset_hour", c.scenario.sunset_hour, w);
    take(s, "forecast_noise", c.scenario.forecast_noise, w);
    if (s.contains("start")) {
      std::string ts;
      take(s, "start", ts, w);
      c.scenario.start_unix = parse_iso8601(ts);
    }
  }
  if (j.contains("split")) {
    check_keys(j.at("split"), "split", {"train_fraction"});
    take(j.at("split"), "train_fraction", c.split.train_fraction, "split.");
  }
  if (j.contains("conformal")) {
    const json& s = j.at("conformal");
    check_keys(s, "conformal", {"ensemble_size", "lag", "ridge", "window", "alpha"});
    const std::string w = "conformal.";
    take(s, "ensemble_size", c.conformal.fit.ensemble_size, w);
    take(s, "lag", c.conformal.fit.lag, w);
    take(s, "ridge", c.conformal.fit.ridge, w);
    take(s, "window", c.conformal.window, w);
    take(s, "alpha", c.conformal.alpha, w);
  }
  if (j.contains("train")) {
    const json& s = j.at("train");
    check_keys(s, "train", {"gamma", "tau", "actor_lr", "critic_lr", "noise", "pretrain_steps", "reward_scale",
                            "episodes", "batch_size", "buffer_capacity", "hidden", "online_targets"});
    const std::string w = "train.";
    take(s, "gamma", c.train.gamma, w);
    take(s, "tau", c.train.tau, w);
    take(s, "actor_lr", c.train.actor_lr, w);
    take(s, "critic_lr", c.train.critic_lr, w);
    take(s, "noise", c.train.noise, w);
    take(s, "pretrain_steps", c.train.pretrain_steps, w);
    take(s, "reward_scale", c.train.reward_scale, w);
    take(s, "episodes", c.train.episodes, w);
    take(s, "batch_size", c.train.batch_size, w);
    take(s, "buffer_capacity", c.train.buffer_capacity, w);
    take(s, "hidden", c.train.hidden, w);
    take(s, "online_targets", c.train.online_targets, w);
  }
  if (j.contains("costs")) {
    const json& s = j.at("costs");
    check_keys(s, "costs", {"c_p", "c_v", "c_u", "v_lo", "v_hi", "nonconvergence_reward"});
    const std::string w = "costs.";
    take(s, "c_p", c.costs.c_p, w);
    take(s, "c_v", c.costs.c_v, w);
    take(s, "c_u", c.costs.c_u, w);
    take(s, "v_lo", c.costs.v_lo, w);
    take(s, "v_hi", c.costs.v_hi, w);
    take(s, "nonconvergence_reward", c.costs.nonconvergence_reward, w);
  }
  if (j.contains("evaluation")) {
    const json& s = j.at("evaluation");
    check_keys(s, "evaluation", {"oracle_q_levels", "oracle_tap_lo", "oracle_tap_hi", "max_days"});
    const std::string w = "evaluation.";
    take(s, "oracle_q_levels", c.evaluation.oracle_q_levels, w);
    for (const char* key : {"oracle_tap_lo", "oracle_tap_hi"}) {
      if (!s.contains(key) || s.at(key).is_null()) continue;
      int tap = 0;
      take(s, key, tap, w);
      (std::string(key) == "oracle_tap_lo" ? c.evaluation.oracle_tap_lo : c.evaluation.oracle_tap_hi) = tap;
    }
    take(s, "max_days", c.evaluation.max_days, w);
  }
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["network"] = network.generic_string();
  j["data_dir"] = data_dir.generic_string();
  j["intervals"] = intervals.generic_string();
  j["model_dir"] = model_dir.generic_string();
  j["out_dir"] = out_dir.generic_string();
  j["seed"] = seed ? json(*seed) : json(nullptr);
  j["days"] = days;
  j["bounds"] = to_string(bounds);
  j["scenario"] = {{"load_profile", scenario.load_profile.empty() ? default_load_profile() : scenario.load_profile},
                   {"load_sigma", scenario.load_sigma},
                   {"pv_sigma", scenario.pv_sigma},
                   {"pv_log_mean", scenario.pv_log_mean ? json(*scenario.pv_log_mean) : json(nullptr)},
                   {"pv_peak_fraction", scenario.pv_peak_fraction},
                   {"sunrise_hour", scenario.sunrise_hour},
                   {"sunset_hour", scenario.sunset_hour},
                   {"forecast_noise", scenario.forecast_noise},
                   {"start", format_iso8601(scenario.start_unix)}};
  j["split"] = {{"train_fraction", split.train_fraction}};
  j["conformal"] = {{"ensemble_size", conformal.fit.ensemble_size},
                    {"lag", conformal.fit.lag},
                    {"ridge", conformal.fit.ridge},
                    {"window", conformal.window},
                    {"alpha", conformal.alpha}};
  j["train"] = {{"gamma", train.gamma},
                {"tau", train.tau},
                {"actor_lr", train.actor_lr},
                {"critic_lr", train.critic_lr},
                {"noise", train.noise},
                {"pretrain_steps", train.pretrain_steps},
                {"reward_scale", train.reward_scale},
                {"episodes", train.episodes},
                {"batch_size", train.batch_size},
                {"buffer_capacity", train.buffer_capacity},
                {"hidden", train.hidden},
                {"online_targets", train.online_targets}};
  j["costs"] = {{"c_p", costs.c_p},   {"c_v", costs.c_v},   {"c_u", costs.c_u},
                {"v_lo", costs.v_lo}, {"v_hi", costs.v_hi}, {"nonconvergence_reward", costs.nonconvergence_reward}};
  j["evaluation"] = {{"oracle_q_levels", evaluation.oracle_q_levels}, {"max_days", evaluation.max_days}};
  if (evaluation.oracle_tap_lo) j["evaluation"]["oracle_tap_lo"] = *evaluation.oracle_tap_lo;
  if (evaluation.oracle_tap_hi) j["evaluation"]["oracle_tap_hi"] = *evaluation.oracle_tap_hi;
  return j;
}

void RunConfig::validate() const {
  if (days < 1) throw ValidationError("days must be >= 1");
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) {
    throw ValidationError("split.train_fraction must lie in (0, 1)");
  }
  if (!(conformal.alpha > 0.0 && conformal.alpha < 1.0)) throw ValidationError("conformal.alpha must lie in (0, 1)");
  if (conformal.fit.ensemble_size < 2) throw ValidationError("conformal.ensemble_size must be >= 2");
  if (conformal.fit.lag < 1) throw ValidationError("conformal.lag must be >= 1");
  if (conformal.window < 1) throw ValidationError("conformal.window must be >= 1");
  if (conformal.fit.ridge < 0.0) throw ValidationError("conformal.ridge must be >= 0");
  if (scenario.load_sigma < 0.0 || scenario.pv_sigma < 0.0 || scenario.forecast_noise < 0.0) {
    throw ValidationError("scenario standard deviations must be >= 0");
  }
  if (!(costs.v_lo < costs.v_hi)) throw ValidationError("costs.v_lo must be below costs.v_hi");
  if (evaluation.oracle_q_levels < 1) throw ValidationError("evaluation.oracle_q_levels must be >= 1");
  if (evaluation.max_days < 0) throw ValidationError("evaluation.max_days must be >= 0");
  train.validate();
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw ValidationError("missing required option --seed");
  return *seed;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out = csv::open_for_write(path);
  out << j.dump(2) << '\n';
}

std::vector<std::size_t> days_within(const TimeSeriesSet& ts, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> days;
  const std::size_t spd = ts.steps_per_day();
  for (std::size_t d = 0; d < ts.day_count(); ++d) {
    if (d * spd >= begin && (d + 1) * spd <= end) days.push_back(d);
  }
  return days;
}

DaySplit split_days(const TimeSeriesSet& ts, const SplitSpec& spec) {
  const auto cut = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(ts.length())));
  return {cut, days_within(ts, 0, cut), days_within(ts, cut, ts.length())};
}

std::vector<conformal::IntervalTrack> fit_channel_tracks(const TimeSeriesSet& truth, std::size_t train_len,
                                                         const conformal::TrackOptions& opts, std::uint64_t seed) {
  std::vector<std::vector<double>> series;
  for (const auto& s : truth.load_p_kw) series.push_back(s);
  for (const auto& s : truth.pv_kw) series.push_back(s);
  std::vector<conformal::IntervalTrack> tracks;
  tracks.reserve(series.size());
  for (std::size_t c = 0; c < series.size(); ++c) {
    std::seed_seq seq{seed, std::uint64_t{0xc0f0}, static_cast<std::uint64_t>(c)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    const std::uint64_t channel_seed = (std::uint64_t{words[0]} << 32) | words[1];
    tracks.push_back(conformal::build_track(series[c], train_len, opts, channel_seed));
  }
  return tracks;
}

std::vector<std::vector<std::optional<conformal::PredictionInterval>>> interval_table(
    const std::vector<conformal::IntervalTrack>& tracks) {
  std::vector<std::vector<std::optional<conformal::PredictionInterval>>> table;
  table.reserve(tracks.size());
  for (const auto& t : tracks) table.push_back(t.intervals);
  return table;
}

void write_interval_csv(const std::filesystem::path& path, const TimeSeriesSet& ts,
                        const std::vector<std::vector<std::optional<conformal::PredictionInterval>>>& table) {
  std::ofstream out = csv::open_for_write(path);
  out << "timestamp,channel,point,lower,upper,alpha\n";
  for (std::size_t t = 0; t < ts.length(); ++t) {
    const std::string stamp = format_iso8601(ts.timestamp(t));
    for (std::size_t c = 0; c < table.size(); ++c) {
      const auto& iv = table[c].at(t);
      if (!iv) continue;
      out << stamp << ',' << c << ',' << csv::format(iv->point) << ',' << csv::format(iv->lower) << ','
          << csv::format(iv->upper) << ',' << csv::format(iv->alpha) << '\n';
    }
  }
}

std::vector<std::vector<std::optional<conformal::PredictionInterval>>> read_interval_csv(
    const std::filesystem::path& path, const TimeSeriesSet& ts, std::size_t channels) {
  const csv::Table tab = csv::read(path, {"timestamp", "channel", "point", "lower", "upper", "alpha"});
  std::vector<std::vector<std::optional<conformal::PredictionInterval>>> table(
      channels, std::vector<std::optional<conformal::PredictionInterval>>(ts.length()));
  const std::int64_t step = static_cast<std::int64_t>(ts.step_minutes) * 60;
  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    const std::string where = path.string() + ":" + std::to_string(tab.line_numbers[r]);
    const std::int64_t offset = parse_iso8601(row[0]) - ts.start_unix;
    if (offset < 0 || offset % step != 0 || static_cast<std::size_t>(offset / step) >= ts.length()) {
      throw ParseError(where + ": timestamp " + row[0] + " is not in the series");
    }
    const long long c = csv::parse_int(row[1], where);
    if (c < 0 || static_cast<std::size_t>(c) >= channels) {
      throw ParseError(where + ": channel " + row[1] + " out of range");
    }
    conformal::PredictionInterval iv{csv::parse_double(row[2], where), csv::parse_double(row[3], where),
                                     csv::parse_double(row[4], where), csv::parse_double(row[5], where)};
    if (!(iv.lower <= iv.upper)) throw ParseError(where + ": lower bound exceeds upper bound");
    table[static_cast<std::size_t>(c)][static_cast<std::size_t>(offset / step)] = iv;
  }
  return table;
}

}  // namespace vvlab
