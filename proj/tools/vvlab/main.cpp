// vvlab: command-line front end for the Volt-VAR lab pipeline.

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vvlab/baseline.hpp"
#include "vvlab/config.hpp"
#include "vvlab/csv.hpp"
#include "vvlab/ddpg.hpp"
#include "vvlab/error.hpp"
#include "vvlab/neural.hpp"
#include "vvlab/powerflow.hpp"
#include "vvlab/scenario.hpp"
#include "vvlab/vvenv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vvlab::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

// Raised for failures after inputs validated (non-converged solves, I/O).
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

// Flag values; unset optionals leave the config file / default untouched.
struct Flags {
  std::string config;
  std::optional<std::string> network, data_dir, intervals, model_dir, out_dir, bounds;
  std::optional<std::uint64_t> seed;
  std::optional<int> days, episodes, max_days, q_levels, lag, ensemble_size, window;
  std::optional<double> forecast_noise, alpha, train_fraction;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Precedence, lowest first: built-in defaults, --config file, VVLAB_SEED, flags.
RunConfig resolve(const Flags& f, RunConfig base = {}) {
  RunConfig c = f.config.empty() ? std::move(base) : RunConfig::from_json(read_json_file(f.config), std::move(base));
  if (const char* env = std::getenv("VVLAB_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing text");
      c.seed = v;
    } catch (const std::exception&) {
      throw ValidationError(std::string("VVLAB_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  if (f.network) c.network = *f.network;
  if (f.data_dir) c.data_dir = *f.data_dir;
  if (f.intervals) c.intervals = *f.intervals;
  if (f.model_dir) c.model_dir = *f.model_dir;
  if (f.out_dir) c.out_dir = *f.out_dir;
  if (f.bounds) c.bounds = parse_bounds_mode(*f.bounds);
  if (f.seed) c.seed = *f.seed;
  if (f.days) c.days = *f.days;
  if (f.episodes) c.train.episodes = *f.episodes;
  if (f.max_days) c.evaluation.max_days = *f.max_days;
  if (f.q_levels) c.evaluation.oracle_q_levels = *f.q_levels;
  if (f.lag) c.conformal.fit.lag = *f.lag;
  if (f.ensemble_size) c.conformal.fit.ensemble_size = *f.ensemble_size;
  if (f.window) c.conformal.window = *f.window;
  if (f.forecast_noise) c.scenario.forecast_noise = *f.forecast_noise;
  if (f.alpha) c.conformal.alpha = *f.alpha;
  if (f.train_fraction) c.split.train_fraction = *f.train_fraction;
  c.validate();
  return c;
}

void require_path(const fs::path& p, const char* flag) {
  if (p.empty()) throw ValidationError(std::string("missing required option ") + flag);
}

void require_file(const fs::path& p, const char* flag) {
  require_path(p, flag);
  if (!fs::is_regular_file(p)) throw ValidationError(std::string(flag) + ": no such file '" + p.string() + "'");
}

fs::path intervals_path(const RunConfig& c) { return c.intervals.empty() ? c.data_dir / "intervals.csv" : c.intervals; }

// Resolved config echo (deterministic) and manifest (the only timestamped file).
void write_run_records(const fs::path& dir, const std::string& command, const RunConfig& c,
                       const std::vector<std::string>& outputs, const json& extra = json::object()) {
  write_json(dir / (command + ".config.json"), c.to_json());
  json m;
  m["command"] = command;
  m["created_utc"] = format_iso8601(static_cast<std::int64_t>(std::time(nullptr)));
  m["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  m["config"] = c.to_json();
  m["outputs"] = outputs;
  m.update(extra);
  write_json(dir / (command + ".manifest.json"), m);
}

// Path-free config for model sidecars, so sidecars do not depend on where a run wrote.
json portable_config(const RunConfig& c) {
  json j = c.to_json();
  for (const char* key : {"network", "data_dir", "intervals", "model_dir", "out_dir"}) j.erase(key);
  return j;
}

struct Dataset {
  TimeSeriesSet truth;
  ForecastSet forecast;
};

Dataset load_dataset(const Network& net, const fs::path& dir) {
  require_file(dir / "truth.csv", "--data-dir");
  require_file(dir / "forecast.csv", "--data-dir");
  Dataset d{read_series_csv(dir / "truth.csv", net), read_series_csv(dir / "forecast.csv", net)};
  if (d.truth.length() != d.forecast.length() || d.truth.start_unix != d.forecast.start_unix) {
    throw ValidationError("truth.csv and forecast.csv cover different periods");
  }
  return d;
}

env::VoltVarEnv make_env(const Network& net, const RunConfig& c, Dataset data) {
  env::EpisodeData ep{std::move(data.truth), std::move(data.forecast), {}};
  if (c.bounds == env::BoundsMode::kConformal) {
    const fs::path iv = intervals_path(c);
    require_file(iv, "--intervals");
    ep.intervals = read_interval_csv(iv, ep.truth, env::channel_count(net));
  }
  return env::VoltVarEnv(net, std::move(ep), {c.costs, c.bounds});
}

std::vector<std::size_t> available(const env::VoltVarEnv& e, const std::vector<std::size_t>& days, int limit) {
  std::vector<std::size_t> out;
  for (std::size_t d : days) {
    if (limit > 0 && out.size() >= static_cast<std::size_t>(limit)) break;
    if (e.day_available(d)) out.push_back(d);
  }
  return out;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeFailure("cannot write " + path.string());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- subcommands -----------------------------------------------------------

int run_generate(const Flags& f) {
  const RunConfig c = resolve(f);
  require_file(c.network, "--network");
  require_path(c.data_dir, "--data-dir");
  const std::uint64_t seed = c.require_seed();
  const Network net = load_network(c.network);
  const TimeSeriesSet truth = generate(net, c.days, seed, c.scenario);
  const ForecastSet forecast = make_forecasts(truth, c.scenario.forecast_noise, seed ^ 0x9e3779b97f4a7c15ULL);
  write_series_csv(c.data_dir / "truth.csv", truth);
  write_series_csv(c.data_dir / "forecast.csv", forecast);
  write_run_records(c.data_dir, "generate-data", c, {"truth.csv", "forecast.csv"});
  std::cout << "wrote " << truth.length() << " steps (" << truth.day_count() << " days) to " << c.data_dir.string()
            << '\n';
  return kExitOk;
}

int run_fit_conformal(const Flags& f) {
  RunConfig c = resolve(f);
  require_file(c.network, "--network");
  require_path(c.data_dir, "--data-dir");
  const std::uint64_t seed = c.require_seed();
  c.intervals = intervals_path(c);
  const Network net = load_network(c.network);
  const Dataset d = load_dataset(net, c.data_dir);
  const DaySplit split = split_days(d.truth, c.split);
  const auto table = interval_table(fit_channel_tracks(d.truth, split.train_len, c.conformal, seed));
  write_interval_csv(c.intervals, d.truth, table);
  const fs::path dir = c.intervals.has_parent_path() ? c.intervals.parent_path() : fs::path(".");
  write_run_records(dir, "fit-conformal", c, {c.intervals.filename().string()});
  std::cout << "wrote intervals for " << table.size() << " channels to " << c.intervals.string() << '\n';
  return kExitOk;
}

int run_train(const Flags& f) {
  RunConfig c = resolve(f);
  require_file(c.network, "--network");
  require_path(c.data_dir, "--data-dir");
  require_path(c.model_dir, "--model-dir");
  c.train.seed = c.require_seed();
  const Network net = load_network(c.network);
  env::VoltVarEnv e = make_env(net, c, load_dataset(net, c.data_dir));
  const DaySplit split = split_days(e.data().truth, c.split);
  const std::vector<std::size_t> days = available(e, split.train_days, 0);
  if (days.empty()) throw ValidationError("no training day has complete observations; add days or lower conformal.lag");

  const ddpg::TrainResult r = ddpg::train(e, days, c.train);
  ddpg::write_training_log(c.model_dir / "training_log.csv", r.log);
  write_bytes(c.model_dir / "actor.vvnn", nn::serialize(r.agent.actor));
  write_bytes(c.model_dir / "critic.vvnn", nn::serialize(r.agent.critic));
  json side;
  side["format"] = "vvnn";
  side["format_version"] = nn::kModelFormatVersion;
  side["seed"] = *c.seed;
  side["feature_layout_hash"] = ddpg::feature_layout_hash(e);
  side["state_dim"] = e.state_dim();
  side["action_head"] = {{"tap_min", r.agent.head.tap_min},
                         {"tap_max", r.agent.head.tap_max},
                         {"capacitors", r.agent.head.capacitors},
                         {"inverters", r.agent.head.inverters}};
  side["training_days"] = days;
  side["config"] = portable_config(c);
  write_json(c.model_dir / "model.json", side);
  write_run_records(c.model_dir, "train", c, {"training_log.csv", "actor.vvnn", "critic.vvnn", "model.json"});
  std::cout << "trained " << r.log.size() << " episodes on " << days.size() << " days; model in "
            << c.model_dir.string() << '\n';
  return kExitOk;
}

struct LoadedModel {
  RunConfig config;
  ddpg::Agent agent;
  std::string layout_hash;
};

// The sidecar's training config is the base; --config and flags override it.
LoadedModel load_model(const Flags& f) {
  if (!f.model_dir && f.config.empty()) throw ValidationError("missing required option --model-dir");
  fs::path dir = f.model_dir ? fs::path(*f.model_dir) : resolve(f).model_dir;
  require_path(dir, "--model-dir");
  require_file(dir / "model.json", "--model-dir");
  const json side = read_json_file(dir / "model.json");
  if (!side.contains("config") || !side.contains("feature_layout_hash")) {
    throw ValidationError((dir / "model.json").string() + " is not a vvlab model sidecar");
  }
  RunConfig base = RunConfig::from_json(side.at("config"));
  // Paths default to those of the training run.
  if (fs::is_regular_file(dir / "train.config.json")) {
    const RunConfig trained = RunConfig::from_json(read_json_file(dir / "train.config.json"));
    base.network = trained.network;
    base.data_dir = trained.data_dir;
    base.intervals = trained.intervals;
  }
  LoadedModel m;
  m.config = resolve(f, std::move(base));
  m.config.model_dir = dir;
  m.layout_hash = side.at("feature_layout_hash").get<std::string>();
  try {
    m.agent.actor = nn::deserialize(read_bytes(dir / "actor.vvnn"));
  } catch (const ParseError& e) {
    throw ParseError((dir / "actor.vvnn").string() + ": " + e.what());
  }
  return m;
}

env::VoltVarEnv model_env(LoadedModel& m, const Network& net) {
  require_path(m.config.data_dir, "--data-dir");
  env::VoltVarEnv e = make_env(net, m.config, load_dataset(net, m.config.data_dir));
  if (ddpg::feature_layout_hash(e) != m.layout_hash) {
    throw ValidationError("model feature layout " + m.layout_hash + " does not match this network/dataset (" +
                          ddpg::feature_layout_hash(e) + ")");
  }
  m.agent.head = ddpg::ActionHead::for_network(net);
  if (m.agent.actor.inputs() != static_cast<Eigen::Index>(e.state_dim()) ||
      m.agent.actor.outputs() != m.agent.head.width()) {
    throw ValidationError("actor shape does not match the environment");
  }
  return e;
}

fs::path output_dir(const RunConfig& c) { return c.out_dir.empty() ? c.model_dir : c.out_dir; }

int run_evaluate(const Flags& f) {
  LoadedModel m = load_model(f);
  require_file(m.config.network, "--network");
  const Network net = load_network(m.config.network);
  env::VoltVarEnv e = model_env(m, net);
  const DaySplit split = split_days(e.data().truth, m.config.split);
  const std::vector<std::size_t> days = available(e, split.test_days, m.config.evaluation.max_days);
  if (days.empty()) throw ValidationError("no held-out day with complete observations");

  const ddpg::EvaluationResult r = ddpg::evaluate(m.agent, e, days);
  const fs::path out = output_dir(m.config);
  env::write_eval_log(out / "eval_log.csv", r.metrics.records, net.inverters().size());
  int switches = 0;
  for (const auto& rec : r.metrics.records) switches += rec.info.switches;
  const json report = {{"days", days},
                       {"steps", r.metrics.records.size()},
                       {"bounds", to_string(m.config.bounds)},
                       {"mean_reward", r.metrics.mean_reward},
                       {"mean_p_loss_mw", r.metrics.mean_loss_mw},
                       {"std_p_loss_mw", r.metrics.std_loss_mw},
                       {"voltage_violation_ratio", r.metrics.voltage_violation_ratio},
                       {"total_switches", switches}};
  write_json(out / "evaluation.json", report);
  // Latency varies run to run, so it goes to the manifest rather than the report.
  write_run_records(out, "evaluate", m.config, {"eval_log.csv", "evaluation.json"},
                    {{"mean_decision_ms", r.mean_decision_ms}});
  std::cout << "steps=" << r.metrics.records.size() << " mean_reward=" << csv::format(r.metrics.mean_reward)
            << " mean_p_loss_mw=" << csv::format(r.metrics.mean_loss_mw)
            << " vvr=" << csv::format(r.metrics.voltage_violation_ratio)
            << " mean_decision_ms=" << csv::format(r.mean_decision_ms) << '\n';
  return kExitOk;
}

int run_oracle_compare(const Flags& f) {
  LoadedModel m = load_model(f);
  require_file(m.config.network, "--network");
  const Network net = load_network(m.config.network);
  env::VoltVarEnv e = model_env(m, net);
  const RunConfig& c = m.config;
  const DaySplit split = split_days(e.data().truth, c.split);
  const std::vector<std::size_t> days = available(e, split.test_days, c.evaluation.max_days);
  if (days.empty()) throw ValidationError("no held-out day with complete observations");

  const int lo = c.evaluation.oracle_tap_lo.value_or(net.regulator().tap_min);
  const int hi = c.evaluation.oracle_tap_hi.value_or(net.regulator().tap_max);
  const baseline::ActionGrid grid = baseline::ActionGrid::with_taps(net, lo, hi, c.evaluation.oracle_q_levels);
  const std::vector<int> load_ids = net.load_bus_ids();

  const fs::path out = output_dir(c);
  std::ofstream csv_out = csv::open_for_write(out / "oracle_compare.csv");
  csv_out << "timestep,oracle_objective,agent_objective,gap,robust_oracle_objective\n";
  double sum_oracle = 0.0, sum_agent = 0.0, sum_robust = 0.0, sum_switch_cost = 0.0;
  std::size_t steps = 0;
  for (std::size_t day : days) {
    env::AdversarialState s = e.reset(day);
    while (!e.terminal()) {
      const std::size_t t = e.current_timestep();
      const env::Snapshot truth = e.current_truth();
      const env::ActionVector action = m.agent.head.decode(m.agent.policy(s.features), e.observation_q_limits());
      const baseline::OracleResult oracle = baseline::exhaustive_vvo(net, truth, grid, c.costs);

      // Robust oracle: corner min-max over the observation's box, scored on truth.
      const env::Snapshot fc = env::snapshot_at(net, e.data().forecast, t);
      std::vector<double> lower(s.lower.size()), upper(s.upper.size());
      for (std::size_t ch = 0; ch < lower.size(); ++ch) {
        lower[ch] = s.lower[ch] * e.normalizer();
        upper[ch] = s.upper[ch] * e.normalizer();
      }
      const auto box = baseline::ScenarioBox::around(net, fc, lower, upper);
      const baseline::OracleResult robust = baseline::robust_exhaustive(net, box, grid, c.costs);
      const double robust_truth = env::evaluate_action(net, truth, robust.action, c.costs).objective(c.costs);

      const env::StepOutcome step = e.step(action);
      const double agent = step.info.converged
                               ? c.costs.c_p * step.info.p_loss_mw + c.costs.c_v * step.info.violations
                               : -step.reward;
      csv_out << t << ',' << csv::format(oracle.objective) << ',' << csv::format(agent) << ','
              << csv::format(agent - oracle.objective) << ',' << csv::format(robust_truth) << '\n';
      sum_oracle += oracle.objective;
      sum_agent += agent;
      sum_robust += robust_truth;
      sum_switch_cost += c.costs.c_u * step.info.switches;
      ++steps;
      s = step.next;
    }
  }
  csv_out.close();
  const auto n = static_cast<double>(steps);
  write_json(out / "oracle_compare.json", {{"steps", steps},
                                           {"grid_combinations", grid.combinations()},
                                           {"mean_oracle_objective", sum_oracle / n},
                                           {"mean_agent_objective", sum_agent / n},
                                           {"mean_gap", (sum_agent - sum_oracle) / n},
                                           {"mean_robust_oracle_objective", sum_robust / n},
                                           {"mean_agent_switching_cost", sum_switch_cost / n}});
  write_run_records(out, "oracle-compare", c, {"oracle_compare.csv", "oracle_compare.json"});
  std::cout << "steps=" << steps << " mean_oracle=" << csv::format(sum_oracle / n)
            << " mean_agent=" << csv::format(sum_agent / n) << " mean_robust=" << csv::format(sum_robust / n) << '\n';
  return kExitOk;
}

struct PowerflowFlags {
  std::string network, injections, out = "powerflow.csv", caps;
  int tap = 0;
};

int run_powerflow(const PowerflowFlags& f) {
  require_file(f.network, "--network");
  require_file(f.injections, "--injections");
  const Network net = load_network(f.network);
  if (!net.regulator().in_range(f.tap)) {
    throw ValidationError("--tap " + std::to_string(f.tap) + " outside [" + std::to_string(net.regulator().tap_min) +
                          ", " + std::to_string(net.regulator().tap_max) + "]");
  }
  std::vector<int> caps(net.capacitors().size(), 0);
  if (!f.caps.empty()) {
    if (f.caps.size() != caps.size() || f.caps.find_first_not_of("01") != std::string::npos) {
      throw ValidationError("--caps needs one 0/1 character per capacitor (" + std::to_string(caps.size()) + ")");
    }
    for (std::size_t k = 0; k < caps.size(); ++k) caps[k] = f.caps[k] - '0';
  }

  const csv::Table tab = csv::read(f.injections, {"bus_id", "p_kw", "q_kvar"});
  InjectionVector inj = InjectionVector::zeros(net.bus_count());
  std::set<long long> seen;
  const double kw_per_pu = 1000.0 * net.base_mva();
  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const std::string where = f.injections + ":" + std::to_string(tab.line_numbers[r]);
    const long long id = csv::parse_int(tab.rows[r][0], where);
    if (!seen.insert(id).second) throw ParseError(where + ": duplicate bus_id " + tab.rows[r][0]);
    std::size_t i = 0;
    try {
      i = net.index_of(static_cast<int>(id));
    } catch (const ValidationError&) {
      throw ParseError(where + ": unknown bus_id " + tab.rows[r][0]);
    }
    inj.p[static_cast<Eigen::Index>(i)] = csv::parse_double(tab.rows[r][1], where) / kw_per_pu;
    inj.q[static_cast<Eigen::Index>(i)] = csv::parse_double(tab.rows[r][2], where) / kw_per_pu;
  }

  const PowerFlowSolution sol =
      solve(build_admittance(net, caps), inj, net.regulator().reference_voltage(f.tap), net.slack_index());
  if (!sol.converged) {
    throw RuntimeFailure("power flow did not converge (max mismatch " + csv::format(sol.max_mismatch) + " p.u.)");
  }
  std::ofstream out = csv::open_for_write(f.out);
  out << "bus_id,v_pu,theta_rad\n";
  for (std::size_t i = 0; i < net.bus_count(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << net.buses()[i].id << ',' << csv::format(sol.vm[k]) << ',' << csv::format(sol.va[k]) << '\n';
  }
  const LossReport loss = compute_losses(net, sol);
  std::cout << "converged iterations=" << sol.iterations << " p_loss_mw=" << csv::format(loss.p_loss_mw)
            << " q_loss_mvar=" << csv::format(loss.q_loss_mvar) << " v_min=" << csv::format(sol.vm.minCoeff())
            << " v_max=" << csv::format(sol.vm.maxCoeff()) << '\n';
  return kExitOk;
}

// ---- argument wiring ------------------------------------------------------

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file (flags override its values)")->check(CLI::ExistingFile);
  sub->add_option("--network", f.network, "Network JSON file");
  sub->add_option("--seed", f.seed, "Random seed (overrides VVLAB_SEED and the config file)");
}

void add_data(CLI::App* sub, Flags& f) {
  sub->add_option("--data-dir", f.data_dir, "Directory holding truth.csv and forecast.csv");
  sub->add_option("--intervals", f.intervals, "Interval CSV (default: <data-dir>/intervals.csv)");
  sub->add_option("--bounds", f.bounds, "Observation bounds: conformal | zero_width");
}

int dispatch(int argc, char** argv) {
  CLI::App app{"vvlab: Volt-VAR optimization lab", "vvlab"};
  app.require_subcommand(1);
  app.footer(
      "Config precedence (lowest first): defaults, --config file, VVLAB_SEED, flags.\n"
      "Exit codes: 0 success, 1 validation error, 2 runtime failure.");

  Flags f;
  PowerflowFlags pf;

  auto* gen = app.add_subcommand("generate-data", "Synthesize truth and forecast load/PV series");
  add_common(gen, f);
  gen->add_option("--data-dir", f.data_dir, "Output directory");
  gen->add_option("--days", f.days, "Number of days to generate");
  gen->add_option("--forecast-noise", f.forecast_noise, "Relative forecast noise std");

  auto* fit = app.add_subcommand("fit-conformal", "Fit per-channel conformal prediction intervals");
  add_common(fit, f);
  fit->add_option("--data-dir", f.data_dir, "Directory holding truth.csv and forecast.csv");
  fit->add_option("--intervals", f.intervals, "Output interval CSV (default: <data-dir>/intervals.csv)");
  fit->add_option("--alpha", f.alpha, "Miscoverage level");
  fit->add_option("--lag", f.lag, "Autoregressive lag M");
  fit->add_option("--ensemble-size", f.ensemble_size, "Bootstrap ensemble size B");
  fit->add_option("--window", f.window, "Residual window T");
  fit->add_option("--train-fraction", f.train_fraction, "Chronological training fraction");

  auto* tr = app.add_subcommand("train", "Train a DDPG agent");
  add_common(tr, f);
  add_data(tr, f);
  tr->add_option("--model-dir", f.model_dir, "Output directory for the model and training log");
  tr->add_option("--episodes", f.episodes, "Training episodes");

  auto* ev = app.add_subcommand("evaluate", "Greedy rollout of a trained agent on held-out days");
  add_common(ev, f);
  add_data(ev, f);
  ev->add_option("--model-dir", f.model_dir, "Directory written by train");
  ev->add_option("--out-dir", f.out_dir, "Output directory (default: --model-dir)");
  ev->add_option("--max-days", f.max_days, "Evaluate at most this many held-out days (0 = all)");

  auto* oc = app.add_subcommand("oracle-compare", "Per-step comparison against the exhaustive oracles");
  add_common(oc, f);
  add_data(oc, f);
  oc->add_option("--model-dir", f.model_dir, "Directory written by train");
  oc->add_option("--out-dir", f.out_dir, "Output directory (default: --model-dir)");
  oc->add_option("--max-days", f.max_days, "Compare at most this many held-out days (0 = all)");
  oc->add_option("--q-levels", f.q_levels, "Inverter setpoint levels in the oracle grid");

  auto* pfc = app.add_subcommand("powerflow", "Solve one power flow from an injections CSV");
  pfc->add_option("--network", pf.network, "Network JSON file")->required();
  pfc->add_option("--injections", pf.injections, "CSV with bus_id,p_kw,q_kvar (net injection, load negative)")
      ->required();
  pfc->add_option("--out", pf.out, "Solution CSV path")->capture_default_str();
  pfc->add_option("--tap", pf.tap, "Regulator tap position")->capture_default_str();
  pfc->add_option("--caps", pf.caps, "Capacitor states, one 0/1 per bank (default: all off)");

  if (argc > 1 && argv[1][0] != '-') {
    bool known = false;
    for (const CLI::App* sub : app.get_subcommands({})) known = known || sub->check_name(argv[1]);
    if (!known) {
      std::cerr << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
      return kExitValidation;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (const CLI::App* sub : app.get_subcommands()) failing = sub;
    std::cerr << failing->help();
    return kExitValidation;
  }

  if (gen->parsed()) return run_generate(f);
  if (fit->parsed()) return run_fit_conformal(f);
  if (tr->parsed()) return run_train(f);
  if (ev->parsed()) return run_evaluate(f);
  if (oc->parsed()) return run_oracle_compare(f);
  return run_powerflow(pf);
}

}  // namespace
}  // namespace vvlab::cli

int main(int argc, char** argv) {
  using namespace vvlab;
  try {
    return cli::dispatch(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitValidation;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return cli::kExitRuntime;
  }
}
