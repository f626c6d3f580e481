#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vvlab/conformal.hpp"
#include "vvlab/netmodel.hpp"
#include "vvlab/powerflow.hpp"
#include "vvlab/scenario.hpp"

namespace vvlab::env {

inline constexpr std::size_t kStepsPerDay = 48;

struct CostConfig {
  double c_p = 20.0;  // $ per MW of active loss
  double c_v = 0.1;   // per bus outside the voltage band
  double c_u = 1.0;   // per tap step / capacitor toggle
  double v_lo = 0.95;
  double v_hi = 1.05;
  double nonconvergence_reward = -100.0;
};

struct ActionVector {
  int tap = 0;
  std::vector<int> caps;
  std::vector<double> q_dg_kvar;

  bool operator==(const ActionVector&) const = default;
};

// Physical operating point: loads per bus index, PV per inverter.
struct Snapshot {
  std::vector<double> load_p_kw;
  std::vector<double> load_q_kvar;
  std::vector<double> pv_kw;
};

Snapshot snapshot_at(const Network& net, const TimeSeriesSet& ts, std::size_t t);

// Channel values (load P per loaded bus, then PV per inverter) at t.
std::vector<double> channel_values(const TimeSeriesSet& ts, std::size_t t);
std::size_t channel_count(const Network& net);

// Result of applying an action to a snapshot through one power-flow solve.
struct ActionEvaluation {
  bool converged = false;
  double p_loss_mw = 0.0;
  int violations = 0;
  PowerFlowSolution solution;
  ActionVector applied;  // after clipping tap range and inverter limits

  // C_p * loss + C_v * violations; +inf when the solve failed.
  double objective(const CostConfig& costs) const;
};

// Clips the tap to the regulator range and each q setpoint to the inverter
// headroom at the snapshot's PV output.
ActionVector clip_action(const Network& net, const Snapshot& snap, const ActionVector& a);

ActionEvaluation evaluate_action(const Network& net, const Snapshot& snap, const ActionVector& a,
                                 const CostConfig& costs,
                                 const std::vector<AdmittanceMatrix>* ybus_by_caps = nullptr);

// Y for every capacitor combination, indexed by the status bit pattern.
std::vector<AdmittanceMatrix> admittance_table(const Network& net);
std::size_t cap_pattern(std::span<const int> caps);

// Observation before augmentation. Injection features are net (generation
// minus load) per non-slack bus, divided by the feeder's peak apparent power.
struct EnvState {
  Eigen::VectorXd prev_p, prev_q;          // actual injections at t-1
  Eigen::VectorXd forecast_p, forecast_q;  // forecast injections at t
  int tap = 0;
  std::vector<int> caps;
  double time_sin = 0.0, time_cos = 1.0;
  std::vector<double> channel_forecast;    // normalized, per channel

  // Layout: prev_p | prev_q | forecast_p | forecast_q | tap/tap_scale | caps | sin | cos.
  Eigen::VectorXd features(double tap_scale) const;
};

struct AdversarialState {
  EnvState base;
  std::vector<double> lower, upper;  // normalized channel bounds
  Eigen::VectorXd features;          // base features | lower | upper
};

// Appends interval bounds to a state. Each channel box is the conformal
// interval widened, if needed, to contain the channel forecast. Throws
// PreconditionError on a channel-count mismatch.
AdversarialState augment(const EnvState& state, std::span<const conformal::PredictionInterval> intervals,
                         double normalizer, double tap_scale);

enum class BoundsMode { kConformal, kZeroWidth };

struct EnvConfig {
  CostConfig costs;
  BoundsMode bounds = BoundsMode::kConformal;
};

// Truth drives the physics, forecasts and intervals drive the observation.
// intervals[channel][t] is required for every observed step in kConformal mode.
struct EpisodeData {
  TimeSeriesSet truth;
  ForecastSet forecast;
  std::vector<std::vector<std::optional<conformal::PredictionInterval>>> intervals;
};

struct StepInfo {
  double p_loss_mw = 0.0;
  int violations = 0;
  int switches = 0;
  bool converged = true;
};

struct StepRecord {
  std::size_t timestep = 0;
  double reward = 0.0;
  StepInfo info;
  ActionVector action;
};

struct StepOutcome {
  double reward = 0.0;
  AdversarialState next;
  StepInfo info;
  ActionVector applied;
  bool terminal = false;
};

class VoltVarEnv {
 public:
  VoltVarEnv(Network net, EpisodeData data, EnvConfig cfg = {});

  std::size_t day_count() const { return data_.truth.day_count(); }
  // True when every observation needed by day `day` is available.
  bool day_available(std::size_t day) const;

  AdversarialState reset(std::size_t day);
  StepOutcome step(const ActionVector& action);

  const AdversarialState& observation() const { return obs_; }
  // Inverter headroom at the forecast PV of the current step.
  std::vector<double> observation_q_limits() const;
  // Truth snapshot of the current step (for oracle comparison only).
  Snapshot current_truth() const;
  std::size_t current_timestep() const { return t_; }
  bool terminal() const { return steps_taken_ >= kStepsPerDay; }

  std::size_t state_dim() const;
  std::size_t channel_count() const { return channels_; }
  const Network& network() const { return net_; }
  const EnvConfig& config() const { return cfg_; }
  const EpisodeData& data() const { return data_; }
  double normalizer() const { return normalizer_; }
  double tap_scale() const { return tap_scale_; }

 private:
  AdversarialState observe(std::size_t t) const;

  Network net_;
  EpisodeData data_;
  EnvConfig cfg_;
  std::vector<AdmittanceMatrix> ybus_;
  std::size_t channels_ = 0;
  double normalizer_ = 1.0;
  double tap_scale_ = 1.0;

  std::size_t t_ = 0;
  std::size_t steps_taken_ = kStepsPerDay;
  int tap_ = 0;
  std::vector<int> caps_;
  AdversarialState obs_;
};

// Sum of violations over N_test steps and n_phases buses.
double vvr(std::span<const StepRecord> records, std::size_t n_phases);

struct EpisodeMetrics {
  std::vector<StepRecord> records;
  double mean_loss_mw = 0.0;
  double std_loss_mw = 0.0;
  double mean_reward = 0.0;
  double voltage_violation_ratio = 0.0;
};

EpisodeMetrics summarize(std::vector<StepRecord> records, std::size_t n_phases);

// Evaluation log: timestep,reward,p_loss_mw,violations,switches,converged,tap,cap_states,q_dg...
void write_eval_log(const std::filesystem::path& path, const std::vector<StepRecord>& records,
                    std::size_t inverter_count);

}  // namespace vvlab::env
