#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vvlab/neural.hpp"
#include "vvlab/vvenv.hpp"

namespace vvlab::ddpg {

// Hybrid action head. The actor's final affine outputs are squashed per slot:
// sigmoid for the regulator and each capacitor, tanh for each inverter.
struct ActionHead {
  int tap_min = -16;
  int tap_max = 16;
  int capacitors = 0;
  int inverters = 0;

  int width() const { return 1 + capacitors + inverters; }
  int discrete() const { return 1 + capacitors; }

  // Squash affine outputs into head ranges, and the elementwise derivative.
  Eigen::MatrixXd squash(const Eigen::MatrixXd& affine) const;
  Eigen::MatrixXd squash_derivative(const Eigen::MatrixXd& squashed) const;
  // Clip to [0, 1] for discrete slots, [-1, 1] for continuous slots.
  Eigen::VectorXd clip(Eigen::VectorXd raw) const;

  // tap = round(tap_min + s * (tap_max - tap_min)); capacitor on iff s > 0.5;
  // q = tanh output * q_limit.
  env::ActionVector decode(const Eigen::VectorXd& raw, std::span<const double> q_limits) const;
  // Head values that decode back to `action` (used for heuristic transitions).
  Eigen::VectorXd encode(const env::ActionVector& action, std::span<const double> q_limits) const;

  static ActionHead for_network(const Network& net);
};

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;  // raw head values
  double reward = 0.0;
  Eigen::VectorXd next_state;
};

// Fixed-capacity FIFO; once full, each push evicts the oldest transition.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return size_ == capacity_; }
  // i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;
  std::vector<const Transition*> sample(std::size_t batch, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> ring_;
  std::size_t head_ = 0;  // slot of the oldest transition
  std::size_t size_ = 0;
};

struct TrainConfig {
  double gamma = 0.95;
  double tau = 0.005;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double noise = 0.07;
  int pretrain_steps = 500;
  double reward_scale = 5.0;
  int episodes = 200;
  int batch_size = 64;
  int buffer_capacity = 3000;
  std::vector<int> hidden = {30, 40, 80};
  std::uint64_t seed = 0;
  // Bootstrap critic targets from the online networks instead of the targets.
  bool online_targets = false;

  void validate() const;
};

struct Agent {
  ActionHead head;
  nn::DenseNet actor;   // affine output; squashed by head
  nn::DenseNet critic;  // input: state | raw action
  nn::DenseNet actor_target;
  nn::DenseNet critic_target;
  nn::AdamState actor_opt;
  nn::AdamState critic_opt;

  static Agent create(std::size_t state_dim, const ActionHead& head, const TrainConfig& cfg, std::mt19937_64& rng);

  std::size_t state_dim() const { return static_cast<std::size_t>(actor.inputs()); }

  // Squashed head values mu(s) for one or many states (columns).
  Eigen::VectorXd policy(const Eigen::VectorXd& state) const;
  Eigen::MatrixXd policy(const Eigen::MatrixXd& states) const;
  Eigen::MatrixXd target_policy(const Eigen::MatrixXd& states) const;
};

// Raw head plus N(0, sigma) per component, clipped to head ranges, and its decode.
struct ActResult {
  Eigen::VectorXd raw;
  env::ActionVector action;
};
ActResult act(const Agent& agent, const Eigen::VectorXd& state, double sigma, std::span<const double> q_limits,
              std::mt19937_64& rng);

struct Batch {
  Eigen::MatrixXd states;       // state_dim x N
  Eigen::MatrixXd actions;      // head width x N
  Eigen::VectorXd rewards;      // N
  Eigen::MatrixXd next_states;  // state_dim x N
};
Batch make_batch(std::span<const Transition* const> transitions);

// Bellman targets y = scale * r + gamma * Q'(s', mu'(s')).
Eigen::VectorXd critic_targets(const Agent& agent, const Batch& batch, double gamma, double reward_scale,
                               bool online_targets = false);
// Mean squared critic error and its gradient with respect to critic parameters.
double critic_loss(const nn::DenseNet& critic, const Batch& batch, const Eigen::VectorXd& targets,
                   nn::GradientSet* grads = nullptr);
// One Adam step on the critic; returns the loss before the step.
double critic_update(Agent& agent, const Batch& batch, double gamma, double reward_scale,
                     bool online_targets = false);

// Mean Q(s, mu(s)) over the batch and, optionally, its gradient with respect to
// actor parameters (chain rule through the critic's action input).
double policy_objective(const Agent& agent, const Batch& batch, nn::GradientSet* grads = nullptr);
// Gradient ascent step on the policy objective; returns the objective before the step.
double actor_update(Agent& agent, const Batch& batch);

void soft_update(Agent& agent, double tau);

struct EpisodeLog {
  int episode = 0;
  double mean_reward = 0.0;
  double critic_loss = 0.0;
  double actor_objective = 0.0;
  std::size_t buffer_fill = 0;
};

struct TrainResult {
  Agent agent;
  std::vector<EpisodeLog> log;
};

// Trains on the given environment. Each pass over training_days visits them
// in an order shuffled by the agent's generator; the replay buffer is first seeded with pretrain_steps transitions of
// the do-nothing heuristic (tap 0, capacitors off, zero inverter Q).
TrainResult train(env::VoltVarEnv& env, std::span<const std::size_t> training_days, const TrainConfig& cfg);

void write_training_log(const std::filesystem::path& path, const std::vector<EpisodeLog>& log);

struct EvaluationResult {
  env::EpisodeMetrics metrics;
  double mean_decision_ms = 0.0;
};

// Greedy rollout over the given days.
EvaluationResult evaluate(const Agent& agent, env::VoltVarEnv& env, std::span<const std::size_t> days);

// Layout fingerprint of the observation, stored next to saved models.
std::string feature_layout_hash(const env::VoltVarEnv& env);

}  // namespace vvlab::ddpg
