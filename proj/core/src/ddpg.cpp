#include "vvlab/ddpg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vvlab/csv.hpp"
#include "vvlab/error.hpp"

namespace vvlab::ddpg {

Eigen::MatrixXd ActionHead::squash(const Eigen::MatrixXd& affine) const {
  if (affine.rows() != width()) throw PreconditionError("actor output width does not match the action head");
  Eigen::MatrixXd out(affine.rows(), affine.cols());
  const int d = discrete();
  out.topRows(d) = (1.0 / (1.0 + (-affine.topRows(d).array()).exp())).matrix();
  out.bottomRows(inverters) = affine.bottomRows(inverters).array().tanh().matrix();
  return out;
}

Eigen::MatrixXd ActionHead::squash_derivative(const Eigen::MatrixXd& squashed) const {
  Eigen::MatrixXd out(squashed.rows(), squashed.cols());
  const int d = discrete();
  out.topRows(d) = (squashed.topRows(d).array() * (1.0 - squashed.topRows(d).array())).matrix();
  out.bottomRows(inverters) = (1.0 - squashed.bottomRows(inverters).array().square()).matrix();
  return out;
}

Eigen::VectorXd ActionHead::clip(Eigen::VectorXd raw) const {
  const int d = discrete();
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    raw[i] = i < d ? std::clamp(raw[i], 0.0, 1.0) : std::clamp(raw[i], -1.0, 1.0);
  }
  return raw;
}

env::ActionVector ActionHead::decode(const Eigen::VectorXd& raw, std::span<const double> q_limits) const {
  if (raw.size() != width()) throw PreconditionError("raw action has the wrong width");
  if (q_limits.size() != static_cast<std::size_t>(inverters)) throw PreconditionError("need one q limit per inverter");
  const Eigen::VectorXd v = clip(raw);
  env::ActionVector a;
  a.tap = static_cast<int>(std::lround(tap_min + v[0] * (tap_max - tap_min)));
  a.tap = std::clamp(a.tap, tap_min, tap_max);
  for (int c = 0; c < capacitors; ++c) a.caps.push_back(v[1 + c] > 0.5 ? 1 : 0);
  for (int k = 0; k < inverters; ++k) a.q_dg_kvar.push_back(v[discrete() + k] * q_limits[static_cast<std::size_t>(k)]);
  return a;
}

Eigen::VectorXd ActionHead::encode(const env::ActionVector& action, std::span<const double> q_limits) const {
  Eigen::VectorXd raw(width());
  raw[0] = static_cast<double>(action.tap - tap_min) / static_cast<double>(tap_max - tap_min);
  for (int c = 0; c < capacitors; ++c) raw[1 + c] = action.caps.at(static_cast<std::size_t>(c)) != 0 ? 1.0 : 0.0;
  for (int k = 0; k < inverters; ++k) {
    const double lim = q_limits[static_cast<std::size_t>(k)];
    raw[discrete() + k] = lim > 0.0 ? std::clamp(action.q_dg_kvar.at(static_cast<std::size_t>(k)) / lim, -1.0, 1.0) : 0.0;
  }
  return raw;
}

ActionHead ActionHead::for_network(const Network& net) {
  ActionHead h;
  h.tap_min = net.regulator().tap_min;
  h.tap_max = net.regulator().tap_max;
  h.capacitors = static_cast<int>(net.capacitors().size());
  h.inverters = static_cast<int>(net.inverters().size());
  return h;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw PreconditionError("replay buffer capacity must be positive");
  ring_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (size_ < capacity_) {
    ring_.push_back(std::move(t));
    ++size_;
    return;
  }
  ring_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw PreconditionError("replay index out of range");
  return ring_[(head_ + i) % capacity_];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng) const {
  if (size_ == 0) throw PreconditionError("cannot sample an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<const Transition*> out(batch);
  for (auto& p : out) p = &ring_[pick(rng)];
  return out;
}

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("tau must lie in (0, 1]");
  if (actor_lr < 0.0 || critic_lr < 0.0) throw ValidationError("learning rates must be >= 0");
  if (noise < 0.0) throw ValidationError("noise must be >= 0");
  if (episodes < 0 || pretrain_steps < 0) throw ValidationError("episodes and pretrain_steps must be >= 0");
  if (batch_size < 1 || buffer_capacity < 1) throw ValidationError("batch size and buffer capacity must be positive");
  if (hidden.empty()) throw ValidationError("need at least one hidden layer");
}

Agent Agent::create(std::size_t state_dim, const ActionHead& head, const TrainConfig& cfg, std::mt19937_64& rng) {
  Agent a;
  a.head = head;
  a.actor = nn::DenseNet::create(static_cast<int>(state_dim), cfg.hidden, head.width(), nn::Activation::kRelu,
                                 nn::Activation::kIdentity, rng);
  a.critic = nn::DenseNet::create(static_cast<int>(state_dim) + head.width(), cfg.hidden, 1, nn::Activation::kRelu,
                                  nn::Activation::kIdentity, rng);
  a.actor_target = a.actor;
  a.critic_target = a.critic;
  a.actor_opt = nn::AdamState::for_net(a.actor, cfg.actor_lr);
  a.critic_opt = nn::AdamState::for_net(a.critic, cfg.critic_lr);
  return a;
}

Eigen::VectorXd Agent::policy(const Eigen::VectorXd& state) const {
  return head.squash(actor.forward(Eigen::MatrixXd(state))).col(0);
}

Eigen::MatrixXd Agent::policy(const Eigen::MatrixXd& states) const { return head.squash(actor.forward(states)); }

Eigen::MatrixXd Agent::target_policy(const Eigen::MatrixXd& states) const {
  return head.squash(actor_target.forward(states));
}

ActResult act(const Agent& agent, const Eigen::VectorXd& state, double sigma, std::span<const double> q_limits,
              std::mt19937_64& rng) {
  if (state.size() != agent.actor.inputs()) {
    throw PreconditionError("state has " + std::to_string(state.size()) + " features, actor expects " +
                            std::to_string(agent.actor.inputs()));
  }
  Eigen::VectorXd raw = agent.policy(state);
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index i = 0; i < raw.size(); ++i) raw[i] += noise(rng);
  }
  raw = agent.head.clip(std::move(raw));
  return {raw, agent.head.decode(raw, q_limits)};
}

Batch make_batch(std::span<const Transition* const> transitions) {
  if (transitions.empty()) throw PreconditionError("empty batch");
  const auto n = static_cast<Eigen::Index>(transitions.size());
  const Eigen::Index sd = transitions.front()->state.size();
  const Eigen::Index ad = transitions.front()->action.size();
  Batch b{Eigen::MatrixXd(sd, n), Eigen::MatrixXd(ad, n), Eigen::VectorXd(n), Eigen::MatrixXd(sd, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const Transition& t = *transitions[static_cast<std::size_t>(j)];
    b.states.col(j) = t.state;
    b.actions.col(j) = t.action;
    b.rewards[j] = t.reward;
    b.next_states.col(j) = t.next_state;
  }
  return b;
}

namespace {

Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

}  // namespace

Eigen::VectorXd critic_targets(const Agent& agent, const Batch& batch, double gamma, double reward_scale,
                               bool online_targets) {
  const nn::DenseNet& actor = online_targets ? agent.actor : agent.actor_target;
  const nn::DenseNet& critic = online_targets ? agent.critic : agent.critic_target;
  const Eigen::MatrixXd next_actions = agent.head.squash(actor.forward(batch.next_states));
  const Eigen::MatrixXd next_q = critic.forward(stack(batch.next_states, next_actions));
  return reward_scale * batch.rewards + gamma * next_q.row(0).transpose();
}

double critic_loss(const nn::DenseNet& critic, const Batch& batch, const Eigen::VectorXd& targets,
                   nn::GradientSet* grads) {
  const Eigen::MatrixXd input = stack(batch.states, batch.actions);
  nn::DenseNet::Tape tape;
  const Eigen::MatrixXd q = critic.forward(input, tape);
  const Eigen::RowVectorXd err = q.row(0) - targets.transpose();
  const auto n = static_cast<double>(err.size());
  const double loss = err.squaredNorm() / n;
  if (grads != nullptr) *grads = critic.backward(tape, (2.0 / n) * err);
  return loss;
}

double critic_update(Agent& agent, const Batch& batch, double gamma, double reward_scale, bool online_targets) {
  const Eigen::VectorXd y = critic_targets(agent, batch, gamma, reward_scale, online_targets);
  nn::GradientSet g;
  const double loss = critic_loss(agent.critic, batch, y, &g);
  nn::adam_step(agent.critic, g, agent.critic_opt);
  return loss;
}

double policy_objective(const Agent& agent, const Batch& batch, nn::GradientSet* grads) {
  nn::DenseNet::Tape actor_tape;
  const Eigen::MatrixXd affine = agent.actor.forward(batch.states, actor_tape);
  const Eigen::MatrixXd actions = agent.head.squash(affine);
  nn::DenseNet::Tape critic_tape;
  const Eigen::MatrixXd q = agent.critic.forward(stack(batch.states, actions), critic_tape);
  const auto n = static_cast<double>(q.cols());
  const double objective = q.sum() / n;
  if (grads != nullptr) {
    const nn::GradientSet cg = agent.critic.backward(critic_tape, Eigen::MatrixXd::Constant(1, q.cols(), 1.0 / n));
    const Eigen::MatrixXd d_action = cg.input.bottomRows(agent.head.width());
    const Eigen::MatrixXd d_affine = d_action.cwiseProduct(agent.head.squash_derivative(actions));
    *grads = agent.actor.backward(actor_tape, d_affine);
  }
  return objective;
}

double actor_update(Agent& agent, const Batch& batch) {
  nn::GradientSet g;
  const double objective = policy_objective(agent, batch, &g);
  // Ascent on J is descent on -J.
  for (auto& w : g.weight) w = -w;
  for (auto& b : g.bias) b = -b;
  nn::adam_step(agent.actor, g, agent.actor_opt);
  return objective;
}

void soft_update(Agent& agent, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw PreconditionError("tau must lie in (0, 1]");
  agent.actor_target.blend_from(agent.actor, tau);
  agent.critic_target.blend_from(agent.critic, tau);
}

TrainResult train(env::VoltVarEnv& env, std::span<const std::size_t> training_days, const TrainConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const ActionHead head = ActionHead::for_network(env.network());
  TrainResult result{Agent::create(env.state_dim(), head, cfg, rng), {}};
  Agent& agent = result.agent;
  if (cfg.episodes == 0) return result;
  if (training_days.empty()) throw PreconditionError("no training days");
  for (std::size_t d : training_days) {
    if (!env.day_available(d)) throw PreconditionError("training day " + std::to_string(d) + " is not available");
  }

  ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));

  // Historical operation under the do-nothing policy.
  env::ActionVector idle;
  idle.tap = 0;
  idle.caps.assign(static_cast<std::size_t>(head.capacitors), 0);
  idle.q_dg_kvar.assign(static_cast<std::size_t>(head.inverters), 0.0);
  for (std::size_t pushed = 0, k = 0; pushed < static_cast<std::size_t>(cfg.pretrain_steps); ++k) {
    env::AdversarialState s = env.reset(training_days[k % training_days.size()]);
    while (!env.terminal() && pushed < static_cast<std::size_t>(cfg.pretrain_steps)) {
      const Eigen::VectorXd raw = head.encode(idle, env.observation_q_limits());
      env::StepOutcome out = env.step(idle);
      buffer.push({s.features, raw, out.reward, out.next.features});
      s = std::move(out.next);
      ++pushed;
    }
  }

  std::vector<std::size_t> order(training_days.begin(), training_days.end());
  std::size_t cursor = order.size();
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    env::AdversarialState s = env.reset(order[cursor++]);
    EpisodeLog log;
    log.episode = ep;
    int steps = 0;
    int updates = 0;
    while (!env.terminal()) {
      const ActResult a = act(agent, s.features, cfg.noise, env.observation_q_limits(), rng);
      env::StepOutcome out = env.step(a.action);
      buffer.push({s.features, a.raw, out.reward, out.next.features});
      log.mean_reward += out.reward;
      ++steps;
      if (buffer.size() >= batch_size) {
        const auto picked = buffer.sample(batch_size, rng);
        const Batch batch = make_batch(picked);
        log.critic_loss += critic_update(agent, batch, cfg.gamma, cfg.reward_scale, cfg.online_targets);
        log.actor_objective += actor_update(agent, batch);
        soft_update(agent, cfg.tau);
        ++updates;
      }
      s = std::move(out.next);
    }
    log.mean_reward /= std::max(steps, 1);
    if (updates > 0) {
      log.critic_loss /= updates;
      log.actor_objective /= updates;
    }
    log.buffer_fill = buffer.size();
    result.log.push_back(log);
  }
  return result;
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpisodeLog>& log) {
  std::ofstream out = csv::open_for_write(path);
  out << "episode,mean_reward,critic_loss,actor_objective,buffer_fill\n";
  for (const auto& e : log) {
    out << e.episode << ',' << csv::format(e.mean_reward) << ',' << csv::format(e.critic_loss) << ','
        << csv::format(e.actor_objective) << ',' << e.buffer_fill << '\n';
  }
}

EvaluationResult evaluate(const Agent& agent, env::VoltVarEnv& env, std::span<const std::size_t> days) {
  std::vector<env::StepRecord> records;
  double decision_ms = 0.0;
  std::size_t decisions = 0;
  for (std::size_t day : days) {
    env::AdversarialState s = env.reset(day);
    while (!env.terminal()) {
      const auto t0 = std::chrono::steady_clock::now();
      const Eigen::VectorXd raw = agent.policy(s.features);
      const env::ActionVector action = agent.head.decode(raw, env.observation_q_limits());
      const auto t1 = std::chrono::steady_clock::now();
      decision_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
      ++decisions;
      const std::size_t t = env.current_timestep();
      env::StepOutcome out = env.step(action);
      records.push_back({t, out.reward, out.info, out.applied});
      s = std::move(out.next);
    }
  }
  EvaluationResult r;
  r.metrics = env::summarize(std::move(records), env.network().bus_count());
  r.mean_decision_ms = decisions > 0 ? decision_ms / static_cast<double>(decisions) : 0.0;
  return r;
}

std::string feature_layout_hash(const env::VoltVarEnv& env) {
  const Network& net = env.network();
  std::string layout = "buses=" + std::to_string(net.bus_count()) + ";slack=" + std::to_string(net.slack_index()) +
                       ";caps=" + std::to_string(net.capacitors().size()) +
                       ";inverters=" + std::to_string(net.inverters().size()) +
                       ";channels=" + std::to_string(env.channel_count()) + ";dim=" + std::to_string(env.state_dim()) +
                       ";order=prev_p,prev_q,fc_p,fc_q,tap,caps,sin,cos,lower,upper";
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : layout) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace vvlab::ddpg
