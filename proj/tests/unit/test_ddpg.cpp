#include <gtest/gtest.h>

#include <random>

#include "envs.hpp"
#include "oracles.hpp"
#include "vvlab/ddpg.hpp"
#include "vvlab/error.hpp"

namespace vvlab::ddpg {
namespace {

using testing::assign;
using testing::flatten;

ActionHead bus5_head() { return {-16, 16, 2, 2}; }

Transition random_transition(std::mt19937_64& rng, int state_dim, const ActionHead& head) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Transition t;
  t.state = Eigen::VectorXd::NullaryExpr(state_dim, [&] { return u(rng); });
  t.next_state = Eigen::VectorXd::NullaryExpr(state_dim, [&] { return u(rng); });
  t.action = head.clip(Eigen::VectorXd::NullaryExpr(head.width(), [&] { return u(rng); }).cwiseAbs());
  t.reward = u(rng);
  return t;
}

Batch random_batch(std::mt19937_64& rng, int state_dim, const ActionHead& head, int n) {
  std::vector<Transition> ts;
  for (int i = 0; i < n; ++i) ts.push_back(random_transition(rng, state_dim, head));
  std::vector<const Transition*> ptrs;
  for (const auto& t : ts) ptrs.push_back(&t);
  return make_batch(ptrs);
}

TEST(ActionHead, DecodeEndpoints) {
  const ActionHead h = bus5_head();
  const std::vector<double> lim = {200.0, 50.0};
  Eigen::VectorXd raw(5);
  raw << 0.0, 0.0, 1.0, -1.0, 1.0;
  env::ActionVector a = h.decode(raw, lim);
  EXPECT_EQ(a.tap, -16);
  EXPECT_EQ(a.caps, (std::vector<int>{0, 1}));
  EXPECT_EQ(a.q_dg_kvar, (std::vector<double>{-200.0, 50.0}));

  raw << 1.0, 0.5, 0.5000001, 0.0, 0.0;
  a = h.decode(raw, lim);
  EXPECT_EQ(a.tap, 16);
  EXPECT_EQ(a.caps, (std::vector<int>{0, 1}));  // exactly 0.5 stays off
  EXPECT_EQ(a.q_dg_kvar, (std::vector<double>{0.0, 0.0}));

  raw << 0.5, 0.0, 0.0, 0.0, 0.0;
  EXPECT_EQ(h.decode(raw, lim).tap, 0);
}

TEST(ActionHead, DecodeClipsOutOfRangeValues) {
  const ActionHead h = bus5_head();
  const std::vector<double> lim = {100.0, 100.0};
  Eigen::VectorXd raw(5);
  raw << 1.7, -3.0, 9.0, 4.0, -4.0;
  const env::ActionVector a = h.decode(raw, lim);
  EXPECT_EQ(a.tap, 16);
  EXPECT_EQ(a.caps, (std::vector<int>{0, 1}));
  EXPECT_EQ(a.q_dg_kvar, (std::vector<double>{100.0, -100.0}));
  EXPECT_THROW(h.decode(Eigen::VectorXd::Zero(4), lim), PreconditionError);
  EXPECT_THROW(h.decode(raw, std::vector<double>{1.0}), PreconditionError);
}

TEST(ActionHead, EncodeDecodeRoundTrip) {
  const ActionHead h = bus5_head();
  const std::vector<double> lim = {300.0, 120.0};
  for (int tap = -16; tap <= 16; ++tap) {
    const env::ActionVector a{tap, {tap % 2 != 0 ? 1 : 0, 1}, {tap * 10.0, -60.0}};
    const env::ActionVector back = h.decode(h.encode(a, lim), lim);
    EXPECT_EQ(back.tap, a.tap);
    EXPECT_EQ(back.caps, a.caps);
    EXPECT_NEAR(back.q_dg_kvar[0], a.q_dg_kvar[0], 1e-9);
    EXPECT_NEAR(back.q_dg_kvar[1], a.q_dg_kvar[1], 1e-9);
  }
}

TEST(ActionHead, SquashRangesAndDerivative) {
  const ActionHead h = bus5_head();
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 3.0);
  const Eigen::MatrixXd z = Eigen::MatrixXd::NullaryExpr(5, 7, [&] { return n(rng); });
  const Eigen::MatrixXd s = h.squash(z);
  EXPECT_GE(s.topRows(3).minCoeff(), 0.0);
  EXPECT_LE(s.topRows(3).maxCoeff(), 1.0);
  EXPECT_GE(s.bottomRows(2).minCoeff(), -1.0);
  const Eigen::MatrixXd d = h.squash_derivative(s);
  const double eps = 1e-6;
  const Eigen::MatrixXd numeric =
      (h.squash((z.array() + eps).matrix()) - h.squash((z.array() - eps).matrix())) / (2.0 * eps);
  EXPECT_LT((d - numeric).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ReplayBuffer, EvictsOldestWhenFull) {
  ReplayBuffer b(3);
  for (int i = 0; i < 5; ++i) b.push({Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), double(i), {}});
  EXPECT_TRUE(b.full());
  EXPECT_EQ(b.size(), 3u);
  EXPECT_EQ(b.at(0).reward, 2.0);
  EXPECT_EQ(b.at(2).reward, 4.0);
  EXPECT_THROW(b.at(3), PreconditionError);
  EXPECT_THROW(ReplayBuffer(0), PreconditionError);
}

TEST(ReplayBuffer, SamplesUniformly) {
  ReplayBuffer b(4);
  for (int i = 0; i < 4; ++i) b.push({{}, {}, double(i), {}});
  std::mt19937_64 rng(8);
  std::vector<int> counts(4, 0);
  for (const Transition* t : b.sample(40000, rng)) ++counts[static_cast<std::size_t>(t->reward)];
  for (int c : counts) EXPECT_NEAR(c / 40000.0, 0.25, 0.01);
  EXPECT_THROW(ReplayBuffer(2).sample(1, rng), PreconditionError);
}

class AgentTest : public ::testing::Test {
 protected:
  static constexpr int kStateDim = 7;
  ActionHead head = bus5_head();
  TrainConfig cfg = [] {
    TrainConfig c;
    c.hidden = {6, 5};
    return c;
  }();
  std::mt19937_64 rng{31};
  Agent agent = make_agent();

  // Nonzero biases keep ReLU pre-activations off the kink at exactly zero.
  Agent make_agent() {
    Agent a = Agent::create(kStateDim, head, cfg, rng);
    std::normal_distribution<double> n(0.0, 0.1);
    for (nn::DenseNet* net : {&a.actor, &a.critic}) {
      for (auto& l : net->layers()) l.bias = l.bias.unaryExpr([&](double) { return n(rng); });
    }
    a.actor_target = a.actor;
    a.critic_target = a.critic;
    return a;
  }
};

TEST_F(AgentTest, SoftUpdate) {
  const nn::DenseNet before = agent.actor_target;
  agent.actor.layers()[0].weight.array() += 1.0;
  soft_update(agent, 0.005);
  const Eigen::MatrixXd expect = 0.005 * agent.actor.layers()[0].weight + 0.995 * before.layers()[0].weight;
  EXPECT_LT((agent.actor_target.layers()[0].weight - expect).cwiseAbs().maxCoeff(), 1e-15);
  soft_update(agent, 1.0);
  EXPECT_TRUE(agent.actor_target == agent.actor);
  EXPECT_TRUE(agent.critic_target == agent.critic);
  EXPECT_THROW(soft_update(agent, 0.0), PreconditionError);
}

TEST_F(AgentTest, TargetsWithZeroDiscountAreScaledRewards) {
  const Batch b = random_batch(rng, kStateDim, head, 9);
  const Eigen::VectorXd y = critic_targets(agent, b, 0.0, 5.0);
  EXPECT_LT((y - 5.0 * b.rewards).cwiseAbs().maxCoeff(), 1e-15);
}

TEST_F(AgentTest, TargetsBootstrapFromTargetNetworks) {
  const Batch b = random_batch(rng, kStateDim, head, 4);
  agent.critic.layers().back().bias[0] += 10.0;  // online critic drifts; targets do not
  const Eigen::VectorXd y = critic_targets(agent, b, 0.9, 1.0);
  for (Eigen::Index j = 0; j < 4; ++j) {
    Eigen::VectorXd in(kStateDim + head.width());
    in << b.next_states.col(j), head.squash(agent.actor_target.forward(Eigen::MatrixXd(b.next_states.col(j))));
    EXPECT_NEAR(y[j], b.rewards[j] + 0.9 * agent.critic_target.forward(in)[0], 1e-12);
  }
  const Eigen::VectorXd online = critic_targets(agent, b, 0.9, 1.0, true);
  EXPECT_GT((online - y).minCoeff(), 8.0);
}

TEST_F(AgentTest, CriticLossGradientMatchesFiniteDifferences) {
  for (int trial = 0; trial < 10; ++trial) {
    const Batch b = random_batch(rng, kStateDim, head, 8);
    const Eigen::VectorXd y = critic_targets(agent, b, 0.95, 5.0);
    nn::GradientSet g;
    critic_loss(agent.critic, b, y, &g);
    nn::DenseNet probe = agent.critic;
    auto f = [&](const Eigen::VectorXd& theta) {
      assign(probe, theta);
      return critic_loss(probe, b, y);
    };
    EXPECT_LT(testing::relative_error(flatten(g), testing::numeric_gradient(f, flatten(agent.critic))), 1e-6);
  }
}

TEST_F(AgentTest, PolicyGradientMatchesFiniteDifferences) {
  for (int trial = 0; trial < 10; ++trial) {
    const Batch b = random_batch(rng, kStateDim, head, 8);
    nn::GradientSet g;
    policy_objective(agent, b, &g);
    Agent probe = agent;
    auto f = [&](const Eigen::VectorXd& theta) {
      assign(probe.actor, theta);
      return policy_objective(probe, b);
    };
    EXPECT_LT(testing::relative_error(flatten(g), testing::numeric_gradient(f, flatten(agent.actor))), 1e-6);
  }
}

TEST_F(AgentTest, ActorIgnoredWhenCriticIgnoresActions) {
  // Zero the critic's first-layer weights on the action inputs.
  agent.critic.layers()[0].weight.rightCols(head.width()).setZero();
  const Batch b = random_batch(rng, kStateDim, head, 5);
  nn::GradientSet g;
  policy_objective(agent, b, &g);
  EXPECT_EQ(flatten(g).cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(AgentTest, UpdatesImproveTheirObjectives) {
  const Batch b = random_batch(rng, kStateDim, head, 16);
  const double j0 = policy_objective(agent, b);
  for (int k = 0; k < 20; ++k) actor_update(agent, b);
  EXPECT_GT(policy_objective(agent, b), j0);
  const Eigen::VectorXd y = critic_targets(agent, b, 0.0, 1.0);
  const double l0 = critic_loss(agent.critic, b, y);
  for (int k = 0; k < 50; ++k) critic_update(agent, b, 0.0, 1.0);
  EXPECT_LT(critic_loss(agent.critic, b, y), l0);
}

TEST_F(AgentTest, ActWithoutNoiseIsThePolicy) {
  const Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(kStateDim, -1.0, 1.0);
  const std::vector<double> lim = {100.0, 100.0};
  const ActResult r = act(agent, s, 0.0, lim, rng);
  EXPECT_EQ(r.raw, agent.policy(s));
  EXPECT_EQ(r.action, head.decode(r.raw, lim));
  EXPECT_THROW(act(agent, Eigen::VectorXd::Zero(3), 0.0, lim, rng), PreconditionError);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.hidden.clear();
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.episodes = -1;
  EXPECT_THROW(c.validate(), ValidationError);
}

class TrainTest : public ::testing::Test {
 protected:
  Network net = load_network(testing::fixture("bus5.json"));
  env::VoltVarEnv env{net, testing::episode_data(net, 5, 4, 5)};
  std::vector<std::size_t> days = {2, 3};
  TrainConfig cfg = [] {
    TrainConfig c;
    c.episodes = 3;
    c.pretrain_steps = 60;
    c.hidden = {8, 8};
    c.batch_size = 16;
    c.seed = 11;
    return c;
  }();
};

TEST_F(TrainTest, ZeroEpisodesReturnsInitialAgent) {
  cfg.episodes = 0;
  const TrainResult r = train(env, days, cfg);
  EXPECT_TRUE(r.log.empty());
  std::mt19937_64 rng(cfg.seed);
  const Agent fresh = Agent::create(env.state_dim(), ActionHead::for_network(net), cfg, rng);
  EXPECT_TRUE(r.agent.actor == fresh.actor);
}

TEST_F(TrainTest, IsDeterministicPerSeed) {
  const TrainResult a = train(env, days, cfg);
  const TrainResult b = train(env, days, cfg);
  ASSERT_EQ(a.log.size(), 3u);
  EXPECT_TRUE(a.agent.actor == b.agent.actor);
  EXPECT_TRUE(a.agent.critic == b.agent.critic);
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    EXPECT_EQ(a.log[k].mean_reward, b.log[k].mean_reward);
    EXPECT_EQ(a.log[k].critic_loss, b.log[k].critic_loss);
  }
  EXPECT_EQ(a.log.back().buffer_fill, 60u + 3u * 48u);
  cfg.seed = 12;
  EXPECT_FALSE(train(env, days, cfg).agent.actor == a.agent.actor);
}

TEST_F(TrainTest, RejectsUnavailableDays) {
  const std::vector<std::size_t> bad = {0};
  EXPECT_THROW(train(env, bad, cfg), PreconditionError);
}

TEST_F(TrainTest, EvaluationCoversEveryStep) {
  const TrainResult r = train(env, days, cfg);
  const std::vector<std::size_t> test_days = {4};
  const EvaluationResult e = evaluate(r.agent, env, test_days);
  EXPECT_EQ(e.metrics.records.size(), 48u);
  EXPECT_EQ(e.metrics.records.front().timestep, 4u * 48);
  EXPECT_GT(e.mean_decision_ms, 0.0);
  EXPECT_EQ(feature_layout_hash(env).size(), 16u);
}

}  // namespace
}  // namespace vvlab::ddpg
