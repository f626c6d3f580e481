#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "envs.hpp"
#include "oracles.hpp"
#include "vvlab/error.hpp"
#include "vvlab/vvenv.hpp"

namespace vvlab::env {
namespace {

class EnvTest : public ::testing::Test {
 protected:
  Network net = load_network(testing::fixture("bus5.json"));
  EpisodeData data = testing::episode_data(net, 6, 4, 17);

  ActionVector idle() const {
    return {0, std::vector<int>(net.capacitors().size(), 0), std::vector<double>(net.inverters().size(), 0.0)};
  }
};

TEST_F(EnvTest, EarlyDaysLackIntervals) {
  VoltVarEnv e(net, data);
  EXPECT_FALSE(e.day_available(0));
  EXPECT_FALSE(e.day_available(1));
  EXPECT_TRUE(e.day_available(2));
  EXPECT_THROW(e.reset(0), PreconditionError);
  EXPECT_THROW(e.reset(99), PreconditionError);
  VoltVarEnv z(net, data, {CostConfig{}, BoundsMode::kZeroWidth});
  EXPECT_TRUE(z.day_available(0));
}

TEST_F(EnvTest, ResetStartsFromNeutralDevices) {
  VoltVarEnv e(net, data);
  const AdversarialState s = e.reset(3);
  EXPECT_EQ(e.current_timestep(), 3u * 48);
  EXPECT_EQ(s.base.tap, 0);
  EXPECT_EQ(s.base.caps, std::vector<int>(2, 0));
  EXPECT_NEAR(s.base.time_sin, 0.0, 1e-15);
  EXPECT_NEAR(s.base.time_cos, 1.0, 1e-15);
  EXPECT_EQ(static_cast<std::size_t>(s.features.size()), e.state_dim());
  EXPECT_EQ(e.state_dim(), 4u * 4 + 1 + 2 + 2 + 2 * 6);
}

TEST_F(EnvTest, FeaturesStayNormalizedAndBoxesContainForecast) {
  VoltVarEnv e(net, data);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> tap(-16, 16);
  std::uniform_int_distribution<int> bit(0, 1);
  AdversarialState s = e.reset(2);
  while (!e.terminal()) {
    EXPECT_LE(s.features.cwiseAbs().maxCoeff(), 1.0);
    for (std::size_t c = 0; c < s.lower.size(); ++c) {
      EXPECT_LE(s.lower[c], s.base.channel_forecast[c]);
      EXPECT_GE(s.upper[c], s.base.channel_forecast[c]);
    }
    ActionVector a = idle();
    a.tap = tap(rng);
    for (auto& c : a.caps) c = bit(rng);
    s = e.step(a).next;
  }
}

TEST_F(EnvTest, ZeroWidthBoundsCollapseToForecast) {
  VoltVarEnv e(net, data, {CostConfig{}, BoundsMode::kZeroWidth});
  const AdversarialState s = e.reset(1);
  for (std::size_t c = 0; c < s.lower.size(); ++c) {
    EXPECT_DOUBLE_EQ(s.lower[c], s.base.channel_forecast[c]);
    EXPECT_DOUBLE_EQ(s.upper[c], s.base.channel_forecast[c]);
  }
}

TEST_F(EnvTest, RewardDecomposesExactly) {
  VoltVarEnv e(net, data);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> tap(-16, 16);
  std::uniform_int_distribution<int> bit(0, 1);
  std::uniform_real_distribution<double> q(-600.0, 600.0);
  const CostConfig c;
  for (std::size_t day : {2u, 3u}) {
    e.reset(day);
    int prev_tap = 0;
    std::vector<int> prev_caps(2, 0);
    while (!e.terminal()) {
      ActionVector a{tap(rng), {bit(rng), bit(rng)}, {q(rng), q(rng)}};
      const StepOutcome out = e.step(a);
      ASSERT_TRUE(out.info.converged);
      int switches = std::abs(out.applied.tap - prev_tap);
      for (int k = 0; k < 2; ++k) switches += std::abs(out.applied.caps[k] - prev_caps[k]);
      EXPECT_EQ(out.info.switches, switches);
      EXPECT_EQ(out.reward, -(c.c_p * out.info.p_loss_mw + c.c_v * out.info.violations + c.c_u * out.info.switches));
      prev_tap = out.applied.tap;
      prev_caps = out.applied.caps;
    }
  }
}

TEST_F(EnvTest, HandEvaluatedRewards) {
  // One step with a known loss: reward = -20 * loss when nothing switches and
  // every voltage is in band.
  VoltVarEnv e(net, data);
  e.reset(2);
  const StepOutcome out = e.step(idle());
  EXPECT_EQ(out.info.switches, 0);
  EXPECT_DOUBLE_EQ(out.reward, -(20.0 * out.info.p_loss_mw + 0.1 * out.info.violations));

  ActionVector a = idle();
  a.tap = 2;
  a.caps[0] = 1;
  const StepOutcome moved = e.step(a);
  EXPECT_EQ(moved.info.switches, 3);
}

TEST_F(EnvTest, InverterSetpointsAreClippedToHeadroom) {
  VoltVarEnv e(net, data);
  e.reset(2);
  for (std::size_t k = 0; k < 24; ++k) e.step(idle());  // noon
  const Snapshot truth = e.current_truth();
  ActionVector a = idle();
  a.q_dg_kvar = {1e6, -1e6};
  const StepOutcome out = e.step(a);
  for (std::size_t k = 0; k < 2; ++k) {
    const double limit = inverter_q_limit(net.inverters()[k], truth.pv_kw[k]);
    EXPECT_NEAR(std::abs(out.applied.q_dg_kvar[k]), limit, 1e-9);
  }
}

TEST_F(EnvTest, NonConvergenceUsesRewardFloor) {
  EpisodeData heavy = data;
  for (auto& s : heavy.truth.load_p_kw)
    for (auto& v : s) v *= 100.0;
  for (auto& s : heavy.truth.load_q_kvar)
    for (auto& v : s) v *= 100.0;
  VoltVarEnv e(net, heavy);
  e.reset(2);
  const StepOutcome out = e.step(idle());
  EXPECT_FALSE(out.info.converged);
  EXPECT_EQ(out.reward, -100.0);
  EXPECT_EQ(out.info.violations, 5);
  EXPECT_FALSE(e.terminal());
}

TEST_F(EnvTest, EpisodeHasFortyEightSteps) {
  VoltVarEnv e(net, data);
  e.reset(4);
  int steps = 0;
  while (!e.terminal()) {
    const StepOutcome out = e.step(idle());
    ++steps;
    EXPECT_EQ(out.terminal, steps == 48);
  }
  EXPECT_EQ(steps, 48);
  EXPECT_THROW(e.step(idle()), PreconditionError);
}

TEST(Augment, RejectsChannelMismatch) {
  EnvState s;
  s.prev_p = s.prev_q = s.forecast_p = s.forecast_q = Eigen::VectorXd::Zero(1);
  s.channel_forecast = {0.1, 0.2};
  const std::vector<conformal::PredictionInterval> one(1);
  EXPECT_THROW(augment(s, one, 1.0, 16.0), PreconditionError);
}

TEST(Augment, WidensIntervalsToContainForecast) {
  EnvState s;
  s.prev_p = s.prev_q = s.forecast_p = s.forecast_q = Eigen::VectorXd::Zero(1);
  s.channel_forecast = {0.5};
  const std::vector<conformal::PredictionInterval> iv = {{60.0, 55.0, 65.0, 0.05}};
  const AdversarialState a = augment(s, iv, 100.0, 16.0);
  EXPECT_DOUBLE_EQ(a.lower[0], 0.5);
  EXPECT_DOUBLE_EQ(a.upper[0], 0.65);
}

TEST(Vvr, CountsViolationsPerBusStep) {
  std::vector<StepRecord> recs(4);
  recs[1].info.violations = 2;
  recs[3].info.violations = 1;
  EXPECT_DOUBLE_EQ(vvr(recs, 5), 3.0 / 20.0);
  EXPECT_THROW(vvr({}, 5), PreconditionError);
}

TEST_F(EnvTest, EvalLogRecomputesVvr) {
  VoltVarEnv e(net, data);
  e.reset(2);
  std::vector<StepRecord> recs;
  while (!e.terminal()) {
    const std::size_t t = e.current_timestep();
    const StepOutcome out = e.step(idle());
    recs.push_back({t, out.reward, out.info, out.applied});
  }
  const auto path = std::filesystem::temp_directory_path() / "vvlab_eval_log.csv";
  write_eval_log(path, recs, 2);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "timestep,reward,p_loss_mw,violations,switches,converged,tap,cap_states,q_dg_0,q_dg_1");
  int total = 0;
  int rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (int k = 0; k < 4; ++k) std::getline(ss, cell, ',');
    total += std::stoi(cell);
    ++rows;
  }
  EXPECT_EQ(rows, 48);
  EXPECT_DOUBLE_EQ(static_cast<double>(total) / (48.0 * 5.0), vvr(recs, 5));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace vvlab::env
