#include <gtest/gtest.h>

#include <limits>

#include "oracles.hpp"
#include "vvlab/baseline.hpp"
#include "vvlab/error.hpp"

namespace vvlab::baseline {
namespace {

class BaselineTest : public ::testing::Test {
 protected:
  Network net = load_network(testing::fixture("bus5.json"));
  env::CostConfig costs;

  // Fixture loads at the given scale with PV at `pv` kW on every inverter.
  env::Snapshot snapshot(double load_scale, double pv) const {
    env::Snapshot s;
    s.load_p_kw.assign(net.bus_count(), 0.0);
    s.load_q_kvar.assign(net.bus_count(), 0.0);
    for (const auto& b : net.buses()) {
      s.load_p_kw[net.index_of(b.id)] = load_scale * b.load_p_kw;
      s.load_q_kvar[net.index_of(b.id)] = load_scale * b.load_q_kvar;
    }
    s.pv_kw.assign(net.inverters().size(), pv);
    return s;
  }

  std::vector<double> channels(const env::Snapshot& s, double load_factor, double pv_factor) const {
    std::vector<double> v;
    for (int id : net.load_bus_ids()) v.push_back(load_factor * s.load_p_kw[net.index_of(id)]);
    for (double pv : s.pv_kw) v.push_back(pv_factor * pv);
    return v;
  }
};

TEST_F(BaselineTest, GridEnumeratesLexicographically) {
  const ActionGrid g = ActionGrid::with_taps(net, -1, 1, 3);
  EXPECT_EQ(g.combinations(), 3u * 4 * 9);
  const std::vector<double> lim = {100.0, 10.0};
  std::size_t i = 0;
  for (int tap = -1; tap <= 1; ++tap) {
    for (int c0 = 0; c0 < 2; ++c0) {
      for (int c1 = 0; c1 < 2; ++c1) {
        for (int q0 = 0; q0 < 3; ++q0) {
          for (int q1 = 0; q1 < 3; ++q1) {
            const env::ActionVector a = g.at(i++, lim);
            EXPECT_EQ(a.tap, tap);
            EXPECT_EQ(a.caps, (std::vector<int>{c0, c1}));
            EXPECT_DOUBLE_EQ(a.q_dg_kvar[0], (q0 - 1) * 100.0);
            EXPECT_DOUBLE_EQ(a.q_dg_kvar[1], (q1 - 1) * 10.0);
          }
        }
      }
    }
  }
  EXPECT_THROW(g.at(i, lim), PreconditionError);
  EXPECT_DOUBLE_EQ(ActionGrid::full(net, 1).q_fraction(0), 0.0);
}

TEST_F(BaselineTest, GridLimits) {
  EXPECT_THROW(ActionGrid::with_taps(net, 2, 1, 1), PreconditionError);
  EXPECT_THROW(ActionGrid::with_taps(net, -17, 0, 1), PreconditionError);
  EXPECT_THROW(ActionGrid::full(net, 200), PreconditionError);  // 33 * 4 * 200^2 combinations
  EXPECT_THROW(ActionGrid::full(net, 0), PreconditionError);
}

TEST_F(BaselineTest, ExhaustiveMatchesIndependentScan) {
  const env::Snapshot s = snapshot(1.2, 150.0);
  const ActionGrid g = ActionGrid::with_taps(net, -2, 6, 3);
  const OracleResult r = exhaustive_vvo(net, s, g, costs);
  EXPECT_EQ(r.evaluations, g.combinations());

  std::vector<double> lim;
  for (std::size_t k = 0; k < net.inverters().size(); ++k) lim.push_back(inverter_q_limit(net.inverters()[k], 150.0));
  double best = std::numeric_limits<double>::infinity();
  for (int tap = -2; tap <= 6; ++tap) {
    for (int caps = 0; caps < 4; ++caps) {
      for (int q0 = -1; q0 <= 1; ++q0) {
        for (int q1 = -1; q1 <= 1; ++q1) {
          const env::ActionVector a{tap, {caps >> 1, caps & 1}, {q0 * lim[0], q1 * lim[1]}};
          best = std::min(best, env::evaluate_action(net, s, a, costs).objective(costs));
        }
      }
    }
  }
  EXPECT_NEAR(r.objective, best, 1e-12);
  EXPECT_NEAR(env::evaluate_action(net, s, r.action, costs).objective(costs), r.objective, 1e-10);
}

TEST(Exhaustive, SingletonGridReturnsItsOnlyAction) {
  std::mt19937_64 rng(6);
  const Network bare = testing::random_radial_network(rng, 6, false);
  const ActionGrid g = ActionGrid::with_taps(bare, 3, 3, 1);
  env::Snapshot s;
  for (const auto& b : bare.buses()) {
    s.load_p_kw.push_back(b.load_p_kw);
    s.load_q_kvar.push_back(b.load_q_kvar);
  }
  const env::CostConfig costs;
  const OracleResult r = exhaustive_vvo(bare, s, g, costs);
  EXPECT_EQ(r.evaluations, 1u);
  EXPECT_EQ(r.action, (env::ActionVector{3, {}, {}}));
  EXPECT_DOUBLE_EQ(r.objective, env::evaluate_action(bare, s, r.action, costs).objective(costs));
}

TEST_F(BaselineTest, ZeroLoadPrefersInBandTapWithoutDevices) {
  const env::Snapshot s = snapshot(0.0, 0.0);
  const OracleResult r = exhaustive_vvo(net, s, ActionGrid::full(net, 1), costs);
  EXPECT_LT(r.objective, 1e-10);
  EXPECT_GE(r.action.tap, -8);
  EXPECT_LE(r.action.tap, 8);
  EXPECT_EQ(r.action.caps, (std::vector<int>{0, 0}));
}

TEST_F(BaselineTest, LargerGridNeverDoesWorse) {
  const env::Snapshot s = snapshot(1.3, 50.0);
  const double narrow = exhaustive_vvo(net, s, ActionGrid::with_taps(net, -2, 2, 3), costs).objective;
  const double wide = exhaustive_vvo(net, s, ActionGrid::with_taps(net, -8, 8, 3), costs).objective;
  EXPECT_LE(wide, narrow);
}

TEST_F(BaselineTest, CornersFollowGroupedLayout) {
  const env::Snapshot s = snapshot(1.0, 200.0);
  const ScenarioBox box = ScenarioBox::around(net, s, channels(s, 0.9, 0.5), channels(s, 1.1, 1.2));
  ASSERT_EQ(box.corner_count(), 4u);
  const std::size_t bus = net.index_of(2);
  const env::Snapshot lo_hi = box.corner(1);
  EXPECT_DOUBLE_EQ(lo_hi.load_p_kw[bus], 0.9 * s.load_p_kw[bus]);
  EXPECT_NEAR(lo_hi.load_q_kvar[bus], 0.9 * s.load_q_kvar[bus], 1e-12);
  EXPECT_DOUBLE_EQ(lo_hi.pv_kw[0], 240.0);
  const env::Snapshot hi_lo = box.corner(2);
  EXPECT_DOUBLE_EQ(hi_lo.load_p_kw[bus], 1.1 * s.load_p_kw[bus]);
  EXPECT_DOUBLE_EQ(hi_lo.pv_kw[1], 100.0);
  EXPECT_THROW(box.corner(4), PreconditionError);

  const ScenarioBox per = ScenarioBox::around(net, s, box.lower, box.upper, CornerMode::kPerChannel);
  EXPECT_EQ(per.corner_count(), 64u);
  EXPECT_DOUBLE_EQ(per.corner(1u << 4).pv_kw[0], 240.0);
  EXPECT_DOUBLE_EQ(per.corner(1u << 4).pv_kw[1], 100.0);
  EXPECT_THROW(ScenarioBox::around(net, s, box.upper, box.lower), PreconditionError);
}

TEST_F(BaselineTest, DegenerateBoxReducesToNominalSearch) {
  const env::Snapshot s = snapshot(1.15, 120.0);
  const ActionGrid g = ActionGrid::with_taps(net, -2, 6, 3);
  const OracleResult nominal = exhaustive_vvo(net, s, g, costs);
  const OracleResult robust = robust_exhaustive(net, ScenarioBox::degenerate(net, s), g, costs);
  EXPECT_EQ(robust.action, nominal.action);
  EXPECT_NEAR(robust.objective, nominal.objective, 1e-12);
}

TEST_F(BaselineTest, RobustActionMinimizesWorstCase) {
  const env::Snapshot s = snapshot(1.1, 150.0);
  const ScenarioBox box = ScenarioBox::around(net, s, channels(s, 0.85, 0.4), channels(s, 1.15, 1.3));
  const ActionGrid g = ActionGrid::with_taps(net, -4, 10, 1);
  const OracleResult robust = robust_exhaustive(net, box, g, costs);
  const OracleResult nominal = exhaustive_vvo(net, s, g, costs);
  EXPECT_NEAR(worst_case_objective(net, box, robust.action, costs), robust.objective, 1e-10);
  EXPECT_LE(robust.objective, worst_case_objective(net, box, nominal.action, costs) + 1e-12);
  EXPECT_GE(env::evaluate_action(net, s, robust.action, costs).objective(costs), nominal.objective - 1e-12);

  // Independent min-max over the same grid.
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g.combinations(); ++i) {
    best = std::min(best, worst_case_objective(net, box, g.at(i, box.robust_q_limits(net)), costs));
  }
  EXPECT_NEAR(robust.objective, best, 1e-12);
}

TEST_F(BaselineTest, RandomPolicyIsUniformAndLegal) {
  const ActionGrid g = ActionGrid::full(net, 5);
  RandomPolicy policy(g, 99);
  const std::vector<double> lim = {300.0, 40.0};
  double cap_on = 0.0;
  double tap_sum = 0.0;
  std::vector<int> tap_hist(33, 0);
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const env::ActionVector a = policy.next(lim);
    ASSERT_TRUE(net.regulator().in_range(a.tap));
    ASSERT_LE(std::abs(a.q_dg_kvar[0]), 300.0);
    ASSERT_LE(std::abs(a.q_dg_kvar[1]), 40.0);
    cap_on += a.caps[0];
    tap_sum += a.tap;
    ++tap_hist[static_cast<std::size_t>(a.tap + 16)];
  }
  EXPECT_NEAR(cap_on / n, 0.5, 0.05);
  EXPECT_NEAR(tap_sum / n, 0.0, 0.5);
  for (int c : tap_hist) EXPECT_NEAR(c / double(n), 1.0 / 33.0, 0.01);
}

}  // namespace
}  // namespace vvlab::baseline
