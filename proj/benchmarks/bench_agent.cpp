#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "vvlab/ddpg.hpp"
#include "vvlab/netmodel.hpp"

namespace {

struct Setup {
  vvlab::ddpg::Agent agent;
  std::vector<double> q_limits;
};

Setup make_setup(std::size_t state_dim) {
  const auto net = vvlab::load_network(std::string(VVLAB_FIXTURE_DIR) + "/bus13.json");
  std::mt19937_64 rng(3);
  auto head = vvlab::ddpg::ActionHead::for_network(net);
  Setup s{vvlab::ddpg::Agent::create(state_dim, head, {}, rng), {}};
  s.q_limits.assign(net.inverters().size(), 200.0);
  return s;
}

Eigen::MatrixXd random_states(std::size_t dim, Eigen::Index n) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(dim), n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

void BM_Act(benchmark::State& state) {
  constexpr std::size_t kDim = 64;
  auto s = make_setup(kDim);
  Eigen::VectorXd x = random_states(kDim, 1).col(0);
  std::mt19937_64 rng(5);
  for (auto _ : state) {
    auto r = vvlab::ddpg::act(s.agent, x, 0.0, s.q_limits, rng);
    benchmark::DoNotOptimize(r.raw.data());
  }
}
BENCHMARK(BM_Act);

// One critic step plus one actor step on a batch.
void BM_UpdatePair(benchmark::State& state) {
  constexpr std::size_t kDim = 64;
  auto s = make_setup(kDim);
  const auto n = static_cast<Eigen::Index>(state.range(0));
  vvlab::ddpg::Batch batch;
  batch.states = random_states(kDim, n);
  batch.next_states = batch.states.reverse();
  batch.actions = s.agent.policy(batch.states);
  batch.rewards = Eigen::VectorXd::LinSpaced(n, -1.0, 0.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(vvlab::ddpg::critic_update(s.agent, batch, 0.95, 5.0));
    benchmark::DoNotOptimize(vvlab::ddpg::actor_update(s.agent, batch));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_UpdatePair)->Arg(32)->Arg(128);

}  // namespace
