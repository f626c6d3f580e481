#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "vvlab/netmodel.hpp"
#include "vvlab/powerflow.hpp"

namespace {

vvlab::Network fixture(int index) {
  static const char* names[] = {"bus5.json", "bus13.json"};
  return vvlab::load_network(std::string(VVLAB_FIXTURE_DIR) + "/" + names[index]);
}

// Nominal loads, no PV, all capacitors on.
void BM_Solve(benchmark::State& state) {
  const auto net = fixture(static_cast<int>(state.range(0)));
  std::vector<double> p, q;
  for (const auto& b : net.buses()) {
    p.push_back(b.load_p_kw);
    q.push_back(b.load_q_kvar);
  }
  std::vector<double> zeros(net.inverters().size(), 0.0);
  const auto inj = vvlab::make_injections(net, p, q, zeros, zeros);
  std::vector<int> caps(net.capacitors().size(), 1);
  const auto ybus = vvlab::build_admittance(net, caps);
  const double v_ref = net.regulator().reference_voltage(2);

  for (auto _ : state) {
    auto sol = vvlab::solve(ybus, inj, v_ref, net.slack_index());
    benchmark::DoNotOptimize(sol.vm.data());
  }
  state.SetLabel(std::to_string(net.bus_count()) + " buses");
}
BENCHMARK(BM_Solve)->Arg(0)->Arg(1);

void BM_BuildAdmittance(benchmark::State& state) {
  const auto net = fixture(static_cast<int>(state.range(0)));
  std::vector<int> caps(net.capacitors().size(), 1);
  for (auto _ : state) {
    auto ybus = vvlab::build_admittance(net, caps);
    benchmark::DoNotOptimize(&ybus);
  }
}
BENCHMARK(BM_BuildAdmittance)->Arg(0)->Arg(1);

}  // namespace
