#include "vvlab/baseline.hpp"

#include <algorithm>
#include <limits>

#include "vvlab/error.hpp"

namespace vvlab::baseline {

ActionGrid ActionGrid::full(const Network& net, int q_levels) {
  return with_taps(net, net.regulator().tap_min, net.regulator().tap_max, q_levels);
}

ActionGrid ActionGrid::with_taps(const Network& net, int tap_lo, int tap_hi, int q_levels) {
  if (tap_lo > tap_hi) throw PreconditionError("empty tap range");
  if (!net.regulator().in_range(tap_lo) || !net.regulator().in_range(tap_hi)) {
    throw PreconditionError("tap candidates outside the regulator range");
  }
  ActionGrid g;
  for (int t = tap_lo; t <= tap_hi; ++t) g.taps.push_back(t);
  g.capacitors = net.capacitors().size();
  g.inverters = net.inverters().size();
  g.q_levels = q_levels;
  g.check();
  return g;
}

std::size_t ActionGrid::combinations() const {
  double n = static_cast<double>(taps.size()) * static_cast<double>(std::size_t{1} << std::min<std::size_t>(capacitors, 40));
  for (std::size_t k = 0; k < inverters; ++k) n *= q_levels;
  if (n > static_cast<double>(std::numeric_limits<std::size_t>::max() / 2)) return std::numeric_limits<std::size_t>::max();
  return static_cast<std::size_t>(n);
}

void ActionGrid::check() const {
  if (taps.empty()) throw PreconditionError("action grid has no tap candidates");
  if (q_levels < 1) throw PreconditionError("q_levels must be >= 1");
  const std::size_t n = combinations();
  if (n > kMaxCombinations) {
    throw PreconditionError("action grid has " + std::to_string(n) + " combinations, limit is " +
                            std::to_string(kMaxCombinations));
  }
}

double ActionGrid::q_fraction(int level) const {
  if (q_levels == 1) return 0.0;
  return -1.0 + 2.0 * level / (q_levels - 1);
}

env::ActionVector ActionGrid::at(std::size_t index, std::span<const double> q_limits) const {
  if (q_limits.size() != inverters) throw PreconditionError("need one q limit per inverter");
  env::ActionVector a;
  a.caps.resize(capacitors);
  a.q_dg_kvar.resize(inverters);
  for (std::size_t k = inverters; k-- > 0;) {
    const auto level = static_cast<int>(index % static_cast<std::size_t>(q_levels));
    index /= static_cast<std::size_t>(q_levels);
    a.q_dg_kvar[k] = q_fraction(level) * q_limits[k];
  }
  for (std::size_t c = capacitors; c-- > 0;) {
    a.caps[c] = static_cast<int>(index & 1U);
    index >>= 1;
  }
  if (index >= taps.size()) throw PreconditionError("grid index out of range");
  a.tap = taps[index];
  return a;
}

namespace {

std::vector<double> headroom(const Network& net, std::span<const double> pv_kw) {
  std::vector<double> lim(net.inverters().size());
  for (std::size_t k = 0; k < lim.size(); ++k) {
    const SmartInverter& inv = net.inverters()[k];
    lim[k] = inverter_q_limit(inv, std::clamp(pv_kw[k], 0.0, inv.rated_kva));
  }
  return lim;
}

}  // namespace

OracleResult exhaustive_vvo(const Network& net, const env::Snapshot& snap, const ActionGrid& grid,
                            const env::CostConfig& costs) {
  grid.check();
  const auto table = env::admittance_table(net);
  const std::vector<double> limits = headroom(net, snap.pv_kw);
  OracleResult best;
  best.objective = std::numeric_limits<double>::infinity();
  const std::size_t n = grid.combinations();
  for (std::size_t i = 0; i < n; ++i) {
    const env::ActionVector a = grid.at(i, limits);
    const double obj = env::evaluate_action(net, snap, a, costs, &table).objective(costs);
    if (i == 0 || obj < best.objective) {
      best.action = a;
      best.objective = obj;
    }
  }
  best.evaluations = n;
  return best;
}

ScenarioBox ScenarioBox::around(const Network& net, const env::Snapshot& nominal, std::vector<double> lower,
                                std::vector<double> upper, CornerMode mode) {
  ScenarioBox box;
  box.nominal = nominal;
  for (int id : net.load_bus_ids()) box.load_bus_index.push_back(static_cast<int>(net.index_of(id)));
  const std::size_t channels = box.load_bus_index.size() + net.inverters().size();
  if (lower.size() != channels || upper.size() != channels) {
    throw PreconditionError("box needs " + std::to_string(channels) + " channel bounds");
  }
  for (std::size_t c = 0; c < channels; ++c) {
    if (!(lower[c] <= upper[c])) throw PreconditionError("box channel " + std::to_string(c) + " has lower > upper");
  }
  box.lower = std::move(lower);
  box.upper = std::move(upper);
  box.mode = mode;
  if (box.corner_count() > kMaxCombinations) throw PreconditionError("too many box corners");
  return box;
}

ScenarioBox ScenarioBox::degenerate(const Network& net, const env::Snapshot& nominal) {
  std::vector<double> v;
  for (int id : net.load_bus_ids()) v.push_back(nominal.load_p_kw[net.index_of(id)]);
  for (double pv : nominal.pv_kw) v.push_back(pv);
  return around(net, nominal, v, v);
}

std::size_t ScenarioBox::corner_count() const {
  if (mode == CornerMode::kGrouped) return 4;
  if (channel_count() >= 40) return std::numeric_limits<std::size_t>::max();
  return std::size_t{1} << channel_count();
}

env::Snapshot ScenarioBox::corner(std::size_t index) const {
  if (index >= corner_count()) throw PreconditionError("corner index out of range");
  const std::size_t nl = load_bus_index.size();
  auto pick_upper = [&](std::size_t c) {
    if (mode == CornerMode::kPerChannel) return ((index >> c) & 1U) != 0;
    return c < nl ? (index & 2U) != 0 : (index & 1U) != 0;
  };
  env::Snapshot s = nominal;
  for (std::size_t c = 0; c < nl; ++c) {
    const auto i = static_cast<std::size_t>(load_bus_index[c]);
    const double p = pick_upper(c) ? upper[c] : lower[c];
    const double p0 = nominal.load_p_kw[i];
    s.load_q_kvar[i] = p0 != 0.0 ? nominal.load_q_kvar[i] * p / p0 : 0.0;
    s.load_p_kw[i] = p;
  }
  for (std::size_t k = 0; k < s.pv_kw.size(); ++k) {
    s.pv_kw[k] = std::max(0.0, pick_upper(nl + k) ? upper[nl + k] : lower[nl + k]);
  }
  return s;
}

std::vector<double> ScenarioBox::robust_q_limits(const Network& net) const {
  std::vector<double> pv(nominal.pv_kw.size());
  const std::size_t nl = load_bus_index.size();
  for (std::size_t k = 0; k < pv.size(); ++k) pv[k] = std::max(0.0, upper[nl + k]);
  return headroom(net, pv);
}

double worst_case_objective(const Network& net, const ScenarioBox& box, const env::ActionVector& action,
                            const env::CostConfig& costs) {
  const auto table = env::admittance_table(net);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < box.corner_count(); ++c) {
    worst = std::max(worst, env::evaluate_action(net, box.corner(c), action, costs, &table).objective(costs));
  }
  return worst;
}

OracleResult robust_exhaustive(const Network& net, const ScenarioBox& box, const ActionGrid& grid,
                               const env::CostConfig& costs) {
  grid.check();
  const std::size_t corners = box.corner_count();
  if (grid.combinations() * corners > 50 * kMaxCombinations) {
    throw PreconditionError("robust search exceeds the evaluation limit");
  }
  const auto table = env::admittance_table(net);
  std::vector<env::Snapshot> scenarios;
  for (std::size_t c = 0; c < corners; ++c) scenarios.push_back(box.corner(c));
  const std::vector<double> limits = box.robust_q_limits(net);

  OracleResult best;
  best.objective = std::numeric_limits<double>::infinity();
  const std::size_t n = grid.combinations();
  for (std::size_t i = 0; i < n; ++i) {
    const env::ActionVector a = grid.at(i, limits);
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& s : scenarios) {
      worst = std::max(worst, env::evaluate_action(net, s, a, costs, &table).objective(costs));
      if (worst >= best.objective && i > 0) break;
    }
    if (i == 0 || worst < best.objective) {
      best.action = a;
      best.objective = worst;
    }
  }
  best.evaluations = n * corners;
  return best;
}

RandomPolicy::RandomPolicy(ActionGrid grid, std::uint64_t seed) : grid_(std::move(grid)), rng_(seed) {
  grid_.check();
}

env::ActionVector RandomPolicy::next(std::span<const double> q_limits) {
  std::uniform_int_distribution<std::size_t> pick(0, grid_.combinations() - 1);
  return grid_.at(pick(rng_), q_limits);
}

}  // namespace vvlab::baseline
