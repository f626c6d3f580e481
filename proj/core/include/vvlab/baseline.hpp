#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vvlab/netmodel.hpp"
#include "vvlab/vvenv.hpp"

namespace vvlab::baseline {

inline constexpr std::size_t kMaxCombinations = 1'000'000;

// Discretized action space. Inverter setpoints are `q_levels` evenly spaced
// fractions of the headroom in [-1, 1]; a single level means q = 0.
struct ActionGrid {
  std::vector<int> taps;
  std::size_t capacitors = 0;
  std::size_t inverters = 0;
  int q_levels = 1;

  static ActionGrid full(const Network& net, int q_levels);
  static ActionGrid with_taps(const Network& net, int tap_lo, int tap_hi, int q_levels);

  std::size_t combinations() const;
  // Throws PreconditionError above kMaxCombinations or for an empty grid.
  void check() const;
  double q_fraction(int level) const;
  // Combination `index` in lexicographic order (tap, capacitor bits, q levels).
  env::ActionVector at(std::size_t index, std::span<const double> q_limits) const;
};

struct OracleResult {
  env::ActionVector action;
  double objective = 0.0;
  std::size_t evaluations = 0;
};

// Single-step minimizer of C_p * loss + C_v * violations over the grid.
// Ties keep the earliest combination.
OracleResult exhaustive_vvo(const Network& net, const env::Snapshot& snap, const ActionGrid& grid,
                            const env::CostConfig& costs);

enum class CornerMode { kGrouped, kPerChannel };

// Per-channel [lower, upper] kW box around a nominal snapshot. Channels follow
// env::channel_values: load P per loaded bus, then PV per inverter. Load Q
// scales with load P.
struct ScenarioBox {
  env::Snapshot nominal;
  std::vector<int> load_bus_index;  // bus index of each load channel
  std::vector<double> lower, upper;
  CornerMode mode = CornerMode::kGrouped;

  static ScenarioBox around(const Network& net, const env::Snapshot& nominal, std::vector<double> lower,
                            std::vector<double> upper, CornerMode mode = CornerMode::kGrouped);
  static ScenarioBox degenerate(const Network& net, const env::Snapshot& nominal);

  std::size_t channel_count() const { return lower.size(); }
  // Grouped: (loads low, PV low), (loads low, PV high), (high, low), (high, high).
  // Per channel: bit c of the corner index selects upper for channel c.
  std::size_t corner_count() const;
  env::Snapshot corner(std::size_t index) const;
  // Inverter headroom valid for every corner (taken at the PV upper bound).
  std::vector<double> robust_q_limits(const Network& net) const;
};

// Corner min-max: minimizes the worst corner objective over the grid.
OracleResult robust_exhaustive(const Network& net, const ScenarioBox& box, const ActionGrid& grid,
                               const env::CostConfig& costs);

// Worst corner objective of a fixed action.
double worst_case_objective(const Network& net, const ScenarioBox& box, const env::ActionVector& action,
                            const env::CostConfig& costs);

// Uniform draws over the grid.
class RandomPolicy {
 public:
  RandomPolicy(ActionGrid grid, std::uint64_t seed);
  env::ActionVector next(std::span<const double> q_limits);

 private:
  ActionGrid grid_;
  std::mt19937_64 rng_;
};

}  // namespace vvlab::baseline
