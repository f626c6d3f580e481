#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace vvlab {

enum class BusKind { kSlack, kPQ };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::kPQ;
  double base_kv = 0.0;
  double load_p_kw = 0.0;
  double load_q_kvar = 0.0;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r_ohm = 0.0;
  double x_ohm = 0.0;
  double b_s = 0.0;  // total line charging, split half to each end
};

// Substation voltage regulator. The reference voltage is 1 + tap * step.
struct Regulator {
  int tap_min = -16;
  int tap_max = 16;
  double step_pu = 0.2 / 32.0;

  // 1 + tap * step_pu; throws PreconditionError outside [tap_min, tap_max].
  double reference_voltage(int tap) const;
  bool in_range(int tap) const { return tap >= tap_min && tap <= tap_max; }
  int clamp(int tap) const;
  int positions() const { return tap_max - tap_min + 1; }
};

struct CapacitorBank {
  int bus = 0;
  double rated_kvar = 0.0;
};

struct SmartInverter {
  int bus = 0;
  double rated_kw = 0.0;
  double rated_kva = 0.0;
};

// Reactive headroom of an inverter producing active_kw: sqrt(S^2 - P^2).
// Throws PreconditionError when active_kw is negative or exceeds rated_kva.
double inverter_q_limit(const SmartInverter& inv, double active_kw);

// Radial feeder description. Immutable after construction; buses are stored
// sorted by id and every device refers to buses by id.
class Network {
 public:
  Network(double base_mva, std::vector<Bus> buses, std::vector<Branch> branches,
          Regulator regulator, std::vector<CapacitorBank> capacitors,
          std::vector<SmartInverter> inverters);

  static Network from_json(const nlohmann::json& doc);

  double base_mva() const { return base_mva_; }
  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const Regulator& regulator() const { return regulator_; }
  const std::vector<CapacitorBank>& capacitors() const { return capacitors_; }
  const std::vector<SmartInverter>& inverters() const { return inverters_; }

  std::size_t bus_count() const { return buses_.size(); }
  std::size_t slack_index() const { return slack_index_; }
  // Position of a bus id in buses(); throws ValidationError for unknown ids.
  std::size_t index_of(int bus_id) const;

  // Impedance base of a bus in ohms.
  double z_base(std::size_t bus_index) const;
  // Series admittance of a branch in per-unit.
  std::complex<double> series_admittance_pu(const Branch& br) const;

  // Buses carrying a nonzero nominal load, ascending id. These are the load
  // channels of the scenario and conformal modules.
  std::vector<int> load_bus_ids() const;

  // Sum of nominal load apparent power in kVA; used to normalize features.
  double peak_apparent_kva() const;

 private:
  void validate() const;

  double base_mva_;
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  Regulator regulator_;
  std::vector<CapacitorBank> capacitors_;
  std::vector<SmartInverter> inverters_;
  std::size_t slack_index_ = 0;
};

Network load_network(const std::filesystem::path& path);

// Nodal admittance matrix Y = G + jB in per-unit on the network base.
struct AdmittanceMatrix {
  Eigen::MatrixXcd y;

  Eigen::Index size() const { return y.rows(); }
};

// Assembles Y with each energized capacitor as a shunt susceptance
// rated_kvar / base at its bus. cap_status must have one entry per bank.
AdmittanceMatrix build_admittance(const Network& net, std::span<const int> cap_status);

}  // namespace vvlab
