#include "vvlab/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vvlab/error.hpp"

namespace vvlab {

using nlohmann::json;

double Regulator::reference_voltage(int tap) const {
  if (!in_range(tap)) throw PreconditionError("tap " + std::to_string(tap) + " outside the regulator range");
  return 1.0 + tap * step_pu;
}

int Regulator::clamp(int tap) const { return std::clamp(tap, tap_min, tap_max); }

double inverter_q_limit(const SmartInverter& inv, double active_kw) {
  if (!(active_kw >= 0.0) || active_kw > inv.rated_kva) {
    throw PreconditionError("inverter active power " + std::to_string(active_kw) +
                            " kW outside [0, " + std::to_string(inv.rated_kva) + "] kVA");
  }
  return std::sqrt(inv.rated_kva * inv.rated_kva - active_kw * active_kw);
}

Network::Network(double base_mva, std::vector<Bus> buses, std::vector<Branch> branches,
                 Regulator regulator, std::vector<CapacitorBank> capacitors,
                 std::vector<SmartInverter> inverters)
    : base_mva_(base_mva),
      buses_(std::move(buses)),
      branches_(std::move(branches)),
      regulator_(regulator),
      capacitors_(std::move(capacitors)),
      inverters_(std::move(inverters)) {
  std::sort(buses_.begin(), buses_.end(),
            [](const Bus& a, const Bus& b) { return a.id < b.id; });
  validate();
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (buses_[i].kind == BusKind::kSlack) slack_index_ = i;
  }
}

std::size_t Network::index_of(int bus_id) const {
  auto it = std::lower_bound(buses_.begin(), buses_.end(), bus_id,
                             [](const Bus& b, int id) { return b.id < id; });
  if (it == buses_.end() || it->id != bus_id) {
    throw ValidationError("unknown bus id " + std::to_string(bus_id));
  }
  return static_cast<std::size_t>(it - buses_.begin());
}

double Network::z_base(std::size_t bus_index) const {
  const double kv = buses_.at(bus_index).base_kv;
  return kv * kv / base_mva_;
}

std::complex<double> Network::series_admittance_pu(const Branch& br) const {
  const double zb = z_base(index_of(br.from_bus));
  const std::complex<double> z(br.r_ohm / zb, br.x_ohm / zb);
  return 1.0 / z;
}

std::vector<int> Network::load_bus_ids() const {
  std::vector<int> ids;
  for (const auto& b : buses_) {
    if (b.load_p_kw != 0.0 || b.load_q_kvar != 0.0) ids.push_back(b.id);
  }
  return ids;
}

double Network::peak_apparent_kva() const {
  double s = 0.0;
  for (const auto& b : buses_) s += std::hypot(b.load_p_kw, b.load_q_kvar);
  return s;
}

void Network::validate() const {
  if (!(base_mva_ > 0.0) || !std::isfinite(base_mva_)) {
    throw ValidationError("base_mva must be positive");
  }
  if (buses_.empty()) throw ValidationError("network has no buses");

  std::size_t slack_count = 0;
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    const Bus& b = buses_[i];
    if (i > 0 && buses_[i - 1].id == b.id) {
      throw ValidationError("duplicate bus id " + std::to_string(b.id));
    }
    if (!(b.base_kv > 0.0) || !std::isfinite(b.base_kv)) {
      throw ValidationError("bus " + std::to_string(b.id) + ": base_kv must be positive");
    }
    if (!std::isfinite(b.load_p_kw) || !std::isfinite(b.load_q_kvar)) {
      throw ValidationError("bus " + std::to_string(b.id) + ": load must be finite");
    }
    if (b.kind == BusKind::kSlack) ++slack_count;
  }
  if (slack_count == 0) throw ValidationError("missing slack bus");
  if (slack_count > 1) throw ValidationError("multiple slack buses");
  const auto slack = std::find_if(buses_.begin(), buses_.end(),
                                  [](const Bus& b) { return b.kind == BusKind::kSlack; });
  if (slack->id != 0) throw ValidationError("slack bus must have id 0 (substation)");

  std::vector<std::vector<std::size_t>> adj(buses_.size());
  for (const Branch& br : branches_) {
    if (br.from_bus == br.to_bus) {
      throw ValidationError("branch " + std::to_string(br.from_bus) + "-" +
                            std::to_string(br.to_bus) + " is a self loop");
    }
    const std::size_t f = index_of(br.from_bus);
    const std::size_t t = index_of(br.to_bus);
    if (!(br.r_ohm >= 0.0) || !std::isfinite(br.x_ohm) || !std::isfinite(br.b_s)) {
      throw ValidationError("branch " + std::to_string(br.from_bus) + "-" +
                            std::to_string(br.to_bus) + ": invalid impedance");
    }
    if (br.r_ohm == 0.0 && br.x_ohm == 0.0) {
      throw ValidationError("branch " + std::to_string(br.from_bus) + "-" +
                            std::to_string(br.to_bus) + ": zero impedance");
    }
    if (buses_[f].base_kv != buses_[t].base_kv) {
      throw ValidationError("branch " + std::to_string(br.from_bus) + "-" +
                            std::to_string(br.to_bus) + " joins different base_kv");
    }
    adj[f].push_back(t);
    adj[t].push_back(f);
  }

  std::vector<bool> seen(buses_.size(), false);
  std::queue<std::size_t> frontier;
  const auto root = static_cast<std::size_t>(slack - buses_.begin());
  seen[root] = true;
  frontier.push(root);
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        frontier.push(v);
      }
    }
  }
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (!seen[i]) {
      throw ValidationError("bus " + std::to_string(buses_[i].id) +
                            " is disconnected from the slack bus");
    }
  }

  if (regulator_.tap_min > 0 || regulator_.tap_max < 0 || regulator_.tap_min > regulator_.tap_max) {
    throw ValidationError("regulator tap range must contain 0");
  }
  if (!(regulator_.step_pu > 0.0)) throw ValidationError("regulator step_pu must be positive");
  const double lo = regulator_.reference_voltage(regulator_.tap_min);
  const double hi = regulator_.reference_voltage(regulator_.tap_max);
  if (lo < 0.9 - 1e-12 || hi > 1.1 + 1e-12) {
    throw ValidationError("regulator ratio range exceeds [0.9, 1.1] p.u.");
  }

  for (const auto& c : capacitors_) {
    index_of(c.bus);
    if (!(c.rated_kvar > 0.0)) {
      throw ValidationError("capacitor at bus " + std::to_string(c.bus) + ": rated_kvar must be positive");
    }
  }
  std::set<int> inverter_buses;
  for (const auto& inv : inverters_) {
    index_of(inv.bus);
    if (!(inv.rated_kw >= 0.0) || inv.rated_kw > inv.rated_kva) {
      throw ValidationError("inverter at bus " + std::to_string(inv.bus) +
                            ": need 0 <= rated_kw <= rated_kva");
    }
    if (!inverter_buses.insert(inv.bus).second) {
      throw ValidationError("two inverters at bus " + std::to_string(inv.bus));
    }
  }
}

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  for (const auto& item : obj.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&](const char* k) { return item.key() == k; });
    if (!ok) throw ParseError(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + "." + key + ": wrong type");
  }
}

template <typename T>
T field_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  return field<T>(obj, key, where);
}

const json& array_field(const json& doc, const char* key) {
  if (!doc.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
  const json& arr = doc.at(key);
  if (!arr.is_array()) throw ParseError(std::string(key) + ": expected an array");
  return arr;
}

}  // namespace

Network Network::from_json(const json& doc) {
  reject_unknown_keys(doc, {"base_mva", "buses", "branches", "regulator", "capacitors", "inverters"},
                      "network");
  const double base_mva = field<double>(doc, "base_mva", "network");

  std::vector<Bus> buses;
  const json& jb = array_field(doc, "buses");
  for (std::size_t i = 0; i < jb.size(); ++i) {
    const std::string where = "buses[" + std::to_string(i) + "]";
    reject_unknown_keys(jb[i], {"id", "kind", "base_kv", "load_p_kw", "load_q_kvar"}, where);
    Bus b;
    b.id = field<int>(jb[i], "id", where);
    const auto kind = field<std::string>(jb[i], "kind", where);
    if (kind == "slack") {
      b.kind = BusKind::kSlack;
    } else if (kind == "pq") {
      b.kind = BusKind::kPQ;
    } else {
      throw ParseError(where + ".kind: expected 'slack' or 'pq', got '" + kind + "'");
    }
    b.base_kv = field<double>(jb[i], "base_kv", where);
    b.load_p_kw = field_or<double>(jb[i], "load_p_kw", 0.0, where);
    b.load_q_kvar = field_or<double>(jb[i], "load_q_kvar", 0.0, where);
    buses.push_back(b);
  }

  std::vector<Branch> branches;
  const json& jr = array_field(doc, "branches");
  for (std::size_t i = 0; i < jr.size(); ++i) {
    const std::string where = "branches[" + std::to_string(i) + "]";
    reject_unknown_keys(jr[i], {"from", "to", "r_ohm", "x_ohm", "b_s"}, where);
    Branch br;
    br.from_bus = field<int>(jr[i], "from", where);
    br.to_bus = field<int>(jr[i], "to", where);
    br.r_ohm = field<double>(jr[i], "r_ohm", where);
    br.x_ohm = field<double>(jr[i], "x_ohm", where);
    br.b_s = field_or<double>(jr[i], "b_s", 0.0, where);
    branches.push_back(br);
  }

  Regulator reg;
  if (doc.contains("regulator")) {
    const json& jg = doc.at("regulator");
    reject_unknown_keys(jg, {"tap_min", "tap_max", "step_pu"}, "regulator");
    reg.tap_min = field_or<int>(jg, "tap_min", reg.tap_min, "regulator");
    reg.tap_max = field_or<int>(jg, "tap_max", reg.tap_max, "regulator");
    reg.step_pu = field_or<double>(jg, "step_pu", reg.step_pu, "regulator");
  }

  std::vector<CapacitorBank> caps;
  if (doc.contains("capacitors")) {
    const json& jc = array_field(doc, "capacitors");
    for (std::size_t i = 0; i < jc.size(); ++i) {
      const std::string where = "capacitors[" + std::to_string(i) + "]";
      reject_unknown_keys(jc[i], {"bus", "rated_kvar"}, where);
      caps.push_back({field<int>(jc[i], "bus", where), field<double>(jc[i], "rated_kvar", where)});
    }
  }

  std::vector<SmartInverter> invs;
  if (doc.contains("inverters")) {
    const json& ji = array_field(doc, "inverters");
    for (std::size_t i = 0; i < ji.size(); ++i) {
      const std::string where = "inverters[" + std::to_string(i) + "]";
      reject_unknown_keys(ji[i], {"bus", "rated_kw", "rated_kva"}, where);
      invs.push_back({field<int>(ji[i], "bus", where), field<double>(ji[i], "rated_kw", where),
                      field<double>(ji[i], "rated_kva", where)});
    }
  }

  return Network(base_mva, std::move(buses), std::move(branches), reg, std::move(caps),
                 std::move(invs));
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    return Network::from_json(doc);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

AdmittanceMatrix build_admittance(const Network& net, std::span<const int> cap_status) {
  if (cap_status.size() != net.capacitors().size()) {
    throw PreconditionError("cap_status has " + std::to_string(cap_status.size()) +
                            " entries, network has " + std::to_string(net.capacitors().size()) +
                            " capacitors");
  }
  const auto n = static_cast<Eigen::Index>(net.bus_count());
  AdmittanceMatrix out{Eigen::MatrixXcd::Zero(n, n)};
  for (const Branch& br : net.branches()) {
    const auto f = static_cast<Eigen::Index>(net.index_of(br.from_bus));
    const auto t = static_cast<Eigen::Index>(net.index_of(br.to_bus));
    const std::complex<double> ys = net.series_admittance_pu(br);
    const std::complex<double> ysh(0.0, 0.5 * br.b_s * net.z_base(static_cast<std::size_t>(f)));
    out.y(f, t) -= ys;
    out.y(t, f) -= ys;
    out.y(f, f) += ys + ysh;
    out.y(t, t) += ys + ysh;
  }
  for (std::size_t k = 0; k < cap_status.size(); ++k) {
    if (cap_status[k] != 0 && cap_status[k] != 1) {
      throw PreconditionError("capacitor status must be 0 or 1");
    }
    if (cap_status[k] == 1) {
      const auto& cap = net.capacitors()[k];
      const auto i = static_cast<Eigen::Index>(net.index_of(cap.bus));
      out.y(i, i) += std::complex<double>(0.0, cap.rated_kvar / 1000.0 / net.base_mva());
    }
  }
  return out;
}

}  // namespace vvlab
