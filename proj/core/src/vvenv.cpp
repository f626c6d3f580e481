#include "vvlab/vvenv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vvlab/csv.hpp"
#include "vvlab/error.hpp"

namespace vvlab::env {

Snapshot snapshot_at(const Network& net, const TimeSeriesSet& ts, std::size_t t) {
  if (t >= ts.length()) throw PreconditionError("timestep " + std::to_string(t) + " out of range");
  Snapshot s;
  s.load_p_kw.assign(net.bus_count(), 0.0);
  s.load_q_kvar.assign(net.bus_count(), 0.0);
  for (std::size_t k = 0; k < ts.load_bus_ids.size(); ++k) {
    const std::size_t i = net.index_of(ts.load_bus_ids[k]);
    s.load_p_kw[i] = ts.load_p_kw[k][t];
    s.load_q_kvar[i] = ts.load_q_kvar[k][t];
  }
  if (ts.pv_kw.size() != net.inverters().size()) {
    throw ValidationError("time series has " + std::to_string(ts.pv_kw.size()) + " PV entities, network has " +
                          std::to_string(net.inverters().size()) + " inverters");
  }
  s.pv_kw.resize(ts.pv_kw.size());
  for (std::size_t k = 0; k < ts.pv_kw.size(); ++k) s.pv_kw[k] = ts.pv_kw[k][t];
  return s;
}

std::vector<double> channel_values(const TimeSeriesSet& ts, std::size_t t) {
  std::vector<double> v;
  v.reserve(ts.load_p_kw.size() + ts.pv_kw.size());
  for (const auto& s : ts.load_p_kw) v.push_back(s[t]);
  for (const auto& s : ts.pv_kw) v.push_back(s[t]);
  return v;
}

std::size_t channel_count(const Network& net) { return net.load_bus_ids().size() + net.inverters().size(); }

double ActionEvaluation::objective(const CostConfig& costs) const {
  if (!converged) return std::numeric_limits<double>::infinity();
  return costs.c_p * p_loss_mw + costs.c_v * violations;
}

ActionVector clip_action(const Network& net, const Snapshot& snap, const ActionVector& a) {
  if (a.caps.size() != net.capacitors().size()) throw PreconditionError("action has wrong capacitor count");
  if (a.q_dg_kvar.size() != net.inverters().size()) throw PreconditionError("action has wrong inverter count");
  ActionVector out = a;
  out.tap = net.regulator().clamp(a.tap);
  for (auto& c : out.caps) c = c != 0 ? 1 : 0;
  for (std::size_t k = 0; k < out.q_dg_kvar.size(); ++k) {
    const SmartInverter& inv = net.inverters()[k];
    const double pv = std::clamp(snap.pv_kw[k], 0.0, inv.rated_kva);
    const double limit = inverter_q_limit(inv, pv);
    double q = out.q_dg_kvar[k];
    if (!std::isfinite(q)) q = 0.0;
    out.q_dg_kvar[k] = std::clamp(q, -limit, limit);
  }
  return out;
}

std::size_t cap_pattern(std::span<const int> caps) {
  std::size_t bits = 0;
  for (std::size_t k = 0; k < caps.size(); ++k) {
    if (caps[k] != 0) bits |= std::size_t{1} << k;
  }
  return bits;
}

std::vector<AdmittanceMatrix> admittance_table(const Network& net) {
  const std::size_t k = net.capacitors().size();
  if (k > 16) throw PreconditionError("too many capacitors for an admittance table");
  std::vector<AdmittanceMatrix> table;
  table.reserve(std::size_t{1} << k);
  std::vector<int> status(k);
  for (std::size_t bits = 0; bits < (std::size_t{1} << k); ++bits) {
    for (std::size_t c = 0; c < k; ++c) status[c] = (bits >> c) & 1U ? 1 : 0;
    table.push_back(build_admittance(net, status));
  }
  return table;
}

ActionEvaluation evaluate_action(const Network& net, const Snapshot& snap, const ActionVector& a,
                                 const CostConfig& costs, const std::vector<AdmittanceMatrix>* ybus_by_caps) {
  ActionEvaluation ev;
  ev.applied = clip_action(net, snap, a);
  AdmittanceMatrix local;
  const AdmittanceMatrix* y = nullptr;
  if (ybus_by_caps != nullptr) {
    y = &ybus_by_caps->at(cap_pattern(ev.applied.caps));
  } else {
    local = build_admittance(net, ev.applied.caps);
    y = &local;
  }
  const InjectionVector inj =
      make_injections(net, snap.load_p_kw, snap.load_q_kvar, snap.pv_kw, ev.applied.q_dg_kvar);
  ev.solution = solve(*y, inj, net.regulator().reference_voltage(ev.applied.tap), net.slack_index());
  ev.converged = ev.solution.converged;
  if (ev.converged) {
    ev.p_loss_mw = compute_losses(net, ev.solution).p_loss_mw;
    ev.violations = count_violations(ev.solution, costs.v_lo, costs.v_hi);
  }
  return ev;
}

Eigen::VectorXd EnvState::features(double tap_scale) const {
  const Eigen::Index nb = prev_p.size();
  const auto nc = static_cast<Eigen::Index>(caps.size());
  Eigen::VectorXd f(4 * nb + 1 + nc + 2);
  f << prev_p, prev_q, forecast_p, forecast_q, Eigen::VectorXd::Constant(1, tap / tap_scale),
      Eigen::VectorXd::Zero(nc), Eigen::VectorXd::Constant(1, time_sin), Eigen::VectorXd::Constant(1, time_cos);
  for (Eigen::Index c = 0; c < nc; ++c) f[4 * nb + 1 + c] = caps[static_cast<std::size_t>(c)];
  return f;
}

AdversarialState augment(const EnvState& state, std::span<const conformal::PredictionInterval> intervals,
                         double normalizer, double tap_scale) {
  if (intervals.size() != state.channel_forecast.size()) {
    throw PreconditionError("got " + std::to_string(intervals.size()) + " intervals for " +
                            std::to_string(state.channel_forecast.size()) + " channels");
  }
  AdversarialState adv;
  adv.base = state;
  const std::size_t n = intervals.size();
  adv.lower.resize(n);
  adv.upper.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    const double f = state.channel_forecast[c];
    const double lo = std::clamp(intervals[c].lower / normalizer, -1.0, 1.0);
    const double hi = std::clamp(intervals[c].upper / normalizer, -1.0, 1.0);
    adv.lower[c] = std::min(lo, f);
    adv.upper[c] = std::max(hi, f);
  }
  const Eigen::VectorXd base = state.features(tap_scale);
  adv.features.resize(base.size() + 2 * static_cast<Eigen::Index>(n));
  adv.features.head(base.size()) = base;
  for (std::size_t c = 0; c < n; ++c) {
    adv.features[base.size() + static_cast<Eigen::Index>(c)] = adv.lower[c];
    adv.features[base.size() + static_cast<Eigen::Index>(n + c)] = adv.upper[c];
  }
  return adv;
}

VoltVarEnv::VoltVarEnv(Network net, EpisodeData data, EnvConfig cfg)
    : net_(std::move(net)), data_(std::move(data)), cfg_(cfg) {
  data_.truth.check_shape();
  data_.forecast.check_shape();
  if (data_.forecast.length() != data_.truth.length()) {
    throw ValidationError("forecast and truth lengths differ");
  }
  if (data_.truth.steps_per_day() != kStepsPerDay) throw ValidationError("environment expects half-hourly data");
  if (data_.truth.load_bus_ids != net_.load_bus_ids()) {
    throw ValidationError("time series load entities do not match the network's loaded buses");
  }
  channels_ = env::channel_count(net_);
  if (cfg_.bounds == BoundsMode::kConformal) {
    if (data_.intervals.size() != channels_) {
      throw ValidationError("expected intervals for " + std::to_string(channels_) + " channels, got " +
                            std::to_string(data_.intervals.size()));
    }
    for (const auto& track : data_.intervals) {
      if (track.size() != data_.truth.length()) throw ValidationError("interval track length mismatch");
    }
  }
  if (!(cfg_.costs.v_lo < cfg_.costs.v_hi)) throw ValidationError("v_lo must be below v_hi");
  ybus_ = admittance_table(net_);
  normalizer_ = net_.peak_apparent_kva();
  for (const auto& inv : net_.inverters()) normalizer_ = std::max(normalizer_, inv.rated_kva);
  if (!(normalizer_ > 0.0)) normalizer_ = 1000.0 * net_.base_mva();
  tap_scale_ = std::max(std::abs(net_.regulator().tap_min), std::abs(net_.regulator().tap_max));
  if (tap_scale_ <= 0.0) tap_scale_ = 1.0;
  caps_.assign(net_.capacitors().size(), 0);
}

std::size_t VoltVarEnv::state_dim() const {
  const std::size_t nb = net_.bus_count() - 1;
  return 4 * nb + 1 + net_.capacitors().size() + 2 + 2 * channels_;
}

bool VoltVarEnv::day_available(std::size_t day) const {
  if (day >= day_count()) return false;
  if (cfg_.bounds == BoundsMode::kZeroWidth) return true;
  const std::size_t begin = day * kStepsPerDay;
  const std::size_t end = std::min(begin + kStepsPerDay + 1, data_.truth.length());
  for (const auto& track : data_.intervals) {
    for (std::size_t t = begin; t < end; ++t) {
      if (!track[t]) return false;
    }
  }
  return true;
}

AdversarialState VoltVarEnv::observe(std::size_t t) const {
  const std::size_t nb = net_.bus_count();
  const std::size_t slack = net_.slack_index();
  auto net_injection = [&](const Snapshot& s, Eigen::VectorXd& p, Eigen::VectorXd& q) {
    std::vector<double> pb(nb, 0.0);
    std::vector<double> qb(nb, 0.0);
    for (std::size_t i = 0; i < nb; ++i) {
      pb[i] = -s.load_p_kw[i];
      qb[i] = -s.load_q_kvar[i];
    }
    for (std::size_t k = 0; k < s.pv_kw.size(); ++k) pb[net_.index_of(net_.inverters()[k].bus)] += s.pv_kw[k];
    p.resize(static_cast<Eigen::Index>(nb - 1));
    q.resize(static_cast<Eigen::Index>(nb - 1));
    for (std::size_t i = 0, r = 0; i < nb; ++i) {
      if (i == slack) continue;
      p[static_cast<Eigen::Index>(r)] = std::clamp(pb[i] / normalizer_, -1.0, 1.0);
      q[static_cast<Eigen::Index>(r)] = std::clamp(qb[i] / normalizer_, -1.0, 1.0);
      ++r;
    }
  };

  EnvState st;
  const Snapshot fc = snapshot_at(net_, data_.forecast, t);
  // With no earlier step in the data, the forecast stands in for the last actual.
  const Snapshot prev = t > 0 ? snapshot_at(net_, data_.truth, t - 1) : fc;
  net_injection(prev, st.prev_p, st.prev_q);
  net_injection(fc, st.forecast_p, st.forecast_q);
  st.tap = tap_;
  st.caps = caps_;
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t % kStepsPerDay) / kStepsPerDay;
  st.time_sin = std::sin(phase);
  st.time_cos = std::cos(phase);
  const std::vector<double> raw = channel_values(data_.forecast, t);
  st.channel_forecast.resize(raw.size());
  for (std::size_t c = 0; c < raw.size(); ++c) st.channel_forecast[c] = std::clamp(raw[c] / normalizer_, -1.0, 1.0);

  std::vector<conformal::PredictionInterval> intervals(channels_);
  for (std::size_t c = 0; c < channels_; ++c) {
    if (cfg_.bounds == BoundsMode::kZeroWidth) {
      intervals[c] = {raw[c], raw[c], raw[c], 0.05};
    } else {
      const auto& iv = data_.intervals[c][t];
      if (!iv) throw PreconditionError("no conformal interval for channel " + std::to_string(c) + " at timestep " +
                                       std::to_string(t));
      intervals[c] = *iv;
    }
  }
  return augment(st, intervals, normalizer_, tap_scale_);
}

AdversarialState VoltVarEnv::reset(std::size_t day) {
  if (day >= day_count()) {
    throw PreconditionError("day " + std::to_string(day) + " out of range (dataset has " +
                            std::to_string(day_count()) + " days)");
  }
  if (!day_available(day)) throw PreconditionError("day " + std::to_string(day) + " lacks conformal intervals");
  t_ = day * kStepsPerDay;
  steps_taken_ = 0;
  tap_ = 0;
  std::fill(caps_.begin(), caps_.end(), 0);
  obs_ = observe(t_);
  return obs_;
}

std::vector<double> VoltVarEnv::observation_q_limits() const {
  const Snapshot fc = snapshot_at(net_, data_.forecast, t_);
  std::vector<double> limits(net_.inverters().size());
  for (std::size_t k = 0; k < limits.size(); ++k) {
    const auto& inv = net_.inverters()[k];
    limits[k] = inverter_q_limit(inv, std::clamp(fc.pv_kw[k], 0.0, inv.rated_kva));
  }
  return limits;
}

Snapshot VoltVarEnv::current_truth() const { return snapshot_at(net_, data_.truth, t_); }

StepOutcome VoltVarEnv::step(const ActionVector& action) {
  if (terminal()) throw PreconditionError("step called on a finished episode; call reset first");
  const Snapshot truth = snapshot_at(net_, data_.truth, t_);
  const ActionEvaluation ev = evaluate_action(net_, truth, action, cfg_.costs, &ybus_);

  StepOutcome out;
  out.applied = ev.applied;
  out.info.converged = ev.converged;
  out.info.switches = std::abs(tap_ - ev.applied.tap);
  for (std::size_t k = 0; k < caps_.size(); ++k) out.info.switches += std::abs(caps_[k] - ev.applied.caps[k]);
  if (ev.converged) {
    out.info.p_loss_mw = ev.p_loss_mw;
    out.info.violations = ev.violations;
    const CostConfig& c = cfg_.costs;
    out.reward = -(c.c_p * out.info.p_loss_mw + c.c_v * out.info.violations + c.c_u * out.info.switches);
  } else {
    out.info.p_loss_mw = 0.0;
    out.info.violations = static_cast<int>(net_.bus_count());
    out.reward = cfg_.costs.nonconvergence_reward;
  }

  tap_ = ev.applied.tap;
  caps_ = ev.applied.caps;
  ++steps_taken_;
  ++t_;
  out.terminal = terminal();
  // The final step of the data has no successor; it re-observes the last step.
  const std::size_t next_t = std::min(t_, data_.truth.length() - 1);
  obs_ = observe(next_t);
  out.next = obs_;
  return out;
}

double vvr(std::span<const StepRecord> records, std::size_t n_phases) {
  if (records.empty()) throw PreconditionError("VVR needs at least one test step");
  if (n_phases == 0) throw PreconditionError("VVR needs at least one phase");
  double total = 0.0;
  for (const auto& r : records) total += r.info.violations;
  return total / (static_cast<double>(records.size()) * static_cast<double>(n_phases));
}

EpisodeMetrics summarize(std::vector<StepRecord> records, std::size_t n_phases) {
  EpisodeMetrics m;
  m.records = std::move(records);
  if (m.records.empty()) return m;
  double sum = 0.0;
  double sum_sq = 0.0;
  double reward = 0.0;
  for (const auto& r : m.records) {
    sum += r.info.p_loss_mw;
    sum_sq += r.info.p_loss_mw * r.info.p_loss_mw;
    reward += r.reward;
  }
  const auto n = static_cast<double>(m.records.size());
  m.mean_loss_mw = sum / n;
  m.std_loss_mw = std::sqrt(std::max(0.0, sum_sq / n - m.mean_loss_mw * m.mean_loss_mw));
  m.mean_reward = reward / n;
  m.voltage_violation_ratio = vvr(m.records, n_phases);
  return m;
}

void write_eval_log(const std::filesystem::path& path, const std::vector<StepRecord>& records,
                    std::size_t inverter_count) {
  std::ofstream out = csv::open_for_write(path);
  out << "timestep,reward,p_loss_mw,violations,switches,converged,tap,cap_states";
  for (std::size_t k = 0; k < inverter_count; ++k) out << ",q_dg_" << k;
  out << '\n';
  for (const auto& r : records) {
    std::string caps;
    for (int c : r.action.caps) caps += c ? '1' : '0';
    if (caps.empty()) caps = "-";
    out << r.timestep << ',' << csv::format(r.reward) << ',' << csv::format(r.info.p_loss_mw) << ','
        << r.info.violations << ',' << r.info.switches << ',' << (r.info.converged ? 1 : 0) << ',' << r.action.tap
        << ',' << caps;
    for (double q : r.action.q_dg_kvar) out << ',' << csv::format(q);
    out << '\n';
  }
}

}  // namespace vvlab::env
