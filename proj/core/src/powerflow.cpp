#include "vvlab/powerflow.hpp"

#include <cmath>

#include "vvlab/error.hpp"

namespace vvlab {

InjectionVector make_injections(const Network& net, std::span<const double> load_p_kw,
                                std::span<const double> load_q_kvar,
                                std::span<const double> pv_kw,
                                std::span<const double> q_dg_kvar) {
  const std::size_t n = net.bus_count();
  if (load_p_kw.size() != n || load_q_kvar.size() != n) {
    throw PreconditionError("load vectors must have one entry per bus");
  }
  const std::size_t m = net.inverters().size();
  if (pv_kw.size() != m || q_dg_kvar.size() != m) {
    throw PreconditionError("inverter vectors must have one entry per inverter");
  }
  const double to_pu = 1.0 / (1000.0 * net.base_mva());
  InjectionVector inj = InjectionVector::zeros(n);
  for (std::size_t i = 0; i < n; ++i) {
    inj.p[static_cast<Eigen::Index>(i)] = -load_p_kw[i] * to_pu;
    inj.q[static_cast<Eigen::Index>(i)] = -load_q_kvar[i] * to_pu;
  }
  for (std::size_t k = 0; k < m; ++k) {
    const auto i = static_cast<Eigen::Index>(net.index_of(net.inverters()[k].bus));
    inj.p[i] += pv_kw[k] * to_pu;
    inj.q[i] += q_dg_kvar[k] * to_pu;
  }
  return inj;
}

Eigen::VectorXcd PowerFlowSolution::phasors() const {
  Eigen::VectorXcd v(vm.size());
  for (Eigen::Index i = 0; i < vm.size(); ++i) v[i] = std::polar(vm[i], va[i]);
  return v;
}

Eigen::VectorXcd bus_power(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v) {
  const Eigen::VectorXcd current = ybus.y * v;
  return v.cwiseProduct(current.conjugate());
}

NewtonSystem newton_system(const AdmittanceMatrix& ybus, const InjectionVector& inj,
                           const Eigen::VectorXd& vm, const Eigen::VectorXd& va,
                           std::size_t slack_index) {
  const Eigen::Index n = ybus.size();
  const auto slack = static_cast<Eigen::Index>(slack_index);
  const Eigen::Index m = n - 1;
  // pos[i] is the row/column of bus i within each half of the reduced system.
  std::vector<Eigen::Index> pos(static_cast<std::size_t>(n), -1);
  for (Eigen::Index i = 0, k = 0; i < n; ++i) {
    if (i != slack) pos[static_cast<std::size_t>(i)] = k++;
  }

  Eigen::VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
  const Eigen::VectorXcd s = bus_power(ybus, v);

  NewtonSystem sys{Eigen::VectorXd::Zero(2 * m), Eigen::MatrixXd::Zero(2 * m, 2 * m)};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == slack) continue;
    const Eigen::Index r = pos[static_cast<std::size_t>(i)];
    sys.mismatch[r] = s[i].real() - inj.p[i];
    sys.mismatch[m + r] = s[i].imag() - inj.q[i];

    const double gii = ybus.y(i, i).real();
    const double bii = ybus.y(i, i).imag();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == slack) continue;
      const Eigen::Index c = pos[static_cast<std::size_t>(j)];
      if (j == i) {
        const double p = s[i].real();
        const double q = s[i].imag();
        const double vi = vm[i];
        sys.jacobian(r, c) = -q - bii * vi * vi;               // dP_i/dθ_i
        sys.jacobian(r, m + c) = p / vi + gii * vi;            // dP_i/d|v_i|
        sys.jacobian(m + r, c) = p - gii * vi * vi;            // dQ_i/dθ_i
        sys.jacobian(m + r, m + c) = q / vi - bii * vi;        // dQ_i/d|v_i|
      } else {
        const double g = ybus.y(i, j).real();
        const double b = ybus.y(i, j).imag();
        if (g == 0.0 && b == 0.0) continue;
        const double th = va[i] - va[j];
        const double ct = std::cos(th);
        const double st = std::sin(th);
        const double vi = vm[i];
        const double vj = vm[j];
        sys.jacobian(r, c) = vi * vj * (g * st - b * ct);
        sys.jacobian(r, m + c) = vi * (g * ct + b * st);
        sys.jacobian(m + r, c) = -vi * vj * (g * ct + b * st);
        sys.jacobian(m + r, m + c) = vi * (g * st - b * ct);
      }
    }
  }
  return sys;
}

PowerFlowSolution solve(const AdmittanceMatrix& ybus, const InjectionVector& inj, double v_ref,
                        std::size_t slack_index, const SolverOptions& opts) {
  const Eigen::Index n = ybus.size();
  if (ybus.y.rows() != ybus.y.cols()) throw PreconditionError("admittance matrix not square");
  if (inj.p.size() != n || inj.q.size() != n) {
    throw PreconditionError("injection vector size does not match admittance matrix");
  }
  if (!(v_ref >= 0.8 && v_ref <= 1.2)) {
    throw PreconditionError("v_ref " + std::to_string(v_ref) + " outside [0.8, 1.2]");
  }
  if (static_cast<Eigen::Index>(slack_index) >= n) throw PreconditionError("slack index out of range");

  PowerFlowSolution sol;
  sol.vm = Eigen::VectorXd::Ones(n);
  sol.va = Eigen::VectorXd::Zero(n);
  const auto slack = static_cast<Eigen::Index>(slack_index);
  sol.vm[slack] = v_ref;

  const Eigen::Index m = n - 1;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    NewtonSystem sys = newton_system(ybus, inj, sol.vm, sol.va, slack_index);
    sol.iterations = it;
    sol.max_mismatch = m > 0 ? sys.mismatch.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(sol.max_mismatch)) break;
    if (sol.max_mismatch <= opts.tolerance) {
      sol.converged = true;
      return sol;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.jacobian);
    const Eigen::VectorXd dx = lu.solve(-sys.mismatch);
    if (!dx.allFinite()) break;
    for (Eigen::Index i = 0, k = 0; i < n; ++i) {
      if (i == slack) continue;
      sol.va[i] += dx[k];
      sol.vm[i] += dx[m + k];
      ++k;
    }
    // A collapsed or sign-flipped magnitude means the iterate left the
    // physical branch of solutions.
    if ((sol.vm.array() <= 0.0).any()) break;
  }
  sol.converged = false;
  return sol;
}

LossReport compute_losses(const Network& net, const PowerFlowSolution& sol) {
  if (!sol.converged) throw PreconditionError("losses requested for a non-converged solution");
  double p = 0.0;
  double q = 0.0;
  for (const Branch& br : net.branches()) {
    const auto i = static_cast<Eigen::Index>(net.index_of(br.from_bus));
    const auto j = static_cast<Eigen::Index>(net.index_of(br.to_bus));
    const std::complex<double> ys = net.series_admittance_pu(br);
    const double vi = sol.vm[i];
    const double vj = sol.vm[j];
    const double drop_sq = vi * vi + vj * vj - 2.0 * vi * vj * std::cos(sol.va[i] - sol.va[j]);
    p += ys.real() * drop_sq;
    q += -ys.imag() * drop_sq;
  }
  return {p * net.base_mva(), q * net.base_mva()};
}

int count_violations(const PowerFlowSolution& sol, double v_lo, double v_hi) {
  int count = 0;
  for (Eigen::Index i = 0; i < sol.vm.size(); ++i) {
    if (sol.vm[i] > v_hi || sol.vm[i] < v_lo) ++count;
  }
  return count;
}

}  // namespace vvlab
