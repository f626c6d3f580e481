#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vvlab/netmodel.hpp"

namespace vvlab {

// Net per-unit injections (generation minus load) per bus index. Entries at the
// slack bus are ignored by the solver.
struct InjectionVector {
  Eigen::VectorXd p;
  Eigen::VectorXd q;

  static InjectionVector zeros(std::size_t n) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)),
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))};
  }
};

// Builds injections from physical quantities. load_* are indexed by bus index,
// pv_kw and q_dg_kvar by inverter index.
InjectionVector make_injections(const Network& net, std::span<const double> load_p_kw,
                                std::span<const double> load_q_kvar,
                                std::span<const double> pv_kw,
                                std::span<const double> q_dg_kvar);

struct PowerFlowSolution {
  Eigen::VectorXd vm;  // p.u.
  Eigen::VectorXd va;  // radians
  int iterations = 0;  // mismatch evaluations, including the final one
  double max_mismatch = 0.0;
  bool converged = false;

  Eigen::VectorXcd phasors() const;
};

struct LossReport {
  double p_loss_mw = 0.0;
  double q_loss_mvar = 0.0;
};

struct SolverOptions {
  double tolerance = 1e-8;
  int max_iterations = 50;
};

// Newton-Raphson in polar form from a flat start, slack pinned at v_ref∠0.
// Non-convergence is reported through converged=false, never thrown.
PowerFlowSolution solve(const AdmittanceMatrix& ybus, const InjectionVector& inj, double v_ref,
                        std::size_t slack_index = 0, const SolverOptions& opts = {});

// Complex power S_i = V_i conj(sum_j Y_ij V_j) at every bus, per-unit.
Eigen::VectorXcd bus_power(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v);

// Mismatch vector [dP(non-slack); dQ(non-slack)] and its analytic Jacobian with
// respect to [theta(non-slack); |v|(non-slack)]. Exposed for verification.
struct NewtonSystem {
  Eigen::VectorXd mismatch;
  Eigen::MatrixXd jacobian;
};
NewtonSystem newton_system(const AdmittanceMatrix& ybus, const InjectionVector& inj,
                           const Eigen::VectorXd& vm, const Eigen::VectorXd& va,
                           std::size_t slack_index);

// Series branch losses summed over the branch list, converted to MW/Mvar.
LossReport compute_losses(const Network& net, const PowerFlowSolution& sol);

// Buses strictly above v_hi or strictly below v_lo.
int count_violations(const PowerFlowSolution& sol, double v_lo, double v_hi);

}  // namespace vvlab
