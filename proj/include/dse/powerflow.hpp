#pragma once

#include <complex>
#include <optional>

#include <Eigen/Dense>

#include "dse/cases.hpp"

namespace dse {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

struct PowerFlowOptions {
    double tol = 1e-8;
    int max_iter = 20;
    /// Initial magnitudes/angles; flat start (setpoint or 1.0, 0 rad) when empty.
    std::optional<Eigen::VectorXd> initial_v_mag;
    std::optional<Eigen::VectorXd> initial_v_ang;
};

struct PowerFlowSolution {
    Eigen::VectorXd v_mag;  // per bus, p.u.
    Eigen::VectorXd v_ang;  // per bus, rad
    Eigen::VectorXd p_inj;  // net injection per bus, p.u.
    Eigen::VectorXd q_inj;
    int iterations = 0;
    double max_mismatch = 0.0;

    std::complex<double> voltage(std::size_t bus) const { return std::polar(v_mag(bus), v_ang(bus)); }
    ComplexVector voltages() const;
};

/// Bus admittance matrix, rows/cols in `network.buses` order.
ComplexMatrix build_ybus(const NetworkCase& network);

/// Scheduled minus calculated injections: dP for every non-slack bus followed
/// by dQ for every PQ bus, both in bus order.
Eigen::VectorXd mismatch(const NetworkCase& network, const ComplexMatrix& ybus,
                         const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang);

/// Derivative of `mismatch` with respect to the unknowns (angles of non-slack
/// buses, then magnitudes of PQ buses).
Eigen::MatrixXd mismatch_jacobian(const NetworkCase& network, const ComplexMatrix& ybus,
                                  const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang);

/// Polar Newton-Raphson. `iterations` counts mismatch evaluations, so a start
/// that already satisfies the tolerance reports 1.
///
/// Throws ConvergenceError after max_iter passes and SingularMatrixError when
/// the Jacobian cannot be factored.
PowerFlowSolution solve_power_flow(const NetworkCase& network, const PowerFlowOptions& options = {});

/// Complex generation (injection plus load) at each machine, in machine order.
ComplexVector machine_power(const NetworkCase& network, const PowerFlowSolution& pf);

}  // namespace dse
