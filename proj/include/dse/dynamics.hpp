#pragma once

#include <cstddef>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dse/cases.hpp"
#include "dse/powerflow.hpp"
#include "dse/reduction.hpp"

namespace dse {

/// Rotor angles (rad, unwrapped) and speeds (p.u., 1 = synchronous).
struct DynamicState {
    Eigen::VectorXd delta;
    Eigen::VectorXd omega;

    std::size_t machine_count() const { return static_cast<std::size_t>(delta.size()); }

    /// [delta; omega]
    Eigen::VectorXd stacked() const;
    static DynamicState from_stacked(const Eigen::VectorXd& x);
};

struct MachineParams {
    Eigen::VectorXd h;
    Eigen::VectorXd d;
    Eigen::VectorXd e_mag;
    Eigen::VectorXd p_mech;
    double omega0 = 0.0;  // rad/s

    std::size_t machine_count() const { return static_cast<std::size_t>(h.size()); }

    static MachineParams from_case(const NetworkCase& network, const MachineInit& init);
};

enum class Regime { PreFault, FaultOn, PostFault };

std::string_view to_string(Regime regime);

struct FaultScenario {
    int fault_bus = 0;
    double t_fault = 1.0;
    double clearing_cycles = 2.0;
    std::pair<int, int> cleared_line{0, 0};
    double t_end = 10.0;
    double dt = 0.01;

    double t_clear(double frequency) const { return t_fault + clearing_cycles / frequency; }
    Regime regime_at(double t, double frequency) const;
};

/// Throws ValidationError for scenarios inconsistent with `network`.
void validate(const FaultScenario& scenario, const NetworkCase& network);

/// Samples at multiples of dt, with the regime in force at each sample.
struct Trajectory {
    std::vector<double> times;
    std::vector<DynamicState> states;
    std::vector<Regime> regime;

    std::size_t size() const { return times.size(); }
};

/// Reduced networks for each regime of a scenario.
struct ScenarioNetworks {
    ReducedNetwork pre_fault;
    ReducedNetwork fault_on;
    ReducedNetwork post_fault;

    const ReducedNetwork& at(Regime regime) const;
};

/// P_Gi = E_i sum_j |Y_ij| E_j cos(delta_i - delta_j - theta_ij)
Eigen::VectorXd electrical_power(const Eigen::VectorXd& delta, const Eigen::VectorXd& e_mag,
                                 const ReducedNetwork& net);

/// Right-hand side of the per-unit swing equation.
DynamicState swing_derivatives(const DynamicState& x, const MachineParams& params,
                               const ReducedNetwork& net);

/// One forward-Euler step of the swing equation plus additive noise `w`
/// ([w_delta; w_omega]); an empty `w` means no noise.
DynamicState step_process(const DynamicState& x, const MachineParams& params, const ReducedNetwork& net,
                          double dt, const Eigen::VectorXd& w = {});

/// Throws ValidationError when clearing the line islands a machine.
ScenarioNetworks scenario_networks(const NetworkCase& network, const PowerFlowSolution& pf,
                                   const FaultScenario& scenario);

/// Everything a simulation or filter needs about a scenario, computed once.
struct ScenarioModel {
    MachineInit init;
    MachineParams params;
    ScenarioNetworks networks;
    FaultScenario scenario;
    double frequency = 60.0;

    DynamicState equilibrium() const;
};

ScenarioModel build_scenario_model(const NetworkCase& network, const PowerFlowSolution& pf,
                                   const FaultScenario& scenario);

/// Ground-truth RK4 integration at step dt/substeps, switching networks
/// exactly at fault and clearing times. Throws InstabilityError when a
/// machine's speed leaves |omega - 1| <= 0.2.
Trajectory simulate(const ScenarioModel& model, int substeps = 10);
Trajectory simulate(const NetworkCase& network, const PowerFlowSolution& pf, const FaultScenario& scenario,
                    int substeps = 10);

}  // namespace dse
