#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "dse/dynamics.hpp"
#include "dse/reduction.hpp"

namespace dse {

/// One time-stamped measurement snapshot. Bus vectors span every case bus;
/// entries with `v_present[b] == false` are absent and hold NaN.
struct MeasurementFrame {
    double t = 0.0;
    Eigen::VectorXd p_g;
    Eigen::VectorXd q_g;
    Eigen::VectorXd v_mag;
    Eigen::VectorXd v_ang;
    std::vector<bool> v_present;

    std::size_t present_bus_count() const;
    /// [p_g; q_g; v_mag(present); v_ang(present)]
    Eigen::VectorXd stacked() const;
};

struct NoiseSpec {
    double sigma_p = 0.01;
    double sigma_q = 0.01;
    double sigma_vmag = 0.005;
    double sigma_vang = 0.005;
    double q_delta = 1e-6;
    double q_omega = 1e-6;
    std::uint64_t seed = 1;
};

void validate(const NoiseSpec& noise);

/// Q_Gi = E_i sum_j |Y_ij| E_j sin(delta_i - delta_j - theta_ij)
Eigen::VectorXd reactive_power(const Eigen::VectorXd& delta, const Eigen::VectorXd& e_mag,
                               const ReducedNetwork& net);

/// Complex bus voltages r_v * (E angle delta), one per case bus.
ComplexVector bus_voltages(const Eigen::VectorXd& delta, const Eigen::VectorXd& e_mag, const ReducedNetwork& net);

/// Angle reference for reported bus angles: mean rotor angle.
double angle_reference(const Eigen::VectorXd& delta);

/// Noise-free measurement of state `x` at time `t`. Bus angles are unwrapped
/// about the mean rotor angle.
MeasurementFrame measure(const DynamicState& x, const ReducedNetwork& net, const MachineParams& params,
                         double t = 0.0);

/// Stacked noise-free measurement vector, same layout as MeasurementFrame::stacked.
Eigen::VectorXd measurement_vector(const Eigen::VectorXd& delta, const ReducedNetwork& net,
                                   const MachineParams& params);

/// Noisy frames for every trajectory sample, using the network of the
/// sample's regime. Deterministic in `noise.seed`.
std::vector<MeasurementFrame> synthesize(const Trajectory& truth, const ScenarioNetworks& networks,
                                         const MachineParams& params, const NoiseSpec& noise);

/// Columns: t, p_g_<i>, q_g_<i>, v_mag_<bus>, v_ang_<bus>; absent cells empty.
void write_measurements_csv(std::ostream& out, const std::vector<MeasurementFrame>& frames,
                            const std::vector<int>& bus_ids);

}  // namespace dse
