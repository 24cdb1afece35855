#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "dse/cases.hpp"
#include "dse/powerflow.hpp"

namespace dse {

/// Network buses plus machine internal nodes, partitioned as
///
///   [ y11 y12 ] [ V ]   [ 0  ]
///   [ y21 y22 ] [ E ] = [ I_G ]
///
/// Loads are constant admittances on the y11 diagonal.
struct ExtendedAdmittance {
    ComplexMatrix y11;
    ComplexMatrix y12;
    ComplexMatrix y21;
    ComplexMatrix y22;
    /// Case bus ids, in `NetworkCase::buses` order.
    std::vector<int> all_bus_ids;
    /// Indices into `all_bus_ids` of the rows kept in y11 (a bolted fault
    /// removes its bus).
    std::vector<std::size_t> bus_rows;
    /// Indices into `NetworkCase::machines`, one per y22 row.
    std::vector<std::size_t> machine_order;
};

/// Equivalent network among machine internal nodes.
struct ReducedNetwork {
    ComplexMatrix y_red;
    Eigen::MatrixXd y_mag;
    Eigen::MatrixXd y_ang;
    /// Rows for every case bus; rows of buses missing from y11 are zero.
    ComplexMatrix r_v;
    /// false for buses removed from y11 (their voltage is not observable).
    std::vector<bool> bus_present;
    /// Case bus ids, one per r_v row.
    std::vector<int> bus_ids;

    std::size_t machine_count() const { return static_cast<std::size_t>(y_red.rows()); }
    std::size_t bus_count() const { return bus_present.size(); }
    std::size_t present_bus_count() const;
};

struct MachineInit {
    Eigen::VectorXd e_mag;
    Eigen::VectorXd delta0;
    Eigen::VectorXd p_mech;
};

/// Throws SingularMatrixError if y11 cannot be inverted.
ExtendedAdmittance extend_network(const NetworkCase& network, const PowerFlowSolution& pf);

/// Deletes the row/column of `bus_id` from y11 and y12/y21 (node held at 0 V).
ExtendedAdmittance ground_bus(const ExtendedAdmittance& ext, int bus_id);

ReducedNetwork kron_reduce(const ExtendedAdmittance& ext);

/// Machine internal EMFs behind xd' and the mechanical power that makes the
/// pre-fault reduced network an equilibrium.
MachineInit machine_init(const NetworkCase& network, const PowerFlowSolution& pf);
MachineInit machine_init(const NetworkCase& network, const PowerFlowSolution& pf,
                         const ReducedNetwork& prefault);

/// Reciprocal condition estimate below which y11 and other dense systems are
/// treated as singular.
inline constexpr double kSingularRcond = 1e-14;

}  // namespace dse
