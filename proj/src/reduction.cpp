#include "dse/reduction.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "dse/dynamics.hpp"
#include "dse/errors.hpp"

namespace dse {

namespace {

using Complex = std::complex<double>;

Eigen::PartialPivLU<ComplexMatrix> factor_y11(const ComplexMatrix& y11, std::string_view what) {
    Eigen::PartialPivLU<ComplexMatrix> lu(y11);
    const double rcond = y11.size() ? lu.rcond() : 1.0;
    if (!(rcond > kSingularRcond)) {
        throw SingularMatrixError(fmt::format("{}: y11 is singular (reciprocal condition estimate {:.3e})", what, rcond));
    }
    return lu;
}

}  // namespace

std::size_t ReducedNetwork::present_bus_count() const {
    return static_cast<std::size_t>(std::count(bus_present.begin(), bus_present.end(), true));
}

ExtendedAdmittance extend_network(const NetworkCase& network, const PowerFlowSolution& pf) {
    const auto n = static_cast<Eigen::Index>(network.bus_count());
    const auto m = static_cast<Eigen::Index>(network.machine_count());
    if (pf.v_mag.size() != n) throw ValidationError("power-flow solution does not match the case bus count");

    ExtendedAdmittance ext;
    ext.y11 = build_ybus(network);
    ext.y12 = ComplexMatrix::Zero(n, m);
    ext.y22 = ComplexMatrix::Zero(m, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bus = network.buses[static_cast<std::size_t>(i)];
        const double v2 = pf.v_mag(i) * pf.v_mag(i);
        ext.y11(i, i) += Complex(bus.p_load, -bus.q_load) / v2;
        ext.all_bus_ids.push_back(bus.id);
        ext.bus_rows.push_back(static_cast<std::size_t>(i));
    }
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& machine = network.machines[static_cast<std::size_t>(k)];
        const auto b = static_cast<Eigen::Index>(network.bus_index(machine.bus));
        const Complex y = 1.0 / Complex(0.0, machine.xd_prime);
        ext.y11(b, b) += y;
        ext.y12(b, k) = -y;
        ext.y22(k, k) = y;
        ext.machine_order.push_back(static_cast<std::size_t>(k));
    }
    ext.y21 = ext.y12.transpose();
    factor_y11(ext.y11, fmt::format("extended network of case '{}'", network.name));
    return ext;
}

ExtendedAdmittance ground_bus(const ExtendedAdmittance& ext, int bus_id) {
    const auto it = std::find(ext.all_bus_ids.begin(), ext.all_bus_ids.end(), bus_id);
    if (it == ext.all_bus_ids.end()) throw ValidationError(fmt::format("cannot ground unknown bus {}", bus_id));
    const auto bus_index = static_cast<std::size_t>(it - ext.all_bus_ids.begin());
    const auto row_it = std::find(ext.bus_rows.begin(), ext.bus_rows.end(), bus_index);
    if (row_it == ext.bus_rows.end()) throw ValidationError(fmt::format("bus {} is already grounded", bus_id));
    const auto drop = static_cast<Eigen::Index>(row_it - ext.bus_rows.begin());

    const auto n = ext.y11.rows();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i != drop) keep.push_back(i);
    }
    ExtendedAdmittance out = ext;
    out.y11 = ext.y11(keep, keep);
    out.y12 = ext.y12(keep, Eigen::placeholders::all);
    out.y21 = ext.y21(Eigen::placeholders::all, keep);
    out.bus_rows.erase(out.bus_rows.begin() + drop);
    return out;
}

ReducedNetwork kron_reduce(const ExtendedAdmittance& ext) {
    const auto m = ext.y22.rows();
    ReducedNetwork net;
    const auto lu = factor_y11(ext.y11, "Kron reduction");
    const ComplexMatrix x = ext.y11.size() ? ComplexMatrix(lu.solve(ext.y12)) : ComplexMatrix(0, m);
    net.y_red = ext.y22 - ext.y21 * x;
    net.y_mag = net.y_red.cwiseAbs();
    net.y_ang = net.y_red.unaryExpr([](const Complex& c) { return std::arg(c); }).real();

    const auto total = static_cast<Eigen::Index>(ext.all_bus_ids.size());
    net.r_v = ComplexMatrix::Zero(total, m);
    net.bus_present.assign(ext.all_bus_ids.size(), false);
    net.bus_ids = ext.all_bus_ids;
    for (std::size_t r = 0; r < ext.bus_rows.size(); ++r) {
        net.r_v.row(static_cast<Eigen::Index>(ext.bus_rows[r])) = -x.row(static_cast<Eigen::Index>(r));
        net.bus_present[ext.bus_rows[r]] = true;
    }
    return net;
}

MachineInit machine_init(const NetworkCase& network, const PowerFlowSolution& pf) {
    return machine_init(network, pf, kron_reduce(extend_network(network, pf)));
}

MachineInit machine_init(const NetworkCase& network, const PowerFlowSolution& pf, const ReducedNetwork& prefault) {
    const auto m = static_cast<Eigen::Index>(network.machine_count());
    const ComplexVector s = machine_power(network, pf);
    MachineInit init;
    init.e_mag.resize(m);
    init.delta0.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& machine = network.machines[static_cast<std::size_t>(k)];
        const Complex v = pf.voltage(network.bus_index(machine.bus));
        if (std::abs(v) == 0.0) {
            throw ValidationError(fmt::format("machine at bus {} has zero terminal voltage", machine.bus));
        }
        const Complex current = std::conj(s(k) / v);
        const Complex e = v + Complex(0.0, machine.xd_prime) * current;
        init.e_mag(k) = std::abs(e);
        init.delta0(k) = std::arg(e);
    }
    init.p_mech = electrical_power(init.delta0, init.e_mag, prefault);
    return init;
}

}  // namespace dse
