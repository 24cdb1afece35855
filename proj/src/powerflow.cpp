#include "dse/powerflow.hpp"

#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "dse/errors.hpp"
#include "dse/reduction.hpp"

namespace dse {

namespace {

using Complex = std::complex<double>;

struct Schedule {
    Eigen::VectorXd p;
    Eigen::VectorXd q;
    std::vector<std::size_t> angle_buses;      // non-slack
    std::vector<std::size_t> magnitude_buses;  // PQ
};

Schedule make_schedule(const NetworkCase& network) {
    const auto n = network.bus_count();
    Schedule s;
    s.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    s.q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& bus = network.buses[i];
        const auto k = static_cast<Eigen::Index>(i);
        s.p(k) = -bus.p_load;
        s.q(k) = -bus.q_load;
        if (auto m = network.machine_at(bus.id)) {
            s.p(k) += network.machines[*m].p_gen;
            s.q(k) += network.machines[*m].q_gen;
        }
        if (bus.kind != BusKind::Slack) s.angle_buses.push_back(i);
        if (bus.kind == BusKind::PQ) s.magnitude_buses.push_back(i);
    }
    return s;
}

ComplexVector injections(const ComplexMatrix& ybus, const ComplexVector& v) {
    return v.cwiseProduct((ybus * v).conjugate());
}

ComplexVector polar(const Eigen::VectorXd& mag, const Eigen::VectorXd& ang) {
    ComplexVector v(mag.size());
    for (Eigen::Index i = 0; i < mag.size(); ++i) v(i) = std::polar(mag(i), ang(i));
    return v;
}

}  // namespace

ComplexVector PowerFlowSolution::voltages() const { return polar(v_mag, v_ang); }

ComplexMatrix build_ybus(const NetworkCase& network) {
    const auto n = static_cast<Eigen::Index>(network.bus_count());
    ComplexMatrix y = ComplexMatrix::Zero(n, n);
    for (const auto& br : network.branches) {
        const auto f = static_cast<Eigen::Index>(network.bus_index(br.from));
        const auto t = static_cast<Eigen::Index>(network.bus_index(br.to));
        const Complex ys = 1.0 / Complex(br.r, br.x);
        const Complex charging(0.0, br.b_shunt / 2.0);
        y(f, f) += (ys + charging) / (br.tap * br.tap);
        y(t, t) += ys + charging;
        y(f, t) -= ys / br.tap;
        y(t, f) -= ys / br.tap;
    }
    for (Eigen::Index i = 0; i < n; ++i) y(i, i) += network.buses[static_cast<std::size_t>(i)].shunt;
    return y;
}

Eigen::VectorXd mismatch(const NetworkCase& network, const ComplexMatrix& ybus, const Eigen::VectorXd& v_mag,
                         const Eigen::VectorXd& v_ang) {
    const auto sched = make_schedule(network);
    const ComplexVector s = injections(ybus, polar(v_mag, v_ang));
    const auto na = sched.angle_buses.size();
    Eigen::VectorXd out(static_cast<Eigen::Index>(na + sched.magnitude_buses.size()));
    for (std::size_t k = 0; k < na; ++k) {
        const auto i = static_cast<Eigen::Index>(sched.angle_buses[k]);
        out(static_cast<Eigen::Index>(k)) = sched.p(i) - s(i).real();
    }
    for (std::size_t k = 0; k < sched.magnitude_buses.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(sched.magnitude_buses[k]);
        out(static_cast<Eigen::Index>(na + k)) = sched.q(i) - s(i).imag();
    }
    return out;
}

Eigen::MatrixXd mismatch_jacobian(const NetworkCase& network, const ComplexMatrix& ybus,
                                  const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang) {
    const auto sched = make_schedule(network);
    const ComplexVector v = polar(v_mag, v_ang);
    const ComplexVector current = ybus * v;
    const ComplexVector v_unit = v.cwiseQuotient(v_mag.cast<Complex>());

    // dS/dtheta = j diag(V) conj(diag(I) - Y diag(V))
    // dS/d|V|   = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    ComplexMatrix ds_dang = -(ybus * v.asDiagonal());
    ds_dang.diagonal() += current;
    ds_dang = Complex(0.0, 1.0) * (v.asDiagonal() * ds_dang.conjugate());
    ComplexMatrix ds_dmag = v.asDiagonal() * (ybus * v_unit.asDiagonal()).conjugate();
    ds_dmag += current.conjugate().asDiagonal() * v_unit.asDiagonal().toDenseMatrix();

    const auto na = sched.angle_buses.size();
    const auto nm = sched.magnitude_buses.size();
    const auto dim = static_cast<Eigen::Index>(na + nm);
    Eigen::MatrixXd jac(dim, dim);
    auto col_of = [&](std::size_t c, auto&& angle_part, auto&& mag_part) {
        return c < na ? angle_part(sched.angle_buses[c]) : mag_part(sched.magnitude_buses[c - na]);
    };
    for (std::size_t r = 0; r < na + nm; ++r) {
        const bool p_row = r < na;
        const auto i = static_cast<Eigen::Index>(p_row ? sched.angle_buses[r] : sched.magnitude_buses[r - na]);
        for (std::size_t c = 0; c < na + nm; ++c) {
            const Complex d = col_of(
                c, [&](std::size_t j) { return ds_dang(i, static_cast<Eigen::Index>(j)); },
                [&](std::size_t j) { return ds_dmag(i, static_cast<Eigen::Index>(j)); });
            jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = -(p_row ? d.real() : d.imag());
        }
    }
    return jac;
}

PowerFlowSolution solve_power_flow(const NetworkCase& network, const PowerFlowOptions& options) {
    if (!(options.tol > 0.0)) throw ValidationError("power flow tolerance must be positive");
    const auto n = static_cast<Eigen::Index>(network.bus_count());
    const auto ybus = build_ybus(network);
    const auto sched = make_schedule(network);

    Eigen::VectorXd v_mag = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd v_ang = Eigen::VectorXd::Zero(n);
    if (options.initial_v_mag) v_mag = *options.initial_v_mag;
    if (options.initial_v_ang) v_ang = *options.initial_v_ang;
    if (v_mag.size() != n || v_ang.size() != n) throw ValidationError("initial voltage vectors have wrong length");
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bus = network.buses[static_cast<std::size_t>(i)];
        if (bus.kind != BusKind::PQ) v_mag(i) = bus.v_setpoint;
    }

    const auto na = sched.angle_buses.size();
    for (int iter = 1;; ++iter) {
        const Eigen::VectorXd f = mismatch(network, ybus, v_mag, v_ang);
        const double worst = f.size() ? f.lpNorm<Eigen::Infinity>() : 0.0;
        if (worst < options.tol) {
            PowerFlowSolution sol;
            sol.v_mag = v_mag;
            sol.v_ang = v_ang;
            const ComplexVector s = injections(ybus, polar(v_mag, v_ang));
            sol.p_inj = s.real();
            sol.q_inj = s.imag();
            sol.iterations = iter;
            sol.max_mismatch = worst;
            return sol;
        }
        if (iter > options.max_iter) {
            throw ConvergenceError(fmt::format("power flow did not converge in {} iterations (max mismatch {:.3e} p.u.)",
                                               options.max_iter, worst));
        }
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(mismatch_jacobian(network, ybus, v_mag, v_ang));
        const double rcond = lu.rcond();
        if (!(rcond > kSingularRcond)) {
            throw SingularMatrixError(
                fmt::format("power flow Jacobian singular at iteration {} (rcond {:.3e})", iter, rcond));
        }
        const Eigen::VectorXd step = -lu.solve(f);
        for (std::size_t k = 0; k < na; ++k) v_ang(static_cast<Eigen::Index>(sched.angle_buses[k])) += step(static_cast<Eigen::Index>(k));
        for (std::size_t k = 0; k < sched.magnitude_buses.size(); ++k) {
            v_mag(static_cast<Eigen::Index>(sched.magnitude_buses[k])) += step(static_cast<Eigen::Index>(na + k));
        }
    }
}

ComplexVector machine_power(const NetworkCase& network, const PowerFlowSolution& pf) {
    ComplexVector s(static_cast<Eigen::Index>(network.machine_count()));
    for (std::size_t m = 0; m < network.machine_count(); ++m) {
        const auto b = network.bus_index(network.machines[m].bus);
        const auto k = static_cast<Eigen::Index>(b);
        s(static_cast<Eigen::Index>(m)) =
            Complex(pf.p_inj(k) + network.buses[b].p_load, pf.q_inj(k) + network.buses[b].q_load);
    }
    return s;
}

}  // namespace dse
