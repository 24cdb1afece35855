// Independent reference computations used by the unit and acceptance tests.
#pragma once

#include <chrono>
#include <cmath>
#include <complex>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "dse/cases.hpp"
#include "dse/dynamics.hpp"
#include "dse/powerflow.hpp"
#include "dse/reduction.hpp"

namespace oracle {

using Complex = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline dse::NetworkCase load(const std::string& name) { return dse::load_case(dse::resolve_case_path(name)); }

inline dse::NetworkCase from_text(const std::string& text) {
    std::istringstream in(text);
    return dse::parse_case(in, "test");
}

// Ybus = A^T diag(y_series) A plus per-end charging, with the tap folded into
// the incidence row as (1/t, -1).
inline MatrixXcd ybus_by_incidence(const dse::NetworkCase& c) {
    const auto nb = static_cast<Eigen::Index>(c.buses.size());
    const auto nl = static_cast<Eigen::Index>(c.branches.size());
    MatrixXcd a = MatrixXcd::Zero(nl, nb);
    VectorXcd y(nl);
    MatrixXcd y_bus = MatrixXcd::Zero(nb, nb);
    for (Eigen::Index l = 0; l < nl; ++l) {
        const auto& br = c.branches[static_cast<std::size_t>(l)];
        const auto f = static_cast<Eigen::Index>(c.bus_index(br.from));
        const auto t = static_cast<Eigen::Index>(c.bus_index(br.to));
        a(l, f) = 1.0 / br.tap;
        a(l, t) = -1.0;
        y(l) = 1.0 / Complex(br.r, br.x);
        const Complex half(0.0, br.b_shunt / 2.0);
        y_bus(f, f) += half / (br.tap * br.tap);
        y_bus(t, t) += half;
    }
    y_bus += a.transpose() * y.asDiagonal() * a;
    for (Eigen::Index b = 0; b < nb; ++b) y_bus(b, b) += c.buses[static_cast<std::size_t>(b)].shunt;
    return y_bus;
}

struct GaussSeidelResult {
    VectorXcd v;
    int sweeps = 0;
};

// Classic Gauss-Seidel with PV reactive update and magnitude reset.
inline GaussSeidelResult gauss_seidel(const dse::NetworkCase& c, double tol = 1e-10, int max_sweeps = 200000) {
    const MatrixXcd y = ybus_by_incidence(c);
    const auto n = y.rows();
    VectorXd p(n), q(n);
    VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bus = c.buses[static_cast<std::size_t>(i)];
        p(i) = -bus.p_load;
        q(i) = -bus.q_load;
        v(i) = bus.kind == dse::BusKind::PQ ? 1.0 : bus.v_setpoint;
    }
    for (const auto& m : c.machines) {
        const auto i = static_cast<Eigen::Index>(c.bus_index(m.bus));
        p(i) += m.p_gen;
        q(i) += m.q_gen;
    }
    GaussSeidelResult out;
    for (out.sweeps = 1; out.sweeps <= max_sweeps; ++out.sweeps) {
        double change = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto kind = c.buses[static_cast<std::size_t>(i)].kind;
            if (kind == dse::BusKind::Slack) continue;
            Complex sum = 0.0;
            for (Eigen::Index k = 0; k < n; ++k) {
                if (k != i) sum += y(i, k) * v(k);
            }
            double qi = q(i);
            if (kind == dse::BusKind::PV) qi = -std::imag(std::conj(v(i)) * (sum + y(i, i) * v(i)));
            Complex next = (Complex(p(i), -qi) / std::conj(v(i)) - sum) / y(i, i);
            if (kind == dse::BusKind::PV) next = std::polar(std::abs(v(i)), std::arg(next));
            change = std::max(change, std::abs(next - v(i)));
            v(i) = next;
        }
        if (change < tol) break;
    }
    out.v = v;
    return out;
}

// Machine currents from the unreduced extended system: solve y11 V = -y12 E,
// then I = y21 V + y22 E.
inline VectorXcd currents_full(const dse::ExtendedAdmittance& ext, const VectorXcd& e) {
    const VectorXcd v = ext.y11.fullPivLu().solve(-ext.y12 * e);
    return ext.y21 * v + ext.y22 * e;
}

inline VectorXcd random_phasors(std::mt19937_64& rng, Eigen::Index n) {
    std::uniform_real_distribution<double> mag(0.8, 1.2);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    VectorXcd e(n);
    for (Eigen::Index i = 0; i < n; ++i) e(i) = std::polar(mag(rng), ang(rng));
    return e;
}

// Textbook linear Kalman filter, coded without any library helpers.
struct LinearKalman {
    MatrixXd f, h, q, r;
    VectorXd x;
    MatrixXd p;

    void predict() {
        x = f * x;
        p = f * p * f.transpose() + q;
    }
    void update(const VectorXd& z) {
        const MatrixXd s = h * p * h.transpose() + r;
        const MatrixXd k = p * h.transpose() * s.inverse();
        x = x + k * (z - h * x);
        const MatrixXd i_kh = MatrixXd::Identity(p.rows(), p.cols()) - k * h;
        p = i_kh * p * i_kh.transpose() + k * r * k.transpose();
    }
};

inline double max_rel_diff(const MatrixXd& a, const MatrixXd& b) {
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

template <typename Fn>
double time_seconds(Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace oracle
