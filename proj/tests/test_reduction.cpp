#include <doctest.h>

#include <random>

#include "dse/errors.hpp"
#include "dse/reduction.hpp"
#include "support.hpp"

namespace {

const char* kSingleMachine =
    "case single\n"
    "bus 1 slack 1 0 1.0 0 0\n"
    "machine 1 5 0 0.1 1 0\n";

dse::ExtendedAdmittance scalar_blocks(oracle::Complex y11, oracle::Complex y12, oracle::Complex y22) {
    dse::ExtendedAdmittance ext;
    ext.y11 = oracle::MatrixXcd::Constant(1, 1, y11);
    ext.y12 = oracle::MatrixXcd::Constant(1, 1, y12);
    ext.y21 = ext.y12;
    ext.y22 = oracle::MatrixXcd::Constant(1, 1, y22);
    ext.all_bus_ids = {1};
    ext.bus_rows = {0};
    ext.machine_order = {0};
    return ext;
}

}  // namespace

TEST_CASE("extended admittance of one machine on a loaded bus") {
    const auto c = oracle::from_text(kSingleMachine);
    const auto pf = dse::solve_power_flow(c);
    const auto ext = dse::extend_network(c, pf);
    CHECK(std::abs(ext.y11(0, 0) - oracle::Complex(1, -10)) < 1e-12);
    CHECK(std::abs(ext.y12(0, 0) - oracle::Complex(0, 10)) < 1e-12);
    CHECK(std::abs(ext.y21(0, 0) - oracle::Complex(0, 10)) < 1e-12);
    CHECK(std::abs(ext.y22(0, 0) - oracle::Complex(0, -10)) < 1e-12);
}

TEST_CASE("machine-free case") {
    const auto c = oracle::from_text("case bare\nbus 1 slack 0.5 0.1 1 0 0\nbus 2 pq 0.2 0 0 0 0\nbranch 1 2 0 0.1 0 1\n");
    const auto pf = dse::solve_power_flow(c);
    const auto ext = dse::extend_network(c, pf);
    CHECK(ext.y12.cols() == 0);
    CHECK(ext.y22.size() == 0);
    oracle::MatrixXcd expected = dse::build_ybus(c);
    for (Eigen::Index i = 0; i < 2; ++i) {
        const auto& b = c.buses[static_cast<std::size_t>(i)];
        expected(i, i) += oracle::Complex(b.p_load, -b.q_load) / (pf.v_mag(i) * pf.v_mag(i));
    }
    CHECK((ext.y11 - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("wecc9 extended system is consistent with the power flow") {
    const auto c = oracle::load("wecc9");
    const auto pf = dse::solve_power_flow(c);
    const auto ext = dse::extend_network(c, pf);
    CHECK(ext.y11.rows() == 9);
    CHECK(ext.y12.cols() == 3);
    CHECK(ext.y22.rows() == 3);
    const auto init = dse::machine_init(c, pf);
    oracle::VectorXcd e(3);
    for (Eigen::Index k = 0; k < 3; ++k) e(k) = std::polar(init.e_mag(k), init.delta0(k));
    const oracle::VectorXcd residual = ext.y11 * pf.voltages() + ext.y12 * e;
    CHECK(residual.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("scalar Kron reduction") {
    const auto net = dse::kron_reduce(scalar_blocks(2.0, -1.0, 1.0));
    CHECK(std::abs(net.y_red(0, 0) - 0.5) < 1e-15);
    CHECK(std::abs(net.r_v(0, 0) - 0.5) < 1e-15);

    const auto decoupled = dse::kron_reduce(scalar_blocks(2.0, 0.0, 3.0));
    CHECK(decoupled.y_red(0, 0) == oracle::Complex(3.0));
    CHECK(decoupled.r_v(0, 0) == oracle::Complex(0.0));
}

TEST_CASE("singular y11 is reported") {
    CHECK_THROWS_AS(dse::kron_reduce(scalar_blocks(0.0, -1.0, 1.0)), dse::SingularMatrixError);
}

TEST_CASE("reduced currents match the full extended solve") {
    std::mt19937_64 rng(7);
    for (const char* name : {"wecc9", "ne39"}) {
        const auto c = oracle::load(name);
        const auto pf = dse::solve_power_flow(c);
        const auto ext = dse::extend_network(c, pf);
        const auto net = dse::kron_reduce(ext);
        for (int trial = 0; trial < 100; ++trial) {
            const auto e = oracle::random_phasors(rng, net.y_red.rows());
            CHECK((net.y_red * e - oracle::currents_full(ext, e)).cwiseAbs().maxCoeff() < 1e-9);
            CHECK((ext.y11 * net.r_v * e + ext.y12 * e).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("grounding a bus removes it") {
    const auto c = oracle::load("wecc9");
    const auto pf = dse::solve_power_flow(c);
    const auto ext = dse::ground_bus(dse::extend_network(c, pf), 8);
    CHECK(ext.y11.rows() == 8);
    const auto net = dse::kron_reduce(ext);
    CHECK(net.bus_count() == 9);
    CHECK(net.present_bus_count() == 8);
    CHECK_FALSE(net.bus_present[7]);
    CHECK(net.r_v.row(7).norm() == 0.0);
    CHECK_THROWS_AS(dse::ground_bus(ext, 8), dse::ValidationError);
    CHECK_THROWS_AS(dse::ground_bus(ext, 42), dse::ValidationError);
}

TEST_CASE("machine initial conditions") {
    const auto c = oracle::from_text(kSingleMachine);
    const auto pf = dse::solve_power_flow(c);
    const auto init = dse::machine_init(c, pf);
    CHECK(init.e_mag(0) == doctest::Approx(std::sqrt(1.01)).epsilon(1e-12));
    CHECK(init.e_mag(0) == doctest::Approx(1.00499).epsilon(1e-5));
    CHECK(init.delta0(0) == doctest::Approx(std::atan(0.1)).epsilon(1e-12));
    CHECK(init.delta0(0) == doctest::Approx(0.0997).epsilon(1e-3));

    const auto idle = oracle::from_text(
        "case idle\nbus 1 slack 0 0 1.0 0 0\nbus 2 pv 0 0 1.02 0 0\nbranch 1 2 0 0.1 0 1\n"
        "machine 1 5 0 0.1 0 0\nmachine 2 5 0 0.2 0 0\n");
    const auto pf2 = dse::solve_power_flow(idle);
    const auto init2 = dse::machine_init(idle, pf2);
    // With P = 0 the machine current is in quadrature, so E stays in phase with V.
    CHECK(std::abs(init2.delta0(0) - pf2.v_ang(0)) < 1e-9);
    CHECK(std::abs(init2.delta0(1) - pf2.v_ang(1)) < 1e-9);

    const auto none = oracle::from_text("case none\nbus 1 slack 0 0 1.0 0 0\nmachine 1 5 0 0.1 0 0\n");
    const auto init3 = dse::machine_init(none, dse::solve_power_flow(none));
    CHECK(init3.e_mag(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(init3.delta0(0)) < 1e-15);
}

TEST_CASE("equilibrium by construction") {
    for (const char* name : {"wecc9", "ne39"}) {
        const auto c = oracle::load(name);
        const auto pf = dse::solve_power_flow(c);
        const auto net = dse::kron_reduce(dse::extend_network(c, pf));
        const auto init = dse::machine_init(c, pf, net);
        const auto s = dse::machine_power(c, pf);
        CHECK((init.p_mech - s.real()).cwiseAbs().maxCoeff() < 1e-9);
    }
}
