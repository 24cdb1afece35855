#include <doctest.h>

#include "dse/errors.hpp"
#include "dse/powerflow.hpp"
#include "support.hpp"

namespace {

const char* kTwoBus =
    "case two\n"
    "bus 1 slack 0 0 1.0 0 0\n"
    "bus 2 pq 0 0 0 0 0\n"
    "branch 1 2 0 0.1 0 1\n";

}  // namespace

TEST_CASE("ybus of a single reactance") {
    const auto y = dse::build_ybus(oracle::from_text(kTwoBus));
    CHECK(std::abs(y(0, 0) - oracle::Complex(0, -10)) < 1e-12);
    CHECK(std::abs(y(0, 1) - oracle::Complex(0, 10)) < 1e-12);
    CHECK(std::abs(y(1, 0) - oracle::Complex(0, 10)) < 1e-12);
    CHECK(std::abs(y(1, 1) - oracle::Complex(0, -10)) < 1e-12);
}

TEST_CASE("isolated bus keeps only its shunt") {
    const auto c = oracle::from_text(std::string(kTwoBus) + "bus 3 pq 0 0 0 0.02 0.3\n");
    const auto y = dse::build_ybus(c);
    CHECK(std::abs(y(2, 2) - oracle::Complex(0.02, 0.3)) < 1e-15);
    CHECK(y.row(2).head(2).norm() == 0.0);
}

TEST_CASE("ybus matches incidence construction") {
    for (const char* name : {"wecc9", "ne39"}) {
        const auto c = oracle::load(name);
        const auto diff = (dse::build_ybus(c) - oracle::ybus_by_incidence(c)).cwiseAbs().maxCoeff();
        CHECK(diff < 1e-9);
    }
}

TEST_CASE("zero-injection fixed point") {
    const auto c = oracle::from_text(kTwoBus);
    const auto pf = dse::solve_power_flow(c);
    CHECK(pf.iterations == 1);
    CHECK(pf.v_mag(0) == 1.0);
    CHECK(pf.v_mag(1) == 1.0);
    CHECK(pf.v_ang.cwiseAbs().maxCoeff() == 0.0);
    const auto y = dse::build_ybus(c);
    CHECK(dse::mismatch(c, y, pf.v_mag, pf.v_ang).norm() == 0.0);
}

TEST_CASE("wecc9 matches the Gauss-Seidel oracle") {
    const auto c = oracle::load("wecc9");
    dse::PowerFlowOptions opts;
    opts.tol = 1e-6;
    const auto pf = dse::solve_power_flow(c, opts);
    CHECK(pf.iterations <= 10);
    CHECK(pf.max_mismatch < 1e-6);
    const auto gs = oracle::gauss_seidel(c);
    CHECK((pf.voltages() - gs.v).cwiseAbs().maxCoeff() < 1e-4);

    double p_load = 0.0;
    for (const auto& b : c.buses) p_load += b.p_load;
    CHECK(p_load == doctest::Approx(3.15).epsilon(1e-12));
    const double p_gen = dse::machine_power(c, pf).real().sum();
    // Losses from branch flows, independent of the injection bookkeeping.
    double losses = 0.0;
    for (const auto& br : c.branches) {
        const auto f = c.bus_index(br.from), t = c.bus_index(br.to);
        const auto vf = pf.voltage(f), vt = pf.voltage(t);
        losses += std::norm(vf - vt) * (1.0 / oracle::Complex(br.r, br.x)).real();
    }
    CHECK(p_gen - p_load >= 0.0);
    CHECK(p_gen - p_load == doctest::Approx(losses).epsilon(1e-6));
}

TEST_CASE("mismatch at flat start equals scheduled minus flat flows") {
    const auto c = oracle::load("wecc9");
    const auto y = dse::build_ybus(c);
    Eigen::VectorXd vm(9), va = Eigen::VectorXd::Zero(9);
    for (std::size_t i = 0; i < 9; ++i) {
        vm(static_cast<Eigen::Index>(i)) = c.buses[i].kind == dse::BusKind::PQ ? 1.0 : c.buses[i].v_setpoint;
    }
    const auto f = dse::mismatch(c, y, vm, va);
    const oracle::VectorXcd v = vm.cast<oracle::Complex>();
    const oracle::VectorXcd s = v.cwiseProduct((y * v).conjugate());
    // Non-slack P rows for buses 2..9, then Q rows for PQ buses 4..9.
    REQUIRE(f.size() == 8 + 6);
    for (int i = 1; i < 9; ++i) {
        double sched = -c.buses[static_cast<std::size_t>(i)].p_load;
        if (auto m = c.machine_at(c.buses[static_cast<std::size_t>(i)].id)) sched += c.machines[*m].p_gen;
        CHECK(f(i - 1) == doctest::Approx(sched - s(i).real()).epsilon(1e-12));
    }
    for (int i = 3; i < 9; ++i) {
        CHECK(f(8 + i - 3) == doctest::Approx(-c.buses[static_cast<std::size_t>(i)].q_load - s(i).imag()).epsilon(1e-12));
    }
    CHECK(f.norm() > 0.1);
}

TEST_CASE("mismatch jacobian matches finite differences") {
    const auto c = oracle::load("ne39");
    const auto y = dse::build_ybus(c);
    const auto pf = dse::solve_power_flow(c);
    const auto j = dse::mismatch_jacobian(c, y, pf.v_mag, pf.v_ang);
    std::vector<Eigen::Index> ang, mag;
    for (std::size_t i = 0; i < c.bus_count(); ++i) {
        if (c.buses[i].kind != dse::BusKind::Slack) ang.push_back(static_cast<Eigen::Index>(i));
        if (c.buses[i].kind == dse::BusKind::PQ) mag.push_back(static_cast<Eigen::Index>(i));
    }
    const double h = 1e-6;
    Eigen::MatrixXd fd(j.rows(), j.cols());
    for (std::size_t k = 0; k < ang.size() + mag.size(); ++k) {
        Eigen::VectorXd vm_p = pf.v_mag, vm_m = pf.v_mag, va_p = pf.v_ang, va_m = pf.v_ang;
        if (k < ang.size()) {
            va_p(ang[k]) += h;
            va_m(ang[k]) -= h;
        } else {
            vm_p(mag[k - ang.size()]) += h;
            vm_m(mag[k - ang.size()]) -= h;
        }
        fd.col(static_cast<Eigen::Index>(k)) =
            (dse::mismatch(c, y, vm_p, va_p) - dse::mismatch(c, y, vm_m, va_m)) / (2 * h);
    }
    CHECK(oracle::max_rel_diff(j, fd) < 1e-6);
}

TEST_CASE("non-convergence and singular jacobian") {
    const auto c = oracle::load("ne39");
    dse::PowerFlowOptions opts;
    opts.max_iter = 1;
    CHECK_THROWS_AS(dse::solve_power_flow(c, opts), dse::ConvergenceError);

    // A PQ bus hanging off nothing but a shunt has no angle sensitivity.
    const auto island = oracle::from_text(std::string(kTwoBus) + "bus 3 pq 0.1 0 0 0 0.1\n");
    CHECK_THROWS_AS(dse::solve_power_flow(island), dse::SingularMatrixError);
}

TEST_CASE("ne39 matches the Gauss-Seidel oracle") {
    const auto c = oracle::load("ne39");
    const auto pf = dse::solve_power_flow(c);
    CHECK(pf.iterations <= 10);
    const auto gs = oracle::gauss_seidel(c);
    CHECK((pf.voltages() - gs.v).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("machine power returns generation") {
    const auto c = oracle::load("wecc9");
    const auto pf = dse::solve_power_flow(c);
    const auto s = dse::machine_power(c, pf);
    CHECK(s(1).real() == doctest::Approx(1.63).epsilon(1e-9));
    CHECK(s(2).real() == doctest::Approx(0.85).epsilon(1e-9));
    CHECK(s(0).real() == doctest::Approx(0.716).epsilon(1e-3));
}
