#include <doctest.h>

#include <sstream>

#include "dse/cases.hpp"
#include "dse/errors.hpp"
#include "support.hpp"

TEST_CASE("bundled wecc9 case") {
    const auto c = oracle::load("wecc9");
    CHECK(c.bus_count() == 9);
    CHECK(c.machine_count() == 3);
    CHECK(c.branches.size() == 9);
    CHECK(c.machines[0].h == 23.64);
    CHECK(c.machines[1].h == 6.4);
    CHECK(c.machines[2].h == 3.01);
    CHECK(c.buses[c.slack_index()].id == 1);
}

TEST_CASE("bundled ne39 case") {
    const auto c = oracle::load("ne39");
    CHECK(c.bus_count() == 39);
    CHECK(c.machine_count() == 10);
    CHECK(c.machines[0].h == 500.0);
    CHECK(c.machines[0].xd_prime == 0.006);
    for (const auto& m : c.machines) CHECK(m.d == 0.0);
}

TEST_CASE("total load") {
    const auto w = dse::total_load(oracle::load("wecc9"));
    CHECK(w.mw == doctest::Approx(315.0).epsilon(1e-12));
    CHECK(w.mvar == doctest::Approx(115.0).epsilon(1e-12));

    // The published per-bus data sum to 6254.23 MW; the headline figure is rounded.
    const auto n = dse::total_load(oracle::load("ne39"));
    CHECK(std::abs(n.mw - 6254.2) < 0.05);
    CHECK(n.mvar == doctest::Approx(1387.1).epsilon(1e-12));

    const auto empty = oracle::from_text("case z\nbus 1 slack 0 0 1 0 0\nbus 2 pq 0 0 0 0 0\nbranch 1 2 0 0.1 0 1\n");
    const auto e = dse::total_load(empty);
    CHECK(e.mw == 0.0);
    CHECK(e.mvar == 0.0);
}

TEST_CASE("two slack buses are rejected with both ids") {
    const std::string text =
        "case bad\nbus 3 slack 0 0 1 0 0\nbus 7 slack 0 0 1 0 0\nbranch 3 7 0 0.1 0 1\n";
    try {
        oracle::from_text(text);
        FAIL("expected a validation error");
    } catch (const dse::ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find('3') != std::string::npos);
        CHECK(msg.find('7') != std::string::npos);
    }
}

TEST_CASE("malformed records") {
    CHECK_THROWS_AS(oracle::from_text("bus 1 slack 0 0\n"), dse::ParseError);
    CHECK_THROWS_AS(oracle::from_text("bus 1 swing 0 0 1 0 0\n"), dse::ParseError);
    CHECK_THROWS_AS(oracle::from_text("gadget 1 2\n"), dse::ParseError);
    CHECK_THROWS_AS(oracle::from_text("case z\nbus 1 slack 0 0 1 0 0\nbranch 1 5 0 0.1 0 1\n"),
                    dse::ValidationError);
    CHECK_THROWS_AS(oracle::from_text("case z\nbus 1 slack 0 0 1 0 0\nbus 2 pq 0 0 0 0 0\n"
                                      "branch 1 2 0 0.1 0 1\nmachine 2 -1 0 0.1 0 0\n"),
                    dse::ValidationError);
    CHECK_THROWS_AS(dse::load_case("/nonexistent/case.file"), dse::Error);
}

TEST_CASE("write then parse round-trips exactly") {
    for (const char* name : {"wecc9", "ne39"}) {
        const auto c = oracle::load(name);
        std::ostringstream out;
        dse::write_case(out, c);
        CHECK(oracle::from_text(out.str()) == c);
    }
}
