#include "dse/dynamics.hpp"

#include <cmath>
#include <array>
#include <numbers>
#include <queue>

#include <fmt/format.h>

#include "dse/errors.hpp"

namespace dse {

namespace {

constexpr double kEventTolerance = 1e-9;
constexpr double kMaxSpeedDeviation = 0.2;

bool same_line(const Branch& br, std::pair<int, int> line) {
    return (br.from == line.first && br.to == line.second) || (br.from == line.second && br.to == line.first);
}

// Throws if the machine buses do not share one connected component.
void check_machines_connected(const NetworkCase& network, std::pair<int, int> removed) {
    const auto n = network.bus_count();
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& br : network.branches) {
        const auto f = network.bus_index(br.from);
        const auto t = network.bus_index(br.to);
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    if (network.machines.empty()) return;
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> frontier;
    const auto start = network.bus_index(network.machines.front().bus);
    frontier.push(start);
    seen[start] = true;
    while (!frontier.empty()) {
        const auto b = frontier.front();
        frontier.pop();
        for (auto next : adj[b]) {
            if (!seen[next]) {
                seen[next] = true;
                frontier.push(next);
            }
        }
    }
    for (const auto& m : network.machines) {
        if (!seen[network.bus_index(m.bus)]) {
            throw ValidationError(fmt::format("clearing line {}-{} islands the machine at bus {}", removed.first,
                                              removed.second, m.bus));
        }
    }
}

Eigen::VectorXd swing_rhs(const Eigen::VectorXd& x, const MachineParams& params, const ReducedNetwork& net) {
    return swing_derivatives(DynamicState::from_stacked(x), params, net).stacked();
}

Eigen::VectorXd rk4_step(const Eigen::VectorXd& x, double h, const MachineParams& params, const ReducedNetwork& net) {
    const Eigen::VectorXd k1 = swing_rhs(x, params, net);
    const Eigen::VectorXd k2 = swing_rhs(x + 0.5 * h * k1, params, net);
    const Eigen::VectorXd k3 = swing_rhs(x + 0.5 * h * k2, params, net);
    const Eigen::VectorXd k4 = swing_rhs(x + h * k3, params, net);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Eigen::VectorXd DynamicState::stacked() const {
    Eigen::VectorXd x(delta.size() + omega.size());
    x << delta, omega;
    return x;
}

DynamicState DynamicState::from_stacked(const Eigen::VectorXd& x) {
    const auto n = x.size() / 2;
    return {x.head(n), x.tail(n)};
}

MachineParams MachineParams::from_case(const NetworkCase& network, const MachineInit& init) {
    const auto m = static_cast<Eigen::Index>(network.machine_count());
    MachineParams p;
    p.h.resize(m);
    p.d.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        p.h(k) = network.machines[static_cast<std::size_t>(k)].h;
        p.d(k) = network.machines[static_cast<std::size_t>(k)].d;
    }
    p.e_mag = init.e_mag;
    p.p_mech = init.p_mech;
    p.omega0 = 2.0 * std::numbers::pi * network.frequency;
    return p;
}

std::string_view to_string(Regime regime) {
    switch (regime) {
        case Regime::PreFault: return "pre";
        case Regime::FaultOn: return "fault";
        case Regime::PostFault: return "post";
    }
    return "?";
}

Regime FaultScenario::regime_at(double t, double frequency) const {
    if (t < t_fault - kEventTolerance) return Regime::PreFault;
    if (t < t_clear(frequency) - kEventTolerance) return Regime::FaultOn;
    return Regime::PostFault;
}

void validate(const FaultScenario& s, const NetworkCase& network) {
    if (!network.find_bus(s.fault_bus)) throw ValidationError(fmt::format("fault bus {} not in case", s.fault_bus));
    if (!(s.t_fault > 0.0)) throw ValidationError("fault time must be positive");
    if (!(s.t_end > 0.0)) throw ValidationError("end time must be positive");
    if (!(s.clearing_cycles > 0.0)) throw ValidationError("clearing cycles must be positive");
    if (!(s.dt > 0.0)) throw ValidationError("time step must be positive");
    bool found = false;
    for (const auto& br : network.branches) found = found || same_line(br, s.cleared_line);
    if (!found) {
        throw ValidationError(
            fmt::format("cleared line {}-{} not in case", s.cleared_line.first, s.cleared_line.second));
    }
}

const ReducedNetwork& ScenarioNetworks::at(Regime regime) const {
    switch (regime) {
        case Regime::PreFault: return pre_fault;
        case Regime::FaultOn: return fault_on;
        case Regime::PostFault: return post_fault;
    }
    return pre_fault;
}

Eigen::VectorXd electrical_power(const Eigen::VectorXd& delta, const Eigen::VectorXd& e_mag,
                                 const ReducedNetwork& net) {
    const auto n = delta.size();
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            p(i) += e_mag(i) * net.y_mag(i, j) * e_mag(j) * std::cos(delta(i) - delta(j) - net.y_ang(i, j));
        }
    }
    return p;
}

DynamicState swing_derivatives(const DynamicState& x, const MachineParams& params, const ReducedNetwork& net) {
    const Eigen::VectorXd pe = electrical_power(x.delta, params.e_mag, net);
    const Eigen::VectorXd slip = x.omega.array() - 1.0;
    DynamicState dx;
    dx.delta = params.omega0 * slip;
    dx.omega = ((params.p_mech - pe).array() - params.d.array() * slip.array()) / (2.0 * params.h.array());
    return dx;
}

DynamicState step_process(const DynamicState& x, const MachineParams& params, const ReducedNetwork& net, double dt,
                          const Eigen::VectorXd& w) {
    const DynamicState dx = swing_derivatives(x, params, net);
    DynamicState next{x.delta + dt * dx.delta, x.omega + dt * dx.omega};
    if (w.size()) {
        const auto n = x.delta.size();
        next.delta += w.head(n);
        next.omega += w.tail(n);
    }
    return next;
}

ScenarioNetworks scenario_networks(const NetworkCase& network, const PowerFlowSolution& pf,
                                   const FaultScenario& scenario) {
    validate(scenario, network);
    const auto intact = extend_network(network, pf);

    NetworkCase cleared = network;
    for (auto it = cleared.branches.begin(); it != cleared.branches.end(); ++it) {
        if (same_line(*it, scenario.cleared_line)) {
            cleared.branches.erase(it);
            break;
        }
    }
    check_machines_connected(cleared, scenario.cleared_line);

    return {kron_reduce(intact), kron_reduce(ground_bus(intact, scenario.fault_bus)),
            kron_reduce(extend_network(cleared, pf))};
}

DynamicState ScenarioModel::equilibrium() const {
    return {init.delta0, Eigen::VectorXd::Ones(init.delta0.size())};
}

ScenarioModel build_scenario_model(const NetworkCase& network, const PowerFlowSolution& pf,
                                   const FaultScenario& scenario) {
    ScenarioModel model;
    model.networks = scenario_networks(network, pf, scenario);
    model.init = machine_init(network, pf, model.networks.pre_fault);
    model.params = MachineParams::from_case(network, model.init);
    model.scenario = scenario;
    model.frequency = network.frequency;
    return model;
}

Trajectory simulate(const ScenarioModel& model, int substeps) {
    if (substeps < 1) throw ValidationError("substeps must be at least 1");
    const auto& sc = model.scenario;
    const double f = model.frequency;
    const std::array<double, 2> events{sc.t_fault, sc.t_clear(f)};
    const auto samples = static_cast<std::size_t>(std::floor(sc.t_end / sc.dt + 1e-9)) + 1;

    Trajectory traj;
    traj.times.reserve(samples);
    traj.states.reserve(samples);
    traj.regime.reserve(samples);

    Eigen::VectorXd x = model.equilibrium().stacked();
    const auto n = x.size() / 2;
    auto record = [&](double t) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(std::abs(x(n + i) - 1.0) <= kMaxSpeedDeviation)) {
                throw InstabilityError(fmt::format("machine {} lost synchronism at t = {:.4f} s (omega = {:.4f} p.u.)",
                                                   i + 1, t, x(n + i)));
            }
        }
        traj.times.push_back(t);
        traj.states.push_back(DynamicState::from_stacked(x));
        traj.regime.push_back(sc.regime_at(t, f));
    };

    auto advance = [&](double a, double b) {
        const auto& net = model.networks.at(sc.regime_at(0.5 * (a + b), f));
        x = rk4_step(x, b - a, model.params, net);
    };

    record(0.0);
    for (std::size_t k = 1; k < samples; ++k) {
        const double t0 = static_cast<double>(k - 1) * sc.dt;
        const double t1 = static_cast<double>(k) * sc.dt;
        for (int s = 0; s < substeps; ++s) {
            double a = t0 + (t1 - t0) * s / substeps;
            const double b = s + 1 == substeps ? t1 : t0 + (t1 - t0) * (s + 1) / substeps;
            for (double e : events) {
                if (e > a + kEventTolerance && e < b - kEventTolerance) {
                    advance(a, e);
                    a = e;
                }
            }
            advance(a, b);
        }
        record(t1);
    }
    return traj;
}

Trajectory simulate(const NetworkCase& network, const PowerFlowSolution& pf, const FaultScenario& scenario,
                    int substeps) {
    return simulate(build_scenario_model(network, pf, scenario), substeps);
}

}  // namespace dse
