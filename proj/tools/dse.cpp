// Command-line front end: run experiments, power flow, simulation, reduction.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "dse/cases.hpp"
#include "dse/dynamics.hpp"
#include "dse/errors.hpp"
#include "dse/harness.hpp"
#include "dse/powerflow.hpp"
#include "dse/reduction.hpp"

namespace {

std::pair<int, int> parse_line(const std::string& text) {
    const auto dash = text.find('-');
    if (dash == std::string::npos) throw dse::ValidationError(fmt::format("line '{}' must look like 8-9", text));
    return {std::stoi(text.substr(0, dash)), std::stoi(text.substr(dash + 1))};
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dse::Error(fmt::format("cannot write '{}'", path.string()));
    return out;
}

int cmd_run(const std::string& target, std::optional<std::uint64_t> seed, std::optional<std::string> out_dir) {
    auto cfg = dse::is_preset(target) ? dse::preset_config(target) : dse::load_experiment_config(target);
    if (seed) cfg.noise.seed = *seed;
    if (out_dir) cfg.output_dir = *out_dir;
    const auto report = dse::run_experiment(cfg);
    dse::write_report(std::cout, report);
    std::cout << '\n';
    for (const auto& f : report.filters) fmt::print("{} time: {:.3f} s\n", dse::to_string(f.kind), f.seconds);
    fmt::print("total time: {:.3f} s\noutputs in {}\n", report.seconds, cfg.output_dir.string());
    return 0;
}

int cmd_powerflow(const std::string& case_name, double tol, int max_iter, std::optional<std::string> csv) {
    const auto network = dse::load_case(dse::resolve_case_path(case_name));
    dse::PowerFlowOptions opts;
    opts.tol = tol;
    opts.max_iter = max_iter;
    const auto pf = dse::solve_power_flow(network, opts);
    fmt::print("{}: converged in {} iterations, max mismatch {:.3e}\n", network.name, pf.iterations, pf.max_mismatch);
    if (csv) {
        auto out = open_out(*csv);
        dse::write_powerflow_csv(out, network, pf);
    } else {
        dse::write_powerflow_csv(std::cout, network, pf);
    }
    return 0;
}

int cmd_simulate(const std::string& case_name, const dse::FaultScenario& scenario, int substeps,
                 std::optional<std::string> out_path) {
    const auto network = dse::load_case(dse::resolve_case_path(case_name));
    const auto pf = dse::solve_power_flow(network);
    const auto traj = dse::simulate(network, pf, scenario, substeps);
    if (out_path) {
        auto out = open_out(*out_path);
        dse::write_trajectory_csv(out, traj);
    } else {
        dse::write_trajectory_csv(std::cout, traj);
    }
    return 0;
}

int cmd_reduce(const std::string& case_name, std::optional<std::string> out_path) {
    const auto network = dse::load_case(dse::resolve_case_path(case_name));
    const auto pf = dse::solve_power_flow(network);
    const auto net = dse::kron_reduce(dse::extend_network(network, pf));
    if (out_path) {
        auto out = open_out(*out_path);
        dse::write_reduction_csv(out, net);
    } else {
        dse::write_reduction_csv(std::cout, net);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic state estimation of multi-machine power systems"};
    app.require_subcommand(1);

    std::string run_target;
    std::optional<std::uint64_t> run_seed;
    std::optional<std::string> run_out;
    auto* run = app.add_subcommand("run", "Run a full experiment from a config file or preset");
    run->add_option("config", run_target, "Config file, or preset wecc9-fault8 / ne39-fault4")->required();
    run->add_option("--seed", run_seed, "Override the noise seed");
    run->add_option("--out", run_out, "Override the output directory");

    std::string pf_case;
    double pf_tol = 1e-8;
    int pf_iter = 20;
    std::optional<std::string> pf_csv;
    auto* pf = app.add_subcommand("powerflow", "Solve the AC power flow of a case");
    pf->add_option("case", pf_case, "Case file or built-in name (wecc9, ne39)")->required();
    pf->add_option("--tol", pf_tol, "Mismatch tolerance (p.u.)")->capture_default_str();
    pf->add_option("--max-iter", pf_iter, "Iteration limit")->capture_default_str();
    pf->add_option("--csv", pf_csv, "Write bus results to this file");

    std::string sim_case;
    dse::FaultScenario scenario;
    std::string sim_line;
    int sim_substeps = 10;
    std::optional<std::string> sim_out;
    auto* sim = app.add_subcommand("simulate", "Simulate a three-phase fault and line trip");
    sim->add_option("case", sim_case, "Case file or built-in name")->required();
    sim->add_option("--fault-bus", scenario.fault_bus, "Faulted bus id")->required();
    sim->add_option("--clear-line", sim_line, "Line tripped at clearing, e.g. 8-9")->required();
    sim->add_option("--t-fault", scenario.t_fault, "Fault time (s)")->capture_default_str();
    sim->add_option("--cycles", scenario.clearing_cycles, "Clearing time in cycles")->capture_default_str();
    sim->add_option("--t-end", scenario.t_end, "End time (s)")->capture_default_str();
    sim->add_option("--dt", scenario.dt, "Output step (s)")->capture_default_str();
    sim->add_option("--substeps", sim_substeps, "RK4 substeps per output step")->capture_default_str();
    sim->add_option("--out", sim_out, "Write the trajectory CSV here");

    std::string red_case;
    std::optional<std::string> red_out;
    auto* red = app.add_subcommand("reduce", "Print the pre-fault reduced network");
    red->add_option("case", red_case, "Case file or built-in name")->required();
    red->add_option("--out", red_out, "Write the CSV here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(run_target, run_seed, run_out);
        if (*pf) return cmd_powerflow(pf_case, pf_tol, pf_iter, pf_csv);
        if (*sim) {
            scenario.cleared_line = parse_line(sim_line);
            return cmd_simulate(sim_case, scenario, sim_substeps, sim_out);
        }
        if (*red) return cmd_reduce(red_case, red_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
