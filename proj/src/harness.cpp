#include "dse/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "dse/errors.hpp"
#include "dse/powerflow.hpp"

namespace dse {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Clock = std::chrono::steady_clock;

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs `fn`, rethrowing any failure as dse::Error tagged with `stage`.
template <typename Fn>
auto staged(std::string_view stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw Error(fmt::format("[{}] {}", stage, e.what()));
    }
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out << contents;
}

template <typename Fn>
std::string render(Fn&& fn) {
    std::ostringstream out;
    fn(out);
    return out.str();
}

std::vector<std::size_t> window(const Trajectory& truth, const Trajectory& estimate, double t_from) {
    if (truth.size() != estimate.size()) {
        throw ValidationError(
            fmt::format("trajectory lengths differ ({} vs {})", truth.size(), estimate.size()));
    }
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (std::abs(truth.times[k] - estimate.times[k]) > 1e-9) {
            throw ValidationError(fmt::format("trajectories misaligned at sample {}", k));
        }
        if (truth.times[k] >= t_from) idx.push_back(k);
    }
    return idx;
}

std::string filter_list(const std::vector<FilterKind>& kinds) {
    std::vector<std::string_view> names;
    for (auto k : kinds) names.push_back(to_string(k));
    return fmt::format("{}", fmt::join(names, ","));
}

}  // namespace

std::string format_number(double value) { return fmt::format("{}", value); }

bool is_preset(std::string_view name) { return name == "wecc9-fault8" || name == "ne39-fault4"; }

ExperimentConfig preset_config(std::string_view name) {
    ExperimentConfig cfg;
    if (name == "wecc9-fault8") {
        cfg.case_path = resolve_case_path("wecc9");
        cfg.scenario.fault_bus = 8;
        cfg.scenario.cleared_line = {8, 9};
    } else if (name == "ne39-fault4") {
        cfg.case_path = resolve_case_path("ne39");
        cfg.scenario.fault_bus = 4;
        cfg.scenario.cleared_line = {4, 14};
    } else {
        throw ValidationError(fmt::format("unknown preset '{}'", name));
    }
    cfg.scenario.t_fault = 1.0;
    cfg.scenario.clearing_cycles = 2.0;
    cfg.scenario.t_end = 10.0;
    cfg.scenario.dt = 0.01;
    cfg.output_dir = std::filesystem::path("out") / std::string(name);
    return cfg;
}

ExperimentConfig parse_experiment_config(std::istream& in, std::string_view source) {
    ExperimentConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = fmt::format("{}:{}", source, line_no);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(fmt::format("{}: expected 'key = value'", where));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        auto real = [&] {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(value, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != value.size()) throw ParseError(fmt::format("{}: '{}' is not a number", where, value));
            return v;
        };
        auto integer = [&] {
            const double v = real();
            if (v != std::floor(v)) throw ParseError(fmt::format("{}: '{}' is not an integer", where, value));
            return static_cast<long long>(v);
        };

        if (key == "preset") {
            const auto keep_out = cfg.output_dir;
            cfg = preset_config(value);
            if (keep_out != ExperimentConfig{}.output_dir) cfg.output_dir = keep_out;
        } else if (key == "case") {
            cfg.case_path = resolve_case_path(value);
        } else if (key == "fault_bus") {
            cfg.scenario.fault_bus = static_cast<int>(integer());
        } else if (key == "t_fault") {
            cfg.scenario.t_fault = real();
        } else if (key == "clearing_cycles") {
            cfg.scenario.clearing_cycles = real();
        } else if (key == "cleared_line") {
            int a = 0;
            int b = 0;
            char sep = 0;
            std::istringstream ls(value);
            if (!(ls >> a >> sep >> b) || sep != '-') {
                throw ParseError(fmt::format("{}: cleared_line must look like '8-9'", where));
            }
            cfg.scenario.cleared_line = {a, b};
        } else if (key == "t_end") {
            cfg.scenario.t_end = real();
        } else if (key == "dt") {
            cfg.scenario.dt = real();
        } else if (key == "sigma_p") {
            cfg.noise.sigma_p = real();
        } else if (key == "sigma_q") {
            cfg.noise.sigma_q = real();
        } else if (key == "sigma_vmag") {
            cfg.noise.sigma_vmag = real();
        } else if (key == "sigma_vang") {
            cfg.noise.sigma_vang = real();
        } else if (key == "q_delta") {
            cfg.noise.q_delta = real();
        } else if (key == "q_omega") {
            cfg.noise.q_omega = real();
        } else if (key == "seed") {
            cfg.noise.seed = static_cast<std::uint64_t>(integer());
        } else if (key == "filters") {
            cfg.filters.clear();
            std::istringstream ls(value);
            for (std::string item; std::getline(ls, item, ',');) {
                item = trim(item);
                if (item == "ekf") cfg.filters.push_back(FilterKind::EKF);
                else if (item == "ukf") cfg.filters.push_back(FilterKind::UKF);
                else throw ParseError(fmt::format("{}: unknown filter '{}'", where, item));
            }
        } else if (key == "jacobian") {
            if (value == "analytic") cfg.jacobian_mode = JacobianMode::Analytic;
            else if (value == "finite-difference") cfg.jacobian_mode = JacobianMode::FiniteDifference;
            else throw ParseError(fmt::format("{}: jacobian must be 'analytic' or 'finite-difference'", where));
        } else if (key == "substeps") {
            cfg.substeps = static_cast<int>(integer());
        } else if (key == "prior_delta_offset") {
            cfg.prior_delta_offset = real();
        } else if (key == "prior_variance") {
            cfg.prior_variance = real();
        } else if (key == "output") {
            cfg.output_dir = value;
        } else {
            throw ParseError(fmt::format("{}: unknown key '{}'", where, key));
        }
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot open config '{}'", path.string()));
    auto cfg = parse_experiment_config(in, path.string());
    if (cfg.case_path.is_relative() && !std::filesystem::exists(cfg.case_path)) {
        auto beside = path.parent_path() / cfg.case_path;
        if (std::filesystem::exists(beside)) cfg.case_path = beside;
    }
    return cfg;
}

void write_experiment_config(std::ostream& out, const ExperimentConfig& cfg, bool include_output) {
    const auto& s = cfg.scenario;
    const auto& n = cfg.noise;
    out << "case = " << cfg.case_path.string() << '\n'
        << "fault_bus = " << s.fault_bus << '\n'
        << "t_fault = " << format_number(s.t_fault) << '\n'
        << "clearing_cycles = " << format_number(s.clearing_cycles) << '\n'
        << "cleared_line = " << s.cleared_line.first << '-' << s.cleared_line.second << '\n'
        << "t_end = " << format_number(s.t_end) << '\n'
        << "dt = " << format_number(s.dt) << '\n'
        << "sigma_p = " << format_number(n.sigma_p) << '\n'
        << "sigma_q = " << format_number(n.sigma_q) << '\n'
        << "sigma_vmag = " << format_number(n.sigma_vmag) << '\n'
        << "sigma_vang = " << format_number(n.sigma_vang) << '\n'
        << "q_delta = " << format_number(n.q_delta) << '\n'
        << "q_omega = " << format_number(n.q_omega) << '\n'
        << "seed = " << n.seed << '\n'
        << "filters = " << filter_list(cfg.filters) << '\n'
        << "jacobian = " << (cfg.jacobian_mode == JacobianMode::Analytic ? "analytic" : "finite-difference") << '\n'
        << "substeps = " << cfg.substeps << '\n'
        << "prior_delta_offset = " << format_number(cfg.prior_delta_offset) << '\n'
        << "prior_variance = " << format_number(cfg.prior_variance) << '\n';
    if (include_output) out << "output = " << cfg.output_dir.string() << '\n';
}

VectorXd rmse(const Trajectory& truth, const Trajectory& estimate, double t_from) {
    const auto idx = window(truth, estimate, t_from);
    if (idx.empty()) throw ValidationError("RMSE window contains no samples");
    const auto dim = truth.states[idx.front()].stacked().size();
    VectorXd sum = VectorXd::Zero(dim);
    for (auto k : idx) sum += (estimate.states[k].stacked() - truth.states[k].stacked()).array().square().matrix();
    return (sum / static_cast<double>(idx.size())).cwiseSqrt();
}

VectorXd max_abs_error(const Trajectory& truth, const Trajectory& estimate, double t_from) {
    const auto idx = window(truth, estimate, t_from);
    if (idx.empty()) throw ValidationError("error window contains no samples");
    VectorXd worst = VectorXd::Zero(truth.states[idx.front()].stacked().size());
    for (auto k : idx) worst = worst.cwiseMax((estimate.states[k].stacked() - truth.states[k].stacked()).cwiseAbs());
    return worst;
}

Trajectory static_inversion(const ScenarioModel& model, const std::vector<MeasurementFrame>& frames,
                            const VectorXd& initial_delta, const MeasurementVariances& r) {
    const auto n = initial_delta.size();
    Trajectory out;
    VectorXd delta = initial_delta;
    for (const auto& frame : frames) {
        const auto regime = model.scenario.regime_at(frame.t, model.frequency);
        const auto& net = model.networks.at(regime);
        const VectorXd z = frame.stacked();
        const VectorXd w = measurement_covariance(frame, r).diagonal().cwiseInverse();
        for (int iter = 0; iter < 50; ++iter) {
            const DynamicState x{delta, VectorXd::Ones(n)};
            const VectorXd resid = z - measure(x, net, model.params).stacked();
            const MatrixXd h = measurement_jacobian(x, model.params, net).leftCols(n);
            const MatrixXd normal = h.transpose() * w.asDiagonal() * h;
            const VectorXd step = normal.ldlt().solve(h.transpose() * w.asDiagonal() * resid);
            delta += step;
            if (step.lpNorm<Eigen::Infinity>() < 1e-12) break;
        }
        out.times.push_back(frame.t);
        out.states.push_back({delta, VectorXd::Ones(n)});
        out.regime.push_back(regime);
    }
    return out;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    const auto start = Clock::now();
    const auto network = staged("load case", [&] { return load_case(cfg.case_path); });
    const auto pf = staged("power flow", [&] { return solve_power_flow(network); });
    const auto model = staged("reduction", [&] {
        validate(cfg.noise);
        return build_scenario_model(network, pf, cfg.scenario);
    });
    const auto truth = staged("simulate", [&] { return simulate(model, cfg.substeps); });
    const auto frames = staged("synthesize", [&] { return synthesize(truth, model.networks, model.params, cfg.noise); });

    const GaussianBelief b0 = staged("prior", [&] {
        VectorXd x0 = model.equilibrium().stacked();
        x0(0) += cfg.prior_delta_offset;
        const auto dim = x0.size();
        return init_belief(x0, cfg.prior_variance * MatrixXd::Identity(dim, dim));
    });

    std::vector<std::future<std::pair<FilterRun, double>>> jobs;
    for (auto kind : cfg.filters) {
        jobs.push_back(std::async(std::launch::async, [&, kind] {
            return staged(fmt::format("filter {}", to_string(kind)), [&] {
                auto fc = FilterConfig::from_noise(kind, network.machine_count(), cfg.noise);
                fc.jacobian_mode = cfg.jacobian_mode;
                const auto t0 = Clock::now();
                auto run = run_filter(fc, model, frames, b0);
                return std::make_pair(std::move(run), seconds_since(t0));
            });
        }));
    }
    std::vector<std::pair<FilterRun, double>> runs;
    for (auto& job : jobs) runs.push_back(job.get());

    const auto r = MeasurementVariances::from_noise(cfg.noise);
    const auto baseline =
        staged("static inversion", [&] { return static_inversion(model, frames, model.init.delta0, r); });

    ExperimentReport report;
    report.case_name = network.name;
    report.machines = network.machine_count();
    report.t_clear = cfg.scenario.t_clear(network.frequency);
    report.config = cfg;
    const auto n = static_cast<Eigen::Index>(report.machines);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        FilterReport fr;
        fr.kind = cfg.filters[i];
        fr.rmse = rmse(truth, runs[i].first.estimate, report.t_clear);
        fr.max_abs_error = max_abs_error(truth, runs[i].first.estimate, report.t_clear);
        fr.seconds = runs[i].second;
        report.filters.push_back(std::move(fr));
    }
    report.static_delta_rmse = rmse(truth, baseline, report.t_clear).head(n);

    staged("write outputs", [&] {
        std::filesystem::create_directories(cfg.output_dir);
        const auto& dir = cfg.output_dir;
        write_file(dir / "truth.csv", render([&](std::ostream& o) { write_trajectory_csv(o, truth); }));
        write_file(dir / "measurements.csv",
                   render([&](std::ostream& o) { write_measurements_csv(o, frames, model.networks.pre_fault.bus_ids); }));
        for (std::size_t i = 0; i < runs.size(); ++i) {
            write_file(dir / fmt::format("estimate_{}.csv", to_string(cfg.filters[i])),
                       render([&](std::ostream& o) { write_estimate_csv(o, truth, runs[i].first); }));
        }
        write_file(dir / "static_inversion.csv", render([&](std::ostream& o) { write_trajectory_csv(o, baseline); }));
        write_file(dir / "report.txt", render([&](std::ostream& o) { write_report(o, report); }));
        return 0;
    });
    report.seconds = seconds_since(start);
    return report;
}

void write_report(std::ostream& out, const ExperimentReport& report) {
    out << "case: " << report.case_name << '\n';
    out << "machines: " << report.machines << '\n';
    out << "rmse window: t >= " << format_number(report.t_clear) << " s\n";
    const auto n = static_cast<Eigen::Index>(report.machines);
    for (const auto& f : report.filters) {
        out << '\n' << "filter: " << to_string(f.kind) << '\n';
        out << "machine,delta_rmse,omega_rmse,delta_max_abs,omega_max_abs\n";
        for (Eigen::Index i = 0; i < n; ++i) {
            out << i + 1 << ',' << format_number(f.rmse(i)) << ',' << format_number(f.rmse(n + i)) << ','
                << format_number(f.max_abs_error(i)) << ',' << format_number(f.max_abs_error(n + i)) << '\n';
        }
    }
    out << '\n' << "static inversion\nmachine,delta_rmse\n";
    for (Eigen::Index i = 0; i < report.static_delta_rmse.size(); ++i) {
        out << i + 1 << ',' << format_number(report.static_delta_rmse(i)) << '\n';
    }
    out << '\n' << "config\n";
    write_experiment_config(out, report.config, false);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
    const auto n = traj.size() ? traj.states.front().delta.size() : 0;
    out << 't';
    for (Eigen::Index i = 0; i < n; ++i) out << ",delta_" << i + 1;
    for (Eigen::Index i = 0; i < n; ++i) out << ",omega_" << i + 1;
    out << ",regime\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
        out << format_number(traj.times[k]);
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_number(traj.states[k].delta(i));
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_number(traj.states[k].omega(i));
        out << ',' << to_string(traj.regime[k]) << '\n';
    }
}

void write_estimate_csv(std::ostream& out, const Trajectory& truth, const FilterRun& run) {
    window(truth, run.estimate, -1.0);
    const auto n = truth.size() ? truth.states.front().delta.size() : 0;
    out << 't';
    for (Eigen::Index i = 1; i <= n; ++i) {
        out << fmt::format(",delta_true_{0},delta_est_{0},omega_true_{0},omega_est_{0}", i);
    }
    for (Eigen::Index i = 1; i <= n; ++i) out << ",p_delta_" << i;
    for (Eigen::Index i = 1; i <= n; ++i) out << ",p_omega_" << i;
    out << '\n';
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const auto& t = truth.states[k];
        const auto& e = run.estimate.states[k];
        out << format_number(truth.times[k]);
        for (Eigen::Index i = 0; i < n; ++i) {
            out << ',' << format_number(t.delta(i)) << ',' << format_number(e.delta(i)) << ','
                << format_number(t.omega(i)) << ',' << format_number(e.omega(i));
        }
        const VectorXd diag = run.beliefs[k].p.diagonal();
        for (Eigen::Index i = 0; i < diag.size(); ++i) out << ',' << format_number(diag(i));
        out << '\n';
    }
}

void write_powerflow_csv(std::ostream& out, const NetworkCase& network, const PowerFlowSolution& pf) {
    out << "bus,kind,v_mag,v_ang,p_inj,q_inj\n";
    for (std::size_t i = 0; i < network.bus_count(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out << network.buses[i].id << ',' << to_string(network.buses[i].kind) << ',' << format_number(pf.v_mag(k))
            << ',' << format_number(pf.v_ang(k)) << ',' << format_number(pf.p_inj(k)) << ','
            << format_number(pf.q_inj(k)) << '\n';
    }
}

void write_reduction_csv(std::ostream& out, const ReducedNetwork& net) {
    out << "matrix,row,col,re,im\n";
    for (Eigen::Index i = 0; i < net.y_red.rows(); ++i) {
        for (Eigen::Index j = 0; j < net.y_red.cols(); ++j) {
            out << "y_red," << i + 1 << ',' << j + 1 << ',' << format_number(net.y_red(i, j).real()) << ','
                << format_number(net.y_red(i, j).imag()) << '\n';
        }
    }
    for (Eigen::Index b = 0; b < net.r_v.rows(); ++b) {
        for (Eigen::Index j = 0; j < net.r_v.cols(); ++j) {
            out << "r_v," << net.bus_ids[static_cast<std::size_t>(b)] << ',' << j + 1 << ','
                << format_number(net.r_v(b, j).real()) << ',' << format_number(net.r_v(b, j).imag()) << '\n';
        }
    }
}

}  // namespace dse
