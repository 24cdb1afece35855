#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dse/cases.hpp"
#include "dse/dynamics.hpp"
#include "dse/filters.hpp"
#include "dse/measurement.hpp"

namespace dse {

struct ExperimentConfig {
    std::filesystem::path case_path;
    FaultScenario scenario;
    NoiseSpec noise;
    std::vector<FilterKind> filters{FilterKind::EKF, FilterKind::UKF};
    JacobianMode jacobian_mode = JacobianMode::Analytic;
    int substeps = 10;
    /// Initial angle error on machine 1 (rad) and P0 diagonal.
    double prior_delta_offset = 0.05;
    double prior_variance = 1e-2;
    std::filesystem::path output_dir = "out";
};

/// Named presets: "wecc9-fault8", "ne39-fault4".
ExperimentConfig preset_config(std::string_view name);
bool is_preset(std::string_view name);

/// `key = value` lines, '#' comments. Unknown keys are errors.
ExperimentConfig parse_experiment_config(std::istream& in, std::string_view source = "<stream>");
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// `include_output` = false omits the output directory, so reports from runs
/// saved to different places stay identical.
void write_experiment_config(std::ostream& out, const ExperimentConfig& cfg, bool include_output = true);

/// Per-state RMSE over samples with t >= t_from, in [delta; omega] order.
Eigen::VectorXd rmse(const Trajectory& truth, const Trajectory& estimate, double t_from = -1.0);
/// Per-state max |error| over samples with t >= t_from.
Eigen::VectorXd max_abs_error(const Trajectory& truth, const Trajectory& estimate, double t_from = -1.0);

struct FilterReport {
    FilterKind kind = FilterKind::EKF;
    Eigen::VectorXd rmse;           // post-clearing, [delta; omega]
    Eigen::VectorXd max_abs_error;  // post-clearing
    double seconds = 0.0;
};

struct ExperimentReport {
    std::string case_name;
    std::size_t machines = 0;
    double t_clear = 0.0;
    std::vector<FilterReport> filters;
    /// Post-clearing delta RMSE of per-frame static least-squares inversion.
    Eigen::VectorXd static_delta_rmse;
    double seconds = 0.0;
    ExperimentConfig config;
};

/// Per-frame weighted Gauss-Newton fit of rotor angles to a single frame,
/// ignoring dynamics. Speeds in the returned trajectory are set to 1.
Trajectory static_inversion(const ScenarioModel& model, const std::vector<MeasurementFrame>& frames,
                            const Eigen::VectorXd& initial_delta, const MeasurementVariances& r);

/// Power flow, reduction, simulation, synthesis and filtering, with CSVs and
/// report.txt written to cfg.output_dir. Errors are rethrown as dse::Error
/// prefixed with the failing stage.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

void write_report(std::ostream& out, const ExperimentReport& report);

void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
/// Columns: t, then per machine delta_true, delta_est, omega_true, omega_est,
/// then the diagonal of P.
void write_estimate_csv(std::ostream& out, const Trajectory& truth, const FilterRun& run);
void write_powerflow_csv(std::ostream& out, const NetworkCase& network, const PowerFlowSolution& pf);
/// Long format: matrix,row,col,re,im for y_red and r_v.
void write_reduction_csv(std::ostream& out, const ReducedNetwork& net);

/// Shortest round-trip decimal representation used in every CSV.
std::string format_number(double value);

}  // namespace dse
