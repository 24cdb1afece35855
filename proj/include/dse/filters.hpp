#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "dse/dynamics.hpp"
#include "dse/measurement.hpp"

namespace dse {

/// State estimate and covariance carried through the recursions.
struct GaussianBelief {
    Eigen::VectorXd x_hat;
    Eigen::MatrixXd p;
};

/// Throws ValidationError when p0 is not symmetric (1e-10 relative) or has a
/// clearly negative eigenvalue.
GaussianBelief init_belief(const Eigen::VectorXd& x0, const Eigen::MatrixXd& p0);

/// x_k = f(x_{k-1}) + w, w ~ N(0, Q).
struct ProcessModel {
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
};

/// z = h(x) + v, v ~ N(0, R).
struct MeasurementModel {
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
};

/// Scaled unscented transform parameters. Disabled by default, in which case
/// the equal-weight 2N-point set (no centre point) is used.
struct ScaledUnscented {
    bool enabled = false;
    double alpha = 1e-3;
    double beta = 2.0;
    double kappa = 0.0;
};

struct SigmaPoints {
    std::vector<Eigen::VectorXd> points;
    std::vector<double> mean_weights;
    std::vector<double> cov_weights;
};

/// Equal-weight sigma set x +/- columns of chol(N P). If the factorization
/// fails, jitter*I is added to P and it is retried once.
SigmaPoints sigma_points(const GaussianBelief& b, double jitter = 1e-9, const ScaledUnscented& scaled = {});

GaussianBelief ekf_predict(const GaussianBelief& b, const ProcessModel& model, const Eigen::MatrixXd& q);
GaussianBelief ekf_update(const GaussianBelief& b, const Eigen::VectorXd& z, const MeasurementModel& model,
                          const Eigen::MatrixXd& r);

struct UkfPrediction {
    GaussianBelief belief;
    std::vector<Eigen::VectorXd> propagated;
};

UkfPrediction ukf_predict(const GaussianBelief& b, const ProcessModel& model, const Eigen::MatrixXd& q,
                          double jitter = 1e-9, const ScaledUnscented& scaled = {});
/// Regenerates sigma points from the prior before evaluating h.
GaussianBelief ukf_update(const GaussianBelief& b, const Eigen::VectorXd& z, const MeasurementModel& model,
                          const Eigen::MatrixXd& r, double jitter = 1e-9, const ScaledUnscented& scaled = {});

/// Symmetrizes P and clamps eigenvalues below zero up to zero.
Eigen::MatrixXd enforce_covariance_health(const Eigen::MatrixXd& p);

// --- Power-system models -----------------------------------------------------

enum class FilterKind { EKF, UKF };
enum class JacobianMode { Analytic, FiniteDifference };

std::string_view to_string(FilterKind kind);

/// Per-channel measurement variances; the diagonal R is assembled per frame
/// because fault-on frames carry fewer voltage entries.
struct MeasurementVariances {
    double p = 1e-4;
    double q = 1e-4;
    double vmag = 2.5e-5;
    double vang = 2.5e-5;

    static MeasurementVariances from_noise(const NoiseSpec& noise);
};

struct FilterConfig {
    FilterKind kind = FilterKind::EKF;
    Eigen::MatrixXd q;  // 2n x 2n
    MeasurementVariances r;
    double jitter = 1e-9;
    JacobianMode jacobian_mode = JacobianMode::Analytic;
    ScaledUnscented scaled;

    /// Diagonal Q from NoiseSpec (q_delta on angles, q_omega on speeds).
    static FilterConfig from_noise(FilterKind kind, std::size_t machines, const NoiseSpec& noise);
};

/// Diagonal R matching `frame.stacked()`.
Eigen::MatrixXd measurement_covariance(const MeasurementFrame& frame, const MeasurementVariances& r);

/// df/dx of the Euler swing step.
Eigen::MatrixXd process_jacobian(const DynamicState& x, const MachineParams& params, const ReducedNetwork& net,
                                 double dt);

/// dh/dx of the stacked measurement vector. Throws Error when a present bus
/// has zero reconstructed voltage.
Eigen::MatrixXd measurement_jacobian(const DynamicState& x, const MachineParams& params,
                                     const ReducedNetwork& net);

/// Central-difference Jacobian of `fn` at x.
Eigen::MatrixXd finite_difference_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
                                           const Eigen::VectorXd& x, double step = 1e-6);

ProcessModel swing_process_model(const MachineParams& params, const ReducedNetwork& net, double dt,
                                 JacobianMode mode = JacobianMode::Analytic);
MeasurementModel swing_measurement_model(const MachineParams& params, const ReducedNetwork& net,
                                         JacobianMode mode = JacobianMode::Analytic);

/// Equilibrium with delta_1 += 0.05 rad and P0 = 1e-2 I.
GaussianBelief default_prior(const ScenarioModel& model);

struct FilterRun {
    Trajectory estimate;
    std::vector<GaussianBelief> beliefs;
};

/// Update on frame 0, then predict/update on each following frame. The
/// predict from t_{k-1} uses the network of the regime at t_{k-1}; the update
/// at t_k uses the regime at t_k.
FilterRun run_filter(const FilterConfig& cfg, const ScenarioModel& model,
                     const std::vector<MeasurementFrame>& frames, const GaussianBelief& b0);

}  // namespace dse
