#include "dse/filters.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "dse/errors.hpp"

namespace dse {

namespace {

using Complex = std::complex<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInnovationRcond = 1e-15;

double scale_of(const MatrixXd& m) { return std::max(1.0, m.cwiseAbs().maxCoeff()); }

// Solves S X = B for symmetric positive definite S, reporting near-singular S.
MatrixXd spd_solve(const MatrixXd& s, const MatrixXd& b, std::string_view what) {
    const Eigen::LLT<MatrixXd> llt(s);
    const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    if (!(rcond > kInnovationRcond)) {
        throw SingularMatrixError(
            fmt::format("{} is numerically singular (reciprocal condition estimate {:.3e})", what, rcond));
    }
    return llt.solve(b);
}

// dP_G/d(delta), also used for the EKF process Jacobian.
MatrixXd power_angle_sensitivity(const VectorXd& delta, const MachineParams& params, const ReducedNetwork& net,
                                 bool reactive) {
    const auto n = delta.size();
    MatrixXd out = MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double k = params.e_mag(i) * params.e_mag(j) * net.y_mag(i, j);
            const double angle = delta(i) - delta(j) - net.y_ang(i, j);
            out(i, j) = reactive ? -k * std::cos(angle) : k * std::sin(angle);
            out(i, i) -= out(i, j);
        }
    }
    return out;
}

[[noreturn]] void rethrow_annotated(std::size_t frame) {
    try {
        throw;
    } catch (const SingularMatrixError& e) {
        throw SingularMatrixError(fmt::format("frame {}: {}", frame, e.what()));
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("frame {}: {}", frame, e.what()));
    } catch (const Error& e) {
        throw Error(fmt::format("frame {}: {}", frame, e.what()));
    }
}

}  // namespace

GaussianBelief init_belief(const VectorXd& x0, const MatrixXd& p0) {
    if (p0.rows() != x0.size() || p0.cols() != x0.size()) {
        throw ValidationError(fmt::format("prior covariance is {}x{}, state has {} entries", p0.rows(), p0.cols(),
                                          x0.size()));
    }
    const double scale = scale_of(p0);
    const double asym = (p0 - p0.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * scale) {
        throw ValidationError(fmt::format("prior covariance is not symmetric (max asymmetry {:.3e})", asym));
    }
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(p0);
    if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
        throw ValidationError(
            fmt::format("prior covariance is indefinite (min eigenvalue {:.3e})", eig.eigenvalues().minCoeff()));
    }
    return {x0, p0};
}

MatrixXd enforce_covariance_health(const MatrixXd& p) {
    MatrixXd sym = 0.5 * (p + p.transpose());
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
    if (eig.eigenvalues().minCoeff() >= 0.0) return sym;
    const VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
    sym = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (sym + sym.transpose());
}

SigmaPoints sigma_points(const GaussianBelief& b, double jitter, const ScaledUnscented& scaled) {
    const auto n = b.x_hat.size();
    const double dim = static_cast<double>(n);
    const double lambda = scaled.enabled ? scaled.alpha * scaled.alpha * (dim + scaled.kappa) - dim : 0.0;
    const double spread = dim + lambda;

    Eigen::LLT<MatrixXd> llt(spread * b.p);
    if (llt.info() != Eigen::Success) {
        llt.compute(spread * (b.p + jitter * MatrixXd::Identity(n, n)));
        if (llt.info() != Eigen::Success) {
            throw SingularMatrixError("sigma points: covariance factorization failed after jitter");
        }
    }
    const MatrixXd l = llt.matrixL();

    SigmaPoints sp;
    if (scaled.enabled) {
        sp.points.push_back(b.x_hat);
        sp.mean_weights.push_back(lambda / spread);
        sp.cov_weights.push_back(lambda / spread + 1.0 - scaled.alpha * scaled.alpha + scaled.beta);
    }
    const double w = 1.0 / (2.0 * spread);
    for (Eigen::Index i = 0; i < n; ++i) sp.points.push_back(b.x_hat + l.col(i));
    for (Eigen::Index i = 0; i < n; ++i) sp.points.push_back(b.x_hat - l.col(i));
    sp.mean_weights.resize(sp.points.size(), w);
    sp.cov_weights.resize(sp.points.size(), w);
    return sp;
}

GaussianBelief ekf_predict(const GaussianBelief& b, const ProcessModel& model, const MatrixXd& q) {
    const MatrixXd f = model.jacobian(b.x_hat);
    return {model.f(b.x_hat), enforce_covariance_health(f * b.p * f.transpose() + q)};
}

GaussianBelief ekf_update(const GaussianBelief& b, const VectorXd& z, const MeasurementModel& model,
                          const MatrixXd& r) {
    const MatrixXd h = model.jacobian(b.x_hat);
    const MatrixXd s = h * b.p * h.transpose() + r;
    // K = P H^T S^-1, computed as (S^-1 H P)^T
    const MatrixXd k = spd_solve(s, h * b.p, "innovation covariance").transpose();
    const auto n = b.x_hat.size();
    GaussianBelief out;
    out.x_hat = b.x_hat + k * (z - model.h(b.x_hat));
    out.p = enforce_covariance_health((MatrixXd::Identity(n, n) - k * h) * b.p);
    return out;
}

UkfPrediction ukf_predict(const GaussianBelief& b, const ProcessModel& model, const MatrixXd& q, double jitter,
                          const ScaledUnscented& scaled) {
    const auto sp = sigma_points(b, jitter, scaled);
    UkfPrediction out;
    out.propagated.reserve(sp.points.size());
    VectorXd mean = VectorXd::Zero(b.x_hat.size());
    for (std::size_t i = 0; i < sp.points.size(); ++i) {
        out.propagated.push_back(model.f(sp.points[i]));
        mean += sp.mean_weights[i] * out.propagated.back();
    }
    MatrixXd cov = q;
    for (std::size_t i = 0; i < sp.points.size(); ++i) {
        const VectorXd d = out.propagated[i] - mean;
        cov += sp.cov_weights[i] * d * d.transpose();
    }
    out.belief = {mean, enforce_covariance_health(cov)};
    return out;
}

GaussianBelief ukf_update(const GaussianBelief& b, const VectorXd& z, const MeasurementModel& model,
                          const MatrixXd& r, double jitter, const ScaledUnscented& scaled) {
    const auto sp = sigma_points(b, jitter, scaled);
    std::vector<VectorXd> zs;
    zs.reserve(sp.points.size());
    VectorXd z_hat = VectorXd::Zero(z.size());
    for (std::size_t i = 0; i < sp.points.size(); ++i) {
        zs.push_back(model.h(sp.points[i]));
        z_hat += sp.mean_weights[i] * zs.back();
    }
    MatrixXd pz = r;
    MatrixXd pxz = MatrixXd::Zero(b.x_hat.size(), z.size());
    for (std::size_t i = 0; i < sp.points.size(); ++i) {
        const VectorXd dz = zs[i] - z_hat;
        pz += sp.cov_weights[i] * dz * dz.transpose();
        pxz += sp.cov_weights[i] * (sp.points[i] - b.x_hat) * dz.transpose();
    }
    const MatrixXd k = spd_solve(pz, pxz.transpose(), "predicted measurement covariance").transpose();
    GaussianBelief out;
    out.x_hat = b.x_hat + k * (z - z_hat);
    out.p = enforce_covariance_health(b.p - k * pz * k.transpose());
    return out;
}

std::string_view to_string(FilterKind kind) { return kind == FilterKind::EKF ? "ekf" : "ukf"; }

MeasurementVariances MeasurementVariances::from_noise(const NoiseSpec& noise) {
    return {noise.sigma_p * noise.sigma_p, noise.sigma_q * noise.sigma_q, noise.sigma_vmag * noise.sigma_vmag,
            noise.sigma_vang * noise.sigma_vang};
}

FilterConfig FilterConfig::from_noise(FilterKind kind, std::size_t machines, const NoiseSpec& noise) {
    const auto n = static_cast<Eigen::Index>(machines);
    FilterConfig cfg;
    cfg.kind = kind;
    cfg.q = MatrixXd::Zero(2 * n, 2 * n);
    cfg.q.diagonal().head(n).setConstant(noise.q_delta);
    cfg.q.diagonal().tail(n).setConstant(noise.q_omega);
    cfg.r = MeasurementVariances::from_noise(noise);
    return cfg;
}

MatrixXd measurement_covariance(const MeasurementFrame& frame, const MeasurementVariances& r) {
    const auto n = frame.p_g.size();
    const auto nb = static_cast<Eigen::Index>(frame.present_bus_count());
    VectorXd diag(2 * n + 2 * nb);
    diag << VectorXd::Constant(n, r.p), VectorXd::Constant(n, r.q), VectorXd::Constant(nb, r.vmag),
        VectorXd::Constant(nb, r.vang);
    return diag.asDiagonal();
}

MatrixXd process_jacobian(const DynamicState& x, const MachineParams& params, const ReducedNetwork& net,
                          double dt) {
    const auto n = x.delta.size();
    MatrixXd f = MatrixXd::Identity(2 * n, 2 * n);
    const MatrixXd dp = power_angle_sensitivity(x.delta, params, net, false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double scale = dt / (2.0 * params.h(i));
        f(i, n + i) = dt * params.omega0;
        f.block(n + i, 0, 1, n) = -scale * dp.row(i);
        f(n + i, n + i) -= scale * params.d(i);
    }
    return f;
}

MatrixXd measurement_jacobian(const DynamicState& x, const MachineParams& params, const ReducedNetwork& net) {
    const auto n = x.delta.size();
    const auto nb = static_cast<Eigen::Index>(net.present_bus_count());
    MatrixXd h = MatrixXd::Zero(2 * n + 2 * nb, 2 * n);
    h.block(0, 0, n, n) = power_angle_sensitivity(x.delta, params, net, false);
    h.block(n, 0, n, n) = power_angle_sensitivity(x.delta, params, net, true);

    ComplexVector e(n);
    for (Eigen::Index j = 0; j < n; ++j) e(j) = std::polar(params.e_mag(j), x.delta(j));
    const ComplexVector v = net.r_v * e;
    Eigen::Index row = 0;
    for (std::size_t b = 0; b < net.bus_present.size(); ++b) {
        if (!net.bus_present[b]) continue;
        const auto bi = static_cast<Eigen::Index>(b);
        const double mag = std::abs(v(bi));
        if (!(mag > 1e-12)) {
            throw Error(fmt::format("measurement Jacobian: bus {} has zero reconstructed voltage", net.bus_ids[b]));
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            const Complex dv = Complex(0.0, 1.0) * net.r_v(bi, j) * e(j);
            h(2 * n + row, j) = (std::conj(v(bi)) * dv).real() / mag;
            h(2 * n + nb + row, j) = (dv / v(bi)).imag();
        }
        ++row;
    }
    return h;
}

MatrixXd finite_difference_jacobian(const std::function<VectorXd(const VectorXd&)>& fn, const VectorXd& x,
                                    double step) {
    const VectorXd f0 = fn(x);
    MatrixXd jac(f0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = step * std::max(1.0, std::abs(x(j)));
        VectorXd xp = x;
        VectorXd xm = x;
        xp(j) += h;
        xm(j) -= h;
        jac.col(j) = (fn(xp) - fn(xm)) / (2.0 * h);
    }
    return jac;
}

ProcessModel swing_process_model(const MachineParams& params, const ReducedNetwork& net, double dt,
                                 JacobianMode mode) {
    ProcessModel model;
    model.f = [params, net, dt](const VectorXd& x) {
        return step_process(DynamicState::from_stacked(x), params, net, dt).stacked();
    };
    if (mode == JacobianMode::Analytic) {
        model.jacobian = [params, net, dt](const VectorXd& x) {
            return process_jacobian(DynamicState::from_stacked(x), params, net, dt);
        };
    } else {
        model.jacobian = [f = model.f](const VectorXd& x) { return finite_difference_jacobian(f, x); };
    }
    return model;
}

MeasurementModel swing_measurement_model(const MachineParams& params, const ReducedNetwork& net, JacobianMode mode) {
    MeasurementModel model;
    model.h = [params, net](const VectorXd& x) {
        return measure(DynamicState::from_stacked(x), net, params).stacked();
    };
    if (mode == JacobianMode::Analytic) {
        model.jacobian = [params, net](const VectorXd& x) {
            return measurement_jacobian(DynamicState::from_stacked(x), params, net);
        };
    } else {
        model.jacobian = [h = model.h](const VectorXd& x) { return finite_difference_jacobian(h, x); };
    }
    return model;
}

GaussianBelief default_prior(const ScenarioModel& model) {
    VectorXd x0 = model.equilibrium().stacked();
    if (x0.size()) x0(0) += 0.05;
    return init_belief(x0, 1e-2 * MatrixXd::Identity(x0.size(), x0.size()));
}

FilterRun run_filter(const FilterConfig& cfg, const ScenarioModel& model, const std::vector<MeasurementFrame>& frames,
                     const GaussianBelief& b0) {
    const auto& sc = model.scenario;
    const double freq = model.frequency;
    const std::array<Regime, 3> regimes{Regime::PreFault, Regime::FaultOn, Regime::PostFault};
    std::array<MeasurementModel, 3> measurement_models;
    for (std::size_t r = 0; r < regimes.size(); ++r) {
        measurement_models[r] =
            swing_measurement_model(model.params, model.networks.at(regimes[r]), cfg.jacobian_mode);
    }
    std::array<ProcessModel, 3> process_models;
    double process_dt = -1.0;

    FilterRun run;
    run.estimate.times.reserve(frames.size());
    run.estimate.states.reserve(frames.size());
    run.estimate.regime.reserve(frames.size());
    run.beliefs.reserve(frames.size());

    GaussianBelief b = b0;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto& frame = frames[k];
        const Regime regime = sc.regime_at(frame.t, freq);
        const auto r = static_cast<std::size_t>(regime);
        try {
            if (k > 0) {
                const double dt = frame.t - frames[k - 1].t;
                if (std::abs(dt - process_dt) > 1e-12) {
                    process_dt = dt;
                    for (std::size_t i = 0; i < regimes.size(); ++i) {
                        process_models[i] = swing_process_model(model.params, model.networks.at(regimes[i]), dt,
                                                                cfg.jacobian_mode);
                    }
                }
                const auto& pm = process_models[static_cast<std::size_t>(sc.regime_at(frames[k - 1].t, freq))];
                b = cfg.kind == FilterKind::EKF ? ekf_predict(b, pm, cfg.q)
                                                : ukf_predict(b, pm, cfg.q, cfg.jitter, cfg.scaled).belief;
            }
            if (frame.v_present != model.networks.at(regime).bus_present) {
                throw ValidationError(fmt::format("measurement layout at t = {} does not match the {} network",
                                                  frame.t, to_string(regime)));
            }
            const VectorXd z = frame.stacked();
            const MatrixXd rm = measurement_covariance(frame, cfg.r);
            b = cfg.kind == FilterKind::EKF ? ekf_update(b, z, measurement_models[r], rm)
                                            : ukf_update(b, z, measurement_models[r], rm, cfg.jitter, cfg.scaled);
        } catch (const Error&) {
            rethrow_annotated(k);
        }
        run.estimate.times.push_back(frame.t);
        run.estimate.states.push_back(DynamicState::from_stacked(b.x_hat));
        run.estimate.regime.push_back(regime);
        run.beliefs.push_back(b);
    }
    return run;
}

}  // namespace dse
