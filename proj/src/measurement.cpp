#include "dse/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "dse/errors.hpp"

namespace dse {

namespace {

using Complex = std::complex<double>;

constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

std::string cell(double v) { return std::isnan(v) ? std::string{} : fmt::format("{}", v); }

}  // namespace

std::size_t MeasurementFrame::present_bus_count() const {
    return static_cast<std::size_t>(std::count(v_present.begin(), v_present.end(), true));
}

Eigen::VectorXd MeasurementFrame::stacked() const {
    const auto n = p_g.size();
    const auto nb = static_cast<Eigen::Index>(present_bus_count());
    Eigen::VectorXd z(2 * n + 2 * nb);
    z.head(n) = p_g;
    z.segment(n, n) = q_g;
    Eigen::Index k = 0;
    for (std::size_t b = 0; b < v_present.size(); ++b) {
        if (!v_present[b]) continue;
        z(2 * n + k) = v_mag(static_cast<Eigen::Index>(b));
        z(2 * n + nb + k) = v_ang(static_cast<Eigen::Index>(b));
        ++k;
    }
    return z;
}

void validate(const NoiseSpec& noise) {
    if (!(noise.sigma_p >= 0.0 && noise.sigma_q >= 0.0 && noise.sigma_vmag >= 0.0 && noise.sigma_vang >= 0.0)) {
        throw ValidationError("measurement noise standard deviations must be non-negative");
    }
    if (!(noise.q_delta >= 0.0 && noise.q_omega >= 0.0)) {
        throw ValidationError("process noise variances must be non-negative");
    }
}

Eigen::VectorXd reactive_power(const Eigen::VectorXd& delta, const Eigen::VectorXd& e_mag, const ReducedNetwork& net) {
    const auto n = delta.size();
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            q(i) += e_mag(i) * net.y_mag(i, j) * e_mag(j) * std::sin(delta(i) - delta(j) - net.y_ang(i, j));
        }
    }
    return q;
}

ComplexVector bus_voltages(const Eigen::VectorXd& delta, const Eigen::VectorXd& e_mag, const ReducedNetwork& net) {
    ComplexVector e(delta.size());
    for (Eigen::Index i = 0; i < delta.size(); ++i) e(i) = std::polar(e_mag(i), delta(i));
    return net.r_v * e;
}

double angle_reference(const Eigen::VectorXd& delta) { return delta.size() ? delta.mean() : 0.0; }

MeasurementFrame measure(const DynamicState& x, const ReducedNetwork& net, const MachineParams& params, double t) {
    MeasurementFrame frame;
    frame.t = t;
    frame.p_g = electrical_power(x.delta, params.e_mag, net);
    frame.q_g = reactive_power(x.delta, params.e_mag, net);
    const ComplexVector v = bus_voltages(x.delta, params.e_mag, net);
    const double ref = angle_reference(x.delta);
    const Complex unrotate = std::polar(1.0, -ref);
    const auto nb = v.size();
    frame.v_mag.resize(nb);
    frame.v_ang.resize(nb);
    frame.v_present = net.bus_present;
    for (Eigen::Index b = 0; b < nb; ++b) {
        if (net.bus_present[static_cast<std::size_t>(b)]) {
            frame.v_mag(b) = std::abs(v(b));
            frame.v_ang(b) = ref + std::arg(v(b) * unrotate);
        } else {
            frame.v_mag(b) = kAbsent;
            frame.v_ang(b) = kAbsent;
        }
    }
    return frame;
}

Eigen::VectorXd measurement_vector(const Eigen::VectorXd& delta, const ReducedNetwork& net,
                                   const MachineParams& params) {
    DynamicState x{delta, Eigen::VectorXd::Ones(delta.size())};
    return measure(x, net, params).stacked();
}

std::vector<MeasurementFrame> synthesize(const Trajectory& truth, const ScenarioNetworks& networks,
                                         const MachineParams& params, const NoiseSpec& noise) {
    validate(noise);
    if (truth.size() == 0) throw ValidationError("cannot synthesize measurements from an empty trajectory");
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<MeasurementFrame> frames;
    frames.reserve(truth.size());
    for (std::size_t k = 0; k < truth.size(); ++k) {
        auto frame = measure(truth.states[k], networks.at(truth.regime[k]), params, truth.times[k]);
        for (Eigen::Index i = 0; i < frame.p_g.size(); ++i) frame.p_g(i) += noise.sigma_p * normal(rng);
        for (Eigen::Index i = 0; i < frame.q_g.size(); ++i) frame.q_g(i) += noise.sigma_q * normal(rng);
        // Draw for every bus so the stream does not depend on the regime.
        for (Eigen::Index b = 0; b < frame.v_mag.size(); ++b) {
            const double e_mag = noise.sigma_vmag * normal(rng);
            const double e_ang = noise.sigma_vang * normal(rng);
            if (!frame.v_present[static_cast<std::size_t>(b)]) continue;
            frame.v_mag(b) += e_mag;
            frame.v_ang(b) += e_ang;
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

void write_measurements_csv(std::ostream& out, const std::vector<MeasurementFrame>& frames,
                            const std::vector<int>& bus_ids) {
    const auto n = frames.empty() ? 0 : frames.front().p_g.size();
    out << 't';
    for (Eigen::Index i = 0; i < n; ++i) out << ",p_g_" << i + 1;
    for (Eigen::Index i = 0; i < n; ++i) out << ",q_g_" << i + 1;
    for (int id : bus_ids) out << ",v_mag_" << id;
    for (int id : bus_ids) out << ",v_ang_" << id;
    out << '\n';
    for (const auto& f : frames) {
        out << cell(f.t);
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << cell(f.p_g(i));
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << cell(f.q_g(i));
        for (Eigen::Index b = 0; b < f.v_mag.size(); ++b) out << ',' << cell(f.v_mag(b));
        for (Eigen::Index b = 0; b < f.v_ang.size(); ++b) out << ',' << cell(f.v_ang(b));
        out << '\n';
    }
}

}  // namespace dse
