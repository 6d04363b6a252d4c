#pragma once

// Trajectory sensitivities of the machine angles with respect to every
// uncertain parameter, sampled along the fault-on trajectory.

#include "tspca/dynamics.hpp"
#include "tspca/parallel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace tspca {

class SensitivityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct SensitivityOptions {
    double relative_step = 1e-4; // h_rel
    double absolute_step = 1e-8; // h_abs
    int max_halvings = 3;
    std::size_t samples = 50;    // number of fault-on sample points
    double horizon = 0.0;        // fault-on window T_s; <= 0 means the nominal t_cr
    double cct_tolerance = 1e-4; // used when the horizon comes from t_cr
    double angle_floor = 1e-4;   // |x_i| below this is treated as singular in normalization
    std::size_t workers = 0;
    DynamicsOptions dynamics{};
};

/// Integrator step indices (1-based, into a run of `steps` steps) of
/// `samples` points spread uniformly from the first step to the last.
inline std::vector<std::size_t> sample_indices(std::size_t steps, std::size_t samples) {
    if (samples < 2) throw std::invalid_argument("at least two fault-on samples are required");
    if (samples > steps) throw std::invalid_argument("more fault-on samples than integrator steps in the window");
    std::vector<std::size_t> idx(samples);
    for (std::size_t j = 0; j < samples; ++j)
        idx[j] = 1 + static_cast<std::size_t>(std::llround(static_cast<double>(steps - 1) * static_cast<double>(j) /
                                                            static_cast<double>(samples - 1)));
    return idx;
}

/// Fault-on trajectory over (0, horizon] restricted to `samples` points of the
/// integrator grid. No interpolation takes place.
inline Trajectory fault_on_samples(const ScenarioModel& model, double horizon, std::size_t samples, const DynamicsOptions& opt = {}) {
    if (!(horizon > 0.0)) throw std::invalid_argument("fault-on horizon must be positive");
    const auto full = run_fault_on(model, horizon, opt, true);
    if (full.diverged) throw ScenarioError("fault-on integration overflowed");
    const auto steps = full.trajectory.size() - 1;
    Trajectory out(model.fault_on.size(), Period::fault_on);
    for (auto k : sample_indices(steps, samples)) out.push(full.trajectory.time(k), full.trajectory.row(k));
    return out;
}

inline Trajectory fault_on_samples(const PowerSystem& sys, const ParameterVector& lambda, const FaultScenario& scenario, double horizon,
                                   std::size_t samples, const DynamicsOptions& opt = {}) {
    return fault_on_samples(prepare_scenario(sys, lambda, scenario, opt), horizon, samples, opt);
}

/// Angle block of a sampled trajectory as a samples×machines matrix.
inline Eigen::MatrixXd angle_matrix(const Trajectory& traj) {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(traj.size()), static_cast<Eigen::Index>(traj.machines()));
    for (std::size_t k = 0; k < traj.size(); ++k)
        for (std::size_t i = 0; i < traj.machines(); ++i) a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = traj.delta(k, i);
    return a;
}

struct SensitivitySeries {
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> matrices; // S_j, machines × parameters, rad per parameter unit
    std::vector<double> steps;             // Δλ_k actually used
    std::vector<std::size_t> failed_columns;
    double horizon = 0.0;

    [[nodiscard]] std::size_t machines() const { return matrices.empty() ? 0 : static_cast<std::size_t>(matrices.front().rows()); }
    [[nodiscard]] std::size_t parameters() const { return matrices.empty() ? 0 : static_cast<std::size_t>(matrices.front().cols()); }
};

struct NormalizedSensitivitySeries {
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> matrices; // S̃_j, dimensionless
    std::size_t guarded_rows = 0;          // (i, j) rows zeroed because |x_i(t_j)| was below the floor
};

/// Nominal horizon T_s: the given one, or the nominal critical clearing time.
inline double sensitivity_horizon(const ScenarioModel& nominal, const FaultScenario& scenario, const SensitivityOptions& opt) {
    if (opt.horizon > 0.0) return opt.horizon;
    const auto cct = critical_clearing_time(nominal, scenario, opt.cct_tolerance, opt.dynamics);
    if (!cct.ok()) throw SensitivityError(std::string("nominal critical clearing time unavailable: ") + to_string(cct.status));
    return cct.t_cr;
}

/// Central differences run end to end (power flow, reduction, integration):
///   S_j[:, k] = (δ(t_j; λ + Δλ_k e_k) - δ(t_j; λ - Δλ_k e_k)) / (2 Δλ_k),
///   Δλ_k = max(h_rel |λ_k|, h_abs).
/// A perturbation that breaks the power flow is halved up to max_halvings
/// times; a column that still fails is zeroed and listed in failed_columns.
inline SensitivitySeries sensitivity_series(const PowerSystem& sys, const ParameterVector& lambda, const FaultScenario& scenario,
                                            const SensitivityOptions& opt = {}) {
    const auto nominal = prepare_scenario(sys, lambda, scenario, opt.dynamics);
    SensitivitySeries out;
    out.horizon = sensitivity_horizon(nominal, scenario, opt);
    const auto base = fault_on_samples(nominal, out.horizon, opt.samples, opt.dynamics);
    out.times = base.times();

    const auto m = lambda.size();
    const auto n = nominal.fault_on.size();
    const auto r = base.size();
    std::vector<Eigen::MatrixXd> columns(m); // r × n per parameter
    std::vector<double> steps(m, 0.0);
    std::vector<char> failed(m, 0);

    parallel_for(m, opt.workers, [&](std::size_t k) {
        double h = std::max(opt.relative_step * std::abs(lambda[k]), opt.absolute_step);
        for (int attempt = 0; attempt <= opt.max_halvings; ++attempt, h *= 0.5) {
            try {
                auto plus = lambda;
                auto minus = lambda;
                plus[k] += h;
                minus[k] -= h;
                const auto up = angle_matrix(fault_on_samples(sys, plus, scenario, out.horizon, opt.samples, opt.dynamics));
                const auto down = angle_matrix(fault_on_samples(sys, minus, scenario, out.horizon, opt.samples, opt.dynamics));
                columns[k] = (up - down) / (2.0 * h);
                steps[k] = h;
                return;
            } catch (const ScenarioError&) {
            } catch (const ReductionError&) {
            }
        }
        columns[k] = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(n));
        failed[k] = 1;
    });

    for (std::size_t k = 0; k < m; ++k)
        if (failed[k]) out.failed_columns.push_back(k);
    out.steps = std::move(steps);
    out.matrices.assign(r, Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)));
    for (std::size_t j = 0; j < r; ++j)
        for (std::size_t k = 0; k < m; ++k)
            out.matrices[j].col(static_cast<Eigen::Index>(k)) = columns[k].row(static_cast<Eigen::Index>(j)).transpose();
    return out;
}

/// s̃_ik(t_j) = (λ_k / x_i(t_j)) s_ik(t_j) with x_i the nominal COI angle at
/// the same sample. Rows with |x_i(t_j)| < angle_floor are set to zero.
inline NormalizedSensitivitySeries normalize(const SensitivitySeries& series, const Trajectory& nominal, const ParameterVector& lambda,
                                             double angle_floor = 1e-4) {
    if (nominal.size() != series.matrices.size()) throw std::invalid_argument("nominal trajectory does not match the sensitivity samples");
    NormalizedSensitivitySeries out;
    out.times = series.times;
    out.matrices.reserve(series.matrices.size());
    for (std::size_t j = 0; j < series.matrices.size(); ++j) {
        const auto& s = series.matrices[j];
        if (static_cast<std::size_t>(s.cols()) != lambda.size() || static_cast<std::size_t>(s.rows()) != nominal.machines())
            throw std::invalid_argument("sensitivity matrix shape does not match the system");
        Eigen::MatrixXd sn(s.rows(), s.cols());
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            const double x = nominal.delta(j, static_cast<std::size_t>(i));
            if (std::abs(x) < angle_floor) {
                sn.row(i).setZero();
                ++out.guarded_rows;
                continue;
            }
            for (Eigen::Index k = 0; k < s.cols(); ++k) sn(i, k) = lambda[static_cast<std::size_t>(k)] / x * s(i, k);
        }
        out.matrices.push_back(std::move(sn));
    }
    return out;
}

/// Sampled normalized loss Σ_j Σ_i [(x_i(p, t_j) - x_i(p0, t_j)) / x_i(p0, t_j)]²,
/// skipping the same near-zero nominal samples that normalize() guards.
inline double loss(const Trajectory& perturbed, const Trajectory& nominal, double angle_floor = 1e-4) {
    if (perturbed.size() != nominal.size() || perturbed.machines() != nominal.machines())
        throw std::invalid_argument("trajectories do not share a sample grid");
    double total = 0.0;
    for (std::size_t j = 0; j < nominal.size(); ++j) {
        if (std::abs(perturbed.time(j) - nominal.time(j)) > 1e-12) throw std::invalid_argument("trajectories do not share a sample grid");
        for (std::size_t i = 0; i < nominal.machines(); ++i) {
            const double x0 = nominal.delta(j, i);
            if (std::abs(x0) < angle_floor) continue;
            const double rel = (perturbed.delta(j, i) - x0) / x0;
            total += rel * rel;
        }
    }
    return total;
}

/// Writes S_j (or S̃_j) as CSV: one row per machine, one column per parameter.
inline void write_sensitivity_csv(std::ostream& os, const Eigen::MatrixXd& s, const ParameterVector& lambda) {
    os << "machine";
    for (std::size_t k = 0; k < lambda.size(); ++k) os << ',' << lambda.label(k);
    os << '\n';
    const auto old = os.precision(12);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        os << i + 1;
        for (Eigen::Index k = 0; k < s.cols(); ++k) os << ',' << s(i, k);
        os << '\n';
    }
    os.precision(old);
}

} // namespace tspca
