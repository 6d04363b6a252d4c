#pragma once

// Bus admittance matrix and Newton-Raphson power flow (polar form, flat start).

#include "tspca/system.hpp"

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace tspca {

using Complex = std::complex<double>;

struct PowerFlowOptions {
    double tolerance = 1e-8; // max |ΔP|, |ΔQ| in pu
    int max_iterations = 50;
};

struct PowerFlowSolution {
    std::vector<Complex> voltages;         // per bus, system order
    std::vector<Complex> generator_power;  // injected S per generator
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;
};

/// Dense bus admittance matrix. Line `skip` (if any) is left out entirely,
/// which is how the post-fault topology is formed.
inline Eigen::MatrixXcd admittance_matrix(const PowerSystem& sys, std::optional<std::size_t> skip = std::nullopt) {
    const auto n = static_cast<Eigen::Index>(sys.buses.size());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (std::size_t k = 0; k < sys.lines.size(); ++k) {
        const auto& l = sys.lines[k];
        if (!l.in_service || (skip && *skip == k)) continue;
        const auto i = static_cast<Eigen::Index>(sys.bus_index(l.from_bus));
        const auto j = static_cast<Eigen::Index>(sys.bus_index(l.to_bus));
        const Complex ys = 1.0 / Complex(l.resistance, l.reactance);
        const Complex ysh(0.0, l.half_shunt);
        y(i, i) += ys + ysh;
        y(j, j) += ys + ysh;
        y(i, j) -= ys;
        y(j, i) -= ys;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& b = sys.buses[static_cast<std::size_t>(i)];
        y(i, i) += Complex(b.shunt_g, b.shunt_b);
    }
    return y;
}

/// Net scheduled injection per bus (generation minus load); the slack entry
/// and PV reactive parts are not used by the solver.
inline std::vector<Complex> scheduled_injections(const PowerSystem& sys) {
    std::vector<Complex> s(sys.buses.size(), Complex{});
    for (const auto& g : sys.generators) s[sys.bus_index(g.bus)] += g.scheduled_power;
    for (const auto& ld : sys.loads) s[sys.bus_index(ld.bus)] -= Complex(ld.p, ld.q);
    return s;
}

/// Complex power injected at each bus for the given voltages: S = V conj(Y V).
inline std::vector<Complex> bus_injections(const Eigen::MatrixXcd& y, const std::vector<Complex>& v) {
    Eigen::VectorXcd vv(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) vv(static_cast<Eigen::Index>(i)) = v[i];
    const Eigen::VectorXcd current = y * vv;
    std::vector<Complex> s(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) s[i] = v[i] * std::conj(current(static_cast<Eigen::Index>(i)));
    return s;
}

/// Largest active/reactive mismatch over the equations the solver enforces:
/// P at PV and PQ buses, Q at PQ buses.
inline double power_mismatch(const PowerSystem& sys, const Eigen::MatrixXcd& y, const std::vector<Complex>& v) {
    const auto sched = scheduled_injections(sys);
    const auto calc = bus_injections(y, v);
    double worst = 0.0;
    for (std::size_t i = 0; i < sys.buses.size(); ++i) {
        const auto kind = sys.buses[i].kind;
        if (kind == BusKind::slack) continue;
        worst = std::max(worst, std::abs(sched[i].real() - calc[i].real()));
        if (kind == BusKind::pq) worst = std::max(worst, std::abs(sched[i].imag() - calc[i].imag()));
    }
    return worst;
}

inline PowerFlowSolution solve_power_flow(const PowerSystem& sys, const PowerFlowOptions& opt = {}) {
    const std::size_t nb = sys.buses.size();
    const Eigen::MatrixXcd y = admittance_matrix(sys);
    const Eigen::MatrixXd g = y.real();
    const Eigen::MatrixXd b = y.imag();
    const auto sched = scheduled_injections(sys);

    std::vector<double> vm(nb, 1.0);
    std::vector<double> va(nb, 0.0);
    std::vector<Eigen::Index> angle_row(nb, -1);
    std::vector<Eigen::Index> mag_row(nb, -1);
    Eigen::Index unknowns = 0;
    for (std::size_t i = 0; i < nb; ++i) {
        const auto& bus = sys.buses[i];
        if (bus.kind != BusKind::pq) vm[i] = bus.voltage_magnitude;
        if (bus.kind == BusKind::slack) va[i] = bus.voltage_angle;
        else angle_row[i] = unknowns++;
    }
    for (std::size_t i = 0; i < nb; ++i)
        if (sys.buses[i].kind == BusKind::pq) mag_row[i] = unknowns++;

    auto phasors = [&] {
        std::vector<Complex> v(nb);
        for (std::size_t i = 0; i < nb; ++i) v[i] = std::polar(vm[i], va[i]);
        return v;
    };

    PowerFlowSolution sol;
    Eigen::VectorXd mismatch(unknowns);
    Eigen::MatrixXd jac(unknowns, unknowns);
    for (int iter = 0;; ++iter) {
        const auto v = phasors();
        const auto calc = bus_injections(y, v);
        double worst = 0.0;
        for (std::size_t i = 0; i < nb; ++i) {
            if (angle_row[i] >= 0) mismatch(angle_row[i]) = sched[i].real() - calc[i].real();
            if (mag_row[i] >= 0) mismatch(mag_row[i]) = sched[i].imag() - calc[i].imag();
        }
        if (unknowns > 0) worst = mismatch.cwiseAbs().maxCoeff();
        sol.iterations = iter;
        sol.max_mismatch = worst;
        if (!std::isfinite(worst)) break;
        if (worst <= opt.tolerance) {
            sol.converged = true;
            break;
        }
        if (iter >= opt.max_iterations) break;

        // Jacobian of [P; Q] with respect to [θ; |V|].
        jac.setZero();
        for (std::size_t i = 0; i < nb; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            for (std::size_t k = 0; k < nb; ++k) {
                const auto kk = static_cast<Eigen::Index>(k);
                if (i != k && g(ii, kk) == 0.0 && b(ii, kk) == 0.0) continue;
                const double t = va[i] - va[k];
                const double gc = g(ii, kk) * std::cos(t);
                const double gs = g(ii, kk) * std::sin(t);
                const double bc = b(ii, kk) * std::cos(t);
                const double bs = b(ii, kk) * std::sin(t);
                if (i == k) {
                    const double p = calc[i].real();
                    const double q = calc[i].imag();
                    const double gii = g(ii, ii);
                    const double bii = b(ii, ii);
                    if (angle_row[i] >= 0) {
                        jac(angle_row[i], angle_row[i]) = -q - bii * vm[i] * vm[i];
                        if (mag_row[i] >= 0) jac(angle_row[i], mag_row[i]) = p / vm[i] + gii * vm[i];
                    }
                    if (mag_row[i] >= 0) {
                        jac(mag_row[i], angle_row[i]) = p - gii * vm[i] * vm[i];
                        jac(mag_row[i], mag_row[i]) = q / vm[i] - bii * vm[i];
                    }
                } else {
                    if (angle_row[i] >= 0) {
                        if (angle_row[k] >= 0) jac(angle_row[i], angle_row[k]) = vm[i] * vm[k] * (gs - bc);
                        if (mag_row[k] >= 0) jac(angle_row[i], mag_row[k]) = vm[i] * (gc + bs);
                    }
                    if (mag_row[i] >= 0) {
                        if (angle_row[k] >= 0) jac(mag_row[i], angle_row[k]) = -vm[i] * vm[k] * (gc + bs);
                        if (mag_row[k] >= 0) jac(mag_row[i], mag_row[k]) = vm[i] * (gs - bc);
                    }
                }
            }
        }
        const Eigen::VectorXd step = jac.partialPivLu().solve(mismatch);
        if (!step.allFinite()) break;
        for (std::size_t i = 0; i < nb; ++i) {
            if (angle_row[i] >= 0) va[i] += step(angle_row[i]);
            if (mag_row[i] >= 0) vm[i] += step(mag_row[i]);
        }
    }

    sol.voltages = phasors();
    const auto calc = bus_injections(y, sol.voltages);
    sol.generator_power.reserve(sys.generators.size());
    for (const auto& gen : sys.generators) {
        const auto i = sys.bus_index(gen.bus);
        Complex load{};
        for (const auto& ld : sys.loads)
            if (ld.bus == gen.bus) load += Complex(ld.p, ld.q);
        sol.generator_power.push_back(calc[i] + load);
    }
    return sol;
}

inline PowerFlowSolution solve_power_flow(const PowerSystem& sys, const ParameterVector& lambda, const PowerFlowOptions& opt = {}) {
    return solve_power_flow(with_parameters(sys, lambda), opt);
}

} // namespace tspca
