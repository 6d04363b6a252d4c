#pragma once

// Classical-machine swing equations in the center-of-inertia frame, fixed-step
// RK4 integration of the three periods, and critical clearing time search.

#include "tspca/reduction.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tspca {

class ScenarioError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct FaultScenario {
    int faulted_bus = 0;
    std::string cleared_line;        // line label, e.g. "1-5"
    double max_clearing_time = 2.0;  // upper end of the bisection bracket, s
    double post_fault_horizon = 5.0; // s
};

struct DynamicsOptions {
    double step = 1e-3;
    double instability_angle = std::numbers::pi; // bound on |δ_i - δ_COI|
    PowerFlowOptions power_flow{};
};

/// Rotor angles (rad, COI-relative) and speed deviations (pu).
struct MachineState {
    std::vector<double> delta;
    std::vector<double> omega;

    [[nodiscard]] std::size_t size() const noexcept { return delta.size(); }
};

/// Constant machine data for the swing equations.
struct MachineSet {
    std::vector<double> inertia; // M = 2H, s
    std::vector<double> damping;
    std::vector<double> mechanical_power;
    std::vector<double> emf_magnitude;
    double synchronous_speed = 2.0 * std::numbers::pi * 60.0; // rad/s

    [[nodiscard]] std::size_t size() const noexcept { return inertia.size(); }
    [[nodiscard]] double total_inertia() const {
        double total = 0.0;
        for (double m : inertia) total += m;
        return total;
    }
};

inline MachineSet machine_set(const PowerSystem& sys, const PowerFlowSolution& sol) {
    MachineSet m;
    m.synchronous_speed = 2.0 * std::numbers::pi * sys.frequency;
    const auto emf = internal_emfs(sys, sol);
    for (std::size_t g = 0; g < sys.generators.size(); ++g) {
        m.inertia.push_back(2.0 * sys.generators[g].inertia);
        m.damping.push_back(sys.generators[g].damping);
        m.mechanical_power.push_back(sol.generator_power[g].real());
        m.emf_magnitude.push_back(std::abs(emf[g]));
    }
    return m;
}

inline double center_of_inertia(std::span<const double> values, std::span<const double> inertia) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        num += inertia[i] * values[i];
        den += inertia[i];
    }
    return num / den;
}

inline MachineState project_to_coi(std::span<const double> delta, std::span<const double> omega, std::span<const double> inertia) {
    MachineState s;
    const double dc = center_of_inertia(delta, inertia);
    const double wc = center_of_inertia(omega, inertia);
    for (std::size_t i = 0; i < delta.size(); ++i) {
        s.delta.push_back(delta[i] - dc);
        s.omega.push_back(omega[i] - wc);
    }
    return s;
}

/// Pre-fault equilibrium: internal EMF phases shifted to the COI, zero speed.
inline MachineState initial_state(const PowerFlowSolution& sol, const PowerSystem& sys) {
    const auto emf = internal_emfs(sys, sol);
    std::vector<double> delta;
    std::vector<double> inertia;
    for (std::size_t g = 0; g < emf.size(); ++g) {
        delta.push_back(std::arg(emf[g]));
        inertia.push_back(2.0 * sys.generators[g].inertia);
    }
    const std::vector<double> omega(delta.size(), 0.0);
    return project_to_coi(delta, omega, inertia);
}

/// Swing equations for one reduced network:
///   δ_i' = ω_s ω_i
///   M_i ω_i' = P_m,i - P_e,i(δ) - D_i ω_i - (M_i / M_T) P_COI
/// with P_COI the sum of the bracketed accelerating powers, so the COI of both
/// δ and ω stays at zero.
class SwingModel {
  public:
    SwingModel(const ReducedNetwork& net, MachineSet machines) : machines_(std::move(machines)) {
        const auto n = machines_.size();
        if (static_cast<std::size_t>(net.admittance.rows()) != n) throw std::invalid_argument("network/machine size mismatch");
        cos_coeff_.resize(n * n);
        sin_coeff_.resize(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const auto y = net.admittance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                const double ee = machines_.emf_magnitude[i] * machines_.emf_magnitude[j];
                cos_coeff_[i * n + j] = ee * y.real();
                sin_coeff_[i * n + j] = ee * y.imag();
            }
        total_inertia_ = machines_.total_inertia();
    }

    [[nodiscard]] const MachineSet& machines() const noexcept { return machines_; }
    [[nodiscard]] std::size_t size() const noexcept { return machines_.size(); }

    /// P_e,i = Σ_j |E_i||E_j| (G_ij cos δ_ij + B_ij sin δ_ij).
    void electrical_power(std::span<const double> delta, std::span<double> pe) const {
        const auto n = size();
        thread_local std::vector<double> c;
        thread_local std::vector<double> s;
        c.resize(n);
        s.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            c[i] = std::cos(delta[i]);
            s[i] = std::sin(delta[i]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            double p = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double cij = c[i] * c[j] + s[i] * s[j];
                const double sij = s[i] * c[j] - c[i] * s[j];
                p += cos_coeff_[i * n + j] * cij + sin_coeff_[i * n + j] * sij;
            }
            pe[i] = p;
        }
    }

    /// Derivative of the stacked state [δ; ω].
    void derivative(std::span<const double> x, std::span<double> dx) const {
        const auto n = size();
        const auto delta = x.subspan(0, n);
        const auto omega = x.subspan(n, n);
        electrical_power(delta, dx.subspan(n, n));
        double coi = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double acc = machines_.mechanical_power[i] - dx[n + i] - machines_.damping[i] * omega[i];
            dx[n + i] = acc;
            coi += acc;
        }
        for (std::size_t i = 0; i < n; ++i) {
            dx[n + i] = dx[n + i] / machines_.inertia[i] - coi / total_inertia_;
            dx[i] = machines_.synchronous_speed * omega[i];
        }
    }

  private:
    MachineSet machines_;
    std::vector<double> cos_coeff_;
    std::vector<double> sin_coeff_;
    double total_inertia_ = 0.0;
};

enum class Period { prefault, fault_on, postfault };

/// Time samples of machine states, stored row-major as [δ_1..δ_n, ω_1..ω_n].
class Trajectory {
  public:
    Trajectory() = default;
    Trajectory(std::size_t machines, Period period) : n_(machines), period_(period) {}

    void push(double t, std::span<const double> x) {
        times_.push_back(t);
        data_.insert(data_.end(), x.begin(), x.end());
    }

    [[nodiscard]] std::size_t size() const noexcept { return times_.size(); }
    [[nodiscard]] std::size_t machines() const noexcept { return n_; }
    [[nodiscard]] Period period() const noexcept { return period_; }
    [[nodiscard]] const std::vector<double>& times() const noexcept { return times_; }
    [[nodiscard]] double time(std::size_t k) const { return times_.at(k); }
    [[nodiscard]] double delta(std::size_t k, std::size_t i) const { return data_[k * 2 * n_ + i]; }
    [[nodiscard]] double omega(std::size_t k, std::size_t i) const { return data_[k * 2 * n_ + n_ + i]; }
    [[nodiscard]] std::span<const double> row(std::size_t k) const { return {data_.data() + k * 2 * n_, 2 * n_}; }

    [[nodiscard]] MachineState state(std::size_t k) const {
        auto r = row(k);
        return {{r.begin(), r.begin() + static_cast<std::ptrdiff_t>(n_)}, {r.begin() + static_cast<std::ptrdiff_t>(n_), r.end()}};
    }
    [[nodiscard]] MachineState back() const { return state(size() - 1); }

    bool diverged = false;

  private:
    std::size_t n_ = 0;
    Period period_ = Period::fault_on;
    std::vector<double> times_;
    std::vector<double> data_;
};

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    const auto n = traj.machines();
    os << 't';
    for (std::size_t i = 1; i <= n; ++i) os << ",delta_" << i;
    for (std::size_t i = 1; i <= n; ++i) os << ",omega_" << i;
    os << '\n';
    const auto old = os.precision(12);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        os << traj.time(k);
        for (double v : traj.row(k)) os << ',' << v;
        os << '\n';
    }
    os.precision(old);
}

struct IntegrateOptions {
    bool record = true;
    /// Called after every accepted step with (t, [δ; ω]); returning true stops.
    std::function<bool(double, std::span<const double>)> stop;
};

struct IntegrationResult {
    Trajectory trajectory;
    std::vector<double> final_state; // [δ; ω] at the last computed time
    double final_time = 0.0;
    bool stopped = false;
    bool diverged = false;
};

/// Classical fixed-step RK4 over [t0, t0 + steps·step]. A non-finite state
/// ends the run and marks it diverged.
inline IntegrationResult integrate_steps(const SwingModel& model, std::span<const double> x0, double t0, std::size_t steps,
                                         double step, Period period, const IntegrateOptions& opt = {}) {
    if (!(step > 0.0)) throw std::invalid_argument("integration step must be positive");
    const auto dim = 2 * model.size();
    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);

    IntegrationResult res;
    res.trajectory = Trajectory(model.size(), period);
    if (opt.record) res.trajectory.push(t0, x);
    double t = t0;
    for (std::size_t s = 1; s <= steps; ++s) {
        model.derivative(x, k1);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = x[i] + 0.5 * step * k1[i];
        model.derivative(tmp, k2);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = x[i] + 0.5 * step * k2[i];
        model.derivative(tmp, k3);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = x[i] + step * k3[i];
        model.derivative(tmp, k4);
        bool finite = true;
        for (std::size_t i = 0; i < dim; ++i) {
            x[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            finite = finite && std::isfinite(x[i]);
        }
        t = t0 + static_cast<double>(s) * step;
        if (!finite) {
            res.diverged = true;
            res.trajectory.diverged = true;
            res.final_time = t;
            res.final_state = x;
            return res;
        }
        if (opt.record) res.trajectory.push(t, x);
        if (opt.stop && opt.stop(t, x)) {
            res.stopped = true;
            break;
        }
    }
    res.final_time = t;
    res.final_state = std::move(x);
    return res;
}

inline std::vector<double> stack(const MachineState& s) {
    std::vector<double> x = s.delta;
    x.insert(x.end(), s.omega.begin(), s.omega.end());
    return x;
}

/// Fixed-step RK4 trajectory over t_span with the given step (t_span is
/// rounded to a whole number of steps).
inline Trajectory integrate(const SwingModel& model, const MachineState& x0, double t_span, double step, double t0 = 0.0,
                            Period period = Period::fault_on) {
    if (!(step > 0.0) || t_span < step) throw std::invalid_argument("integrate requires step > 0 and t_span >= step");
    const auto steps = static_cast<std::size_t>(std::llround(t_span / step));
    return integrate_steps(model, stack(x0), t0, steps, step, period).trajectory;
}

/// Number of uniform steps covering an interval with no step longer than `step`.
inline std::size_t steps_covering(double interval, double step) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(interval / step - 1e-9)));
}

struct StabilityVerdict {
    bool stable = true;
    double max_coi_angle = 0.0;
    std::optional<double> diverged_at;
};

/// All data needed to simulate one fault scenario for a given parameter vector.
struct ScenarioModel {
    PowerSystem system; // with λ applied
    PowerFlowSolution power_flow;
    MachineState initial;
    SwingModel prefault;
    SwingModel fault_on;
    SwingModel postfault;
};

inline ScenarioModel prepare_scenario(const PowerSystem& base, const ParameterVector& lambda, const FaultScenario& scenario,
                                      const DynamicsOptions& opt = {}) {
    auto sys = with_parameters(base, lambda);
    auto pf = solve_power_flow(sys, opt.power_flow);
    if (!pf.converged)
        throw ScenarioError("power flow did not converge (max mismatch " + std::to_string(pf.max_mismatch) + " pu after " +
                            std::to_string(pf.iterations) + " iterations)");
    const auto line = sys.line_index(scenario.cleared_line);
    auto machines = machine_set(sys, pf);
    auto pre = reduce_network(sys, pf, Topology::prefault());
    auto fault = reduce_network(sys, pf, Topology::faulted(scenario.faulted_bus));
    auto post = reduce_network(sys, pf, Topology::postfault(line));
    auto x0 = initial_state(pf, sys);
    return ScenarioModel{std::move(sys), std::move(pf), std::move(x0), SwingModel(pre, machines), SwingModel(fault, machines),
                         SwingModel(post, machines)};
}

inline double max_abs_angle(std::span<const double> x, std::size_t n) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(x[i]));
    return worst;
}

struct ScenarioRun {
    Trajectory fault_on;
    Trajectory postfault;
    StabilityVerdict verdict;
};

/// Fault-on integration over (0, t_cl] with the largest uniform step not
/// exceeding opt.step, so t_cl is hit exactly.
inline IntegrationResult run_fault_on(const ScenarioModel& model, double t_cl, const DynamicsOptions& opt, bool record = true) {
    const auto steps = steps_covering(t_cl, opt.step);
    IntegrateOptions io;
    io.record = record;
    return integrate_steps(model.fault_on, stack(model.initial), 0.0, steps, t_cl / static_cast<double>(steps), Period::fault_on, io);
}

/// Post-fault run from `x` at time `t_cl`; unstable once any COI angle leaves
/// ±instability_angle or the integrator overflows.
inline std::pair<IntegrationResult, StabilityVerdict> run_postfault(const ScenarioModel& model, std::span<const double> x, double t_cl,
                                                                     const FaultScenario& scenario, const DynamicsOptions& opt,
                                                                     bool record = true) {
    const auto n = model.postfault.size();
    StabilityVerdict verdict;
    verdict.max_coi_angle = max_abs_angle(x, n);
    if (verdict.max_coi_angle > opt.instability_angle) {
        verdict.stable = false;
        verdict.diverged_at = t_cl;
    }
    IntegrationResult res;
    if (!verdict.stable) {
        res.trajectory = Trajectory(n, Period::postfault);
        if (record) res.trajectory.push(t_cl, x);
        res.final_state.assign(x.begin(), x.end());
        res.final_time = t_cl;
        return {std::move(res), verdict};
    }
    IntegrateOptions io;
    io.record = record;
    io.stop = [&](double t, std::span<const double> state) {
        const double a = max_abs_angle(state, n);
        verdict.max_coi_angle = std::max(verdict.max_coi_angle, a);
        if (a > opt.instability_angle) {
            verdict.stable = false;
            verdict.diverged_at = t;
            return true;
        }
        return false;
    };
    const auto steps = static_cast<std::size_t>(std::llround(scenario.post_fault_horizon / opt.step));
    res = integrate_steps(model.postfault, x, t_cl, steps, opt.step, Period::postfault, io);
    if (res.diverged) {
        verdict.stable = false;
        verdict.diverged_at = res.final_time;
    }
    return {std::move(res), verdict};
}

inline ScenarioRun simulate_scenario(const ScenarioModel& model, const FaultScenario& scenario, double t_cl, const DynamicsOptions& opt = {},
                                     bool record = true) {
    if (!(t_cl > 0.0) || t_cl > scenario.max_clearing_time * (1.0 + 1e-12))
        throw std::invalid_argument("clearing time must lie in (0, max_clearing_time]");
    ScenarioRun run;
    auto fault = run_fault_on(model, t_cl, opt, record);
    run.fault_on = std::move(fault.trajectory);
    if (fault.diverged) {
        run.verdict.stable = false;
        run.verdict.diverged_at = fault.final_time;
        run.verdict.max_coi_angle = std::numeric_limits<double>::infinity();
        return run;
    }
    auto [post, verdict] = run_postfault(model, fault.final_state, t_cl, scenario, opt, record);
    run.postfault = std::move(post.trajectory);
    run.verdict = verdict;
    return run;
}

inline ScenarioRun simulate_scenario(const PowerSystem& sys, const ParameterVector& lambda, const FaultScenario& scenario, double t_cl,
                                     const DynamicsOptions& opt = {}) {
    return simulate_scenario(prepare_scenario(sys, lambda, scenario, opt), scenario, t_cl, opt);
}

/// Stability when clearing at t_cl; t_cl = 0 means the post-fault network is
/// entered directly from the pre-fault equilibrium.
inline bool stable_at(const ScenarioModel& model, const FaultScenario& scenario, double t_cl, const DynamicsOptions& opt) {
    if (t_cl <= 0.0) return run_postfault(model, stack(model.initial), 0.0, scenario, opt, false).second.stable;
    return simulate_scenario(model, scenario, t_cl, opt, false).verdict.stable;
}

struct CctResult {
    enum class Status { converged, stable_beyond_horizon, unstable_at_zero };
    Status status = Status::converged;
    double t_cr = 0.0;
    double lower = 0.0; // last stable clearing time
    double upper = 0.0; // last unstable clearing time
    int iterations = 0;
    std::vector<std::pair<double, double>> brackets; // (stable, unstable) after each step

    [[nodiscard]] bool ok() const noexcept { return status == Status::converged; }
};

inline const char* to_string(CctResult::Status s) {
    switch (s) {
    case CctResult::Status::converged: return "converged";
    case CctResult::Status::stable_beyond_horizon: return "stable beyond horizon";
    case CctResult::Status::unstable_at_zero: return "unstable at zero clearing";
    }
    return "";
}

/// Bisection on t_cl over [0, max_clearing_time] until the bracket is no
/// wider than tol; returns the bracket midpoint.
inline CctResult critical_clearing_time(const ScenarioModel& model, const FaultScenario& scenario, double tol, const DynamicsOptions& opt = {}) {
    if (!(tol > 0.0)) throw std::invalid_argument("bisection tolerance must be positive");
    CctResult res;
    double lo = 0.0;
    double hi = scenario.max_clearing_time;
    if (!stable_at(model, scenario, lo, opt)) {
        res.status = CctResult::Status::unstable_at_zero;
        return res;
    }
    if (stable_at(model, scenario, hi, opt)) {
        res.status = CctResult::Status::stable_beyond_horizon;
        res.lower = hi;
        res.upper = hi;
        res.t_cr = hi;
        return res;
    }
    res.brackets.emplace_back(lo, hi);
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (stable_at(model, scenario, mid, opt)) lo = mid;
        else hi = mid;
        ++res.iterations;
        res.brackets.emplace_back(lo, hi);
    }
    res.lower = lo;
    res.upper = hi;
    res.t_cr = 0.5 * (lo + hi);
    return res;
}

inline CctResult critical_clearing_time(const PowerSystem& sys, const ParameterVector& lambda, const FaultScenario& scenario, double tol,
                                        const DynamicsOptions& opt = {}) {
    return critical_clearing_time(prepare_scenario(sys, lambda, scenario, opt), scenario, tol, opt);
}

struct StabilityScan {
    std::vector<double> clearing_times;
    std::vector<bool> stable;
    std::size_t violations = 0; // stable samples found after an unstable one
};

/// Coarse grid scan used to check that stability is monotone in t_cl.
inline StabilityScan stability_scan(const ScenarioModel& model, const FaultScenario& scenario, std::size_t points,
                                    const DynamicsOptions& opt = {}) {
    StabilityScan scan;
    bool seen_unstable = false;
    for (std::size_t k = 1; k <= points; ++k) {
        const double t = scenario.max_clearing_time * static_cast<double>(k) / static_cast<double>(points);
        const bool s = stable_at(model, scenario, t, opt);
        scan.clearing_times.push_back(t);
        scan.stable.push_back(s);
        if (s && seen_unstable) ++scan.violations;
        seen_unstable = seen_unstable || !s;
    }
    return scan;
}

} // namespace tspca
