#pragma once

// Monte Carlo propagation of parameter uncertainty to the critical clearing
// time, with optional freezing of parameters at their nominal values.

#include "tspca/dynamics.hpp"
#include "tspca/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace tspca {

/// Normal uncertainty with mean = nominal and σ = c_v·|nominal| per class.
struct UncertaintyModel {
    double cv_active_load = 0.05;
    double cv_reactive_load = 0.05;
    double cv_resistance = 0.025;
    double cv_reactance = 0.025;
    double cv_half_shunt = 0.025;
    double truncation = 4.0; // draws outside μ ± truncation·σ are redrawn

    [[nodiscard]] double cv(ParameterKind kind) const {
        switch (kind) {
        case ParameterKind::active_load: return cv_active_load;
        case ParameterKind::reactive_load: return cv_reactive_load;
        case ParameterKind::resistance: return cv_resistance;
        case ParameterKind::reactance: return cv_reactance;
        case ParameterKind::half_shunt: return cv_half_shunt;
        }
        return 0.0;
    }

    void set_load_cv(double cv) { cv_active_load = cv_reactive_load = cv; }
    void set_line_cv(double cv) { cv_resistance = cv_reactance = cv_half_shunt = cv; }
};

struct SampleSet {
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> samples; // N vectors of length m
    std::vector<bool> frozen;                 // true = held at nominal

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
};

/// One truncated normal draw whose stream depends only on (seed, sample, parameter).
/// Nonzero nominal values never change sign.
inline double draw_parameter(std::uint64_t seed, std::size_t sample, std::size_t parameter, double mean, double sigma, double truncation) {
    if (sigma <= 0.0) return mean;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(sample),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(sample) >> 32), static_cast<std::uint32_t>(parameter)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
        const double z = normal(rng);
        if (std::abs(z) > truncation) continue;
        const double v = mean + sigma * z;
        if (mean > 0.0 && v <= 0.0) continue;
        if (mean < 0.0 && v >= 0.0) continue;
        return v;
    }
}

inline SampleSet sample_parameters(const ParameterVector& nominal, const UncertaintyModel& model, std::vector<bool> frozen, std::size_t count,
                                   std::uint64_t seed) {
    if (count == 0) throw std::invalid_argument("at least one sample is required");
    if (frozen.empty()) frozen.assign(nominal.size(), false);
    if (frozen.size() != nominal.size()) throw std::invalid_argument("mask length does not match the parameter vector");
    SampleSet set;
    set.seed = seed;
    set.frozen = std::move(frozen);
    set.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto& row = set.samples[i];
        row.resize(nominal.size());
        for (std::size_t k = 0; k < nominal.size(); ++k) {
            const double mu = nominal[k];
            const double cv = model.cv(nominal.id(k).kind);
            if (cv < 0.0) throw std::invalid_argument("negative coefficient of variation");
            row[k] = set.frozen[k] ? mu : draw_parameter(seed, i, k, mu, cv * std::abs(mu), model.truncation);
        }
    }
    return set;
}

struct CctDistribution {
    std::vector<std::size_t> sample_index; // successful samples, ascending
    std::vector<double> values;            // t_cr for those samples
    std::size_t requested = 0;
    std::size_t failures = 0;
    double mean = 0.0;
    double sigma = 0.0; // N-1 denominator
    bool unreliable = false; // more than 10% failures

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
};

/// Sample mean and N-1 standard deviation by index-ordered accumulation.
inline void summarize(CctDistribution& d) {
    const auto n = d.values.size();
    d.mean = 0.0;
    d.sigma = 0.0;
    if (n == 0) return;
    double sum = 0.0;
    for (double v : d.values) sum += v;
    d.mean = sum / static_cast<double>(n);
    if (n < 2) return;
    double ss = 0.0;
    for (double v : d.values) ss += (v - d.mean) * (v - d.mean);
    d.sigma = std::sqrt(ss / static_cast<double>(n - 1));
}

struct MonteCarloOptions {
    double cct_tolerance = 1e-4;
    std::size_t workers = 0;
    DynamicsOptions dynamics{};
};

/// Critical clearing time for every sample. Samples whose power flow diverges
/// or whose CCT has no bracket are counted as failures and left out.
inline CctDistribution estimate_cct_distribution(const PowerSystem& sys, const ParameterVector& nominal, const SampleSet& set,
                                                 const FaultScenario& scenario, const MonteCarloOptions& opt = {}) {
    const auto n = set.size();
    std::vector<double> tcr(n, std::numeric_limits<double>::quiet_NaN());
    parallel_for(n, opt.workers, [&](std::size_t i) {
        try {
            const auto lambda = nominal.with_values(set.samples[i]);
            const auto r = critical_clearing_time(sys, lambda, scenario, opt.cct_tolerance, opt.dynamics);
            if (r.ok()) tcr[i] = r.t_cr;
        } catch (const ScenarioError&) {
        } catch (const ReductionError&) {
        }
    });
    CctDistribution d;
    d.requested = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isnan(tcr[i])) {
            ++d.failures;
            continue;
        }
        d.sample_index.push_back(i);
        d.values.push_back(tcr[i]);
    }
    d.unreliable = static_cast<double>(d.failures) > 0.1 * static_cast<double>(n);
    summarize(d);
    return d;
}

/// σ²_reduced / σ²_full.
inline double variance_retention(const CctDistribution& full, const CctDistribution& reduced) {
    if (full.values.empty() || reduced.values.empty()) throw std::invalid_argument("variance retention needs two nonempty distributions");
    if (full.sigma == 0.0) throw std::domain_error("variance retention undefined: full distribution has zero variance");
    return (reduced.sigma * reduced.sigma) / (full.sigma * full.sigma);
}

/// σ_reduced / σ_full, reported next to the variance ratio.
inline double sigma_ratio(const CctDistribution& full, const CctDistribution& reduced) {
    if (full.values.empty() || reduced.values.empty()) throw std::invalid_argument("sigma ratio needs two nonempty distributions");
    if (full.sigma == 0.0) throw std::domain_error("sigma ratio undefined: full distribution has zero variance");
    return reduced.sigma / full.sigma;
}

struct Histogram {
    std::vector<double> edges; // bins + 1
    std::vector<std::size_t> counts;
};

inline Histogram histogram(const std::vector<double>& values, std::size_t bins = 30) {
    Histogram h;
    if (values.empty() || bins == 0) return h;
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    if (hi == lo) {
        lo -= 0.5e-4;
        hi += 0.5e-4;
    }
    h.counts.assign(bins, 0);
    for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        h.counts[std::min(b, bins - 1)]++;
    }
    return h;
}

} // namespace tspca
