#pragma once

// Gram matrix of the normalized sensitivities, its dominant eigenpair, and the
// resulting parameter influence ranking.

#include "tspca/sensitivity.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace tspca {

/// G = Σ_j S̃_jᵀ S̃_j. This is half the Gauss-Newton Hessian of the sampled
/// loss at p0; the factor 2 is not stored.
struct GramMatrix {
    Eigen::MatrixXd matrix;

    [[nodiscard]] Eigen::Index size() const noexcept { return matrix.rows(); }
};

namespace detail {

// Fixed-shape pairwise summation over [lo, hi): the association order depends
// only on the number of terms.
inline Eigen::MatrixXd pairwise_gram(const std::vector<Eigen::MatrixXd>& s, std::size_t lo, std::size_t hi) {
    if (hi - lo == 1) return s[lo].transpose() * s[lo];
    const auto mid = lo + (hi - lo) / 2;
    return pairwise_gram(s, lo, mid) + pairwise_gram(s, mid, hi);
}

} // namespace detail

inline GramMatrix gram(const std::vector<Eigen::MatrixXd>& series) {
    if (series.empty()) throw std::invalid_argument("gram matrix of an empty series");
    for (const auto& s : series)
        if (s.rows() != series.front().rows() || s.cols() != series.front().cols())
            throw std::invalid_argument("sensitivity matrices differ in shape");
    GramMatrix g{detail::pairwise_gram(series, 0, series.size())};
    // The two triangles of each product are computed by different dot-product
    // orders; mirror the lower one so G is exactly symmetric.
    const Eigen::MatrixXd lower = g.matrix.triangularView<Eigen::Lower>();
    g.matrix = lower.selfadjointView<Eigen::Lower>();
    return g;
}

inline GramMatrix gram(const NormalizedSensitivitySeries& series) { return gram(series.matrices); }

struct EigenPair {
    double value = 0.0;   // π_max
    Eigen::VectorXd vector; // u_max, unit norm
    int iterations = 0;
    double residual = 0.0; // ‖G u - π u‖₂
    bool converged = false;
};

namespace detail {

inline void fix_sign(Eigen::VectorXd& u) {
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < u.size(); ++k)
        if (std::abs(u(k)) > std::abs(u(arg))) arg = k;
    if (u(arg) < 0.0) u = -u;
}

} // namespace detail

/// Power iteration from a fixed, dense start vector. Stops once
/// ‖G u - π u‖₂ ≤ tol·π with π the Rayleigh quotient; `converged` stays false
/// if that does not happen within max_iter (close top eigenvalues).
inline EigenPair power_iteration(const GramMatrix& g, double tol = 1e-10, int max_iter = 100000) {
    const auto m = g.size();
    if (m == 0) throw std::invalid_argument("power iteration on an empty matrix");
    if (g.matrix.cwiseAbs().maxCoeff() == 0.0) throw std::invalid_argument("power iteration on a zero matrix");

    Eigen::VectorXd u(m);
    for (Eigen::Index k = 0; k < m; ++k) u(k) = 1.0 + 0.5 * std::sin(1.0 + 2.0 * static_cast<double>(k));
    u.normalize();

    EigenPair out;
    Eigen::VectorXd w(m);
    for (int it = 1; it <= max_iter; ++it) {
        w.noalias() = g.matrix * u;
        const double pi = u.dot(w);
        const double res = (w - pi * u).norm();
        out.iterations = it;
        out.value = pi;
        out.residual = res;
        if (res <= tol * std::abs(pi)) {
            out.converged = true;
            break;
        }
        const double norm = w.norm();
        if (norm == 0.0) break;
        u = w / norm;
    }
    detail::fix_sign(u);
    out.vector = u;
    return out;
}

struct Eigendecomposition {
    Eigen::VectorXd values;  // descending
    Eigen::MatrixXd vectors; // columns, same order
};

/// Dense symmetric eigendecomposition G = U Π Uᵀ, eigenvalues descending.
/// Intended for diagnostics; refuses matrices larger than `cap`.
inline Eigendecomposition full_eigendecomposition(const GramMatrix& g, Eigen::Index cap = 500) {
    if (g.size() > cap) throw std::invalid_argument("matrix of size " + std::to_string(g.size()) + " exceeds the dense eigendecomposition cap");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g.matrix);
    if (solver.info() != Eigen::Success) throw std::runtime_error("dense eigendecomposition failed");
    Eigendecomposition out;
    out.values = solver.eigenvalues().reverse();
    out.vectors = solver.eigenvectors().rowwise().reverse();
    for (Eigen::Index c = 0; c < out.vectors.cols(); ++c) {
        Eigen::VectorXd col = out.vectors.col(c);
        detail::fix_sign(col);
        out.vectors.col(c) = col;
    }
    return out;
}

/// ρ = Uᵀ (p - p0) for a log-parameter displacement.
inline Eigen::VectorXd principal_components(const Eigendecomposition& d, const Eigen::VectorXd& log_displacement) {
    return d.vectors.transpose() * log_displacement;
}

/// Power iteration, falling back to the dense solver when it does not
/// converge and the matrix is small enough.
inline EigenPair dominant_eigenpair(const GramMatrix& g, double tol = 1e-10, int max_iter = 100000, Eigen::Index cap = 500) {
    auto pair = power_iteration(g, tol, max_iter);
    if (pair.converged || g.size() > cap) return pair;
    const auto d = full_eigendecomposition(g, cap);
    pair.value = d.values(0);
    pair.vector = d.vectors.col(0);
    pair.residual = (g.matrix * pair.vector - pair.value * pair.vector).norm();
    pair.converged = true;
    return pair;
}

struct InfluenceEntry {
    std::size_t parameter = 0; // index into λ
    std::string id;
    double share = 0.0;
    double cumulative = 0.0;
    bool selected = false;
};

struct InfluenceRanking {
    std::vector<InfluenceEntry> entries; // descending share, ties by index
    std::vector<std::size_t> selected;   // parameter indices, ranking order
    double threshold = 0.0;
    double cumulative_share = 0.0; // of the selected set

    [[nodiscard]] std::vector<bool> frozen_mask(std::size_t m) const {
        std::vector<bool> frozen(m, true);
        for (auto k : selected) frozen.at(k) = false;
        return frozen;
    }
};

/// Influence share of parameter k is (u_max,k)², renormalized to sum to one.
/// The selected set is the shortest prefix of the ranking whose cumulative
/// share reaches the threshold; a threshold of 1 selects every parameter,
/// including those with zero share.
inline InfluenceRanking rank_parameters(const EigenPair& pair, const std::vector<std::string>& ids, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must lie in (0, 1]");
    const auto m = static_cast<std::size_t>(pair.vector.size());
    if (ids.size() != m) throw std::invalid_argument("parameter ids do not match the eigenvector");

    const double total = pair.vector.squaredNorm();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> share(m);
    for (std::size_t k = 0; k < m; ++k) share[k] = pair.vector(static_cast<Eigen::Index>(k)) * pair.vector(static_cast<Eigen::Index>(k)) / total;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return share[a] > share[b]; });

    InfluenceRanking out;
    out.threshold = threshold;
    double cumulative = 0.0;
    bool done = false;
    for (auto k : order) {
        cumulative += share[k];
        InfluenceEntry e{k, ids[k], share[k], cumulative, !done};
        if (!done) {
            out.selected.push_back(k);
            out.cumulative_share = cumulative;
            done = threshold < 1.0 && cumulative + 1e-12 >= threshold;
        }
        out.entries.push_back(std::move(e));
    }
    return out;
}

} // namespace tspca
