#pragma once

// Kron reduction of the network to the generator internal nodes for the
// pre-fault, fault-on and post-fault topologies.

#include "tspca/powerflow.hpp"

#include <Eigen/LU>

#include <stdexcept>
#include <vector>

namespace tspca {

class ReductionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Topology {
    enum class Kind { prefault, faulted, postfault };
    Kind kind = Kind::prefault;
    int faulted_bus = 0;        // for Kind::faulted
    std::size_t removed_line = 0; // for Kind::postfault, index into PowerSystem::lines

    static Topology prefault() { return {}; }
    static Topology faulted(int bus) { return {Kind::faulted, bus, 0}; }
    static Topology postfault(std::size_t line) { return {Kind::postfault, 0, line}; }
};

struct ReducedNetwork {
    Eigen::MatrixXcd admittance;      // n×n among internal nodes
    std::vector<Complex> internal_emf; // E'∠δ per generator, absolute angles
};

/// Internal EMF behind x'_d for every generator: E' = V + j x'_d conj(S/V).
inline std::vector<Complex> internal_emfs(const PowerSystem& sys, const PowerFlowSolution& sol) {
    std::vector<Complex> e;
    e.reserve(sys.generators.size());
    for (std::size_t g = 0; g < sys.generators.size(); ++g) {
        const auto& gen = sys.generators[g];
        const Complex v = sol.voltages[sys.bus_index(gen.bus)];
        const Complex current = std::conj(sol.generator_power[g] / v);
        e.push_back(v + Complex(0.0, gen.transient_reactance) * current);
    }
    return e;
}

/// Loads become constant admittances y = conj(S)/|V|² from the pre-fault
/// voltages; the bus with a solid fault is a zero-voltage node and drops out.
inline ReducedNetwork reduce_network(const PowerSystem& sys, const PowerFlowSolution& sol, const Topology& topo) {
    if (!sol.converged) throw ReductionError("cannot reduce around a non-converged power flow");
    const auto ng = static_cast<Eigen::Index>(sys.generators.size());
    const auto nb = static_cast<Eigen::Index>(sys.buses.size());

    std::optional<std::size_t> skip;
    if (topo.kind == Topology::Kind::postfault) {
        if (topo.removed_line >= sys.lines.size()) throw ReductionError("removed line does not exist");
        skip = topo.removed_line;
    }
    Eigen::Index faulted = -1;
    if (topo.kind == Topology::Kind::faulted) {
        if (!sys.has_bus(topo.faulted_bus)) throw ReductionError("faulted bus " + std::to_string(topo.faulted_bus) + " does not exist");
        faulted = static_cast<Eigen::Index>(sys.bus_index(topo.faulted_bus));
    }

    // Augmented matrix: internal nodes 0..ng-1, then the buses.
    Eigen::MatrixXcd full = Eigen::MatrixXcd::Zero(ng + nb, ng + nb);
    full.bottomRightCorner(nb, nb) = admittance_matrix(sys, skip);
    for (const auto& ld : sys.loads) {
        const auto i = static_cast<Eigen::Index>(sys.bus_index(ld.bus));
        const double vm2 = std::norm(sol.voltages[static_cast<std::size_t>(i)]);
        full(ng + i, ng + i) += std::conj(Complex(ld.p, ld.q)) / vm2;
    }
    for (Eigen::Index g = 0; g < ng; ++g) {
        const auto& gen = sys.generators[static_cast<std::size_t>(g)];
        const auto i = ng + static_cast<Eigen::Index>(sys.bus_index(gen.bus));
        const Complex y = 1.0 / Complex(0.0, gen.transient_reactance);
        full(g, g) += y;
        full(i, i) += y;
        full(g, i) -= y;
        full(i, g) -= y;
    }

    // Buses with no path to an internal node (other than through the fault)
    // carry no current and drop out with it.
    std::vector<bool> reached(static_cast<std::size_t>(ng + nb), false);
    std::vector<Eigen::Index> queue;
    for (Eigen::Index g = 0; g < ng; ++g) {
        reached[static_cast<std::size_t>(g)] = true;
        queue.push_back(g);
    }
    while (!queue.empty()) {
        const auto a = queue.back();
        queue.pop_back();
        for (Eigen::Index b = 0; b < ng + nb; ++b) {
            if ((faulted >= 0 && b == ng + faulted) || reached[static_cast<std::size_t>(b)] || full(a, b) == Complex(0.0)) continue;
            reached[static_cast<std::size_t>(b)] = true;
            queue.push_back(b);
        }
    }
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < nb; ++i)
        if (i != faulted && reached[static_cast<std::size_t>(ng + i)]) keep.push_back(ng + i);
    const auto nk = static_cast<Eigen::Index>(keep.size());

    Eigen::MatrixXcd ybb(nk, nk);
    Eigen::MatrixXcd ybg(nk, ng);
    for (Eigen::Index r = 0; r < nk; ++r) {
        for (Eigen::Index c = 0; c < nk; ++c) ybb(r, c) = full(keep[r], keep[c]);
        for (Eigen::Index c = 0; c < ng; ++c) ybg(r, c) = full(keep[r], c);
    }

    ReducedNetwork out;
    out.internal_emf = internal_emfs(sys, sol);
    if (nk == 0) {
        out.admittance = full.topLeftCorner(ng, ng);
        return out;
    }
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(ybb);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) throw ReductionError("singular reduction submatrix");
    out.admittance = full.topLeftCorner(ng, ng) - ybg.transpose() * lu.solve(ybg);
    if (!out.admittance.allFinite()) throw ReductionError("non-finite reduced admittance");
    return out;
}

} // namespace tspca
