#pragma once

// JSON and CSV renderings of analysis results.

#include "tspca/montecarlo.hpp"
#include "tspca/pca.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

namespace tspca::report {

using nlohmann::json;

inline json to_json(const FaultScenario& s) {
    return {{"faulted_bus", s.faulted_bus},
            {"cleared_line", s.cleared_line},
            {"max_clearing_time", s.max_clearing_time},
            {"post_fault_horizon", s.post_fault_horizon}};
}

inline const char* to_string(BusKind k) {
    switch (k) {
    case BusKind::slack: return "slack";
    case BusKind::pv: return "pv";
    case BusKind::pq: return "pq";
    }
    return "";
}

inline json to_json(const PowerSystem& sys, const PowerFlowSolution& sol) {
    const auto s = bus_injections(admittance_matrix(sys), sol.voltages);
    json buses = json::array();
    for (std::size_t i = 0; i < sys.buses.size(); ++i)
        buses.push_back({{"id", sys.buses[i].id},
                         {"type", to_string(sys.buses[i].kind)},
                         {"vm", std::abs(sol.voltages[i])},
                         {"va_deg", std::arg(sol.voltages[i]) * 180.0 / std::numbers::pi},
                         {"p", s[i].real()},
                         {"q", s[i].imag()}});
    json gens = json::array();
    for (std::size_t g = 0; g < sys.generators.size(); ++g)
        gens.push_back({{"bus", sys.generators[g].bus}, {"p", sol.generator_power[g].real()}, {"q", sol.generator_power[g].imag()}});
    return {{"converged", sol.converged}, {"iterations", sol.iterations}, {"max_mismatch", sol.max_mismatch}, {"buses", buses}, {"generators", gens}};
}

inline void write_powerflow_table(std::ostream& os, const PowerSystem& sys, const PowerFlowSolution& sol) {
    const auto s = bus_injections(admittance_matrix(sys), sol.voltages);
    os << (sol.converged ? "converged" : "NOT converged") << " in " << sol.iterations << " iterations, max mismatch " << std::scientific
       << std::setprecision(3) << sol.max_mismatch << std::defaultfloat << " pu\n";
    os << "  bus  type      |V| pu   angle deg     P inj pu     Q inj pu\n";
    for (std::size_t i = 0; i < sys.buses.size(); ++i) {
        os << std::setw(5) << sys.buses[i].id << "  " << std::left << std::setw(5) << to_string(sys.buses[i].kind) << std::right << std::fixed
           << std::setprecision(5) << std::setw(10) << std::abs(sol.voltages[i]) << std::setw(12) << std::setprecision(4)
           << std::arg(sol.voltages[i]) * 180.0 / std::numbers::pi << std::setw(13) << std::setprecision(5) << s[i].real() << std::setw(13)
           << s[i].imag() << '\n';
    }
    os << std::defaultfloat;
}

inline json to_json(const CctResult& r) {
    json j{{"status", to_string(r.status)}, {"iterations", r.iterations}};
    if (r.ok()) {
        j["t_cr"] = r.t_cr;
        j["bracket"] = {r.lower, r.upper};
    }
    return j;
}

inline json to_json(const InfluenceRanking& r, const EigenPair& pair) {
    json entries = json::array();
    json selected = json::array();
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
        const auto& e = r.entries[i];
        entries.push_back({{"rank", i + 1}, {"parameter_id", e.id}, {"share", e.share}, {"cumulative_share", e.cumulative}, {"selected", e.selected}});
        if (e.selected) selected.push_back(e.id);
    }
    return {{"threshold", r.threshold},
            {"cumulative_share", r.cumulative_share},
            {"pi_max", pair.value},
            {"residual", pair.residual},
            {"power_iterations", pair.iterations},
            {"selected", selected},
            {"entries", entries}};
}

inline void write_ranking_csv(std::ostream& os, const InfluenceRanking& r) {
    os << "rank,parameter_id,share,cumulative_share,selected\n";
    const auto old = os.precision(17);
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
        const auto& e = r.entries[i];
        os << i + 1 << ',' << e.id << ',' << e.share << ',' << e.cumulative << ',' << (e.selected ? 1 : 0) << '\n';
    }
    os.precision(old);
}

/// Selected parameter ids from a ranking written by write_ranking_csv or the
/// JSON report (detected by a leading '{').
inline std::vector<std::string> read_selected(const std::string& text) {
    std::vector<std::string> ids;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        const auto j = json::parse(text);
        for (const auto& id : j.at("selected")) ids.push_back(id.get<std::string>());
        return ids;
    }
    std::istringstream in(text);
    std::string row;
    std::getline(in, row);
    if (row.rfind("rank,parameter_id", 0) != 0) throw std::runtime_error("not a ranking CSV");
    while (std::getline(in, row)) {
        if (row.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(row);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 5) throw std::runtime_error("malformed ranking row: " + row);
        if (cells[4] == "1" || cells[4] == "true") ids.push_back(cells[1]);
    }
    return ids;
}

inline json to_json(const CctDistribution& d) {
    return {{"N", d.requested}, {"successful", d.size()}, {"failures", d.failures}, {"unreliable", d.unreliable}, {"mu", d.mean}, {"sigma", d.sigma}};
}

inline void write_values_csv(std::ostream& os, const CctDistribution& d) {
    os << "sample,t_cr\n";
    const auto old = os.precision(17);
    for (std::size_t i = 0; i < d.size(); ++i) os << d.sample_index[i] << ',' << d.values[i] << '\n';
    os.precision(old);
}

inline void write_histogram_csv(std::ostream& os, const Histogram& h) {
    os << "bin_lo,bin_hi,count\n";
    const auto old = os.precision(17);
    for (std::size_t b = 0; b < h.counts.size(); ++b) os << h.edges[b] << ',' << h.edges[b + 1] << ',' << h.counts[b] << '\n';
    os.precision(old);
}

inline std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << contents;
}

} // namespace tspca::report
