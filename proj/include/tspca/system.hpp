#pragma once

// Static network description, its text format, and the uncertain-parameter
// vector [P_L; Q_L; R; X; B/2] that the rest of the library perturbs.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tspca {

/// Raised for malformed or inconsistent system descriptions. `line()` is the
/// 1-based source line, or 0 when the problem is not tied to one record.
class ParseError : public std::runtime_error {
  public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

enum class BusKind { slack, pv, pq };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::pq;
    double voltage_magnitude = 1.0; // setpoint for slack/PV, initial guess otherwise
    double voltage_angle = 0.0;     // radians; only the slack value is used
    double base_kv = 0.0;
    double shunt_g = 0.0; // fixed bus shunt, pu
    double shunt_b = 0.0;
};

struct Line {
    int from_bus = 0;
    int to_bus = 0;
    double resistance = 0.0;
    double reactance = 0.0;
    double half_shunt = 0.0; // B/2 at each end
    bool in_service = true;
    std::string label; // "from-to" unless given explicitly

    [[nodiscard]] bool connects(int a, int b) const noexcept {
        return (from_bus == a && to_bus == b) || (from_bus == b && to_bus == a);
    }
};

struct Load {
    int bus = 0;
    double p = 0.0;
    double q = 0.0;
};

struct Generator {
    int bus = 0;
    double inertia = 0.0;             // H, seconds on system base
    double damping = 0.0;             // D, pu torque / pu speed
    double transient_reactance = 0.0; // x'_d
    double scheduled_power = 0.0;     // active-power setpoint for PV machines
};

struct PowerSystem {
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<Load> loads;
    std::vector<Generator> generators;
    double mva_base = 100.0;
    double frequency = 60.0;

    [[nodiscard]] std::size_t bus_index(int id) const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].id == id) return i;
        throw std::out_of_range("unknown bus " + std::to_string(id));
    }

    [[nodiscard]] bool has_bus(int id) const noexcept {
        return std::any_of(buses.begin(), buses.end(), [id](const Bus& b) { return b.id == id; });
    }

    [[nodiscard]] std::size_t slack_index() const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].kind == BusKind::slack) return i;
        throw std::logic_error("system has no slack bus");
    }

    /// Index of the line with the given label ("1-5") or, failing that, the
    /// first in-service line joining the two buses named by the label.
    [[nodiscard]] std::size_t line_index(std::string_view label) const {
        for (std::size_t i = 0; i < lines.size(); ++i)
            if (lines[i].label == label) return i;
        if (auto dash = label.find('-'); dash != std::string_view::npos) {
            int a = 0;
            int b = 0;
            auto r1 = std::from_chars(label.data(), label.data() + dash, a);
            auto r2 = std::from_chars(label.data() + dash + 1, label.data() + label.size(), b);
            if (r1.ec == std::errc{} && r2.ec == std::errc{})
                for (std::size_t i = 0; i < lines.size(); ++i)
                    if (lines[i].connects(a, b)) return i;
        }
        throw std::out_of_range("unknown line " + std::string(label));
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

class Record {
  public:
    Record(std::size_t line, std::map<std::string, std::string> fields) : line_(line), fields_(std::move(fields)) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

    [[nodiscard]] bool has(const std::string& key) const { return fields_.count(key) != 0; }

    [[nodiscard]] const std::string& text(const std::string& key) const {
        auto it = fields_.find(key);
        if (it == fields_.end()) throw ParseError(line_, "missing field '" + key + "'");
        used_.push_back(key);
        return it->second;
    }

    [[nodiscard]] double number(const std::string& key) const {
        const auto& s = text(key);
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
            throw ParseError(line_, "field '" + key + "' is not a finite number: '" + s + "'");
        return v;
    }

    [[nodiscard]] double number_or(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }

    [[nodiscard]] int integer(const std::string& key) const {
        const auto& s = text(key);
        int v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size())
            throw ParseError(line_, "field '" + key + "' is not an integer: '" + s + "'");
        return v;
    }

    void reject_unknown() const {
        for (const auto& [key, value] : fields_)
            if (std::find(used_.begin(), used_.end(), key) == used_.end())
                throw ParseError(line_, "unknown field '" + key + "'");
    }

  private:
    std::size_t line_;
    std::map<std::string, std::string> fields_;
    mutable std::vector<std::string> used_;
};

inline Record parse_fields(std::size_t line_no, std::string_view body) {
    std::map<std::string, std::string> fields;
    std::size_t start = 0;
    while (start <= body.size()) {
        auto comma = body.find(',', start);
        auto item = trim(body.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (item.empty()) throw ParseError(line_no, "empty field");
        auto eq = item.find('=');
        if (eq == std::string_view::npos) throw ParseError(line_no, "expected key=value, got '" + std::string(item) + "'");
        auto key = lower(trim(item.substr(0, eq)));
        auto value = std::string(trim(item.substr(eq + 1)));
        if (key.empty() || value.empty()) throw ParseError(line_no, "empty key or value in '" + std::string(item) + "'");
        if (!fields.emplace(key, value).second) throw ParseError(line_no, "repeated field '" + key + "'");
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return Record(line_no, std::move(fields));
}

} // namespace detail

/// Checks every structural invariant of a system. Throws ParseError with
/// line 0 since the system may not have come from text.
inline void validate(const PowerSystem& sys) {
    auto fail = [](const std::string& msg) { throw ParseError(0, msg); };
    if (sys.buses.empty()) fail("system has no buses");
    if (!(sys.mva_base > 0.0) || !(sys.frequency > 0.0)) fail("base MVA and frequency must be positive");

    std::size_t slack_count = 0;
    for (const auto& b : sys.buses) {
        if (b.kind == BusKind::slack) ++slack_count;
        if (!(b.voltage_magnitude > 0.0)) fail("bus " + std::to_string(b.id) + ": voltage magnitude must be positive");
    }
    if (slack_count != 1) fail("expected exactly one slack bus, found " + std::to_string(slack_count));

    for (const auto& l : sys.lines) {
        const auto name = "line " + l.label;
        if (!sys.has_bus(l.from_bus) || !sys.has_bus(l.to_bus)) fail(name + ": dangling bus reference");
        if (l.from_bus == l.to_bus) fail(name + ": from and to bus coincide");
        if (l.reactance == 0.0) fail(name + ": zero reactance");
        if (l.resistance < 0.0) fail(name + ": negative resistance");
        if (l.half_shunt < 0.0) fail(name + ": negative shunt");
    }
    for (std::size_t i = 0; i < sys.lines.size(); ++i)
        for (std::size_t j = i + 1; j < sys.lines.size(); ++j)
            if (sys.lines[i].label == sys.lines[j].label) fail("duplicate line id " + sys.lines[i].label);

    std::vector<int> seen;
    for (const auto& ld : sys.loads) {
        if (!sys.has_bus(ld.bus)) fail("load: dangling bus reference " + std::to_string(ld.bus));
        if (ld.p < 0.0) fail("load at bus " + std::to_string(ld.bus) + ": negative active power");
        if (std::find(seen.begin(), seen.end(), ld.bus) != seen.end()) fail("duplicate load at bus " + std::to_string(ld.bus));
        seen.push_back(ld.bus);
    }
    seen.clear();
    for (const auto& g : sys.generators) {
        const auto name = "generator at bus " + std::to_string(g.bus);
        if (!sys.has_bus(g.bus)) fail(name + ": dangling bus reference");
        if (!(g.inertia > 0.0)) fail(name + ": inertia must be positive");
        if (!(g.transient_reactance > 0.0)) fail(name + ": transient reactance must be positive");
        if (g.damping < 0.0) fail(name + ": negative damping");
        if (sys.buses[sys.bus_index(g.bus)].kind == BusKind::pq) fail(name + ": generator on a PQ bus");
        if (std::find(seen.begin(), seen.end(), g.bus) != seen.end()) fail("duplicate generator at bus " + std::to_string(g.bus));
        seen.push_back(g.bus);
    }
    for (const auto& b : sys.buses)
        if (b.kind != BusKind::pq && std::find(seen.begin(), seen.end(), b.id) == seen.end())
            fail("bus " + std::to_string(b.id) + ": slack/PV bus without a generator");

    // Connectivity over in-service lines.
    std::vector<std::size_t> parent(sys.buses.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& l : sys.lines)
        if (l.in_service) parent[find(sys.bus_index(l.from_bus))] = find(sys.bus_index(l.to_bus));
    for (std::size_t i = 1; i < parent.size(); ++i)
        if (find(i) != find(0)) fail("network is not connected (bus " + std::to_string(sys.buses[i].id) + " is islanded)");
}

/// Parses the sectioned text format:
///
///     [base]       base: mva=100, frequency=60
///     [buses]      bus: id=1, type=slack, v=1.06, angle=0, base_kv=69, gs=0, bs=0
///     [lines]      line: from=1, to=5, r=0.05403, x=0.22304, b2=0.0246, status=1, id=1-5
///     [generators] generator: bus=1, h=5, d=0, xd=0.25, p=0
///     [loads]      load: bus=2, p=0.217, q=0.127
///
/// `#` starts a comment. Values are per unit on the system base.
inline PowerSystem parse_system(std::string_view text) {
    PowerSystem sys;
    std::string section;
    std::size_t line_no = 0;
    bool have_base = false;
    std::vector<std::size_t> line_records;

    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        auto ln = detail::trim(raw);
        if (ln.empty()) continue;

        if (ln.front() == '[') {
            if (ln.back() != ']') throw ParseError(line_no, "unterminated section header");
            section = detail::lower(detail::trim(ln.substr(1, ln.size() - 2)));
            if (section != "base" && section != "buses" && section != "lines" && section != "generators" && section != "loads")
                throw ParseError(line_no, "unknown section [" + section + "]");
            continue;
        }
        if (section.empty()) throw ParseError(line_no, "record outside of any section");

        auto colon = ln.find(':');
        if (colon == std::string_view::npos) throw ParseError(line_no, "expected '<kind>: key=value, ...'");
        auto kind = detail::lower(detail::trim(ln.substr(0, colon)));
        const std::map<std::string, std::string> expected{
            {"base", "base"}, {"buses", "bus"}, {"lines", "line"}, {"generators", "generator"}, {"loads", "load"}};
        if (kind != expected.at(section))
            throw ParseError(line_no, "record '" + kind + "' not allowed in section [" + section + "]");
        auto rec = detail::parse_fields(line_no, ln.substr(colon + 1));

        if (kind == "base") {
            if (have_base) throw ParseError(line_no, "duplicate base record");
            sys.mva_base = rec.number_or("mva", 100.0);
            sys.frequency = rec.number_or("frequency", 60.0);
            have_base = true;
        } else if (kind == "bus") {
            Bus b;
            b.id = rec.integer("id");
            auto type = detail::lower(rec.text("type"));
            if (type == "slack") b.kind = BusKind::slack;
            else if (type == "pv") b.kind = BusKind::pv;
            else if (type == "pq") b.kind = BusKind::pq;
            else throw ParseError(line_no, "unknown bus type '" + type + "'");
            b.voltage_magnitude = rec.number_or("v", 1.0);
            b.voltage_angle = rec.number_or("angle", 0.0);
            b.base_kv = rec.number_or("base_kv", 0.0);
            b.shunt_g = rec.number_or("gs", 0.0);
            b.shunt_b = rec.number_or("bs", 0.0);
            if (!(b.voltage_magnitude > 0.0)) throw ParseError(line_no, "voltage magnitude must be positive");
            if (sys.has_bus(b.id)) throw ParseError(line_no, "duplicate bus id " + std::to_string(b.id));
            sys.buses.push_back(b);
        } else if (kind == "line") {
            Line l;
            l.from_bus = rec.integer("from");
            l.to_bus = rec.integer("to");
            l.resistance = rec.number_or("r", 0.0);
            l.reactance = rec.number("x");
            l.half_shunt = rec.number_or("b2", 0.0);
            l.in_service = rec.has("status") ? rec.integer("status") != 0 : true;
            l.label = rec.has("id") ? rec.text("id") : std::to_string(l.from_bus) + "-" + std::to_string(l.to_bus);
            if (l.reactance == 0.0) throw ParseError(line_no, "zero reactance");
            if (l.from_bus == l.to_bus) throw ParseError(line_no, "from and to bus coincide");
            for (const auto& other : sys.lines)
                if (other.label == l.label) throw ParseError(line_no, "duplicate line id " + l.label);
            sys.lines.push_back(l);
            line_records.push_back(line_no);
        } else if (kind == "generator") {
            Generator g;
            g.bus = rec.integer("bus");
            g.inertia = rec.number("h");
            g.damping = rec.number_or("d", 0.0);
            g.transient_reactance = rec.number("xd");
            g.scheduled_power = rec.number_or("p", 0.0);
            for (const auto& other : sys.generators)
                if (other.bus == g.bus) throw ParseError(line_no, "duplicate generator at bus " + std::to_string(g.bus));
            sys.generators.push_back(g);
        } else {
            Load ld;
            ld.bus = rec.integer("bus");
            ld.p = rec.number("p");
            ld.q = rec.number_or("q", 0.0);
            for (const auto& other : sys.loads)
                if (other.bus == ld.bus) throw ParseError(line_no, "duplicate load at bus " + std::to_string(ld.bus));
            sys.loads.push_back(ld);
        }
        rec.reject_unknown();
    }

    // Cross-references are resolved after all sections are read, but dangling
    // line references still point at the offending record.
    for (std::size_t i = 0; i < sys.lines.size(); ++i) {
        const auto& l = sys.lines[i];
        for (int id : {l.from_bus, l.to_bus})
            if (!sys.has_bus(id)) throw ParseError(line_records[i], "line " + l.label + " references unknown bus " + std::to_string(id));
    }
    validate(sys);
    return sys;
}

inline PowerSystem load_system(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open system file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_system(ss.str());
}

// ---------------------------------------------------------------------------
// Parameter vector
// ---------------------------------------------------------------------------

enum class ParameterKind { active_load, reactive_load, resistance, reactance, half_shunt };

/// Identifies one uncertain parameter: its class and the index of the load or
/// line it belongs to.
struct ParameterId {
    ParameterKind kind = ParameterKind::active_load;
    std::size_t element = 0;

    [[nodiscard]] bool is_load() const noexcept {
        return kind == ParameterKind::active_load || kind == ParameterKind::reactive_load;
    }

    friend bool operator==(const ParameterId&, const ParameterId&) = default;
};

/// Labels follow the usual notation: P_L3, Q_L3, R_1-2, X_1-2, B_1-2.
inline std::string parameter_label(const PowerSystem& sys, const ParameterId& id) {
    switch (id.kind) {
    case ParameterKind::active_load: return "P_L" + std::to_string(sys.loads.at(id.element).bus);
    case ParameterKind::reactive_load: return "Q_L" + std::to_string(sys.loads.at(id.element).bus);
    case ParameterKind::resistance: return "R_" + sys.lines.at(id.element).label;
    case ParameterKind::reactance: return "X_" + sys.lines.at(id.element).label;
    case ParameterKind::half_shunt: return "B_" + sys.lines.at(id.element).label;
    }
    return {};
}

/// λ with its index map. Order is fixed: all P_L, all Q_L, then R, X and B/2
/// for every line, each block in declaration order.
class ParameterVector {
  public:
    ParameterVector() = default;

    ParameterVector(std::vector<ParameterId> ids, std::vector<std::string> labels, std::vector<double> values)
        : ids_(std::move(ids)), labels_(std::move(labels)), values_(std::move(values)) {
        if (ids_.size() != values_.size() || labels_.size() != values_.size())
            throw std::invalid_argument("parameter ids, labels and values differ in length");
        for (std::size_t k = 0; k < labels_.size(); ++k)
            if (!position_.emplace(labels_[k], k).second) throw std::invalid_argument("duplicate parameter id " + labels_[k]);
    }

    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] double operator[](std::size_t k) const { return values_[k]; }
    [[nodiscard]] double& operator[](std::size_t k) { return values_[k]; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] std::vector<double>& values() noexcept { return values_; }
    [[nodiscard]] const ParameterId& id(std::size_t k) const { return ids_.at(k); }
    [[nodiscard]] const std::string& label(std::size_t k) const { return labels_.at(k); }
    [[nodiscard]] const std::vector<std::string>& labels() const noexcept { return labels_; }

    [[nodiscard]] std::optional<std::size_t> find(const std::string& label) const {
        auto it = position_.find(label);
        if (it == position_.end()) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] std::size_t position(const std::string& label) const {
        if (auto k = find(label)) return *k;
        throw std::out_of_range("unknown parameter " + label);
    }

    [[nodiscard]] ParameterVector with_values(std::vector<double> values) const {
        if (values.size() != values_.size()) throw std::invalid_argument("parameter vector length mismatch");
        ParameterVector out = *this;
        out.values_ = std::move(values);
        return out;
    }

  private:
    std::vector<ParameterId> ids_;
    std::vector<std::string> labels_;
    std::vector<double> values_;
    std::unordered_map<std::string, std::size_t> position_;
};

inline ParameterVector nominal_parameters(const PowerSystem& sys) {
    std::vector<ParameterId> ids;
    std::vector<double> values;
    auto push = [&](ParameterKind kind, std::size_t element, double value) {
        ids.push_back({kind, element});
        values.push_back(value);
    };
    for (std::size_t i = 0; i < sys.loads.size(); ++i) push(ParameterKind::active_load, i, sys.loads[i].p);
    for (std::size_t i = 0; i < sys.loads.size(); ++i) push(ParameterKind::reactive_load, i, sys.loads[i].q);
    for (std::size_t i = 0; i < sys.lines.size(); ++i) push(ParameterKind::resistance, i, sys.lines[i].resistance);
    for (std::size_t i = 0; i < sys.lines.size(); ++i) push(ParameterKind::reactance, i, sys.lines[i].reactance);
    for (std::size_t i = 0; i < sys.lines.size(); ++i) push(ParameterKind::half_shunt, i, sys.lines[i].half_shunt);

    std::vector<std::string> labels;
    labels.reserve(ids.size());
    for (const auto& id : ids) labels.push_back(parameter_label(sys, id));
    return ParameterVector(std::move(ids), std::move(labels), std::move(values));
}

/// Copy of `sys` with loads and line constants overwritten from λ.
inline PowerSystem with_parameters(const PowerSystem& sys, const ParameterVector& lambda) {
    if (lambda.size() != 2 * sys.loads.size() + 3 * sys.lines.size())
        throw std::invalid_argument("parameter vector does not match the system");
    PowerSystem out = sys;
    for (std::size_t k = 0; k < lambda.size(); ++k) {
        const auto& id = lambda.id(k);
        switch (id.kind) {
        case ParameterKind::active_load: out.loads.at(id.element).p = lambda[k]; break;
        case ParameterKind::reactive_load: out.loads.at(id.element).q = lambda[k]; break;
        case ParameterKind::resistance: out.lines.at(id.element).resistance = lambda[k]; break;
        case ParameterKind::reactance: out.lines.at(id.element).reactance = lambda[k]; break;
        case ParameterKind::half_shunt: out.lines.at(id.element).half_shunt = lambda[k]; break;
        }
    }
    return out;
}

/// Parameter file: `parameter_id,value` rows, values printed with 17
/// significant digits so reading back is exact.
inline std::string write_parameters(const ParameterVector& lambda) {
    std::ostringstream os;
    os.precision(17);
    os << "parameter_id,value\n";
    for (std::size_t k = 0; k < lambda.size(); ++k) os << lambda.label(k) << ',' << lambda[k] << '\n';
    return os.str();
}

/// Reads values for every parameter of `like`; unknown or missing ids are errors.
inline ParameterVector read_parameters(std::string_view text, const ParameterVector& like) {
    std::vector<double> values(like.size(), 0.0);
    std::vector<bool> seen(like.size(), false);
    std::istringstream in{std::string(text)};
    std::string row;
    std::size_t line_no = 0;
    while (std::getline(in, row)) {
        ++line_no;
        auto ln = detail::trim(row);
        if (ln.empty() || (line_no == 1 && ln == "parameter_id,value")) continue;
        auto comma = ln.find(',');
        if (comma == std::string_view::npos) throw ParseError(line_no, "expected 'parameter_id,value'");
        auto label = std::string(detail::trim(ln.substr(0, comma)));
        auto num = detail::trim(ln.substr(comma + 1));
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
        if (ec != std::errc{} || ptr != num.data() + num.size()) throw ParseError(line_no, "bad value for " + label);
        auto k = like.find(label);
        if (!k) throw ParseError(line_no, "unknown parameter " + label);
        if (seen[*k]) throw ParseError(line_no, "duplicate parameter " + label);
        values[*k] = v;
        seen[*k] = true;
    }
    for (std::size_t k = 0; k < seen.size(); ++k)
        if (!seen[k]) throw ParseError(0, "missing parameter " + like.label(k));
    return like.with_values(std::move(values));
}

} // namespace tspca
