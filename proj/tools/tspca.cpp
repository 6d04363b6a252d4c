// tspca: power flow, critical clearing time, parameter ranking and Monte
// Carlo studies from the command line.

#include "tspca/report.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace tspca;
using report::json;

namespace {

enum Exit : int { ok = 0, analysis_failure = 1, input_error = 2, stable_beyond_horizon = 3, unstable_at_zero = 4 };

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AnalysisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Config {
    std::string system;
    int fault_bus = 0;
    std::string clear_line;
    double max_clearing = 2.0;
    double horizon = 5.0;
    double step = 1e-3;
    double tol = 1e-4;

    double threshold = 0.95;
    std::size_t points = 50;
    double h_rel = 1e-4;
    double h_abs = 1e-8;
    double window = 0.0;
    bool dump_sensitivities = false;
    bool decomposition = false;

    std::size_t samples = 1000;
    std::uint64_t seed = 1;
    double cv_load = 0.05;
    double cv_line = 0.025;
    std::string ranking;
    bool reduced_only = false;
    std::size_t bins = 30;

    double trajectory = 0.0;

    std::size_t workers = 0;
    bool json = false;
    std::string out_dir;

    std::vector<std::string> reports;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

PowerSystem load(const Config& c) {
    if (c.system.empty()) throw InputError("no system file given (--system)");
    return parse_system(read_text(c.system));
}

FaultScenario scenario(const Config& c, const PowerSystem& sys) {
    if (c.fault_bus == 0 || c.clear_line.empty()) throw InputError("a fault scenario needs --fault-bus and --clear-line");
    if (!sys.has_bus(c.fault_bus)) throw InputError("faulted bus " + std::to_string(c.fault_bus) + " is not in the system");
    try {
        (void)sys.line_index(c.clear_line);
    } catch (const std::exception&) {
        throw InputError("cleared line '" + c.clear_line + "' is not in the system");
    }
    if (!(c.max_clearing > 0.0)) throw InputError("--max-clearing must be positive");
    if (!(c.horizon > 0.0)) throw InputError("--horizon must be positive");
    return FaultScenario{c.fault_bus, c.clear_line, c.max_clearing, c.horizon};
}

DynamicsOptions dynamics(const Config& c) {
    if (!(c.step > 0.0)) throw InputError("--step must be positive");
    if (!(c.tol > 0.0)) throw InputError("--tol must be positive");
    DynamicsOptions d;
    d.step = c.step;
    return d;
}

fs::path out_dir(const Config& c) {
    fs::path dir = c.out_dir.empty() ? fs::path(".") : fs::path(c.out_dir);
    fs::create_directories(dir);
    return dir;
}

void emit(const Config& c, const json& j, const std::string& text) {
    if (c.json) std::cout << j.dump(2) << '\n';
    else std::cout << text;
}

int cmd_powerflow(const Config& c) {
    const auto sys = load(c);
    const auto sol = solve_power_flow(sys);
    const auto j = report::to_json(sys, sol);
    std::ostringstream table;
    report::write_powerflow_table(table, sys, sol);
    emit(c, j, table.str());
    if (!c.out_dir.empty()) report::write_file((out_dir(c) / "powerflow.json").string(), j.dump(2) + "\n");
    if (!sol.converged) {
        std::cerr << "error: power flow did not converge\n";
        return analysis_failure;
    }
    return ok;
}

void write_trajectory(const fs::path& path, const ScenarioRun& run) {
    Trajectory all(run.fault_on.machines(), Period::fault_on);
    for (std::size_t k = 0; k < run.fault_on.size(); ++k) all.push(run.fault_on.time(k), run.fault_on.row(k));
    for (std::size_t k = 1; k < run.postfault.size(); ++k) all.push(run.postfault.time(k), run.postfault.row(k));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    write_trajectory_csv(out, all);
}

int cmd_cct(const Config& c) {
    const auto sys = load(c);
    const auto sc = scenario(c, sys);
    const auto opt = dynamics(c);
    const auto model = prepare_scenario(sys, nominal_parameters(sys), sc, opt);
    const auto r = critical_clearing_time(model, sc, c.tol, opt);

    json j{{"scenario", report::to_json(sc)}, {"cct", report::to_json(r)}};
    std::ostringstream text;
    if (r.ok())
        text << std::setprecision(6) << "t_cr = " << r.t_cr << " s  bracket [" << r.lower << ", " << r.upper << "]  " << r.iterations
             << " bisection steps\n";
    else
        text << to_string(r.status) << " (max clearing time " << sc.max_clearing_time << " s)\n";

    if (c.trajectory > 0.0) {
        if (c.trajectory > sc.max_clearing_time) throw InputError("--trajectory exceeds --max-clearing");
        const auto run = simulate_scenario(model, sc, c.trajectory, opt);
        const auto path = out_dir(c) / "trajectory.csv";
        write_trajectory(path, run);
        j["trajectory"] = {{"clearing_time", c.trajectory}, {"stable", run.verdict.stable}, {"file", path.string()}};
        text << "trajectory at t_cl = " << c.trajectory << " s (" << (run.verdict.stable ? "stable" : "unstable") << ") -> " << path.string()
             << '\n';
    }
    emit(c, j, text.str());
    if (!c.out_dir.empty()) report::write_file((out_dir(c) / "cct.json").string(), j.dump(2) + "\n");

    switch (r.status) {
    case CctResult::Status::converged: return ok;
    case CctResult::Status::stable_beyond_horizon: return stable_beyond_horizon;
    case CctResult::Status::unstable_at_zero: return unstable_at_zero;
    }
    return analysis_failure;
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m, const std::vector<std::string>& header, const std::string& first) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << first;
    for (const auto& h : header) out << ',' << h;
    out << '\n' << std::setprecision(17);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out << r + 1;
        for (Eigen::Index k = 0; k < m.cols(); ++k) out << ',' << m(r, k);
        out << '\n';
    }
}

int cmd_rank(const Config& c) {
    const auto sys = load(c);
    const auto sc = scenario(c, sys);
    if (!(c.threshold > 0.0 && c.threshold <= 1.0)) throw InputError("--threshold must lie in (0, 1]");
    if (c.points < 2) throw InputError("--points must be at least 2");
    if (!(c.h_rel > 0.0)) throw InputError("--h-rel must be positive");
    const auto lambda = nominal_parameters(sys);

    SensitivityOptions so;
    so.relative_step = c.h_rel;
    so.absolute_step = c.h_abs;
    so.samples = c.points;
    so.horizon = c.window;
    so.cct_tolerance = c.tol;
    so.workers = c.workers;
    so.dynamics = dynamics(c);

    const auto series = sensitivity_series(sys, lambda, sc, so);
    const auto nominal = fault_on_samples(sys, lambda, sc, series.horizon, so.samples, so.dynamics);
    const auto normalized = normalize(series, nominal, lambda, so.angle_floor);
    const auto g = gram(normalized);
    const auto pair = dominant_eigenpair(g);
    const auto ranking = rank_parameters(pair, lambda.labels(), c.threshold);

    auto j = report::to_json(ranking, pair);
    j["scenario"] = report::to_json(sc);
    j["window"] = series.horizon;
    j["points"] = c.points;
    j["guarded_rows"] = normalized.guarded_rows;
    json failed = json::array();
    for (auto k : series.failed_columns) failed.push_back(lambda.label(k));
    j["failed_columns"] = failed;

    const auto dir = out_dir(c);
    {
        std::ostringstream csv;
        report::write_ranking_csv(csv, ranking);
        report::write_file((dir / "ranking.csv").string(), csv.str());
        report::write_file((dir / "ranking.json").string(), j.dump(2) + "\n");
    }
    if (c.dump_sensitivities) {
        const auto sub = dir / "sensitivities";
        fs::create_directories(sub);
        for (std::size_t s = 0; s < series.matrices.size(); ++s) {
            char name[32];
            std::snprintf(name, sizeof name, "%03zu", s);
            std::ofstream raw(sub / ("S_" + std::string(name) + ".csv"));
            write_sensitivity_csv(raw, series.matrices[s], lambda);
            std::ofstream norm(sub / ("Sn_" + std::string(name) + ".csv"));
            write_sensitivity_csv(norm, normalized.matrices[s], lambda);
        }
        std::ofstream times(sub / "times.csv");
        times << "sample,t\n" << std::setprecision(17);
        for (std::size_t s = 0; s < series.times.size(); ++s) times << s << ',' << series.times[s] << '\n';
    }
    if (c.decomposition) {
        const auto d = full_eigendecomposition(g);
        std::vector<std::string> components;
        for (Eigen::Index k = 0; k < d.values.size(); ++k) components.push_back("u" + std::to_string(k + 1));
        write_matrix_csv(dir / "eigenvalues.csv", d.values, {"pi"}, "component");
        Eigen::MatrixXd u = d.vectors;
        std::ofstream out(dir / "eigenvectors.csv");
        out << "parameter_id";
        for (const auto& h : components) out << ',' << h;
        out << '\n' << std::setprecision(17);
        for (Eigen::Index r = 0; r < u.rows(); ++r) {
            out << lambda.label(static_cast<std::size_t>(r));
            for (Eigen::Index k = 0; k < u.cols(); ++k) out << ',' << u(r, k);
            out << '\n';
        }
    }

    std::ostringstream text;
    text << "window " << std::setprecision(6) << series.horizon << " s, " << c.points << " samples, pi_max " << pair.value << " ("
         << pair.iterations << " power iterations)\n";
    text << "rank  parameter   share      cumulative\n";
    for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
        const auto& e = ranking.entries[i];
        text << std::setw(4) << i + 1 << "  " << std::left << std::setw(10) << e.id << std::right << std::fixed << std::setprecision(6)
             << std::setw(10) << e.share << std::setw(12) << e.cumulative << (e.selected ? "  *" : "") << std::defaultfloat << '\n';
    }
    text << ranking.selected.size() << " of " << lambda.size() << " parameters selected at threshold " << c.threshold << '\n';
    if (!series.failed_columns.empty()) text << series.failed_columns.size() << " sensitivity column(s) could not be computed\n";
    emit(c, j, text.str());
    return ok;
}

std::vector<bool> mask_from_ranking(const std::string& path, const ParameterVector& lambda, json& selected) {
    std::vector<std::string> ids;
    try {
        ids = report::read_selected(read_text(path));
    } catch (const InputError&) {
        throw;
    } catch (const std::exception& e) {
        throw InputError("ranking file '" + path + "': " + e.what());
    }
    std::vector<bool> frozen(lambda.size(), true);
    selected = json::array();
    for (const auto& id : ids) {
        const auto k = lambda.find(id);
        if (!k) throw InputError("ranking file '" + path + "' names unknown parameter '" + id + "'");
        frozen[*k] = false;
        selected.push_back(id);
    }
    return frozen;
}

int cmd_mc(const Config& c) {
    const auto sys = load(c);
    const auto sc = scenario(c, sys);
    if (c.samples == 0) throw InputError("--samples must be at least 1");
    if (c.cv_load < 0.0 || c.cv_line < 0.0) throw InputError("coefficients of variation must be non-negative");
    if (c.reduced_only && c.ranking.empty()) throw InputError("--reduced-only needs --ranking");
    const auto lambda = nominal_parameters(sys);

    UncertaintyModel model;
    model.set_load_cv(c.cv_load);
    model.set_line_cv(c.cv_line);
    MonteCarloOptions mo;
    mo.cct_tolerance = c.tol;
    mo.workers = c.workers;
    mo.dynamics = dynamics(c);

    json mask = "all";
    std::vector<bool> frozen;
    if (!c.ranking.empty()) frozen = mask_from_ranking(c.ranking, lambda, mask);

    const auto dir = out_dir(c);
    auto run = [&](const std::vector<bool>& f, const std::string& tag) {
        const auto set = sample_parameters(lambda, model, f, c.samples, c.seed);
        auto d = estimate_cct_distribution(sys, lambda, set, sc, mo);
        std::ostringstream values, hist;
        report::write_values_csv(values, d);
        report::write_histogram_csv(hist, histogram(d.values, c.bins));
        report::write_file((dir / ("cct_" + tag + ".csv")).string(), values.str());
        report::write_file((dir / ("histogram_" + tag + ".csv")).string(), hist.str());
        return d;
    };

    json j;
    j["generated_at"] = report::timestamp();
    j["scenario"] = report::to_json(sc);
    j["seed"] = c.seed;
    j["N"] = c.samples;
    j["cv"] = {{"load", c.cv_load}, {"line", c.cv_line}};
    j["tolerance"] = c.tol;
    j["mask"] = mask;

    bool unreliable = false;
    bool undefined = false;
    std::ostringstream text;
    text << std::setprecision(6);
    auto put = [&](const CctDistribution& d, const char* name) {
        text << name << ": mu " << d.mean << " s  sigma " << d.sigma << " s  (" << d.size() << " of " << d.requested << " samples"
             << (d.failures ? ", " + std::to_string(d.failures) + " failed" : "") << (d.unreliable ? ", UNRELIABLE" : "") << ")\n";
        unreliable = unreliable || d.unreliable;
    };

    if (c.reduced_only) {
        const auto red = run(frozen, "reduced");
        const auto r = report::to_json(red);
        for (auto it = r.begin(); it != r.end(); ++it) j[it.key()] = it.value();
        put(red, "reduced");
    } else {
        const auto full = run({}, "full");
        const auto r = report::to_json(full);
        for (auto it = r.begin(); it != r.end(); ++it) j[it.key()] = it.value();
        put(full, "full");
        if (!c.ranking.empty()) {
            const auto red = run(frozen, "reduced");
            j["reduced"] = report::to_json(red);
            put(red, "reduced");
            try {
                j["variance_retention"] = variance_retention(full, red);
                j["sigma_ratio"] = sigma_ratio(full, red);
                text << "variance retention " << j["variance_retention"].get<double>() << "  sigma ratio " << j["sigma_ratio"].get<double>()
                     << '\n';
            } catch (const std::exception& e) {
                j["variance_retention"] = nullptr;
                j["sigma_ratio"] = nullptr;
                text << "variance retention undefined: " << e.what() << '\n';
                undefined = true;
            }
        }
    }
    j["unreliable"] = unreliable;
    report::write_file((dir / "mc_report.json").string(), j.dump(2) + "\n");
    emit(c, j, text.str());
    if (unreliable) {
        std::cerr << "error: more than 10% of the samples failed\n";
        return analysis_failure;
    }
    if (undefined) return analysis_failure;
    return ok;
}

int cmd_compare(const Config& c) {
    if (c.reports.size() != 2) throw InputError("compare needs two report files");
    json r[2];
    for (int i = 0; i < 2; ++i) {
        try {
            r[i] = json::parse(read_text(c.reports[static_cast<std::size_t>(i)]));
            (void)r[i].at("sigma").get<double>();
            (void)r[i].at("mu").get<double>();
        } catch (const InputError&) {
            throw;
        } catch (const std::exception& e) {
            throw InputError("'" + c.reports[static_cast<std::size_t>(i)] + "' is not a Monte Carlo report: " + e.what());
        }
    }
    const double sf = r[0]["sigma"].get<double>();
    const double sr = r[1]["sigma"].get<double>();
    if (sf == 0.0) throw AnalysisError("variance retention undefined: reference report has zero sigma");
    json j{{"reference", c.reports[0]},
           {"candidate", c.reports[1]},
           {"mu_reference", r[0]["mu"]},
           {"mu_candidate", r[1]["mu"]},
           {"sigma_reference", sf},
           {"sigma_candidate", sr},
           {"variance_retention", sr * sr / (sf * sf)},
           {"sigma_ratio", sr / sf}};
    std::ostringstream text;
    text << std::setprecision(6) << "mu " << r[0]["mu"].get<double>() << " -> " << r[1]["mu"].get<double>() << " s\n"
         << "sigma " << sf << " -> " << sr << " s\n"
         << "variance retention " << sr * sr / (sf * sf) << "  sigma ratio " << sr / sf << '\n';
    emit(c, j, text.str());
    if (!c.out_dir.empty()) report::write_file((out_dir(c) / "compare.json").string(), j.dump(2) + "\n");
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    Config c;
    CLI::App app{"Transient-stability parameter ranking by trajectory sensitivity and PCA"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "flat key=value file; command-line flags win");
    app.allow_config_extras(CLI::config_extras_mode::error);

    app.add_option("--system", c.system, "system description file");
    app.add_option("--fault-bus", c.fault_bus, "bus with the three-phase fault");
    app.add_option("--clear-line", c.clear_line, "line opened to clear the fault (e.g. 1-5)");
    app.add_option("--max-clearing", c.max_clearing, "upper end of the clearing-time search, s")->capture_default_str();
    app.add_option("--horizon", c.horizon, "post-fault simulation horizon, s")->capture_default_str();
    app.add_option("--step", c.step, "integration step, s")->capture_default_str();
    app.add_option("--tol", c.tol, "bisection tolerance on t_cr, s")->capture_default_str();
    app.add_option("--threshold", c.threshold, "cumulative influence share to select")->capture_default_str();
    app.add_option("--points", c.points, "fault-on sample points")->capture_default_str();
    app.add_option("--h-rel", c.h_rel, "relative finite-difference step")->capture_default_str();
    app.add_option("--h-abs", c.h_abs, "absolute finite-difference step floor")->capture_default_str();
    app.add_option("--window", c.window, "fault-on window for sensitivities, s (0 = nominal t_cr)")->capture_default_str();
    app.add_flag("--dump-sensitivities", c.dump_sensitivities, "write every S_j and normalized S_j as CSV");
    app.add_flag("--decomposition", c.decomposition, "write the full eigendecomposition of the Gram matrix");
    app.add_option("--samples", c.samples, "Monte Carlo sample count")->capture_default_str();
    app.add_option("--seed", c.seed, "random seed")->capture_default_str();
    app.add_option("--cv-load", c.cv_load, "coefficient of variation of loads")->capture_default_str();
    app.add_option("--cv-line", c.cv_line, "coefficient of variation of line parameters")->capture_default_str();
    app.add_option("--ranking", c.ranking, "ranking CSV or JSON; unselected parameters are held at nominal");
    app.add_flag("--reduced-only", c.reduced_only, "run only the masked study");
    app.add_option("--bins", c.bins, "histogram bins")->capture_default_str();
    app.add_option("--trajectory", c.trajectory, "also write the trajectory for this clearing time, s");
    app.add_option("--workers", c.workers, "worker threads (default: TSPCA_WORKERS or all cores)");
    app.add_flag("--json", c.json, "print JSON instead of text");
    app.add_option("--out-dir", c.out_dir, "directory for output files");

    auto* powerflow = app.add_subcommand("powerflow", "solve the pre-fault power flow");
    auto* cct = app.add_subcommand("cct", "nominal critical clearing time");
    auto* rank = app.add_subcommand("rank", "rank parameters by influence");
    auto* mc = app.add_subcommand("mc", "Monte Carlo CCT distribution, full and reduced");
    auto* compare = app.add_subcommand("compare", "variance retention from two Monte Carlo reports");
    compare->add_option("reports", c.reports, "reference and candidate report")->expected(2);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return input_error;
    }

    try {
        if (powerflow->parsed()) return cmd_powerflow(c);
        if (cct->parsed()) return cmd_cct(c);
        if (rank->parsed()) return cmd_rank(c);
        if (mc->parsed()) return cmd_mc(c);
        if (compare->parsed()) return cmd_compare(c);
    } catch (const ParseError& e) {
        std::cerr << "error: " << (c.system.empty() ? "" : c.system + ": ") << e.what() << '\n';
        return input_error;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return input_error;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return input_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return analysis_failure;
    }
    return input_error;
}
