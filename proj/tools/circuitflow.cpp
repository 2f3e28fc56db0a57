// Command-line front end: solve, sweep, contingency and validate workflows.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "circuitflow/analyses.hpp"
#include "circuitflow/case_io.hpp"

namespace fs = std::filesystem;
using namespace circuitflow;

namespace {

constexpr int kExitUsage = 64;
constexpr int kExitDataError = 65;
constexpr int kExitNoInput = 66;
constexpr int kExitCantCreate = 73;

struct Config {
    std::string case_path;
    std::string out_dir = ".";
    std::string homotopy = "none";
    std::string init = "flat";
    std::string init_file;
    std::string q_limits = "on";
    std::string shunts = "on";
    std::string taps = "on";
    bool trace = false;
    std::uint64_t seed = 0;
    int threads = 0;
    SolverOptions solver;

    // sweep
    SweepSpec sweep;
    // contingency
    double fraction = 0.1;
    std::string outages;
    // validate
    std::string solution;
};

class CliError : public std::runtime_error {
  public:
    CliError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
    int code() const { return code_; }

  private:
    int code_;
};

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buffer[32];
    std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buffer;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CliError(kExitCantCreate, "cannot write " + path.string());
    out << content;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError(kExitNoInput, "cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void add_common(CLI::App& app, Config& cfg) {
    auto& nr = cfg.solver.nr;
    auto& schedule = cfg.solver.schedule;
    app.add_option("case", cfg.case_path, "Case file (tabular text or JSON)")->required();
    app.add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();
    app.add_option("--homotopy", cfg.homotopy, "Continuation method")
        ->check(CLI::IsMember({"none", "tx", "power"}))
        ->capture_default_str();
    app.add_option("--tol", nr.tol, "Convergence tolerance on the current mismatch (pu)")->capture_default_str();
    app.add_option("--max-iter", nr.max_iter, "Newton iteration limit")->capture_default_str();
    app.add_option("--gamma", schedule.gamma, "Series admittance scale of Tx stepping")->capture_default_str();
    app.add_option("--dv-max", nr.dv_max, "Cap on each voltage component step (pu)")->capture_default_str();
    app.add_option("--zeta-min", nr.zeta_min, "Smallest damping factor of regulating devices")->capture_default_str();
    app.add_option("--zeta-init", nr.zeta_init, "Initial damping factor")->capture_default_str();
    app.add_option("--large-step", nr.large_step, "Voltage step that shrinks the damping factor")->capture_default_str();
    app.add_option("--v-min", nr.v_min, "Lower clamp of voltage components")->capture_default_str();
    app.add_option("--v-max", nr.v_max, "Upper clamp of voltage components")->capture_default_str();
    app.add_option("--q-step-max", nr.q_current_step_max, "Cap on the generator current change per step")
        ->capture_default_str();
    app.add_option("--lambda-step", schedule.initial_step, "Initial continuation step")->capture_default_str();
    app.add_option("--min-step", schedule.min_step, "Smallest continuation step")->capture_default_str();
    app.add_option("--backtrack", schedule.backtrack, "Step factor after a failed sub-problem")->capture_default_str();
    app.add_option("--growth", schedule.growth, "Step factor after two first-try successes")->capture_default_str();
    app.add_option("--step-max-iter", schedule.step_max_iter, "Newton limit per intermediate sub-problem")
        ->capture_default_str();
    app.add_option("--max-outer", cfg.solver.max_outer_passes, "Device-limit passes")->capture_default_str();
    app.add_option("--init", cfg.init, "Initial condition")
        ->check(CLI::IsMember({"flat", "random", "file", "case"}))
        ->capture_default_str();
    app.add_option("--init-file", cfg.init_file, "Solution file used by --init file");
    app.add_option("--q-limits", cfg.q_limits, "Generator reactive limits")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    app.add_option("--shunts", cfg.shunts, "Switched shunt adjustment")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    app.add_option("--taps", cfg.taps, "Transformer tap adjustment")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    app.add_flag("--trace", cfg.trace, "Write Newton and continuation traces");
    app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", cfg.threads, "Worker threads for batch runs (0 = all cores)")->capture_default_str();
}

Network load(const Config& cfg) {
    if (!fs::is_regular_file(cfg.case_path)) throw CliError(kExitNoInput, "cannot read case file '" + cfg.case_path + "'");
    try {
        return read_case(cfg.case_path).network;
    } catch (const CaseReadError& e) {
        throw CliError(kExitNoInput, e.what());
    } catch (const CaseSyntaxError& e) {
        throw CliError(kExitDataError, cfg.case_path + ": " + e.what());
    } catch (const CaseSemanticError& e) {
        throw CliError(kExitDataError, cfg.case_path + ": " + e.what());
    }
}

SolverOptions resolve_options(Config& cfg, const Network& network) {
    SolverOptions options = cfg.solver;
    options.method = cfg.homotopy == "tx"      ? HomotopyMethod::TxStepping
                     : cfg.homotopy == "power" ? HomotopyMethod::PowerStepping
                                               : HomotopyMethod::None;
    options.enforce_q_limits = cfg.q_limits == "on";
    options.adjust_shunts = cfg.shunts == "on";
    options.adjust_taps = cfg.taps == "on";
    if (cfg.init == "flat") {
        options.init = FlatStart{};
    } else if (cfg.init == "case") {
        options.init = FromCase{};
    } else if (cfg.init == "random") {
        RandomStart random;
        random.seed = cfg.seed;
        options.init = random;
    } else {
        if (cfg.init_file.empty()) throw CliError(kExitUsage, "--init file needs --init-file");
        const std::string text = read_text(cfg.init_file);
        try {
            const auto rows = detect_format(text) == CaseFormat::ThreePhaseJson ? read_solution_json(text)
                                                                                 : read_solution_csv(text);
            options.init = WarmStart{state_from_solution(network, rows)};
        } catch (const std::exception& e) {
            throw CliError(kExitDataError, cfg.init_file + ": " + e.what());
        }
    }
    if (auto problem = options.check(); !problem.empty()) throw CliError(kExitUsage, problem);
    return options;
}

fs::path out_dir(const Config& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw CliError(kExitCantCreate, "cannot create " + cfg.out_dir);
    return cfg.out_dir;
}

int run_solve(Config& cfg) {
    const Network network = load(cfg);
    const SolverOptions options = resolve_options(cfg, network);
    const SolveResult result = solve(network, options);
    const fs::path dir = out_dir(cfg);
    write_file(dir / "solution.csv", write_solution(result.final_network, result.state, result.report, SolutionFormat::Csv));
    write_file(dir / "solution.json",
               write_solution(result.final_network, result.state, result.report, SolutionFormat::Json));
    write_file(dir / "report.json", write_report_json(result.report, network.name, utc_timestamp()));
    if (cfg.trace) {
        write_file(dir / "trace.csv", write_trace_csv(result.report.nr_trace));
        write_file(dir / "lambda_trace.csv", write_lambda_trace_csv(result.report.lambda_trace));
    }
    std::printf("%s: %s after %d Newton iterations, %d continuation steps, %d outer passes (residual %.3e)\n",
                network.name.c_str(), to_string(result.report.status), result.report.inner_iterations,
                result.report.homotopy_steps, result.report.outer_passes, result.report.residual.max());
    if (!result.report.message.empty()) std::printf("  %s\n", result.report.message.c_str());
    return exit_code(result.report.status);
}

int worst(const StatusTally& tally) {
    if (tally.infeasible > 0) return exit_code(SolveStatus::Infeasible);
    if (tally.diverged > 0) return exit_code(SolveStatus::Diverged);
    return 0;
}

int run_sweep_command(Config& cfg) {
    const Network network = load(cfg);
    const SolverOptions options = resolve_options(cfg, network);
    cfg.sweep.seed = cfg.seed;
    if (auto problem = cfg.sweep.check(); !problem.empty()) throw CliError(kExitUsage, problem);
    const SweepReport report = run_sweep(network, cfg.sweep, options, cfg.threads);
    std::string csv = "sample,vmag0,vang0,status,iters\n";
    char line[256];
    for (const auto& s : report.samples) {
        std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%s,%d\n", s.index, s.vmag0, s.vang0_deg,
                      to_string(s.report.status), s.report.inner_iterations);
        csv += line;
    }
    write_file(out_dir(cfg) / "sweep.csv", csv);
    std::printf("%s: %d converged, %d diverged, %d infeasible; max pairwise spread %.3e pu\n", network.name.c_str(),
                report.tally.converged, report.tally.diverged, report.tally.infeasible, report.max_spread);
    return worst(report.tally);
}

ContingencySet parse_outage_list(const std::string& list) {
    ContingencySet set;
    std::stringstream in(list);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.size() < 2) throw CliError(kExitUsage, "bad outage '" + item + "'");
        int id = 0;
        try {
            id = std::stoi(item.substr(1));
        } catch (const std::exception&) {
            throw CliError(kExitUsage, "bad outage '" + item + "'");
        }
        Outage outage{item, {}, {}, {}};
        switch (item[0]) {
            case 'G': outage.generators.push_back(id); break;
            case 'B': outage.branches.push_back(id); break;
            case 'T': outage.transformers.push_back(id); break;
            default: throw CliError(kExitUsage, "outage '" + item + "' must start with G, B or T");
        }
        set.push_back(outage);
    }
    return set;
}

int run_contingency_command(Config& cfg) {
    const Network network = load(cfg);
    const SolverOptions options = resolve_options(cfg, network);
    const SolveResult base = solve(network, options);
    if (base.report.status != SolveStatus::Converged) {
        std::fprintf(stderr, "base case did not converge: %s\n", base.report.message.c_str());
        return exit_code(base.report.status);
    }
    const ContingencySet set =
        cfg.outages.empty() ? sample_contingencies(network, base.state, cfg.fraction) : parse_outage_list(cfg.outages);
    ContingencyReport report;
    try {
        report = run_contingencies(network, base.state, set, options, cfg.threads);
    } catch (const std::invalid_argument& e) {
        throw CliError(kExitUsage, e.what());
    }
    std::string csv = "label,status,inner_iters,homotopy_steps,max_mismatch\n";
    char line[256];
    for (const auto& r : report.results) {
        std::snprintf(line, sizeof line, "%s,%s,%d,%d,%.17g\n", r.label.c_str(), to_string(r.report.status),
                      r.report.inner_iterations, r.report.homotopy_steps, r.max_mismatch);
        csv += line;
    }
    write_file(out_dir(cfg) / "contingency.csv", csv);
    std::printf("%s: %zu contingencies: %d converged, %d diverged, %d infeasible\n", network.name.c_str(),
                report.results.size(), report.tally.converged, report.tally.diverged, report.tally.infeasible);
    return worst(report.tally);
}

int run_validate_command(Config& cfg) {
    const Network network = load(cfg);
    std::printf("%s: %d buses, %zu generators, %zu branches, %zu transformers, %d islands: valid\n",
                network.name.c_str(), network.bus_count(), network.generators.size(), network.branches.size(),
                network.transformers.size(), network.island_count());
    if (cfg.solution.empty()) return 0;
    const std::string text = read_text(cfg.solution);
    StateVector state;
    try {
        const auto rows =
            detect_format(text) == CaseFormat::ThreePhaseJson ? read_solution_json(text) : read_solution_csv(text);
        state = state_from_solution(network, rows);
    } catch (const std::exception& e) {
        throw CliError(kExitDataError, cfg.solution + ": " + e.what());
    }
    // Reactive outputs of regulating generators are recovered from the JSON
    // solution when present.
    if (detect_format(text) == CaseFormat::ThreePhaseJson) {
        const auto doc = nlohmann::json::parse(text);
        std::map<std::pair<int, std::string>, double> q;
        for (const auto& g : doc.value("generators", nlohmann::json::array()))
            q[{g.at("id").get<int>(), g.at("phase").get<std::string>()}] = g.at("q_pu").get<double>();
        for (int g = 0; g < static_cast<int>(network.generators.size()); ++g)
            for (int p = 0; p < network.phases(); ++p)
                if (auto it = q.find({network.generators[g].id, phase_name(network.domain, p)}); it != q.end())
                    state.generator_q(g, p) = it->second;
    }
    const MismatchReport mismatch = validate_solution(network, state);
    const bool ok = mismatch.max() < cfg.solver.nr.tol;
    std::printf("solution mismatch %.3e (%s), control error %.3e: %s\n", mismatch.max_mismatch,
                mismatch.power_based ? "power" : "current", mismatch.max_control, ok ? "ok" : "FAILED");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    Config cfg;
    CLI::App app{"Equivalent-circuit power flow"};
    app.require_subcommand(1);

    auto* solve_cmd = app.add_subcommand("solve", "Solve one case");
    add_common(*solve_cmd, cfg);

    auto* sweep_cmd = app.add_subcommand("sweep", "Convergence over sampled initial conditions");
    add_common(*sweep_cmd, cfg);
    sweep_cmd->add_option("--samples", cfg.sweep.samples, "Number of samples")->capture_default_str();
    sweep_cmd->add_option("--vmag-min", cfg.sweep.mag_min, "Smallest initial magnitude (pu)")->capture_default_str();
    sweep_cmd->add_option("--vmag-max", cfg.sweep.mag_max, "Largest initial magnitude (pu)")->capture_default_str();
    sweep_cmd->add_option("--vang-min", cfg.sweep.ang_min_deg, "Smallest initial angle (deg)")->capture_default_str();
    sweep_cmd->add_option("--vang-max", cfg.sweep.ang_max_deg, "Largest initial angle (deg)")->capture_default_str();

    auto* contingency_cmd = app.add_subcommand("contingency", "Warm-started single outages");
    add_common(*contingency_cmd, cfg);
    contingency_cmd->add_option("--fraction", cfg.fraction, "Share of generators and series elements sampled")
        ->capture_default_str();
    contingency_cmd->add_option("--outages", cfg.outages, "Explicit list such as G2,B7,T1");

    auto* validate_cmd = app.add_subcommand("validate", "Check a case and optionally a solution");
    add_common(*validate_cmd, cfg);
    validate_cmd->add_option("--solution", cfg.solution, "Solution file (CSV or JSON)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitUsage;
    }

    try {
        if (solve_cmd->parsed()) return run_solve(cfg);
        if (sweep_cmd->parsed()) return run_sweep_command(cfg);
        if (contingency_cmd->parsed()) return run_contingency_command(cfg);
        return run_validate_command(cfg);
    } catch (const CliError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.code();
    } catch (const InvalidNetwork& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDataError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
