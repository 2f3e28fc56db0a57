#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "circuitflow/analyses.hpp"
#include "circuitflow/homotopy.hpp"
#include "dense_power_flow.hpp"
#include "fixtures.hpp"
#include "gradient_suite.hpp"

using namespace circuitflow;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.3g", value);
    return buffer;
}

/// Runs one criterion, prints its line and returns whether it passed.
bool criterion(int number, const std::string& name, double time_limit, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
        outcome = body();
    } catch (const std::exception& e) {
        outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (time_limit > 0.0 && seconds >= time_limit) {
        outcome.pass = false;
        outcome.detail += "; over the " + fmt(time_limit) + " s budget";
    }
    std::printf("%s %d %s: %s (%.2f s)\n", outcome.pass ? "PASS" : "FAIL", number, name.c_str(), outcome.detail.c_str(),
                seconds);
    std::fflush(stdout);
    return outcome.pass;
}

SolverOptions plain_options(double tol) {
    SolverOptions o;
    o.nr.tol = tol;
    o.enforce_q_limits = false;
    o.adjust_shunts = false;
    o.adjust_taps = false;
    return o;
}

SolverOptions method_options(HomotopyMethod method) {
    SolverOptions o;
    o.method = method;
    return o;
}

Outcome oracle_equivalence() {
    int agreeing = 0, compared = 0;
    double worst_mag = 0.0, worst_ang = 0.0;
    std::string failures;
    for (const auto& name : fixtures::corpus()) {
        const Network net = fixtures::load(name);
        const SolveResult ours = solve(net, plain_options(1e-10));
        const auto dense = oracle::solve_power_flow(net);
        if (ours.report.status != SolveStatus::Converged || !dense.converged) {
            failures += " " + name + "(not converged)";
            continue;
        }
        ++compared;
        double mag = 0.0, ang = 0.0;
        for (int b = 0; b < net.bus_count(); ++b) {
            const Complex v = ours.state.v(b, 0), w = dense.voltage[b];
            mag = std::max(mag, std::abs(std::abs(v) - std::abs(w)));
            ang = std::max(ang, std::abs(rad_to_deg(std::arg(v * std::conj(w)))));
        }
        worst_mag = std::max(worst_mag, mag);
        worst_ang = std::max(worst_ang, ang);
        if (mag < 1e-8 && ang < 1e-6) ++agreeing;
        else failures += " " + name;
    }
    Outcome o;
    o.pass = agreeing >= 10 && agreeing == compared && failures.empty();
    o.detail = std::to_string(agreeing) + "/" + std::to_string(fixtures::corpus().size()) + " cases agree, max |dV| " +
               fmt(worst_mag) + " pu, max dtheta " + fmt(worst_ang) + " deg";
    if (!failures.empty()) o.detail += ", mismatched:" + failures;
    return o;
}

Outcome gradient_checks() {
    Outcome o{true, ""};
    for (const auto& c : fixtures::gradient_suite(100)) {
        const bool ok = c.iterates == 100 && c.worst < 1e-6;
        o.pass = o.pass && ok;
        o.detail += (o.detail.empty() ? "" : ", ") + c.device + " " + std::to_string(c.iterates) + " iterates worst " +
                    fmt(c.worst);
    }
    return o;
}

Outcome endpoint_identities() {
    int checked = 0;
    std::string failures;
    for (const auto& name : fixtures::all_cases()) {
        const Network net = fixtures::load(name);
        for (double gamma : {1.0, 1e4, 1e8})
            if (!fixtures::identical(tx_transform(net, 0.0, gamma), net)) failures += " " + name + "(tx)";
        if (!fixtures::identical(power_transform(net, 1.0), net)) failures += " " + name + "(power)";
        ++checked;
    }
    return {failures.empty(), std::to_string(checked) + " networks bit-exact" +
                                  (failures.empty() ? std::string() : ", differing:" + failures)};
}

Outcome sampled_sweep() {
    SweepSpec spec;  // magnitudes in [0.9, 1.1] pu, angles in [-40, 40] degrees
    spec.samples = 15;
    const SweepReport tx14 = run_sweep(fixtures::load("case14.net"), spec, method_options(HomotopyMethod::TxStepping));
    const Network hard = fixtures::load("case145_stressed.net");
    const SweepReport tx_hard = run_sweep(hard, spec, method_options(HomotopyMethod::TxStepping));
    const SweepReport plain_hard = run_sweep(hard, spec, method_options(HomotopyMethod::None));
    Outcome o;
    o.pass = tx14.tally.converged == 15 && tx14.max_spread < 1e-6 && plain_hard.tally.converged < tx_hard.tally.converged;
    o.detail = "case14 Tx " + std::to_string(tx14.tally.converged) + "/15 spread " + fmt(tx14.max_spread) +
               " pu; case145_stressed Tx " + std::to_string(tx_hard.tally.converged) + "/15, plain " +
               std::to_string(plain_hard.tally.converged) + "/15";
    return o;
}

Outcome feeder_iterations() {
    const Network net = fixtures::load("feeder13_unbalanced.json");
    bool wye = false, delta = false;
    for (const auto& l : net.zip_loads) (l.connection == Connection::Delta ? delta : wye) = true;
    const SolveResult r = solve(net);
    const double mismatch = oracle::current_mismatch(r.final_network, r.state.voltage);
    Outcome o;
    o.pass = wye && delta && !net.transformers.empty() && r.report.status == SolveStatus::Converged &&
             r.report.inner_iterations <= 7 && mismatch < 1e-6;
    o.detail = std::string(to_string(r.report.status)) + " from flat start in " +
               std::to_string(r.report.inner_iterations) + " iterations, current mismatch " + fmt(mismatch) + " pu";
    return o;
}

Outcome power_stepping_rescue() {
    const Network net = fixtures::load("case145_stressed.net");
    SolverOptions plain = method_options(HomotopyMethod::None);
    plain.nr.max_iter = 100;
    const SolveResult a = solve(net, plain);
    const SolveResult b = solve(net, method_options(HomotopyMethod::PowerStepping));
    Outcome o;
    o.pass = a.report.status != SolveStatus::Converged && a.report.inner_iterations == 100 &&
             b.report.status == SolveStatus::Converged && validate_solution(b.final_network, b.state).max() < 1e-5;
    o.detail = "plain Newton " + std::string(to_string(a.report.status)) + " after " +
               std::to_string(a.report.inner_iterations) + " iterations; power stepping " +
               to_string(b.report.status) + " in " + std::to_string(b.report.homotopy_steps) + " steps";
    return o;
}

Outcome high_voltage_selection() {
    const Network net = fixtures::load("case2.net");
    const Complex z = 1.0 / net.branches[0].series(0, 0);
    const Complex s = net.zip_loads[0].power(0);
    const auto roots = oracle::two_bus_closed_form(*net.buses[0].v_set, z.real(), z.imag(), s.real(), s.imag());
    SweepSpec spec;
    spec.samples = 15;
    const SweepReport sweep = run_sweep(net, spec, method_options(HomotopyMethod::TxStepping));
    int high = 0;
    double worst = 0.0;
    const int load_bus = net.bus_index(net.zip_loads[0].bus);
    for (const auto& sample : sweep.samples) {
        if (sample.report.status != SolveStatus::Converged) continue;
        const double d = std::abs(sample.state.v(load_bus, 0) - roots.high);
        worst = std::max(worst, d);
        if (d < 1e-6) ++high;
    }
    return {high == 15, std::to_string(high) + "/15 samples on the high root |V| " + fmt(std::abs(roots.high)) +
                            " (low root " + fmt(std::abs(roots.low)) + "), max distance " + fmt(worst)};
}

Outcome reactive_limits() {
    Outcome o{true, ""};
    Network tightened = fixtures::load("case14.net");
    tightened.name = "case14_gen3";
    tightened.generators[2].q_max(0) = 0.15;
    for (const Network& net : {fixtures::load("case14_qlim.net"), tightened}) {
        SolverOptions opts;
        opts.nr.tol = 1e-11;
        const SolveResult r = solve(net, opts);
        const Network& fin = r.final_network;
        bool ok = r.report.status == SolveStatus::Converged && !r.report.events.empty();
        int at_limit = 0;
        const Eigen::MatrixXcd dispatch = generator_dispatch(fin, r.state);
        for (std::size_t g = 0; g < fin.generators.size(); ++g) {
            const auto& gen = fin.generators[g];
            if (!gen.in_service || fin.buses[fin.bus_index(gen.bus)].kind == BusKind::Slack) continue;
            const double q = dispatch(static_cast<Eigen::Index>(g), 0).imag();
            ok = ok && q >= gen.q_min(0) - opts.limit_tolerance && q <= gen.q_max(0) + opts.limit_tolerance;
            if (gen.regulating) {
                const int target = fin.bus_index(gen.regulated_bus());
                ok = ok && std::abs(std::abs(r.state.v(target, 0)) - *fin.buses[target].v_set) < 1e-8;
            } else if (net.generators[g].regulating) {
                ok = ok && (q == gen.q_min(0) || q == gen.q_max(0));
                ++at_limit;
            }
        }
        const auto dense = oracle::solve_power_flow(fin);
        double diff = kInfinity;
        if (dense.converged) {
            diff = 0.0;
            for (int b = 0; b < fin.bus_count(); ++b) diff = std::max(diff, std::abs(r.state.v(b, 0) - dense.voltage[b]));
        }
        ok = ok && diff < 1e-8;
        o.pass = o.pass && ok;
        o.detail += (o.detail.empty() ? "" : "; ") + net.name + " " + std::to_string(at_limit) +
                    " generators at a limit, oracle difference " + fmt(diff) + " pu";
    }
    return o;
}

Outcome contingency_protocol() {
    StatusTally tally;
    int false_converged = 0;
    const SolverOptions opts = method_options(HomotopyMethod::TxStepping);
    for (const auto& name : fixtures::corpus()) {
        const Network net = fixtures::load(name);
        const SolveResult base = solve(net, opts);
        if (base.report.status != SolveStatus::Converged) continue;
        const ContingencyReport report =
            run_contingencies(net, base.state, sample_contingencies(net, base.state, 0.1), opts);
        for (const auto& r : report.results) {
            tally.add(r.report.status);
            if (r.report.status == SolveStatus::Converged && !(r.max_mismatch < 10.0 * opts.nr.tol)) ++false_converged;
        }
    }
    return {tally.total() > 0 && false_converged == 0,
            std::to_string(tally.total()) + " outages: " + std::to_string(tally.converged) + " converged, " +
                std::to_string(tally.diverged) + " diverged, " + std::to_string(tally.infeasible) + " infeasible; " +
                std::to_string(false_converged) + " false convergences"};
}

}  // namespace

int main() {
    int failed = 0;
    failed += !criterion(1, "oracle equivalence", 10.0, oracle_equivalence);
    failed += !criterion(2, "stamp gradients", 5.0, gradient_checks);
    failed += !criterion(3, "homotopy endpoints", 0.0, endpoint_identities);
    failed += !criterion(4, "sampled initial conditions", 60.0, sampled_sweep);
    failed += !criterion(5, "three-phase iteration count", 0.0, feeder_iterations);
    failed += !criterion(6, "power stepping rescue", 30.0, power_stepping_rescue);
    failed += !criterion(7, "high-voltage selection", 0.0, high_voltage_selection);
    failed += !criterion(8, "reactive limit complementarity", 0.0, reactive_limits);
    failed += !criterion(9, "contingency protocol", 0.0, contingency_protocol);
    std::printf("%d of 9 criteria passed\n", 9 - failed);
    return failed == 0 ? 0 : 1;
}
