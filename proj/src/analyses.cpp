#include "circuitflow/analyses.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

namespace circuitflow {

void StatusTally::add(SolveStatus status) {
    switch (status) {
        case SolveStatus::Converged: ++converged; break;
        case SolveStatus::Diverged: ++diverged; break;
        case SolveStatus::Infeasible: ++infeasible; break;
    }
}

void parallel_for(int count, int threads, const std::function<void(int)>& job) {
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

Network apply_outage(const Network& network, const Outage& outage) {
    Network out = network;
    auto drop = [](auto& devices, int id, const char* what) {
        const auto it = std::find_if(devices.begin(), devices.end(), [id](const auto& d) { return d.id == id; });
        if (it == devices.end()) throw std::invalid_argument(std::string("outage names unknown ") + what + " " + std::to_string(id));
        it->in_service = false;
    };
    for (int id : outage.generators) drop(out.generators, id, "generator");
    for (int id : outage.branches) drop(out.branches, id, "branch");
    for (int id : outage.transformers) drop(out.transformers, id, "transformer");
    out.finalize();
    return out;
}

ContingencySet sample_contingencies(const Network& network, const StateVector& base, double fraction) {
    ContingencySet set;
    auto take = [fraction](std::size_t n) {
        return n == 0 ? std::size_t{0} : std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * n)));
    };

    const Eigen::MatrixXcd dispatch = generator_dispatch(network, base);
    std::vector<std::pair<double, int>> gens;
    for (int g = 0; g < static_cast<int>(network.generators.size()); ++g)
        if (network.generators[g].in_service) gens.emplace_back(dispatch.row(g).real().sum(), g);
    std::stable_sort(gens.begin(), gens.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    gens.resize(take(gens.size()));
    for (const auto& [p, g] : gens) {
        const int id = network.generators[g].id;
        set.push_back({"G" + std::to_string(id), {id}, {}, {}});
    }

    // Capacity of a series element: its rating, or the base-case flow magnitude
    // at the from end when the case carries no ratings.
    struct Element {
        double capacity;
        bool transformer;
        int id;
    };
    std::vector<Element> elements;
    bool rated = false;
    for (const auto& br : network.branches) rated |= br.in_service && br.rating > 0.0;
    for (const auto& tx : network.transformers) rated |= tx.in_service && tx.rating > 0.0;
    auto flow = [&](int from, int to, const ComplexMatrix& y, Complex ratio) {
        const Complex vf = base.v(network.bus_index(from), 0) / ratio;
        const Complex vt = base.v(network.bus_index(to), 0);
        return std::abs(vf * std::conj(y(0, 0) * (vf - vt)));
    };
    for (const auto& br : network.branches)
        if (br.in_service) elements.push_back({rated ? br.rating : flow(br.from, br.to, br.series, 1.0), false, br.id});
    for (const auto& tx : network.transformers)
        if (tx.in_service)
            elements.push_back(
                {rated ? tx.rating : flow(tx.from, tx.to, tx.series, std::polar(tx.tap(0), tx.shift(0))), true, tx.id});
    std::stable_sort(elements.begin(), elements.end(),
                     [](const Element& a, const Element& b) { return a.capacity > b.capacity; });
    elements.resize(take(elements.size()));
    for (const auto& e : elements) {
        if (e.transformer) set.push_back({"T" + std::to_string(e.id), {}, {}, {e.id}});
        else set.push_back({"B" + std::to_string(e.id), {}, {e.id}, {}});
    }
    return set;
}

namespace {

ContingencyResult solve_contingency(const Network& network, const StateVector& base, const Outage& outage,
                                    const SolverOptions& options) {
    ContingencyResult result;
    result.label = outage.label;
    const Network post = apply_outage(network, outage);

    auto errors = validate(post);
    if (!errors.empty()) {
        result.islanded = std::any_of(errors.begin(), errors.end(), [](const ValidationError& e) {
            return e.kind == ValidationError::Kind::MissingSlack || e.kind == ValidationError::Kind::UnreachableRemote;
        });
        result.report.status = SolveStatus::Infeasible;
        result.report.message = (result.islanded ? "islanding: " : "invalid post-outage network: ") + errors.front().message;
        result.state = base;
        result.max_mismatch = kInfinity;
        return result;
    }

    SolverOptions warm = options;
    warm.method = HomotopyMethod::None;
    warm.init = WarmStart{base};
    SolveResult solved = solve(post, warm);
    if (solved.report.status == SolveStatus::Diverged && options.method != HomotopyMethod::None) {
        SolveResult retry = solve(post, options);
        retry.report.inner_iterations += solved.report.inner_iterations;
        solved = std::move(retry);
    }
    result.report = std::move(solved.report);
    result.state = std::move(solved.state);
    result.max_mismatch = validate_solution(solved.final_network, result.state).max();
    return result;
}

}  // namespace

ContingencyReport run_contingencies(const Network& network, const StateVector& base, const ContingencySet& set,
                                    const SolverOptions& options, int threads) {
    if (!base.matches(network)) throw std::invalid_argument("base state does not match the network");
    ContingencyReport report;
    report.results.resize(set.size());
    parallel_for(static_cast<int>(set.size()), threads,
                 [&](int i) { report.results[i] = solve_contingency(network, base, set[i], options); });
    for (const auto& r : report.results) report.tally.add(r.report.status);
    return report;
}

std::string SweepSpec::check() const {
    if (samples < 0) return "sample count must be non-negative";
    if (!(mag_min > 0.0 && mag_min <= mag_max)) return "need 0 < mag_min <= mag_max";
    if (!(ang_min_deg <= ang_max_deg)) return "need ang_min <= ang_max";
    return {};
}

std::vector<std::pair<double, double>> sweep_points(const SweepSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> mag(spec.mag_min, spec.mag_max);
    std::uniform_real_distribution<double> ang(spec.ang_min_deg, spec.ang_max_deg);
    std::vector<std::pair<double, double>> points;
    for (int k = 0; k < spec.samples; ++k) {
        const double m = spec.mag_min == spec.mag_max ? spec.mag_min : mag(rng);
        const double a = spec.ang_min_deg == spec.ang_max_deg ? spec.ang_min_deg : ang(rng);
        points.emplace_back(m, a);
    }
    return points;
}

SweepReport run_sweep(const Network& network, const SweepSpec& spec, const SolverOptions& options, int threads) {
    if (auto problem = spec.check(); !problem.empty()) throw std::invalid_argument(problem);
    const auto points = sweep_points(spec);
    SweepReport report;
    report.samples.resize(points.size());
    parallel_for(static_cast<int>(points.size()), threads, [&](int k) {
        const auto [m, a] = points[k];
        StateVector start = initialize_state(network, FlatStart{});
        for (int b = 0; b < start.buses; ++b)
            for (int p = 0; p < start.phases; ++p)
                start.v(b, p) = std::polar(m, deg_to_rad(a) + phase_offset(network.domain, p));
        SolverOptions sample_options = options;
        sample_options.init = WarmStart{start};
        SolveResult solved = solve(network, sample_options);
        report.samples[k] = {k, m, a, std::move(solved.report), std::move(solved.state)};
    });

    const int n = static_cast<int>(points.size());
    report.spread = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    for (int i = 0; i < n; ++i) {
        report.tally.add(report.samples[i].report.status);
        if (report.samples[i].report.status != SolveStatus::Converged) continue;
        for (int j = 0; j < n; ++j) {
            if (report.samples[j].report.status != SolveStatus::Converged) continue;
            const double d = (report.samples[i].state.voltage - report.samples[j].state.voltage).cwiseAbs().maxCoeff();
            report.spread(i, j) = d;
            report.max_spread = std::max(report.max_spread, d);
        }
    }
    return report;
}

}  // namespace circuitflow
