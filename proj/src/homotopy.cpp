#include "circuitflow/homotopy.hpp"

#include <algorithm>
#include <set>

namespace circuitflow {

const char* to_string(HomotopyMethod method) {
    switch (method) {
        case HomotopyMethod::None: return "none";
        case HomotopyMethod::TxStepping: return "tx";
        case HomotopyMethod::PowerStepping: return "power";
    }
    return "unknown";
}

namespace {

void scale_series(ComplexMatrix& series, PhaseDomain domain, double factor) {
    if (domain == PhaseDomain::PositiveSequence) {
        series *= factor;
        return;
    }
    for (Eigen::Index p = 0; p < series.rows(); ++p) series(p, p) *= factor;
}

}  // namespace

Network tx_transform(const Network& network, double lambda, double gamma) {
    Network out = network;
    const double series_factor = 1.0 + lambda * gamma;
    const double open = 1.0 - lambda;
    for (auto& br : out.branches) {
        scale_series(br.series, out.domain, series_factor);
        br.charging *= open;
    }
    for (auto& tx : out.transformers) {
        scale_series(tx.series, out.domain, series_factor);
        tx.charging *= open;
        for (Eigen::Index p = 0; p < tx.tap.size(); ++p) {
            tx.tap(p) = homotopy_tap(tx.tap(p), lambda);
            tx.shift(p) = homotopy_shift(tx.shift(p), lambda);
        }
    }
    for (auto& sh : out.shunts) {
        sh.admittance *= open;
        if (sh.switched) sh.switched->block *= open;
    }
    return out;
}

Network power_transform(const Network& network, double beta) {
    Network out = network;
    for (auto& g : out.generators) {
        g.p *= beta;
        if (!g.regulating) g.q *= beta;
    }
    for (auto& l : out.zip_loads) {
        l.current *= beta;
        l.power *= beta;
    }
    for (auto& l : out.big_loads) l.alpha *= beta;
    return out;
}

std::vector<VirtualShortPath> build_virtual_shorts(const Network& network, double gamma, Complex unit) {
    std::vector<VirtualShortPath> paths;
    std::set<std::pair<int, int>> seen;
    for (const auto& g : network.generators) {
        if (!g.in_service || !g.regulating || !g.remote_bus || *g.remote_bus == g.bus) continue;
        if (!seen.insert({g.bus, *g.remote_bus}).second) continue;
        paths.push_back({g.bus, *g.remote_bus, gamma * unit});
    }
    return paths;
}

namespace {

struct SubProblem {
    Network network;
    std::vector<VirtualShort> shorts;
};

SubProblem make_subproblem(const Network& network, HomotopyMethod method, double lambda,
                           const HomotopySchedule& schedule, const std::vector<VirtualShortPath>& paths) {
    if (method == HomotopyMethod::PowerStepping) return {power_transform(network, 1.0 - lambda), {}};
    SubProblem sub{tx_transform(network, lambda, schedule.gamma), {}};
    for (const auto& path : paths)
        sub.shorts.push_back(
            {network.bus_index(path.controlling_bus), network.bus_index(path.controlled_bus), path.admittance_at(lambda)});
    return sub;
}

}  // namespace

HomotopyResult run_homotopy(const Network& network, HomotopyMethod method, const StateVector& start,
                            const NrOptions& options, const HomotopySchedule& schedule, NrEngine& engine) {
    HomotopyResult result;
    auto absorb = [&](const NrResult& nr) {
        result.inner_iterations += nr.iterations;
        result.nr_trace.insert(result.nr_trace.end(), nr.trace.begin(), nr.trace.end());
    };

    if (method == HomotopyMethod::None) {
        const NrResult nr = engine.solve(network, start, options);
        absorb(nr);
        result.converged = nr.converged;
        result.state = nr.state;
        result.residual = nr.residual;
        result.last_good_lambda = nr.converged ? 0.0 : 1.0;
        result.failure = nr.failure;
        return result;
    }

    const auto paths = method == HomotopyMethod::TxStepping
                           ? build_virtual_shorts(network, schedule.gamma, schedule.short_admittance)
                           : std::vector<VirtualShortPath>{};

    HomotopyState state{method, 1.0, schedule.gamma, schedule.initial_step, schedule.min_step, schedule.backtrack, {}};
    NrOptions step_options = options;
    step_options.max_iter = std::min(options.max_iter, schedule.step_max_iter);

    auto attempt = [&](double lambda, const StateVector& from) {
        const SubProblem sub = make_subproblem(network, method, lambda, schedule, paths);
        NrOptions sub_options = lambda == 0.0 ? options : step_options;
        // Shorted series elements raise the current scale, and the round-off floor, by the same factor.
        if (method == HomotopyMethod::TxStepping) sub_options.tol *= 1.0 + lambda * schedule.gamma;
        NrResult nr = engine.solve(sub.network, from, sub_options, sub.shorts);
        absorb(nr);
        result.lambda_trace.push_back({lambda, nr.iterations, nr.residual.max(), nr.converged});
        return nr;
    };

    NrResult first = attempt(1.0, start);
    if (!first.converged) {
        result.state = first.state;
        result.residual = first.residual;
        result.failure = "trivial sub-problem did not converge: " + first.failure;
        return result;
    }
    StateVector current = first.state;
    state.accepted.push_back(1.0);
    result.residual = first.residual;
    int streak = 0;

    while (state.lambda > 0.0) {
        const double next = std::max(0.0, state.lambda - state.step);
        NrResult nr = attempt(next, current);
        if (nr.converged) {
            current = std::move(nr.state);
            result.residual = nr.residual;
            state.lambda = next;
            state.accepted.push_back(next);
            if (++streak >= 2) {
                state.step = std::min(state.step * schedule.growth, schedule.max_step);
                streak = 0;
            }
            continue;
        }
        streak = 0;
        state.step *= state.backtrack;
        if (state.step < state.min_step) {
            result.failure = "continuation step underflow at lambda " + std::to_string(state.lambda);
            result.residual = nr.residual;
            break;
        }
    }

    result.converged = state.lambda == 0.0;
    result.state = std::move(current);
    result.steps = static_cast<int>(state.accepted.size());
    result.last_good_lambda = state.lambda;
    return result;
}

HomotopyResult run_homotopy(const Network& network, HomotopyMethod method, const StateVector& start,
                            const NrOptions& options, const HomotopySchedule& schedule) {
    NrEngine engine;
    return run_homotopy(network, method, start, options, schedule, engine);
}

}  // namespace circuitflow
