#include "circuitflow/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

namespace circuitflow {

const char* to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::Converged: return "Converged";
        case SolveStatus::Diverged: return "Diverged";
        case SolveStatus::Infeasible: return "Infeasible";
    }
    return "Unknown";
}

int exit_code(SolveStatus status) {
    switch (status) {
        case SolveStatus::Converged: return 0;
        case SolveStatus::Diverged: return 1;
        case SolveStatus::Infeasible: return 2;
    }
    return 1;
}

std::string SolverOptions::check() const {
    if (max_outer_passes < 1) return "max_outer_passes must be at least 1";
    if (!(limit_tolerance >= 0.0)) return "limit_tolerance must be non-negative";
    if (!(schedule.gamma > 0.0)) return "gamma must be positive";
    if (!(schedule.initial_step > 0.0 && schedule.initial_step <= 1.0)) return "initial step must lie in (0, 1]";
    if (!(schedule.min_step > 0.0)) return "min step must be positive";
    if (!(schedule.backtrack > 0.0 && schedule.backtrack < 1.0)) return "backtrack factor must lie in (0, 1)";
    if (!(schedule.growth >= 1.0)) return "growth factor must be at least 1";
    return nr.check();
}

StateVector initialize_state(const Network& network, const InitialCondition& source) {
    const int buses = network.bus_count();
    const int phases = network.phases();
    const int gens = static_cast<int>(network.generators.size());
    StateVector state(buses, phases, gens);

    if (const auto* warm = std::get_if<WarmStart>(&source)) {
        if (!warm->state.matches(network)) throw std::invalid_argument("warm start does not match network dimensions");
        return warm->state;
    }
    if (std::holds_alternative<FlatStart>(source)) {
        for (int b = 0; b < buses; ++b)
            for (int p = 0; p < phases; ++p) state.v(b, p) = std::polar(1.0, phase_offset(network.domain, p));
        return state;
    }
    if (std::holds_alternative<FromCase>(source)) {
        for (int b = 0; b < buses; ++b) {
            const auto& bus = network.buses[b];
            for (int p = 0; p < phases; ++p)
                state.v(b, p) = std::polar(bus.v_init_mag, bus.v_init_angle + phase_offset(network.domain, p));
        }
        for (int g = 0; g < gens; ++g) state.generator_q.row(g) = network.generators[g].q.transpose();
        return state;
    }

    const auto& random = std::get<RandomStart>(source);
    if (!(random.mag_min <= random.mag_max) || !(random.ang_min_deg <= random.ang_max_deg) || !(random.mag_min > 0.0))
        throw std::invalid_argument("random initial condition needs 0 < mag_min <= mag_max and ang_min <= ang_max");
    std::mt19937_64 rng(random.seed);
    std::uniform_real_distribution<double> mag(random.mag_min, random.mag_max);
    std::uniform_real_distribution<double> ang(random.ang_min_deg, random.ang_max_deg);
    double m = mag(rng);
    double a = ang(rng);
    for (int b = 0; b < buses; ++b) {
        if (!random.same_for_all_buses && b > 0) {
            m = mag(rng);
            a = ang(rng);
        }
        for (int p = 0; p < phases; ++p) state.v(b, p) = std::polar(m, deg_to_rad(a) + phase_offset(network.domain, p));
    }
    return state;
}

namespace {

/// Move history of outer-loop devices. A move opposite to the previous one
/// freezes the device.
class DeviceHistory {
  public:
    enum class Kind { Generator, Shunt, Transformer };

    bool frozen(Kind kind, int index) const { return frozen_.contains({kind, index}); }

    void record(Kind kind, int index, int direction) {
        const auto key = std::make_pair(kind, index);
        const auto it = last_.find(key);
        if (it != last_.end() && it->second == -direction) frozen_.insert(key);
        last_[key] = direction;
    }

  private:
    std::map<std::pair<Kind, int>, int> last_;
    std::set<std::pair<Kind, int>> frozen_;
};

double mean_magnitude(const StateVector& state, int bus_pos) {
    double sum = 0.0;
    for (int p = 0; p < state.phases; ++p) sum += std::abs(state.v(bus_pos, p));
    return sum / state.phases;
}

struct OuterLoop {
    const Network& original;
    const SolverOptions& options;
    DeviceHistory history;
    std::map<int, int> pq_limit;  // generator position -> +1 at Q max, -1 at Q min

    int adjust(Network& work, const StateVector& state, int pass, std::vector<SwitchEvent>& events) {
        int changes = 0;
        if (options.enforce_q_limits) changes += adjust_generators(work, state, pass, events);
        if (options.adjust_shunts) changes += adjust_shunts(work, state, pass, events);
        if (options.adjust_taps) changes += adjust_taps(work, state, pass, events);
        return changes;
    }

    int adjust_generators(Network& work, const StateVector& state, int pass, std::vector<SwitchEvent>& events) {
        using Kind = DeviceHistory::Kind;
        const double tol = options.limit_tolerance;
        int changes = 0;
        for (int g = 0; g < static_cast<int>(work.generators.size()); ++g) {
            auto& gen = work.generators[g];
            if (!gen.in_service || work.buses[work.bus_index(gen.bus)].kind == BusKind::Slack) continue;
            if (history.frozen(Kind::Generator, g)) continue;

            if (gen.regulating) {
                int direction = 0;
                for (int p = 0; p < state.phases && direction == 0; ++p) {
                    const double q = state.generator_q(g, p);
                    if (q > gen.q_max(p) + tol) direction = 1;
                    else if (q < gen.q_min(p) - tol) direction = -1;
                }
                if (direction == 0) continue;
                for (int p = 0; p < state.phases; ++p)
                    gen.q(p) = std::clamp(state.generator_q(g, p), gen.q_min(p), gen.q_max(p));
                gen.regulating = false;
                pq_limit[g] = direction;
                history.record(Kind::Generator, g, 1);
                events.push_back({pass, "generator", gen.id, direction > 0 ? "pv_to_pq_at_qmax" : "pv_to_pq_at_qmin",
                                  gen.q(0)});
                ++changes;
                continue;
            }

            const auto limit = pq_limit.find(g);
            if (limit == pq_limit.end() || !original.generators[g].regulating) continue;
            const int target = work.bus_index(gen.regulated_bus());
            const double v_set = work.buses[target].v_set.value_or(1.0);
            bool relieved = false;
            for (int p = 0; p < state.phases; ++p) {
                const double v = std::abs(state.v(target, p));
                if ((limit->second > 0 && v > v_set + tol) || (limit->second < 0 && v < v_set - tol)) relieved = true;
            }
            if (!relieved) continue;
            gen.regulating = true;
            pq_limit.erase(limit);
            history.record(Kind::Generator, g, -1);
            events.push_back({pass, "generator", gen.id, "pq_to_pv", v_set});
            ++changes;
        }
        return changes;
    }

    int adjust_shunts(Network& work, const StateVector& state, int pass, std::vector<SwitchEvent>& events) {
        using Kind = DeviceHistory::Kind;
        int changes = 0;
        for (int s = 0; s < static_cast<int>(work.shunts.size()); ++s) {
            auto& shunt = work.shunts[s];
            if (!shunt.switched || history.frozen(Kind::Shunt, s)) continue;
            auto& blocks = *shunt.switched;
            const double v = mean_magnitude(state, work.bus_index(shunt.bus));
            const int raise = blocks.block.imag() >= 0.0 ? 1 : -1;
            int move = 0;
            if (v < blocks.v_low) move = raise;
            else if (v > blocks.v_high) move = -raise;
            const int next = blocks.blocks_on + move;
            if (move == 0 || next < blocks.min_blocks || next > blocks.max_blocks) continue;
            blocks.blocks_on = next;
            history.record(Kind::Shunt, s, move);
            events.push_back({pass, "shunt", shunt.id, move > 0 ? "block_on" : "block_off", static_cast<double>(next)});
            ++changes;
        }
        return changes;
    }

    int adjust_taps(Network& work, const StateVector& state, int pass, std::vector<SwitchEvent>& events) {
        using Kind = DeviceHistory::Kind;
        int changes = 0;
        for (int t = 0; t < static_cast<int>(work.transformers.size()); ++t) {
            auto& tx = work.transformers[t];
            if (!tx.in_service || !(tx.tap_step > 0.0) || !tx.controlled_bus || history.frozen(Kind::Transformer, t))
                continue;
            const double v = mean_magnitude(state, work.bus_index(*tx.controlled_bus));
            int move = 0;
            // A lower from-side ratio raises the to-side voltage.
            if (v < tx.v_target - tx.v_band) move = -1;
            else if (v > tx.v_target + tx.v_band) move = 1;
            if (move == 0) continue;
            const Vector next = tx.tap.array() + move * tx.tap_step;
            if (next.minCoeff() < tx.tap_min - 1e-12 || next.maxCoeff() > tx.tap_max + 1e-12) continue;
            tx.tap = next;
            history.record(Kind::Transformer, t, move);
            events.push_back({pass, "transformer", tx.id, move > 0 ? "tap_up" : "tap_down", next(0)});
            ++changes;
        }
        return changes;
    }
};

void absorb(SolveReport& report, const HomotopyResult& inner) {
    report.inner_iterations += inner.inner_iterations;
    report.homotopy_steps += inner.steps;
    report.nr_trace.insert(report.nr_trace.end(), inner.nr_trace.begin(), inner.nr_trace.end());
    report.lambda_trace.insert(report.lambda_trace.end(), inner.lambda_trace.begin(), inner.lambda_trace.end());
}

}  // namespace

SolveResult solve(const Network& network, const SolverOptions& options) {
    const auto started = std::chrono::steady_clock::now();
    if (auto problem = options.check(); !problem.empty()) throw std::invalid_argument(problem);
    if (auto errors = validate(network); !errors.empty()) throw InvalidNetwork(std::move(errors));

    SolveResult out;
    out.final_network = network;
    Network& work = out.final_network;
    work.finalize();
    SolveReport& report = out.report;

    const StateVector initial = initialize_state(network, options.init);
    NrEngine engine;
    OuterLoop outer{network, options, {}, {}};
    StateVector current = initial;
    bool warm = false;

    for (int pass = 1;; ++pass) {
        report.outer_passes = pass;
        HomotopyResult inner;
        if (warm) {
            inner = run_homotopy(work, HomotopyMethod::None, current, options.nr, options.schedule, engine);
            absorb(report, inner);
            if (!inner.converged && options.method != HomotopyMethod::None) {
                inner = run_homotopy(work, options.method, initial, options.nr, options.schedule, engine);
                absorb(report, inner);
            }
        } else {
            inner = run_homotopy(work, options.method, initial, options.nr, options.schedule, engine);
            absorb(report, inner);
        }
        current = inner.state;
        report.residual = inner.residual;
        if (!inner.converged) {
            report.status = SolveStatus::Diverged;
            report.message = inner.failure;
            break;
        }
        warm = true;

        const int changes = outer.adjust(work, current, pass, report.events);
        if (changes == 0) {
            report.status = SolveStatus::Converged;
            break;
        }
        work.finalize();
        if (pass >= options.max_outer_passes) {
            report.status = SolveStatus::Infeasible;
            report.message = "device settings still changing after " + std::to_string(pass) + " outer passes";
            break;
        }
    }

    if (report.status == SolveStatus::Converged) {
        const ConvergenceCheck check = check_convergence(work, current, options.nr.tol);
        report.residual = check.residual;
        if (!check.converged) {
            report.status = SolveStatus::Diverged;
            report.message = "final state fails the convergence check";
        }
    }
    out.state = std::move(current);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
}

}  // namespace circuitflow
