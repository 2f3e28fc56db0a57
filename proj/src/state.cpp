#include "circuitflow/state.hpp"

#include <cmath>
#include <map>

namespace circuitflow {

StateVector::StateVector(int bus_count, int phase_count, int generator_count)
    : buses(bus_count),
      phases(phase_count),
      voltage(ComplexVector::Zero(bus_count * phase_count)),
      generator_q(Eigen::MatrixXd::Zero(generator_count, phase_count)),
      source_current(ComplexVector::Zero(bus_count * phase_count)) {}

bool StateVector::matches(const Network& network) const {
    return buses == network.bus_count() && phases == network.phases() &&
           voltage.size() == buses * phases && source_current.size() == buses * phases &&
           generator_q.rows() == static_cast<Eigen::Index>(network.generators.size()) &&
           generator_q.cols() == phases;
}

IndexMap::IndexMap(const Network& network) : buses_(network.bus_count()), phases_(network.phases()) {
    int next = 2 * node_count();

    slack_rows_.assign(node_count(), -1);
    for (int b = 0; b < buses_; ++b) {
        if (network.buses[b].kind != BusKind::Slack) continue;
        for (int p = 0; p < phases_; ++p) {
            slack_rows_[node(b, p)] = next;
            next += 2;
        }
    }

    const int gens = static_cast<int>(network.generators.size());
    generator_group_.assign(gens * phases_, -1);

    // Generators regulating the same bus phase share one constraint; ordered by
    // regulated bus position so numbering follows the bus table.
    std::map<std::pair<int, int>, std::vector<int>> by_target;
    for (int g = 0; g < gens; ++g) {
        const auto& gen = network.generators[g];
        if (!gen.in_service) continue;
        const int at = network.bus_index(gen.bus);
        if (network.buses[at].kind == BusKind::Slack) continue;
        stamped_generators_.push_back(g);
        if (!gen.regulating) continue;
        const int target = network.bus_index(gen.regulated_bus());
        if (network.buses[target].kind == BusKind::Slack) continue;
        by_target[{target, 0}].push_back(g);
    }

    for (const auto& [key, members] : by_target) {
        for (int p = 0; p < phases_; ++p) {
            ControlGroup group;
            group.bus = key.first;
            group.phase = p;
            group.v_set = network.buses[key.first].v_set.value_or(1.0);

            // Shares proportional to reactive range when every member has a
            // finite one, equal otherwise.
            double total = 0.0;
            bool finite = true;
            for (int g : members) {
                const auto& gen = network.generators[g];
                const double range = gen.q_max(p) - gen.q_min(p);
                if (!std::isfinite(range) || !(range > 0.0)) finite = false;
                total += range;
            }
            group.row = next++;
            for (int g : members) {
                const auto& gen = network.generators[g];
                const double share = finite ? (gen.q_max(p) - gen.q_min(p)) / total
                                            : 1.0 / static_cast<double>(members.size());
                group.members.emplace_back(g, share);
                generator_group_[g * phases_ + p] = static_cast<int>(groups_.size());
            }
            groups_.push_back(std::move(group));
        }
    }
    dimension_ = next;
}

std::optional<int> IndexMap::slack_row(int bus_pos, int phase) const {
    const int r = slack_rows_[node(bus_pos, phase)];
    if (r < 0) return std::nullopt;
    return r;
}

std::optional<int> IndexMap::group_of(int generator_pos, int phase) const {
    const int g = generator_group_[generator_pos * phases_ + phase];
    if (g < 0) return std::nullopt;
    return g;
}

Vector IndexMap::pack(const StateVector& state) const {
    Vector x = Vector::Zero(dimension_);
    for (int n = 0; n < node_count(); ++n) {
        x(vr(n)) = state.voltage(n).real();
        x(vi(n)) = state.voltage(n).imag();
        if (slack_rows_[n] >= 0) {
            // The auxiliary unknown is the current drawn into the source.
            x(slack_rows_[n]) = -state.source_current(n).real();
            x(slack_rows_[n] + 1) = -state.source_current(n).imag();
        }
    }
    for (const auto& group : groups_) {
        double q = 0.0;
        for (const auto& [g, share] : group.members) q += state.generator_q(g, group.phase);
        x(group.row) = q;
    }
    return x;
}

StateVector IndexMap::unpack(const Vector& x, const Network& network) const {
    StateVector state(buses_, phases_, static_cast<int>(network.generators.size()));
    for (int n = 0; n < node_count(); ++n) {
        state.voltage(n) = {x(vr(n)), x(vi(n))};
        if (slack_rows_[n] >= 0) state.source_current(n) = {-x(slack_rows_[n]), -x(slack_rows_[n] + 1)};
    }
    for (int g = 0; g < static_cast<int>(network.generators.size()); ++g)
        for (int p = 0; p < phases_; ++p) {
            const auto group = group_of(g, p);
            if (!group) {
                state.generator_q(g, p) = network.generators[g].q(p);
                continue;
            }
            for (const auto& [member, share] : groups_[*group].members)
                if (member == g) state.generator_q(g, p) = share * x(groups_[*group].row);
        }
    return state;
}

Eigen::MatrixXcd generator_dispatch(const Network& network, const StateVector& state) {
    const int gens = static_cast<int>(network.generators.size());
    const int phases = network.phases();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(gens, phases);

    std::map<int, int> slack_gen_count;
    for (const auto& g : network.generators)
        if (g.in_service && network.buses[network.bus_index(g.bus)].kind == BusKind::Slack) ++slack_gen_count[g.bus];

    for (int g = 0; g < gens; ++g) {
        const auto& gen = network.generators[g];
        if (!gen.in_service) continue;
        const int at = network.bus_index(gen.bus);
        for (int p = 0; p < phases; ++p) {
            if (network.buses[at].kind == BusKind::Slack) {
                const Complex s = state.v(at, p) * std::conj(state.source_current(state.slot(at, p)));
                out(g, p) = s / static_cast<double>(slack_gen_count[gen.bus]);
            } else {
                out(g, p) = {gen.p(p), state.generator_q(g, p)};
            }
        }
    }
    return out;
}

}  // namespace circuitflow
