#include <cmath>
#include <vector>

#include "circuitflow/solver.hpp"

namespace circuitflow {

namespace {

using DenseY = Eigen::MatrixXcd;

void add_two_port(DenseY& y, const Network& net, int from, int to, const ComplexMatrix& series,
                  const ComplexMatrix& charging, const ComplexVector& ratio) {
    const int n = net.bus_count();
    const int phases = net.phases();
    for (int i = 0; i < phases; ++i)
        for (int j = 0; j < phases; ++j) {
            const Complex self = series(i, j) + 0.5 * charging(i, j);
            const int fi = i * n + from, fj = j * n + from;
            const int ti = i * n + to, tj = j * n + to;
            y(fi, fj) += self / (std::conj(ratio(i)) * ratio(j));
            y(fi, tj) -= series(i, j) / std::conj(ratio(i));
            y(ti, fj) -= series(i, j) / ratio(j);
            y(ti, tj) += self;
        }
}

DenseY bus_admittance(const Network& net) {
    const int n = net.bus_count();
    const int phases = net.phases();
    DenseY y = DenseY::Zero(n * phases, n * phases);
    const ComplexVector unity = ComplexVector::Ones(phases);
    for (const auto& br : net.branches)
        if (br.in_service) add_two_port(y, net, net.bus_index(br.from), net.bus_index(br.to), br.series, br.charging, unity);
    for (const auto& tx : net.transformers) {
        if (!tx.in_service) continue;
        ComplexVector ratio(phases);
        for (int p = 0; p < phases; ++p) ratio(p) = std::polar(tx.tap(p), tx.shift(p));
        add_two_port(y, net, net.bus_index(tx.from), net.bus_index(tx.to), tx.series, tx.charging, ratio);
    }
    for (const auto& sh : net.shunts) {
        const int b = net.bus_index(sh.bus);
        ComplexVector total = sh.admittance;
        if (sh.switched) total.array() += static_cast<double>(sh.switched->blocks_on) * sh.switched->block;
        for (int p = 0; p < phases; ++p) y(p * n + b, p * n + b) += total(p);
    }
    return y;
}

/// Complex power drawn by a ZIP element across voltage v.
Complex zip_power(Complex v, Complex admittance, Complex current, Complex power) {
    const double mag = std::abs(v);
    return std::conj(admittance) * mag * mag + mag * current + power;
}

}  // namespace

MismatchReport validate_solution(const Network& net, const StateVector& state) {
    const int n = net.bus_count();
    const int phases = net.phases();
    const bool three_phase = net.domain == PhaseDomain::ThreePhase;
    MismatchReport report;
    report.power_based = !three_phase;
    report.bus_mismatch = Vector::Zero(n);
    if (!state.matches(net)) {
        report.max_mismatch = kInfinity;
        return report;
    }

    const ComplexVector& v = state.voltage;
    // Current leaving each node into the passive network plus loads, minus generation.
    ComplexVector leaving = bus_admittance(net) * v;
    auto node = [&](int bus, int p) { return p * n + bus; };

    for (const auto& load : net.zip_loads) {
        const int b = net.bus_index(load.bus);
        for (int p = 0; p < phases; ++p) {
            const bool delta = three_phase && load.connection == Connection::Delta;
            const int a = node(b, p);
            const int c = delta ? node(b, (p + 1) % phases) : -1;
            const Complex vd = delta ? v(a) - v(c) : v(a);
            const Complex s = zip_power(vd, load.admittance(p), load.current(p), load.power(p));
            const Complex i = vd == Complex{} ? Complex{} : std::conj(s / vd);
            leaving(a) += i;
            if (delta) leaving(c) -= i;
        }
    }
    for (const auto& load : net.big_loads) {
        const int b = net.bus_index(load.bus);
        for (int p = 0; p < phases; ++p) {
            const bool delta = three_phase && load.connection == Connection::Delta;
            const int a = node(b, p);
            const int c = delta ? node(b, (p + 1) % phases) : -1;
            const Complex vd = delta ? v(a) - v(c) : v(a);
            const Complex i = load.alpha(p) + load.admittance(p) * vd;
            leaving(a) += i;
            if (delta) leaving(c) -= i;
        }
    }
    // Positive-sequence buses holding their own voltage have a free reactive
    // output, so only the real power balance is checked there.
    std::vector<bool> free_q(n, false);
    for (int g = 0; g < static_cast<int>(net.generators.size()); ++g) {
        const auto& gen = net.generators[g];
        const int b = net.bus_index(gen.bus);
        if (!gen.in_service || net.buses[b].kind == BusKind::Slack) continue;
        if (!three_phase && gen.regulating && gen.regulated_bus() == gen.bus) free_q[b] = true;
        for (int p = 0; p < phases; ++p) {
            const Complex s{gen.p(p), state.generator_q(g, p)};
            const int a = node(b, p);
            if (v(a) == Complex{}) {
                leaving(a) = Complex{kInfinity, 0.0};
                continue;
            }
            leaving(a) -= std::conj(s / v(a));
        }
    }

    for (int b = 0; b < n; ++b) {
        const auto& bus = net.buses[b];
        for (int p = 0; p < phases; ++p) {
            const int a = node(b, p);
            if (bus.kind == BusKind::Slack) {
                const Complex target = std::polar(bus.v_set.value_or(1.0), bus.slack_angle + phase_offset(net.domain, p));
                report.max_control = std::max(report.max_control, std::abs(v(a) - target));
                continue;
            }
            // Power form: S = V conj(I) is the net power leaving the bus.
            const Complex s = v(a) * std::conj(leaving(a));
            const double m = three_phase ? std::abs(leaving(a)) : (free_q[b] ? std::abs(s.real()) : std::abs(s));
            report.bus_mismatch(b) = std::max(report.bus_mismatch(b), m);
            if (!(m <= report.max_mismatch)) {
                report.max_mismatch = m;
                report.worst_bus = b;
            }
        }
    }

    for (const auto& gen : net.generators) {
        if (!gen.in_service || !gen.regulating) continue;
        const int target = net.bus_index(gen.regulated_bus());
        const auto& bus = net.buses[target];
        if (bus.kind == BusKind::Slack || net.buses[net.bus_index(gen.bus)].kind == BusKind::Slack) continue;
        for (int p = 0; p < phases; ++p)
            report.max_control =
                std::max(report.max_control, std::abs(std::abs(v(node(target, p))) - bus.v_set.value_or(1.0)));
    }
    return report;
}

}  // namespace circuitflow
