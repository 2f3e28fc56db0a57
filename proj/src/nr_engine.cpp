#include "circuitflow/nr_engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace circuitflow {

std::string NrOptions::check() const {
    if (!(zeta_min > 0.0 && zeta_min <= zeta_init && zeta_init <= 1.0)) return "need 0 < zeta_min <= zeta_init <= 1";
    if (!(dv_max > 0.0)) return "dv_max must be positive";
    if (!(v_min < v_max)) return "v_min must be below v_max";
    if (!(tol > 0.0)) return "tol must be positive";
    if (max_iter < 0) return "max_iter must be non-negative";
    if (!(zeta_shrink > 0.0 && zeta_shrink <= 1.0) || !(zeta_growth >= 1.0)) return "bad zeta factors";
    if (!(q_current_step_max >= 0.0)) return "q_current_step_max must be non-negative";
    return {};
}

namespace {

ResidualReport residual_from_system(const SparseSystem& system, const IndexMap& index, const Vector& x) {
    const Vector r = system.matrix() * x - system.rhs();
    ResidualReport report;
    report.node_mismatch = Vector::Zero(index.node_count());
    for (int b = 0; b < index.buses(); ++b)
        for (int p = 0; p < index.phases(); ++p) {
            const int n = index.node(b, p);
            if (const auto aux = index.slack_row(b, p)) {
                report.max_source = std::max({report.max_source, std::abs(r(*aux)), std::abs(r(*aux + 1))});
                continue;
            }
            const double m = std::hypot(r(IndexMap::vr(n)), r(IndexMap::vi(n)));
            report.node_mismatch(n) = m;
            if (!(m <= report.max_kcl)) {
                report.max_kcl = m;
                report.worst_node = n;
            }
        }
    for (const auto& g : index.groups()) report.max_control = std::max(report.max_control, std::abs(r(g.row)));
    return report;
}

/// Re-solves the slack source currents from the exact balance at slack nodes.
void settle_source_currents(const SparseSystem& system, const IndexMap& index, Vector& x) {
    const Vector r = system.matrix() * x - system.rhs();
    for (int b = 0; b < index.buses(); ++b)
        for (int p = 0; p < index.phases(); ++p)
            if (const auto aux = index.slack_row(b, p)) {
                const int n = index.node(b, p);
                x(*aux) -= r(IndexMap::vr(n));
                x(*aux + 1) -= r(IndexMap::vi(n));
            }
}

}  // namespace

ResidualReport evaluate_residual(const Network& network, const IndexMap& index, const Vector& x,
                                 const StampOptions& options) {
    const Stamp stamp = stamp_network(network, index, x, options);
    SparseSystem system;
    system.assemble(stamp.jacobian, stamp.rhs, index.dimension());
    return residual_from_system(system, index, x);
}

ConvergenceCheck check_convergence(const Network& network, const StateVector& state, double tol) {
    const IndexMap index(network);
    ConvergenceCheck check;
    try {
        check.residual = evaluate_residual(network, index, index.pack(state));
    } catch (const std::domain_error&) {
        check.residual.max_kcl = kInfinity;
        return check;
    }
    check.converged = check.residual.max() < tol;
    return check;
}

double limit_voltage(double v_k, double dv, const NrOptions& options) {
    const double step = std::min(std::abs(dv), options.dv_max);
    const double sign = dv > 0.0 ? 1.0 : (dv < 0.0 ? -1.0 : 0.0);
    return std::clamp(v_k + sign * step, options.v_min, options.v_max);
}

Vector apply_voltage_limiting(const Vector& v_k, const Vector& dv, const NrOptions& options) {
    Vector out(v_k.size());
    for (Eigen::Index i = 0; i < v_k.size(); ++i) out(i) = limit_voltage(v_k(i), dv(i), options);
    return out;
}

double update_zeta(std::span<const NrTraceRow> trace, double zeta, const NrOptions& options) {
    if (trace.empty()) return zeta;
    const double last = trace.back().max_dv;
    if (last > options.large_step) return std::max(options.zeta_min, zeta * options.zeta_shrink);
    if (trace.size() >= 3) {
        const double a = trace[trace.size() - 3].residual;
        const double b = trace[trace.size() - 2].residual;
        const double c = trace.back().residual;
        if (a > b && b > c) return std::min(1.0, zeta * options.zeta_growth);
    }
    return zeta;
}

double apply_q_limiting(Complex v, double p, double q_k, double q_raw, double current_step_max) {
    const double d = std::norm(v);
    if (d == 0.0) return q_k;
    const Linearization lin = linearize_pv_generator(v, p, q_k);
    Complex di = Complex{lin.dq(0), lin.dq(1)} * (q_raw - q_k);
    const double magnitude = std::abs(di);
    if (magnitude > current_step_max) di *= current_step_max / magnitude;
    return generator_power_from_current(v, lin.current + di).imag();
}

bool has_nonlinear_devices(const Network& network) {
    for (const auto& g : network.generators) {
        if (!g.in_service || network.buses[network.bus_index(g.bus)].kind == BusKind::Slack) continue;
        if (g.regulating || !g.p.isZero(0.0) || !g.q.isZero(0.0)) return true;
    }
    for (const auto& l : network.zip_loads)
        if (!l.current.isZero(0.0) || !l.power.isZero(0.0)) return true;
    return false;
}

Vector NrEngine::limit_step(const Network& network, const IndexMap& index, const Vector& x, const Vector& raw,
                            const NrOptions& options, bool limit_voltages, int& limited) const {
    Vector next = raw;
    limited = 0;
    if (limit_voltages) {
        for (int n = 0; n < index.node_count(); ++n)
            for (int row : {IndexMap::vr(n), IndexMap::vi(n)}) {
                next(row) = limit_voltage(x(row), raw(row) - x(row), options);
                if (next(row) != raw(row)) ++limited;
            }
    }
    if (std::isfinite(options.q_current_step_max)) {
        for (const auto& group : index.groups()) {
            const double q_k = x(group.row);
            const double dq = raw(group.row) - q_k;
            if (dq == 0.0) continue;
            // The most restrictive member sets the fraction of the group step.
            double fraction = 1.0;
            for (const auto& [g, share] : group.members) {
                const int node = index.node(network.bus_index(network.generators[g].bus), group.phase);
                const Complex v{x(IndexMap::vr(node)), x(IndexMap::vi(node))};
                const double p = network.generators[g].p(group.phase);
                const double member_k = share * q_k;
                const double member_raw = share * raw(group.row);
                if (member_raw == member_k) continue;
                const double limited_q = apply_q_limiting(v, p, member_k, member_raw, options.q_current_step_max);
                fraction = std::min(fraction, (limited_q - member_k) / (member_raw - member_k));
            }
            next(group.row) = q_k + std::clamp(fraction, 0.0, 1.0) * dq;
        }
    }
    return next;
}

std::variant<NrEngine::Step, SingularityReport> NrEngine::iterate(const Network& network, const IndexMap& index,
                                                                  const Vector& x, double zeta,
                                                                  const NrOptions& options,
                                                                  const std::vector<VirtualShort>& shorts) {
    const Stamp stamp = stamp_network(network, index, x, {zeta, shorts});
    system_.assemble(stamp.jacobian, stamp.rhs, index.dimension());
    const ResidualReport residual = residual_from_system(system_, index, x);
    auto solved = system_.factor_solve();
    if (auto* singular = std::get_if<SingularityReport>(&solved)) return *singular;

    const Vector& raw = std::get<Vector>(solved);
    Step step;
    step.row.residual = residual.max();
    step.row.zeta = zeta;
    for (int n = 0; n < index.node_count(); ++n)
        for (int row : {IndexMap::vr(n), IndexMap::vi(n)})
            step.row.max_dv = std::max(step.row.max_dv, std::abs(raw(row) - x(row)));
    step.x = limit_step(network, index, x, raw, options, has_nonlinear_devices(network), step.row.limited);
    return step;
}

NrResult NrEngine::solve(const Network& network, const StateVector& start, const NrOptions& options,
                         const std::vector<VirtualShort>& shorts) {
    if (auto problem = options.check(); !problem.empty()) throw std::invalid_argument(problem);
    if (!start.matches(network)) throw std::invalid_argument("start state does not match network dimensions");

    NrResult result;
    const IndexMap index(network);
    const bool nonlinear = has_nonlinear_devices(network);
    Vector x = index.pack(start);
    double zeta = options.zeta_init;

    try {
        for (int k = 0;; ++k) {
            const Stamp stamp = stamp_network(network, index, x, {zeta, shorts});
            system_.assemble(stamp.jacobian, stamp.rhs, index.dimension());
            result.residual = residual_from_system(system_, index, x);
            result.iterations = k;
            if (!std::isfinite(result.residual.max())) {
                result.failure = "non-finite residual";
                break;
            }
            if (result.residual.max() < options.tol) {
                settle_source_currents(system_, index, x);
                result.converged = true;
                break;
            }
            if (k == options.max_iter) {
                result.failure = "iteration limit";
                break;
            }

            auto solved = system_.factor_solve();
            if (auto* singular = std::get_if<SingularityReport>(&solved)) {
                result.singular = *singular;
                result.failure = "singular system: " + singular->reason;
                break;
            }
            const Vector& raw = std::get<Vector>(solved);
            NrTraceRow row;
            row.iteration = k + 1;
            row.residual = result.residual.max();
            row.zeta = zeta;
            for (int n = 0; n < index.node_count(); ++n)
                for (int r : {IndexMap::vr(n), IndexMap::vi(n)})
                    row.max_dv = std::max(row.max_dv, std::abs(raw(r) - x(r)));
            x = limit_step(network, index, x, raw, options, nonlinear, row.limited);
            result.trace.push_back(row);
            zeta = update_zeta(result.trace, zeta, options);
        }
    } catch (const std::domain_error& e) {
        result.failure = e.what();
    }
    result.state = index.unpack(x, network);
    return result;
}

}  // namespace circuitflow
