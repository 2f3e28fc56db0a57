#include "dense_power_flow.hpp"

#include <cmath>
#include <stdexcept>

namespace oracle {

using circuitflow::Network;

namespace {

int position(const Network& net, int id) {
    for (int b = 0; b < net.bus_count(); ++b)
        if (net.buses[b].id == id) return b;
    throw std::out_of_range("oracle: unknown bus");
}

void add_element(Eigen::MatrixXcd& y, int n, int phases, int f, int t, const Eigen::MatrixXcd& series,
                 const Eigen::MatrixXcd& charging, const std::vector<cplx>& ratio) {
    // Ideal transformer a:1 on the from side feeding the pi section.
    for (int i = 0; i < phases; ++i)
        for (int j = 0; j < phases; ++j) {
            const cplx ys = series(i, j);
            const cplx half = charging(i, j) / 2.0;
            y(i * n + f, j * n + f) += (ys + half) / (std::conj(ratio[i]) * ratio[j]);
            y(i * n + f, j * n + t) += -ys / std::conj(ratio[i]);
            y(i * n + t, j * n + f) += -ys / ratio[j];
            y(i * n + t, j * n + t) += ys + half;
        }
}

cplx shunt_total(const circuitflow::Shunt& sh, int p) {
    cplx total = sh.admittance(p);
    if (sh.switched) total += double(sh.switched->blocks_on) * sh.switched->block;
    return total;
}

enum class Role { Slack, PV, PQ };

struct BusSetup {
    std::vector<Role> role;
    std::vector<double> v_target;
};

BusSetup classify(const Network& net) {
    BusSetup setup;
    const int n = net.bus_count();
    setup.role.assign(n, Role::PQ);
    setup.v_target.assign(n, 1.0);
    for (int b = 0; b < n; ++b) {
        if (net.buses[b].slack) {
            setup.role[b] = Role::Slack;
            setup.v_target[b] = net.buses[b].v_set.value_or(1.0);
        }
    }
    for (const auto& g : net.generators) {
        if (!g.in_service || !g.regulating) continue;
        if (g.remote_bus && *g.remote_bus != g.bus) throw std::invalid_argument("oracle: remote regulation");
        const int b = position(net, g.bus);
        if (setup.role[b] == Role::Slack) continue;
        setup.role[b] = Role::PV;
        setup.v_target[b] = net.buses[b].v_set.value_or(1.0);
    }
    return setup;
}

/// Specified complex injection at each bus given its voltage (loads depend on |V|).
std::vector<cplx> specified_injection(const Network& net, const std::vector<cplx>& v) {
    std::vector<cplx> s(net.bus_count(), 0.0);
    for (const auto& g : net.generators) {
        if (!g.in_service) continue;
        s[position(net, g.bus)] += cplx(g.p(0), g.regulating ? 0.0 : g.q(0));
    }
    for (const auto& l : net.zip_loads) {
        const int b = position(net, l.bus);
        const double m = std::abs(v[b]);
        s[b] -= std::conj(l.admittance(0)) * m * m + m * l.current(0) + l.power(0);
    }
    for (const auto& l : net.big_loads) {
        const int b = position(net, l.bus);
        s[b] -= v[b] * std::conj(l.alpha(0) + l.admittance(0) * v[b]);
    }
    return s;
}

}  // namespace

Eigen::MatrixXcd bus_admittance(const Network& net) {
    const int n = net.bus_count();
    const int phases = net.phases();
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n * phases, n * phases);
    const std::vector<cplx> unity(phases, 1.0);
    for (const auto& br : net.branches)
        if (br.in_service)
            add_element(y, n, phases, position(net, br.from), position(net, br.to), br.series, br.charging, unity);
    for (const auto& tx : net.transformers) {
        if (!tx.in_service) continue;
        std::vector<cplx> ratio(phases);
        for (int p = 0; p < phases; ++p) ratio[p] = std::polar(tx.tap(p), tx.shift(p));
        add_element(y, n, phases, position(net, tx.from), position(net, tx.to), tx.series, tx.charging, ratio);
    }
    for (const auto& sh : net.shunts) {
        const int b = position(net, sh.bus);
        for (int p = 0; p < phases; ++p) y(p * n + b, p * n + b) += shunt_total(sh, p);
    }
    return y;
}

std::vector<cplx> power_mismatch(const Network& net, const Eigen::MatrixXcd& ybus, const std::vector<cplx>& voltage) {
    const int n = net.bus_count();
    const BusSetup setup = classify(net);
    Eigen::VectorXcd v(n);
    for (int b = 0; b < n; ++b) v(b) = voltage[b];
    const Eigen::VectorXcd current = ybus * v;
    const std::vector<cplx> spec = specified_injection(net, voltage);
    std::vector<cplx> out(n, 0.0);
    for (int b = 0; b < n; ++b) {
        if (setup.role[b] == Role::Slack) continue;
        const cplx mis = spec[b] - v(b) * std::conj(current(b));
        out[b] = setup.role[b] == Role::PV ? cplx(mis.real(), 0.0) : mis;
    }
    return out;
}

DenseSolution solve_power_flow(const Network& net, const DenseOptions& options) {
    if (net.domain != circuitflow::PhaseDomain::PositiveSequence)
        throw std::invalid_argument("oracle: positive sequence only");
    const int n = net.bus_count();
    const BusSetup setup = classify(net);
    const Eigen::MatrixXcd ybus = bus_admittance(net);

    std::vector<double> mag(n), ang(n, 0.0);
    for (int b = 0; b < n; ++b) {
        mag[b] = setup.v_target[b];
        if (setup.role[b] == Role::Slack) ang[b] = net.buses[b].slack_angle;
    }
    if (options.start) {
        for (int b = 0; b < n; ++b) {
            if (setup.role[b] == Role::Slack) continue;
            ang[b] = std::arg((*options.start)[b]);
            if (setup.role[b] == Role::PQ) mag[b] = std::abs((*options.start)[b]);
        }
    }

    // Unknown layout: angles of non-slack buses, then magnitudes of PQ buses.
    std::vector<int> ang_bus, mag_bus;
    for (int b = 0; b < n; ++b) {
        if (setup.role[b] != Role::Slack) ang_bus.push_back(b);
        if (setup.role[b] == Role::PQ) mag_bus.push_back(b);
    }
    const int na = static_cast<int>(ang_bus.size());
    const int dim = na + static_cast<int>(mag_bus.size());

    auto voltages = [&](const Eigen::VectorXd& x) {
        std::vector<double> m = mag, a = ang;
        for (int k = 0; k < na; ++k) a[ang_bus[k]] = x(k);
        for (int k = na; k < dim; ++k) m[mag_bus[k - na]] = x(k);
        std::vector<cplx> v(n);
        for (int b = 0; b < n; ++b) v[b] = std::polar(m[b], a[b]);
        return v;
    };
    auto residual = [&](const Eigen::VectorXd& x) {
        const std::vector<cplx> mis = power_mismatch(net, ybus, voltages(x));
        Eigen::VectorXd f(dim);
        for (int k = 0; k < na; ++k) f(k) = mis[ang_bus[k]].real();
        for (int k = na; k < dim; ++k) f(k) = mis[mag_bus[k - na]].imag();
        return f;
    };

    Eigen::VectorXd x(dim);
    for (int k = 0; k < na; ++k) x(k) = ang[ang_bus[k]];
    for (int k = na; k < dim; ++k) x(k) = mag[mag_bus[k - na]];

    DenseSolution out;
    Eigen::VectorXd f = residual(x);
    for (int it = 0; it <= options.max_iter; ++it) {
        out.mismatch = dim == 0 ? 0.0 : f.cwiseAbs().maxCoeff();
        out.iterations = it;
        if (out.mismatch < options.tol) {
            out.converged = true;
            break;
        }
        if (it == options.max_iter || !std::isfinite(out.mismatch)) break;
        Eigen::MatrixXd jac(dim, dim);
        for (int c = 0; c < dim; ++c) {
            Eigen::VectorXd up = x, down = x;
            up(c) += options.fd_step;
            down(c) -= options.fd_step;
            jac.col(c) = (residual(up) - residual(down)) / (2.0 * options.fd_step);
        }
        x -= jac.partialPivLu().solve(f);
        f = residual(x);
    }
    out.voltage = voltages(x);
    return out;
}

double current_mismatch(const Network& net, const Eigen::VectorXcd& voltage) {
    const int n = net.bus_count();
    const int phases = net.phases();
    const Eigen::MatrixXcd ybus = bus_admittance(net);
    Eigen::VectorXcd drawn = ybus * voltage;  // current leaving each node into the network

    auto node = [&](int b, int p) { return p * n + b; };
    auto load_current = [&](int b, circuitflow::Connection conn, int p, auto&& device) {
        const int a = node(b, p);
        if (conn == circuitflow::Connection::Wye) {
            drawn(a) += device(voltage(a));
            return;
        }
        const int c = node(b, (p + 1) % phases);
        const cplx i = device(voltage(a) - voltage(c));
        drawn(a) += i;
        drawn(c) -= i;
    };
    for (const auto& l : net.zip_loads) {
        const int b = position(net, l.bus);
        for (int p = 0; p < phases; ++p) {
            const cplx y = l.admittance(p), ic = l.current(p), s = l.power(p);
            load_current(b, l.connection, p, [&](cplx v) {
                // S = conj(Y)|V|^2 + |V|(I_P + jI_Q) + S, drawn current conj(S / V).
                const double m = std::abs(v);
                return std::conj((std::conj(y) * m * m + m * ic + s) / v);
            });
        }
    }
    for (const auto& l : net.big_loads) {
        const int b = position(net, l.bus);
        for (int p = 0; p < phases; ++p) {
            const cplx alpha = l.alpha(p), y = l.admittance(p);
            load_current(b, l.connection, p, [&](cplx v) { return alpha + y * v; });
        }
    }
    for (const auto& g : net.generators) {
        if (!g.in_service) continue;
        const int b = position(net, g.bus);
        for (int p = 0; p < phases; ++p)
            drawn(node(b, p)) -= std::conj(cplx(g.p(p), g.q(p)) / voltage(node(b, p)));
    }
    double worst = 0.0;
    for (int b = 0; b < n; ++b) {
        if (net.buses[b].slack) continue;
        for (int p = 0; p < phases; ++p) worst = std::max(worst, std::abs(drawn(node(b, p))));
    }
    return worst;
}

TwoBusSolutions two_bus_closed_form(double v1, double r, double x, double p, double q) {
    // |V2|^4 - (V1^2 - 2(PR + QX))|V2|^2 + (P^2 + Q^2)(R^2 + X^2) = 0, then
    // V1 conj(V2) = |V2|^2 + Z conj(S) fixes the angle.
    const double b = v1 * v1 - 2.0 * (p * r + q * x);
    const double disc = b * b - 4.0 * (p * p + q * q) * (r * r + x * x);
    if (disc < 0.0) throw std::domain_error("oracle: load beyond the nose point");
    const cplx z(r, x), s(p, q);
    auto receiving = [&](double mag2) {
        const double angle = -std::arg(mag2 + z * std::conj(s));
        return std::polar(std::sqrt(mag2), angle);
    };
    return {receiving((b + std::sqrt(disc)) / 2.0), receiving((b - std::sqrt(disc)) / 2.0)};
}

}  // namespace oracle
