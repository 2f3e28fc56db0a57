#include "circuitflow/stamps.hpp"

#include <cmath>
#include <stdexcept>

namespace circuitflow {

void Stamp::add_block(int row_node, int col_node, const Eigen::Matrix2d& block) {
    if (row_node == kGround || col_node == kGround) return;
    const int r = IndexMap::vr(row_node);
    const int c = IndexMap::vr(col_node);
    add(r, c, block(0, 0));
    add(r, c + 1, block(0, 1));
    add(r + 1, c, block(1, 0));
    add(r + 1, c + 1, block(1, 1));
}

void Stamp::add_constant_current(int node, Complex c) {
    if (node == kGround) return;
    add_rhs(IndexMap::vr(node), -c.real());
    add_rhs(IndexMap::vi(node), -c.imag());
}

void Stamp::append(const Stamp& other) {
    jacobian.insert(jacobian.end(), other.jacobian.begin(), other.jacobian.end());
    rhs.insert(rhs.end(), other.rhs.begin(), other.rhs.end());
}

void stamp_two_port(Stamp& stamp, std::span<const int> from, std::span<const int> to, const ComplexMatrix& yff,
                    const ComplexMatrix& yft, const ComplexMatrix& ytf, const ComplexMatrix& ytt) {
    const auto n = static_cast<Eigen::Index>(from.size());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            stamp.add_block(from[i], from[j], admittance_block(yff(i, j)));
            stamp.add_block(from[i], to[j], admittance_block(yft(i, j)));
            stamp.add_block(to[i], from[j], admittance_block(ytf(i, j)));
            stamp.add_block(to[i], to[j], admittance_block(ytt(i, j)));
        }
}

void stamp_branch(Stamp& stamp, std::span<const int> from, std::span<const int> to, const ComplexMatrix& series,
                  const ComplexMatrix& charging) {
    const ComplexMatrix self = series + 0.5 * charging;
    stamp_two_port(stamp, from, to, self, -series, -series, self);
}

void stamp_transformer(Stamp& stamp, std::span<const int> from, std::span<const int> to, const ComplexMatrix& series,
                       const ComplexMatrix& charging, const Vector& tap, const Vector& shift) {
    if ((tap.array() <= 0.0).any()) throw std::invalid_argument("transformer tap must be positive");
    const auto n = series.rows();
    ComplexVector ratio(n);
    for (Eigen::Index p = 0; p < n; ++p) ratio(p) = std::polar(tap(p), shift(p));

    const ComplexMatrix self = series + 0.5 * charging;
    ComplexMatrix yff(n, n), yft(n, n), ytf(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            yff(i, j) = self(i, j) / (std::conj(ratio(i)) * ratio(j));
            yft(i, j) = -series(i, j) / std::conj(ratio(i));
            ytf(i, j) = -series(i, j) / ratio(j);
        }
    stamp_two_port(stamp, from, to, yff, yft, ytf, self);
}

void stamp_slack(Stamp& stamp, int node, int aux_row, double v_set, double angle) {
    stamp.add(IndexMap::vr(node), aux_row, 1.0);
    stamp.add(IndexMap::vi(node), aux_row + 1, 1.0);
    stamp.add(aux_row, IndexMap::vr(node), 1.0);
    stamp.add(aux_row + 1, IndexMap::vi(node), 1.0);
    stamp.add_rhs(aux_row, v_set * std::cos(angle));
    stamp.add_rhs(aux_row + 1, v_set * std::sin(angle));
}

void stamp_pv_generator(Stamp& stamp, int node, Complex v, double p, double q, double zeta, std::optional<int> q_col,
                        double share) {
    if (std::norm(v) == 0.0) throw std::domain_error("generator linearized at zero voltage");
    const Linearization lin = linearize_pv_generator(v, p, q);

    // The generator injects I_G, so the current it draws from the node is -I_G.
    const Eigen::Matrix2d jv = -zeta * lin.dv;
    stamp.add_block(node, node, jv);

    Eigen::Vector2d constant = -Eigen::Vector2d(lin.current.real(), lin.current.imag()) - jv * Eigen::Vector2d(v.real(), v.imag());
    if (q_col) {
        const Eigen::Vector2d jq = -share * lin.dq;
        stamp.add(IndexMap::vr(node), *q_col, jq(0));
        stamp.add(IndexMap::vi(node), *q_col, jq(1));
        constant += lin.dq * q;
    }
    stamp.add_constant_current(node, {constant(0), constant(1)});
}

double voltage_control_residual(double v_set, Complex v) { return v_set * v_set - std::norm(v); }

void stamp_voltage_control(Stamp& stamp, int row, int node, double v_set, Complex v) {
    stamp.add(row, IndexMap::vr(node), -2.0 * v.real());
    stamp.add(row, IndexMap::vi(node), -2.0 * v.imag());
    stamp.add_rhs(row, -(v_set * v_set + std::norm(v)));
}

void stamp_admittance(Stamp& stamp, int node_a, int node_b, Complex admittance) {
    const Eigen::Matrix2d block = admittance_block(admittance);
    stamp.add_block(node_a, node_a, block);
    stamp.add_block(node_a, node_b, -block);
    stamp.add_block(node_b, node_a, -block);
    stamp.add_block(node_b, node_b, block);
}

void stamp_zip_load(Stamp& stamp, int node_a, int node_b, Complex v_device, Complex admittance, Complex current,
                    Complex power) {
    if (admittance != Complex{}) stamp_admittance(stamp, node_a, node_b, admittance);
    if (current == Complex{} && power == Complex{}) return;
    if (std::norm(v_device) == 0.0) throw std::domain_error("ZIP load linearized at zero voltage");

    const Linearization lin = linearize_zip_nonlinear(v_device, current, power);
    stamp.add_block(node_a, node_a, lin.dv);
    stamp.add_block(node_a, node_b, -lin.dv);
    stamp.add_block(node_b, node_a, -lin.dv);
    stamp.add_block(node_b, node_b, lin.dv);

    const Eigen::Vector2d c =
        Eigen::Vector2d(lin.current.real(), lin.current.imag()) - lin.dv * Eigen::Vector2d(v_device.real(), v_device.imag());
    stamp.add_constant_current(node_a, {c(0), c(1)});
    stamp.add_constant_current(node_b, {-c(0), -c(1)});
}

void stamp_big_load(Stamp& stamp, int node_a, int node_b, Complex alpha, Complex admittance) {
    if (admittance != Complex{}) stamp_admittance(stamp, node_a, node_b, admittance);
    if (alpha == Complex{}) return;
    stamp.add_constant_current(node_a, alpha);
    stamp.add_constant_current(node_b, -alpha);
}

void stamp_shunt(Stamp& stamp, int node, Complex admittance, double open_factor) {
    stamp_admittance(stamp, node, kGround, admittance * (1.0 - open_factor));
}

std::vector<int> bus_nodes(const IndexMap& index, int bus_pos) {
    std::vector<int> nodes(index.phases());
    for (int p = 0; p < index.phases(); ++p) nodes[p] = index.node(bus_pos, p);
    return nodes;
}

Stamp stamp_network(const Network& network, const IndexMap& index, const Vector& x, const StampOptions& options) {
    Stamp stamp;
    const int phases = network.phases();
    auto voltage = [&](int node) { return Complex{x(IndexMap::vr(node)), x(IndexMap::vi(node))}; };

    for (const auto& br : network.branches) {
        if (!br.in_service) continue;
        stamp_branch(stamp, bus_nodes(index, network.bus_index(br.from)), bus_nodes(index, network.bus_index(br.to)),
                     br.series, br.charging);
    }
    for (const auto& tx : network.transformers) {
        if (!tx.in_service) continue;
        stamp_transformer(stamp, bus_nodes(index, network.bus_index(tx.from)),
                          bus_nodes(index, network.bus_index(tx.to)), tx.series, tx.charging, tx.tap, tx.shift);
    }
    for (const auto& sh : network.shunts) {
        const int b = network.bus_index(sh.bus);
        const ComplexVector y = sh.total_admittance();
        for (int p = 0; p < phases; ++p) stamp_shunt(stamp, index.node(b, p), y(p));
    }

    for (int b = 0; b < network.bus_count(); ++b) {
        const auto& bus = network.buses[b];
        if (bus.kind != BusKind::Slack) continue;
        for (int p = 0; p < phases; ++p)
            stamp_slack(stamp, index.node(b, p), *index.slack_row(b, p), bus.v_set.value_or(1.0),
                        bus.slack_angle + phase_offset(network.domain, p));
    }

    for (int g : index.stamped_generators()) {
        const auto& gen = network.generators[g];
        const int b = network.bus_index(gen.bus);
        for (int p = 0; p < phases; ++p) {
            const int node = index.node(b, p);
            const auto group = index.group_of(g, p);
            if (!group) {
                stamp_pv_generator(stamp, node, voltage(node), gen.p(p), gen.q(p), 1.0);
                continue;
            }
            const auto& grp = index.groups()[*group];
            double share = 0.0;
            for (const auto& [member, s] : grp.members)
                if (member == g) share = s;
            stamp_pv_generator(stamp, node, voltage(node), gen.p(p), share * x(grp.row), options.zeta, grp.row, share);
        }
    }
    for (const auto& grp : index.groups()) {
        const int node = index.node(grp.bus, grp.phase);
        stamp_voltage_control(stamp, grp.row, node, grp.v_set, voltage(node));
    }

    // Wye devices sit between a phase node and ground, delta devices across
    // the phase pair (p, p+1).
    auto terminals = [&](int b, Connection conn, int p) -> std::pair<int, int> {
        if (conn == Connection::Wye) return {index.node(b, p), kGround};
        return {index.node(b, p), index.node(b, (p + 1) % phases)};
    };
    auto device_voltage = [&](std::pair<int, int> t) {
        return t.second == kGround ? voltage(t.first) : voltage(t.first) - voltage(t.second);
    };
    for (const auto& load : network.zip_loads) {
        const int b = network.bus_index(load.bus);
        for (int p = 0; p < phases; ++p) {
            const auto t = terminals(b, load.connection, p);
            stamp_zip_load(stamp, t.first, t.second, device_voltage(t), load.admittance(p), load.current(p),
                           load.power(p));
        }
    }
    for (const auto& load : network.big_loads) {
        const int b = network.bus_index(load.bus);
        for (int p = 0; p < phases; ++p) {
            const auto t = terminals(b, load.connection, p);
            stamp_big_load(stamp, t.first, t.second, load.alpha(p), load.admittance(p));
        }
    }

    for (const auto& vs : options.shorts)
        for (int p = 0; p < phases; ++p)
            stamp_admittance(stamp, index.node(vs.controlling, p), index.node(vs.controlled, p), vs.admittance);

    return stamp;
}

}  // namespace circuitflow
