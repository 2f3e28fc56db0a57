#include "circuitflow/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace circuitflow {

namespace {

class UnionFind {
  public:
    explicit UnionFind(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    int find(int i) {
        while (parent_[i] != i) {
            parent_[i] = parent_[parent_[i]];
            i = parent_[i];
        }
        return i;
    }

    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

  private:
    std::vector<int> parent_;
};

std::unordered_map<int, int> build_lookup(const Network& network) {
    std::unordered_map<int, int> lookup;
    for (int i = 0; i < network.bus_count(); ++i) lookup.emplace(network.buses[i].id, i);
    return lookup;
}

/// Island label per bus position, numbered by first appearance.
std::vector<int> compute_islands(const Network& network, const std::unordered_map<int, int>& lookup) {
    UnionFind uf(network.bus_count());
    auto join = [&](int from, int to) {
        auto f = lookup.find(from);
        auto t = lookup.find(to);
        if (f != lookup.end() && t != lookup.end()) uf.unite(f->second, t->second);
    };
    for (const auto& br : network.branches)
        if (br.in_service) join(br.from, br.to);
    for (const auto& tx : network.transformers)
        if (tx.in_service) join(tx.from, tx.to);

    std::vector<int> label(network.bus_count(), -1);
    std::unordered_map<int, int> root_label;
    for (int i = 0; i < network.bus_count(); ++i) {
        int root = uf.find(i);
        auto [it, inserted] = root_label.emplace(root, static_cast<int>(root_label.size()));
        label[i] = it->second;
    }
    return label;
}

bool all_finite(const Vector& v) { return v.allFinite(); }

bool all_finite(const ComplexVector& v) {
    for (const auto& c : v)
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
    return true;
}

bool all_finite(const ComplexMatrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
        if (!std::isfinite(m(i).real()) || !std::isfinite(m(i).imag())) return false;
    return true;
}

}  // namespace

ComplexVector Shunt::total_admittance() const {
    ComplexVector y = admittance;
    if (switched) y.array() += static_cast<double>(switched->blocks_on) * switched->block;
    return y;
}

int Network::bus_index(int id) const {
    auto it = bus_lookup_.find(id);
    if (it == bus_lookup_.end()) throw std::out_of_range("unknown bus id " + std::to_string(id));
    return it->second;
}

void Network::finalize() {
    bus_lookup_ = build_lookup(*this);
    auto islands = compute_islands(*this, bus_lookup_);
    islands_ = islands.empty() ? 0 : *std::max_element(islands.begin(), islands.end()) + 1;

    std::set<int> regulated;
    for (const auto& g : generators)
        if (g.in_service && g.regulating) regulated.insert(g.regulated_bus());

    for (int i = 0; i < bus_count(); ++i) {
        auto& bus = buses[i];
        bus.island = islands[i];
        if (bus.slack)
            bus.kind = BusKind::Slack;
        else if (regulated.contains(bus.id))
            bus.kind = BusKind::PV;
        else
            bus.kind = BusKind::PQ;
    }
}

const char* to_string(ValidationError::Kind kind) {
    using K = ValidationError::Kind;
    switch (kind) {
        case K::MissingSlack: return "MissingSlack";
        case K::MultipleSlack: return "MultipleSlack";
        case K::UnknownBus: return "UnknownBus";
        case K::DuplicateId: return "DuplicateId";
        case K::UnreachableRemote: return "UnreachableRemote";
        case K::BadQLimits: return "BadQLimits";
        case K::BadVoltageSetpoint: return "BadVoltageSetpoint";
        case K::PhaseMismatch: return "PhaseMismatch";
        case K::ZeroAdmittance: return "ZeroAdmittance";
        case K::AsymmetricAdmittance: return "AsymmetricAdmittance";
        case K::TapOutOfRange: return "TapOutOfRange";
        case K::ShiftOutOfRange: return "ShiftOutOfRange";
        case K::BadShuntBlocks: return "BadShuntBlocks";
        case K::NonFinite: return "NonFinite";
        case K::BadBase: return "BadBase";
    }
    return "Unknown";
}

std::vector<ValidationError> validate(const Network& network) {
    using K = ValidationError::Kind;
    std::vector<ValidationError> errors;
    auto report = [&](K kind, int id, std::string what) { errors.push_back({kind, id, std::move(what)}); };

    const int n = network.phases();
    if (!(network.base_mva > 0.0) || !std::isfinite(network.base_mva))
        report(K::BadBase, 0, "base MVA must be positive");

    std::unordered_map<int, int> lookup;
    for (int i = 0; i < network.bus_count(); ++i) {
        const auto& bus = network.buses[i];
        if (!lookup.emplace(bus.id, i).second) report(K::DuplicateId, bus.id, "duplicate bus id");
        if (!(bus.base_kv > 0.0)) report(K::BadBase, bus.id, "bus nominal voltage must be positive");
        if (bus.v_set && !(*bus.v_set > 0.0)) report(K::BadVoltageSetpoint, bus.id, "voltage setpoint must be positive");
        if (bus.slack && !bus.v_set) report(K::BadVoltageSetpoint, bus.id, "slack bus without voltage setpoint");
    }

    auto known = [&](int bus_id, int device_id, const char* what) {
        if (lookup.contains(bus_id)) return true;
        report(K::UnknownBus, device_id, std::string(what) + " references unknown bus " + std::to_string(bus_id));
        return false;
    };
    auto check_ids = [&](const auto& devices, const char* what) {
        std::set<int> seen;
        for (const auto& d : devices)
            if (!seen.insert(d.id).second) report(K::DuplicateId, d.id, std::string("duplicate ") + what + " id");
    };
    check_ids(network.generators, "generator");
    check_ids(network.zip_loads, "load");
    check_ids(network.big_loads, "load");
    check_ids(network.branches, "branch");
    check_ids(network.transformers, "transformer");
    check_ids(network.shunts, "shunt");

    auto islands = compute_islands(network, lookup);
    const int island_count = islands.empty() ? 0 : *std::max_element(islands.begin(), islands.end()) + 1;
    std::vector<int> slack_count(island_count, 0);
    for (int i = 0; i < network.bus_count(); ++i)
        if (network.buses[i].slack) ++slack_count[islands[i]];
    for (int island = 0; island < island_count; ++island) {
        if (slack_count[island] == 0)
            report(K::MissingSlack, island, "island " + std::to_string(island) + " has no slack bus");
        else if (slack_count[island] > 1)
            report(K::MultipleSlack, island, "island " + std::to_string(island) + " has more than one slack bus");
    }

    for (const auto& g : network.generators) {
        if (!known(g.bus, g.id, "generator")) continue;
        if (g.p.size() != n || g.q.size() != n || g.q_min.size() != n || g.q_max.size() != n) {
            report(K::PhaseMismatch, g.id, "generator phase count mismatch");
            continue;
        }
        if (!all_finite(g.p) || !all_finite(g.q) || g.q_min.hasNaN() || g.q_max.hasNaN())
            report(K::NonFinite, g.id, "generator values not finite");
        if ((g.q_min.array() > g.q_max.array()).any()) report(K::BadQLimits, g.id, "Q_min exceeds Q_max");
        if (!g.in_service || !g.regulating) continue;
        const int target = g.regulated_bus();
        if (!known(target, g.id, "generator regulation")) continue;
        const auto& bus = network.buses[lookup.at(target)];
        if (!bus.v_set) report(K::BadVoltageSetpoint, g.id, "regulated bus has no voltage setpoint");
        if (islands[lookup.at(target)] != islands[lookup.at(g.bus)])
            report(K::UnreachableRemote, g.id, "regulated bus " + std::to_string(target) + " not reachable");
    }

    auto check_load = [&](const auto& load, std::initializer_list<const ComplexVector*> fields) {
        if (!known(load.bus, load.id, "load")) return;
        for (const auto* f : fields) {
            if (f->size() != n) {
                report(K::PhaseMismatch, load.id, "load phase count mismatch");
                return;
            }
            if (!all_finite(*f)) report(K::NonFinite, load.id, "load values not finite");
        }
        if (load.connection == Connection::Delta && n != 3)
            report(K::PhaseMismatch, load.id, "delta connection needs three phases");
    };
    for (const auto& l : network.zip_loads) check_load(l, {&l.admittance, &l.current, &l.power});
    for (const auto& l : network.big_loads) check_load(l, {&l.alpha, &l.admittance});

    auto check_series = [&](int id, int from, int to, const ComplexMatrix& series, const ComplexMatrix& charging) {
        bool ok = known(from, id, "branch");
        ok = known(to, id, "branch") && ok;
        if (series.rows() != n || series.cols() != n || charging.rows() != n || charging.cols() != n) {
            report(K::PhaseMismatch, id, "admittance matrix size mismatch");
            return;
        }
        if (!all_finite(series) || !all_finite(charging)) report(K::NonFinite, id, "admittance not finite");
        if (series.isZero(0.0)) report(K::ZeroAdmittance, id, "series admittance is zero");
        if (series != series.transpose() || charging != charging.transpose())
            report(K::AsymmetricAdmittance, id, "admittance matrix not symmetric");
        (void)ok;
    };
    for (const auto& br : network.branches) check_series(br.id, br.from, br.to, br.series, br.charging);
    for (const auto& tx : network.transformers) {
        check_series(tx.id, tx.from, tx.to, tx.series, tx.charging);
        if (tx.tap.size() != n || tx.shift.size() != n) {
            report(K::PhaseMismatch, tx.id, "tap/shift phase count mismatch");
            continue;
        }
        if (!(tx.tap_min > 0.0) || tx.tap_min > tx.tap_max || (tx.tap.array() < tx.tap_min).any() ||
            (tx.tap.array() > tx.tap_max).any())
            report(K::TapOutOfRange, tx.id, "tap outside [tap_min, tap_max]");
        if ((tx.shift.array() <= -std::numbers::pi).any() || (tx.shift.array() > std::numbers::pi).any())
            report(K::ShiftOutOfRange, tx.id, "phase shift outside (-180, 180]");
        if (tx.controlled_bus) known(*tx.controlled_bus, tx.id, "transformer control");
    }

    for (const auto& sh : network.shunts) {
        if (!known(sh.bus, sh.id, "shunt")) continue;
        if (sh.admittance.size() != n) {
            report(K::PhaseMismatch, sh.id, "shunt phase count mismatch");
            continue;
        }
        if (!all_finite(sh.admittance)) report(K::NonFinite, sh.id, "shunt admittance not finite");
        if (sh.switched) {
            const auto& s = *sh.switched;
            if (s.min_blocks > s.max_blocks || s.blocks_on < s.min_blocks || s.blocks_on > s.max_blocks ||
                !std::isfinite(s.block.real()) || !std::isfinite(s.block.imag()) || !(s.v_low <= s.v_high))
                report(K::BadShuntBlocks, sh.id, "switched shunt blocks inconsistent");
        }
    }
    return errors;
}

namespace {

std::string summarize(const std::vector<ValidationError>& errors) {
    std::ostringstream out;
    out << "invalid network:";
    for (const auto& e : errors) out << " [" << to_string(e.kind) << " " << e.device_id << ": " << e.message << "]";
    return out.str();
}

/// Scales every quantity by the given factors: `power` for load-like
/// quantities and `series(kv)` for branch admittances.
template <typename SeriesScale>
Network rescale(const Network& network, double power, SeriesScale series, Units target) {
    Network out = network;
    out.units = target;
    std::unordered_map<int, double> kv;
    for (const auto& b : network.buses) kv[b.id] = b.base_kv;
    auto kv_of = [&](int bus) {
        auto it = kv.find(bus);
        return it == kv.end() ? 1.0 : it->second;
    };

    for (auto& g : out.generators) {
        g.p *= power;
        g.q *= power;
        g.q_min *= power;
        g.q_max *= power;
    }
    for (auto& l : out.zip_loads) {
        l.admittance *= power;
        l.current *= power;
        l.power *= power;
    }
    for (auto& l : out.big_loads) {
        l.alpha *= power;
        l.admittance *= power;
    }
    for (auto& s : out.shunts) {
        s.admittance *= power;
        if (s.switched) s.switched->block *= power;
    }
    for (auto& br : out.branches) {
        const double f = series(kv_of(br.from));
        br.series *= f;
        br.charging *= f;
    }
    for (auto& tx : out.transformers) {
        const double f = series(kv_of(tx.from));
        tx.series *= f;
        tx.charging *= f;
    }
    out.finalize();
    return out;
}

void check_bases(const Network& network) {
    if (!(network.base_mva > 0.0)) throw std::invalid_argument("base MVA must be positive");
    for (const auto& b : network.buses)
        if (!(b.base_kv > 0.0)) throw std::invalid_argument("bus " + std::to_string(b.id) + ": nominal kV must be positive");
}

}  // namespace

InvalidNetwork::InvalidNetwork(std::vector<ValidationError> errors)
    : std::runtime_error(summarize(errors)), errors_(std::move(errors)) {}

Network to_per_unit(const Network& network) {
    if (network.units == Units::PerUnit) return network;
    check_bases(network);
    const PerUnitBase base{network.base_mva};
    return rescale(
        network, 1.0 / network.base_mva, [&](double kv) { return base.impedance_base(kv); }, Units::PerUnit);
}

Network from_per_unit(const Network& network) {
    if (network.units == Units::Physical) return network;
    check_bases(network);
    const PerUnitBase base{network.base_mva};
    return rescale(
        network, network.base_mva, [&](double kv) { return 1.0 / base.impedance_base(kv); }, Units::Physical);
}

}  // namespace circuitflow
