#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "circuitflow/case_io.hpp"

namespace fixtures {

inline std::string case_path(const std::string& name) { return std::string(CIRCUITFLOW_DATA_DIR) + "/" + name; }

inline circuitflow::Network load(const std::string& name) { return circuitflow::read_case(case_path(name)).network; }

/// Positive-sequence corpus shipped in data/cases, smallest first.
inline const std::vector<std::string>& corpus() {
    static const std::vector<std::string> names = {
        "case2.net",      "case3_ring.net", "case5_syn.net",   "case9.net",       "case14.net",
        "case24_radial.net", "case30_syn.net", "case40_mesh.net", "case57_syn.net", "case118_syn.net",
        "case200_syn.net",
    };
    return names;
}

/// Every shipped network, including the stressed and three-phase fixtures.
inline std::vector<std::string> all_cases() {
    auto names = corpus();
    names.insert(names.end(), {"case14_qlim.net", "case145_stressed.net", "feeder13_unbalanced.json"});
    return names;
}

/// Two-bus network: slack at 1 pu feeding p + jq through r + jx.
inline circuitflow::Network two_bus(double r, double x, double p, double q) {
    using namespace circuitflow;
    Network net;
    net.name = "two_bus";
    Bus slack;
    slack.id = 1;
    slack.slack = true;
    slack.v_set = 1.0;
    Bus load_bus;
    load_bus.id = 2;
    net.buses = {slack, load_bus};
    Branch br;
    br.id = 1;
    br.from = 1;
    br.to = 2;
    br.series = ComplexMatrix::Constant(1, 1, 1.0 / Complex(r, x));
    br.charging = ComplexMatrix::Zero(1, 1);
    net.branches = {br};
    ZipLoad load;
    load.id = 1;
    load.bus = 2;
    load.admittance = uniform(1, Complex{});
    load.current = uniform(1, Complex{});
    load.power = uniform(1, Complex(p, q));
    net.zip_loads = {load};
    net.finalize();
    return net;
}

}  // namespace fixtures

namespace fixtures {

/// Field-by-field comparison of two networks. With `tol` zero numeric arrays
/// must match bit for bit; otherwise each value within `tol` relative to max(1, |b|).
inline bool matches(const circuitflow::Network& a, const circuitflow::Network& b, double tol) {
    auto close = [tol](auto x, auto y) {
        if (tol == 0.0) return std::memcmp(&x, &y, sizeof x) == 0;
        if (x == y) return true;
        return std::abs(x - y) <= tol * std::max(1.0, static_cast<double>(std::abs(y)));
    };
    auto same = [&](const auto& x, const auto& y) {
        if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (!close(x.data()[i], y.data()[i])) return false;
        return true;
    };
    auto same_opt = [&](const std::optional<double>& x, const std::optional<double>& y) {
        return x.has_value() == y.has_value() && (!x || close(*x, *y));
    };
    if (a.domain != b.domain || a.units != b.units || !close(a.base_mva, b.base_mva) || a.name != b.name) return false;
    if (a.buses.size() != b.buses.size() || a.generators.size() != b.generators.size() ||
        a.zip_loads.size() != b.zip_loads.size() || a.big_loads.size() != b.big_loads.size() ||
        a.branches.size() != b.branches.size() || a.transformers.size() != b.transformers.size() ||
        a.shunts.size() != b.shunts.size())
        return false;
    for (std::size_t i = 0; i < a.buses.size(); ++i) {
        const auto &x = a.buses[i], &y = b.buses[i];
        if (x.id != y.id || x.kind != y.kind || x.slack != y.slack || !close(x.base_kv, y.base_kv) ||
            !same_opt(x.v_set, y.v_set) || !close(x.slack_angle, y.slack_angle) || !close(x.v_init_mag, y.v_init_mag) ||
            !close(x.v_init_angle, y.v_init_angle) || x.island != y.island)
            return false;
    }
    for (std::size_t i = 0; i < a.generators.size(); ++i) {
        const auto &x = a.generators[i], &y = b.generators[i];
        if (x.id != y.id || x.bus != y.bus || x.in_service != y.in_service || x.regulating != y.regulating ||
            x.remote_bus != y.remote_bus || !same(x.p, y.p) || !same(x.q, y.q) || !same(x.q_min, y.q_min) ||
            !same(x.q_max, y.q_max))
            return false;
    }
    for (std::size_t i = 0; i < a.zip_loads.size(); ++i) {
        const auto &x = a.zip_loads[i], &y = b.zip_loads[i];
        if (x.id != y.id || x.bus != y.bus || x.connection != y.connection || !same(x.admittance, y.admittance) ||
            !same(x.current, y.current) || !same(x.power, y.power))
            return false;
    }
    for (std::size_t i = 0; i < a.big_loads.size(); ++i) {
        const auto &x = a.big_loads[i], &y = b.big_loads[i];
        if (x.id != y.id || x.bus != y.bus || x.connection != y.connection || !same(x.alpha, y.alpha) ||
            !same(x.admittance, y.admittance))
            return false;
    }
    for (std::size_t i = 0; i < a.branches.size(); ++i) {
        const auto &x = a.branches[i], &y = b.branches[i];
        if (x.id != y.id || x.from != y.from || x.to != y.to || x.in_service != y.in_service ||
            !same(x.series, y.series) || !same(x.charging, y.charging) || !close(x.rating, y.rating))
            return false;
    }
    for (std::size_t i = 0; i < a.transformers.size(); ++i) {
        const auto &x = a.transformers[i], &y = b.transformers[i];
        if (x.id != y.id || x.from != y.from || x.to != y.to || x.in_service != y.in_service ||
            !same(x.series, y.series) || !same(x.charging, y.charging) || !same(x.tap, y.tap) ||
            !same(x.shift, y.shift) || !close(x.tap_min, y.tap_min) || !close(x.tap_max, y.tap_max) ||
            !close(x.tap_step, y.tap_step) || x.controlled_bus != y.controlled_bus || !close(x.v_target, y.v_target) ||
            !close(x.v_band, y.v_band) || !close(x.rating, y.rating))
            return false;
    }
    for (std::size_t i = 0; i < a.shunts.size(); ++i) {
        const auto &x = a.shunts[i], &y = b.shunts[i];
        if (x.id != y.id || x.bus != y.bus || !same(x.admittance, y.admittance) ||
            x.switched.has_value() != y.switched.has_value())
            return false;
        if (x.switched) {
            const auto &s = *x.switched, &t = *y.switched;
            if (!close(s.block, t.block) || s.min_blocks != t.min_blocks || s.max_blocks != t.max_blocks ||
                s.blocks_on != t.blocks_on || !close(s.v_low, t.v_low) || !close(s.v_high, t.v_high))
                return false;
        }
    }
    return true;
}

inline bool identical(const circuitflow::Network& a, const circuitflow::Network& b) { return matches(a, b, 0.0); }

}  // namespace fixtures
