#pragma once

#include <optional>
#include <vector>

#include "circuitflow/network.hpp"

namespace circuitflow {

/// Solution-side quantities of a network, independent of how the unknowns are
/// numbered in the linear system. Per-bus vectors are phase-major: all buses
/// of phase a, then phase b, then phase c.
struct StateVector {
    int buses = 0;
    int phases = 1;
    ComplexVector voltage;           // per bus and phase
    Eigen::MatrixXd generator_q;     // generators x phases
    ComplexVector source_current;    // current injected by slack sources, per bus and phase

    StateVector() = default;
    StateVector(int bus_count, int phase_count, int generator_count);

    int slot(int bus_pos, int phase) const { return phase * buses + bus_pos; }
    Complex& v(int bus_pos, int phase) { return voltage(slot(bus_pos, phase)); }
    Complex v(int bus_pos, int phase) const { return voltage(slot(bus_pos, phase)); }

    bool matches(const Network& network) const;
};

/// Numbering of the real unknowns of the nodal system: V_R and V_I per node,
/// two auxiliary source currents per slack phase, one auxiliary reactive
/// power per voltage-control constraint.
class IndexMap {
  public:
    struct ControlGroup {
        int bus = 0;    // regulated bus position
        int phase = 0;
        int row = 0;    // auxiliary unknown / constraint row
        double v_set = 1.0;
        std::vector<std::pair<int, double>> members;  // generator position, share of the group's Q
    };

    IndexMap() = default;
    explicit IndexMap(const Network& network);

    int buses() const { return buses_; }
    int phases() const { return phases_; }
    int node(int bus_pos, int phase) const { return phase * buses_ + bus_pos; }
    int node_count() const { return buses_ * phases_; }
    static int vr(int node) { return 2 * node; }
    static int vi(int node) { return 2 * node + 1; }

    /// Row of the real source-current unknown of a slack bus phase (imaginary is +1).
    std::optional<int> slack_row(int bus_pos, int phase) const;
    const std::vector<ControlGroup>& groups() const { return groups_; }
    /// Group index controlled by a generator phase, if that phase regulates.
    std::optional<int> group_of(int generator_pos, int phase) const;
    /// Generators stamped as current sources (in service, not at a slack bus).
    const std::vector<int>& stamped_generators() const { return stamped_generators_; }
    int dimension() const { return dimension_; }

    Vector pack(const StateVector& state) const;
    /// Inverse of pack; fixed-Q generators take their Q from the network.
    StateVector unpack(const Vector& x, const Network& network) const;

  private:
    int buses_ = 0;
    int phases_ = 1;
    int dimension_ = 0;
    std::vector<int> slack_rows_;  // per node, -1 when not slack
    std::vector<ControlGroup> groups_;
    std::vector<int> generator_group_;  // generator * phases + phase -> group or -1
    std::vector<int> stamped_generators_;
};

/// Real and reactive output of every generator at a solved state. Slack-bus
/// generators share the source injection equally.
Eigen::MatrixXcd generator_dispatch(const Network& network, const StateVector& state);

}  // namespace circuitflow
