#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "circuitflow/device_equations.hpp"
#include "circuitflow/state.hpp"

namespace circuitflow {

inline constexpr int kGround = -1;

/// Additive contribution of devices to the linearized nodal system
/// A(x_k) x_{k+1} = b(x_k). Rows are Kirchhoff current balances (current
/// leaving the node is positive) or auxiliary constraints.
struct Stamp {
    std::vector<Eigen::Triplet<double>> jacobian;
    std::vector<std::pair<int, double>> rhs;

    void add(int row, int col, double value) { jacobian.emplace_back(row, col, value); }
    void add_rhs(int row, double value) { rhs.emplace_back(row, value); }
    /// Adds `block` to the 2x2 (real, imaginary) block coupling two nodes.
    /// Ground rows or columns are dropped.
    void add_block(int row_node, int col_node, const Eigen::Matrix2d& block);
    /// Current `c` leaving `node` that does not depend on the unknowns.
    void add_constant_current(int node, Complex c);

    void append(const Stamp& other);
    bool empty() const { return jacobian.empty() && rhs.empty(); }
};

/// Linear series element between node sets `from` and `to` with nodal blocks
/// I_f = Yff V_f + Yft V_t, I_t = Ytf V_f + Ytt V_t.
void stamp_two_port(Stamp& stamp, std::span<const int> from, std::span<const int> to, const ComplexMatrix& yff,
                    const ComplexMatrix& yft, const ComplexMatrix& ytf, const ComplexMatrix& ytt);

/// Line pi-model: series admittance plus half of the charging at each end.
void stamp_branch(Stamp& stamp, std::span<const int> from, std::span<const int> to, const ComplexMatrix& series,
                  const ComplexMatrix& charging);

/// Off-nominal tap and phase-shifting transformer, tap on the from side.
/// Throws std::invalid_argument when a tap is not positive.
void stamp_transformer(Stamp& stamp, std::span<const int> from, std::span<const int> to, const ComplexMatrix& series,
                       const ComplexMatrix& charging, const Vector& tap, const Vector& shift);

/// Ideal voltage source pinning V_R = v_set cos(angle), V_I = v_set sin(angle)
/// through the auxiliary current unknowns at `aux_row` and `aux_row + 1`.
void stamp_slack(Stamp& stamp, int node, int aux_row, double v_set, double angle);

/// PV generator current source linearized at `v` with reactive output `q`.
/// Voltage derivatives are scaled by `zeta`; the Q column (when the generator
/// regulates) is unscaled and weighted by the generator's share of the group.
/// Throws std::domain_error at zero voltage.
void stamp_pv_generator(Stamp& stamp, int node, Complex v, double p, double q, double zeta,
                        std::optional<int> q_col = std::nullopt, double share = 1.0);

/// F = v_set^2 - V_R^2 - V_I^2 linearized at `v`, written into `row`.
void stamp_voltage_control(Stamp& stamp, int row, int node, double v_set, Complex v);
double voltage_control_residual(double v_set, Complex v);

/// One phase (or phase pair for delta) of a ZIP load across nodes a and b,
/// linearized at the device voltage V_a - V_b. Throws std::domain_error at
/// zero voltage when a nonlinear part is present.
void stamp_zip_load(Stamp& stamp, int node_a, int node_b, Complex v_device, Complex admittance, Complex current,
                    Complex power);

void stamp_big_load(Stamp& stamp, int node_a, int node_b, Complex alpha, Complex admittance);

/// Shunt admittance opened by the homotopy factor: y * (1 - open_factor).
void stamp_shunt(Stamp& stamp, int node, Complex admittance, double open_factor = 0.0);

/// Admittance between two nodes (used for the virtual short paths).
void stamp_admittance(Stamp& stamp, int node_a, int node_b, Complex admittance);

struct VirtualShort {
    int controlling = 0;  // bus positions
    int controlled = 0;
    Complex admittance;   // already scaled by lambda
};

struct StampOptions {
    double zeta = 1.0;
    std::vector<VirtualShort> shorts;
};

/// Stamps every device of `network` at the iterate `x`.
Stamp stamp_network(const Network& network, const IndexMap& index, const Vector& x, const StampOptions& options = {});

/// Node indices of a bus for each phase.
std::vector<int> bus_nodes(const IndexMap& index, int bus_pos);

}  // namespace circuitflow
