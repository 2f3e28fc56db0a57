#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "circuitflow/linear_system.hpp"
#include "circuitflow/stamps.hpp"

namespace circuitflow {

struct NrOptions {
    double tol = 1e-6;           // per-unit current mismatch
    int max_iter = 100;
    double dv_max = 0.1;         // per-unit cap on each real/imaginary voltage step
    double v_min = -2.0;
    double v_max = 2.0;
    double zeta_init = 1.0;
    double zeta_min = 0.05;
    double zeta_shrink = 0.5;
    double zeta_growth = 2.0;
    double large_step = 0.5;     // max |dV| that counts as a large step
    double q_current_step_max = kInfinity;  // cap on the generator current change per step

    /// Empty when the options satisfy their invariants, else a description.
    std::string check() const;
};

struct NrTraceRow {
    int iteration = 0;
    double residual = 0.0;  // at the iterate the step was taken from
    double max_dv = 0.0;    // largest raw voltage step
    double zeta = 1.0;      // damping used for the step
    int limited = 0;        // voltage components changed by limiting
};

struct ResidualReport {
    double max_kcl = 0.0;      // largest complex current mismatch at a non-slack node
    int worst_node = -1;
    double max_control = 0.0;  // largest |F| of the voltage-control constraints
    double max_source = 0.0;   // largest slack voltage constraint violation
    Vector node_mismatch;      // |dI| per node, zero at slack nodes

    double max() const { return std::max({max_kcl, max_control, max_source}); }
};

struct ConvergenceCheck {
    bool converged = false;
    ResidualReport residual;
};

/// Nonlinear current mismatch of the system stamped at x: A(x) x - b(x).
ResidualReport evaluate_residual(const Network& network, const IndexMap& index, const Vector& x,
                                 const StampOptions& options = {});

/// Convergence of a state against the untransformed device equations.
ConvergenceCheck check_convergence(const Network& network, const StateVector& state, double tol);

/// Capped and clamped update of one real or imaginary voltage component.
double limit_voltage(double v_k, double dv, const NrOptions& options);

/// Componentwise limit_voltage over a vector of voltage components.
Vector apply_voltage_limiting(const Vector& v_k, const Vector& dv, const NrOptions& options);

/// Damping factor for the next step given the trace so far.
double update_zeta(std::span<const NrTraceRow> trace, double zeta, const NrOptions& options);

/// Limits the change of a generator's current implied by the Q step from
/// q_k to q_raw to `current_step_max`, then recovers Q from the inverse of the
/// generator relation at the iterate voltage. Returns q_k unchanged at zero
/// voltage.
double apply_q_limiting(Complex v, double p, double q_k, double q_raw, double current_step_max);

/// True when any device needs linearization (PV generators, fixed-power
/// generators, constant-current or constant-power load parts).
bool has_nonlinear_devices(const Network& network);

struct NrResult {
    bool converged = false;
    int iterations = 0;  // linear solves performed
    StateVector state;
    ResidualReport residual;
    std::vector<NrTraceRow> trace;
    std::optional<SingularityReport> singular;
    std::string failure;
};

/// Inner Newton loop. Keeps its sparse factorization between calls so that
/// repeated solves of one sub-problem reuse the ordering.
class NrEngine {
  public:
    struct Step {
        Vector x;
        NrTraceRow row;
    };

    NrResult solve(const Network& network, const StateVector& start, const NrOptions& options,
                   const std::vector<VirtualShort>& shorts = {});

    /// One stamp-assemble-solve-limit cycle from x.
    std::variant<Step, SingularityReport> iterate(const Network& network, const IndexMap& index, const Vector& x,
                                                  double zeta, const NrOptions& options,
                                                  const std::vector<VirtualShort>& shorts = {});

    int symbolic_analyses() const { return system_.symbolic_analyses(); }

  private:
    Vector limit_step(const Network& network, const IndexMap& index, const Vector& x, const Vector& raw,
                      const NrOptions& options, bool limit_voltages, int& limited) const;

    SparseSystem system_;
};

}  // namespace circuitflow
