#pragma once

#include <string>
#include <vector>

#include "circuitflow/nr_engine.hpp"

namespace circuitflow {

enum class HomotopyMethod { None, TxStepping, PowerStepping };

const char* to_string(HomotopyMethod method);

struct HomotopySchedule {
    double gamma = 1e4;           // series admittance scale at lambda = 1
    double initial_step = 0.1;
    double min_step = 1e-4;
    double backtrack = 0.5;
    double growth = 2.0;          // after two consecutive first-try successes
    double max_step = 0.5;
    int step_max_iter = 30;       // Newton budget of an intermediate sub-problem
    Complex short_admittance{1.0, -10.0};  // virtual short per unit of gamma
};

/// Continuation parameter. Tx stepping walks lambda from 1 to 0; power
/// stepping uses the same lambda with the load/generation scale beta = 1 - lambda,
/// so beta rises from 0 to 1.
struct HomotopyState {
    HomotopyMethod method = HomotopyMethod::None;
    double lambda = 1.0;
    double gamma = 1e4;
    double step = 0.1;
    double min_step = 1e-4;
    double backtrack = 0.5;
    std::vector<double> accepted;

    double beta() const { return 1.0 - lambda; }
};

struct VirtualShortPath {
    int controlling_bus = 0;  // bus ids
    int controlled_bus = 0;
    Complex admittance;       // value at lambda = 1

    Complex admittance_at(double lambda) const { return lambda * admittance; }
};

/// Relaxed tap, moving to 1 pu at lambda = 1.
constexpr double homotopy_tap(double tap, double lambda) { return tap + lambda * (1.0 - tap); }
/// Relaxed phase shift, moving to 0 at lambda = 1.
constexpr double homotopy_shift(double shift, double lambda) { return shift - lambda * shift; }

/// Series elements scaled by (1 + lambda * gamma) (self terms only for
/// three-phase matrices), taps and shifts relaxed, shunts and line charging
/// opened by (1 - lambda).
Network tx_transform(const Network& network, double lambda, double gamma);

/// Generator real power and load constant-current/constant-power parts (and
/// BIG base currents) scaled by beta. Impedance parts are untouched.
Network power_transform(const Network& network, double beta);

/// One path per distinct remote-control pair (controlling bus, controlled bus).
std::vector<VirtualShortPath> build_virtual_shorts(const Network& network, double gamma = 1e4,
                                                   Complex unit = {1.0, -10.0});

struct LambdaTraceRow {
    double lambda = 1.0;
    int nr_iterations = 0;
    double residual = 0.0;
    bool accepted = false;
};

struct HomotopyResult {
    bool converged = false;
    StateVector state;
    int steps = 0;              // accepted sub-problems
    int inner_iterations = 0;   // Newton iterations over all attempts
    double last_good_lambda = 1.0;
    ResidualReport residual;
    std::vector<LambdaTraceRow> lambda_trace;
    std::vector<NrTraceRow> nr_trace;
    std::string failure;
};

/// Solves the trivial sub-problem from `start` and walks to the original
/// problem, warm-starting every sub-problem from the last accepted solution and
/// halving the step on failure. With HomotopyMethod::None this is a plain
/// Newton solve.
HomotopyResult run_homotopy(const Network& network, HomotopyMethod method, const StateVector& start,
                            const NrOptions& options, const HomotopySchedule& schedule, NrEngine& engine);

HomotopyResult run_homotopy(const Network& network, HomotopyMethod method, const StateVector& start,
                            const NrOptions& options, const HomotopySchedule& schedule = {});

}  // namespace circuitflow
