#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "circuitflow/homotopy.hpp"

namespace circuitflow {

enum class SolveStatus { Converged, Diverged, Infeasible };

const char* to_string(SolveStatus status);
/// CLI exit code of a status: 0, 1 or 2.
int exit_code(SolveStatus status);

struct FlatStart {};
/// Voltages and generator outputs stored in the case.
struct FromCase {};
/// Uniform samples of magnitude (pu) and angle (degrees). With
/// `same_for_all_buses` one sample is drawn and applied everywhere.
struct RandomStart {
    double mag_min = 0.9;
    double mag_max = 1.1;
    double ang_min_deg = -40.0;
    double ang_max_deg = 40.0;
    std::uint64_t seed = 0;
    bool same_for_all_buses = true;
};
struct WarmStart {
    StateVector state;
};

using InitialCondition = std::variant<FlatStart, FromCase, RandomStart, WarmStart>;

struct SolverOptions {
    NrOptions nr;
    HomotopyMethod method = HomotopyMethod::None;
    HomotopySchedule schedule;
    int max_outer_passes = 10;
    bool enforce_q_limits = true;
    bool adjust_shunts = true;
    bool adjust_taps = true;
    InitialCondition init = FlatStart{};
    double limit_tolerance = 1e-8;  // Q beyond a limit by more than this is a violation

    std::string check() const;
};

struct SwitchEvent {
    int pass = 0;
    std::string device;  // "generator", "shunt" or "transformer"
    int id = 0;
    std::string action;
    double value = 0.0;  // Q at the limit, blocks on, or new tap
};

struct SolveReport {
    SolveStatus status = SolveStatus::Diverged;
    int inner_iterations = 0;
    int homotopy_steps = 0;
    int outer_passes = 0;
    std::vector<SwitchEvent> events;
    ResidualReport residual;
    double wall_seconds = 0.0;
    std::string message;
    std::vector<NrTraceRow> nr_trace;
    std::vector<LambdaTraceRow> lambda_trace;
};

struct SolveResult {
    SolveReport report;
    StateVector state;
    Network final_network;  // with the device settings chosen by the outer loop
};

/// Starting state for a solve. Throws std::invalid_argument on a WarmStart of
/// the wrong dimension or an empty random range.
StateVector initialize_state(const Network& network, const InitialCondition& source);

/// Inner Newton/homotopy loop followed by the outer device-limit loop.
/// Throws InvalidNetwork when the network fails validation and
/// std::invalid_argument on bad options.
SolveResult solve(const Network& network, const SolverOptions& options = {});

struct MismatchReport {
    bool power_based = true;    // power mismatch (positive sequence) or current mismatch (three-phase)
    double max_mismatch = 0.0;  // over non-slack buses and phases
    int worst_bus = -1;         // bus position
    Vector bus_mismatch;        // per bus, largest over phases
    double max_control = 0.0;   // slack voltage and regulated magnitude errors

    double max() const { return std::max(max_mismatch, max_control); }
};

/// Balance check built from a dense bus admittance matrix and the textbook
/// load and generator relations. Shares no code with the stamping path.
/// Positive-sequence buses whose generators hold their own voltage are
/// checked on real power only, as their reactive output is free.
MismatchReport validate_solution(const Network& network, const StateVector& state);

}  // namespace circuitflow
