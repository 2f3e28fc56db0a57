#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "circuitflow/solver.hpp"

namespace circuitflow {

struct Outage {
    std::string label;
    std::vector<int> generators;    // generator ids
    std::vector<int> branches;      // branch ids
    std::vector<int> transformers;  // transformer ids
};

using ContingencySet = std::vector<Outage>;

/// Copy of `network` with the outaged devices out of service. Throws
/// std::invalid_argument when an id does not exist.
Network apply_outage(const Network& network, const Outage& outage);

/// Largest `fraction` of in-service generators by real output, then the
/// same fraction of branches and transformers by rating (by base-case flow
/// when no ratings are given), each dropped on its own.
ContingencySet sample_contingencies(const Network& network, const StateVector& base, double fraction = 0.1);

struct ContingencyResult {
    std::string label;
    SolveReport report;
    StateVector state;
    bool islanded = false;
    double max_mismatch = 0.0;  // validate_solution on the post-outage network
};

struct StatusTally {
    int converged = 0;
    int diverged = 0;
    int infeasible = 0;

    void add(SolveStatus status);
    int total() const { return converged + diverged + infeasible; }
};

struct ContingencyReport {
    std::vector<ContingencyResult> results;  // in input order
    StatusTally tally;
};

/// Solves every outage warm-started from `base`, first with plain Newton and
/// then, if that fails, with the homotopy configured in `options`.
/// `threads` = 0 uses the hardware concurrency.
ContingencyReport run_contingencies(const Network& network, const StateVector& base, const ContingencySet& set,
                                    const SolverOptions& options, int threads = 0);

struct SweepSpec {
    int samples = 15;
    double mag_min = 0.9;
    double mag_max = 1.1;
    double ang_min_deg = -40.0;
    double ang_max_deg = 40.0;
    std::uint64_t seed = 0;

    std::string check() const;
};

struct SweepSample {
    int index = 0;
    double vmag0 = 1.0;
    double vang0_deg = 0.0;
    SolveReport report;
    StateVector state;
};

struct SweepReport {
    std::vector<SweepSample> samples;
    Eigen::MatrixXd spread;  // pairwise max |V_i - V_j|, NaN unless both converged
    double max_spread = 0.0;
    StatusTally tally;
};

/// Starting points for a sweep: sample k gets every bus at (vmag0, vang0).
std::vector<std::pair<double, double>> sweep_points(const SweepSpec& spec);

SweepReport run_sweep(const Network& network, const SweepSpec& spec, const SolverOptions& options, int threads = 0);

/// Runs `count` independent jobs on up to `threads` workers.
void parallel_for(int count, int threads, const std::function<void(int)>& job);

}  // namespace circuitflow
