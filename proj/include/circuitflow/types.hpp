#pragma once

#include <complex>
#include <numbers>

#include <Eigen/Core>

namespace circuitflow {

using Complex = std::complex<double>;

using Vector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Positive-sequence networks carry one phase per device, three-phase
/// networks carry phases a, b, c in that order.
enum class PhaseDomain { PositiveSequence, ThreePhase };

constexpr int phase_count(PhaseDomain domain) {
    return domain == PhaseDomain::ThreePhase ? 3 : 1;
}

constexpr const char* phase_name(PhaseDomain domain, int phase) {
    if (domain == PhaseDomain::PositiveSequence) return "p";
    constexpr const char* names[] = {"a", "b", "c"};
    return names[phase];
}

/// Nominal angle offset of a phase in a balanced set (0, -120, +120 degrees).
constexpr double phase_offset(PhaseDomain domain, int phase) {
    if (domain == PhaseDomain::PositiveSequence) return 0.0;
    constexpr double offsets[] = {0.0, -2.0 * std::numbers::pi / 3.0, 2.0 * std::numbers::pi / 3.0};
    return offsets[phase];
}

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace circuitflow
