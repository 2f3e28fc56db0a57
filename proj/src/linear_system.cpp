#include "circuitflow/linear_system.hpp"

#include <cmath>
#include <stdexcept>

namespace circuitflow {

void SparseSystem::assemble(std::span<const Eigen::Triplet<double>> triplets,
                            std::span<const std::pair<int, double>> rhs, int n) {
    for (const auto& t : triplets)
        if (t.row() < 0 || t.row() >= n || t.col() < 0 || t.col() >= n)
            throw std::out_of_range("triplet index (" + std::to_string(t.row()) + ", " + std::to_string(t.col()) +
                                    ") outside system of dimension " + std::to_string(n));
    rhs_ = Vector::Zero(n);
    for (const auto& [row, value] : rhs) {
        if (row < 0 || row >= n) throw std::out_of_range("rhs index " + std::to_string(row) + " out of range");
        rhs_(row) += value;
    }
    matrix_.resize(n, n);
    matrix_.setFromTriplets(triplets.begin(), triplets.end());
    matrix_.makeCompressed();
}

std::variant<Vector, SingularityReport> SparseSystem::factor_solve() {
    const int n = dimension();
    if (n == 0) return Vector{};

    // Equilibrate rows to unit max-norm.
    Vector row_max = Vector::Zero(n);
    Vector col_max = Vector::Zero(n);
    for (int k = 0; k < matrix_.outerSize(); ++k)
        for (Matrix::InnerIterator it(matrix_, k); it; ++it) {
            row_max(it.row()) = std::max(row_max(it.row()), std::abs(it.value()));
            col_max(k) = std::max(col_max(k), std::abs(it.value()));
        }
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(row_max(i))) return SingularityReport{i, "non-finite entry in row"};
        if (row_max(i) == 0.0) return SingularityReport{i, "zero row"};
    }
    for (int j = 0; j < n; ++j)
        if (col_max(j) == 0.0) return SingularityReport{j, "zero column"};

    const Vector scale = row_max.cwiseInverse();
    Matrix scaled = scale.asDiagonal() * matrix_;
    scaled.makeCompressed();
    const Vector b = scale.cwiseProduct(rhs_);

    const std::vector<int> outer(scaled.outerIndexPtr(), scaled.outerIndexPtr() + n + 1);
    const std::vector<int> inner(scaled.innerIndexPtr(), scaled.innerIndexPtr() + scaled.nonZeros());
    if (outer != pattern_outer_ || inner != pattern_inner_) {
        lu_->analyzePattern(scaled);
        ++analyses_;
        pattern_outer_ = outer;
        pattern_inner_ = inner;
    }
    lu_->factorize(scaled);
    if (lu_->info() != Eigen::Success) {
        SingularityReport report{-1, lu_->lastErrorMessage()};
        const auto pos = report.reason.find("COLUMN AT ");
        if (pos != std::string::npos) report.index = std::stoi(report.reason.substr(pos + 10));
        return report;
    }

    Vector x = lu_->solve(b);
    if (!x.allFinite()) return SingularityReport{-1, "non-finite solution"};
    // One step of iterative refinement.
    const Vector r = b - scaled * x;
    if (r.lpNorm<Eigen::Infinity>() > 1e-14 * std::max(1.0, b.lpNorm<Eigen::Infinity>())) {
        const Vector dx = lu_->solve(r);
        if (dx.allFinite()) x += dx;
    }
    return x;
}

SparseSystem assemble(std::span<const Eigen::Triplet<double>> triplets, std::span<const std::pair<int, double>> rhs,
                      int n) {
    SparseSystem system;
    system.assemble(triplets, rhs, n);
    return system;
}

}  // namespace circuitflow
