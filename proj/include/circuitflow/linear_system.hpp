#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "circuitflow/types.hpp"

namespace circuitflow {

struct SingularityReport {
    int index = -1;  // failing row (zero row) or pivot column
    std::string reason;
};

/// Sparse real system A x = b assembled from triplets. Duplicate triplets are
/// summed in input order, so assembling the same stamps twice is bit-identical.
/// The fill-reducing ordering is computed once and reused for as long as the
/// sparsity pattern does not change.
class SparseSystem {
  public:
    using Matrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

    /// Replaces the system. Throws std::out_of_range on indices outside [0, n).
    void assemble(std::span<const Eigen::Triplet<double>> triplets, std::span<const std::pair<int, double>> rhs, int n);

    /// Row-equilibrated LU solve with partial pivoting.
    std::variant<Vector, SingularityReport> factor_solve();

    int dimension() const { return static_cast<int>(rhs_.size()); }
    const Matrix& matrix() const { return matrix_; }
    const Vector& rhs() const { return rhs_; }
    /// Number of symbolic (ordering) analyses performed so far.
    int symbolic_analyses() const { return analyses_; }

  private:
    Matrix matrix_;
    Vector rhs_;
    using Lu = Eigen::SparseLU<Matrix, Eigen::COLAMDOrdering<int>>;
    std::unique_ptr<Lu> lu_ = std::make_unique<Lu>();
    std::vector<int> pattern_outer_;
    std::vector<int> pattern_inner_;
    int analyses_ = 0;
};

/// Convenience wrapper for one-shot solves.
SparseSystem assemble(std::span<const Eigen::Triplet<double>> triplets, std::span<const std::pair<int, double>> rhs,
                      int n);

}  // namespace circuitflow
