#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>

namespace charfactor {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Relative eigenvalue floor for every (M'M)^{-1} style solve.
inline constexpr double kSpdRelativeTolerance = 1e-12;

/// Inverse of a symmetric positive definite matrix, or nullopt when its
/// smallest eigenvalue falls below `rel_tol` times the largest.
std::optional<MatrixXd> spd_inverse(const MatrixXd& m, double rel_tol = kSpdRelativeTolerance);

/// Smallest / largest eigenvalue ratio of a symmetric matrix (0 when the
/// largest eigenvalue is not positive).
double spd_condition_ratio(const MatrixXd& m);

/// Flip column signs so that the largest-magnitude entry of each column is
/// positive. The first such entry wins ties.
void fix_column_signs(MatrixXd& m);

/// P_A = A (A'A)^{-1} A'.
MatrixXd projector(const MatrixXd& a);

/// Spectral norm of P_A - P_B; zero iff span(A) == span(B).
double subspace_distance(const MatrixXd& a, const MatrixXd& b);

/// Sum of f(0) + ... + f(count - 1) by recursive halving, so the reduction
/// order is fixed for a given count.
template <typename T>
T pairwise_sum(Index count, const std::function<T(Index)>& f) {
  std::function<T(Index, Index)> rec = [&](Index lo, Index hi) -> T {
    if (hi - lo == 1) return f(lo);
    const Index mid = lo + (hi - lo) / 2;
    T left = rec(lo, mid);
    left += rec(mid, hi);
    return left;
  };
  return rec(0, count);
}

}  // namespace charfactor
