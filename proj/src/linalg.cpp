#include "charfactor/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace charfactor {

std::optional<MatrixXd> spd_inverse(const MatrixXd& m, double rel_tol) {
  if (m.rows() != m.cols() || m.rows() == 0) return std::nullopt;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) return std::nullopt;
  const VectorXd& ev = eig.eigenvalues();
  const double hi = ev(ev.size() - 1);
  if (!(hi > 0.0) || ev(0) <= rel_tol * hi) return std::nullopt;
  const MatrixXd& v = eig.eigenvectors();
  return MatrixXd(v * ev.cwiseInverse().asDiagonal() * v.transpose());
}

double spd_condition_ratio(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const VectorXd& ev = eig.eigenvalues();
  const double hi = ev(ev.size() - 1);
  return hi > 0.0 ? ev(0) / hi : 0.0;
}

void fix_column_signs(MatrixXd& m) {
  for (Index c = 0; c < m.cols(); ++c) {
    Index arg = 0;
    double best = -1.0;
    for (Index r = 0; r < m.rows(); ++r) {
      const double a = std::abs(m(r, c));
      if (a > best) {
        best = a;
        arg = r;
      }
    }
    if (m(arg, c) < 0.0) m.col(c) = -m.col(c);
  }
}

MatrixXd projector(const MatrixXd& a) {
  const MatrixXd gram = a.transpose() * a;
  return a * gram.ldlt().solve(a.transpose());
}

double subspace_distance(const MatrixXd& a, const MatrixXd& b) {
  const MatrixXd diff = projector(a) - projector(b);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (diff + diff.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace charfactor
