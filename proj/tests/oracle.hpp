#pragma once

// Straight-from-the-formula reference implementations. Everything here is
// dense and loop-based on purpose and shares no code with the library
// beyond the Panel container.

#include "charfactor/outalpha.hpp"
#include "charfactor/panel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace oracle {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd pinv(const MatrixXd& a) { return a.completeOrthogonalDecomposition().pseudoInverse(); }

inline MatrixXd proj(const MatrixXd& a) { return a * pinv(a); }

/// Symmetric inverse square root through a Jacobi SVD.
inline MatrixXd inv_sqrt(const MatrixXd& m) {
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  VectorXd s = svd.singularValues().cwiseSqrt().cwiseInverse();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

inline MatrixXd omega(Index n, Index l, bool structured) {
  MatrixXd om = MatrixXd::Zero(n, n - l);
  const Index m = n - l;
  if (!structured) {
    for (Index i = 0; i < m; ++i) om(i, i) = 1.0;
    return om;
  }
  static const double pattern[9][9] = {
      {1, 1.01, 1, 1.01, 1, 1.01, 0, 0, 0},    {0, 1, 1.01, 1, 1.01, 1, 1.01, 0, 0},
      {0, 0, 1, 1.01, 1, 1.01, 1, 1.01, 0},    {0, 0, 0, 1, 1.01, 1, 1.01, 1, 1.01},
      {1, 0, 0, 0, 1, 1.01, 1, 1.01, 1},       {1.01, 1, 0, 0, 0, 1, 1.01, 1, 1.01},
      {1, 1.01, 1, 0, 0, 0, 1, 1.01, 1},       {1.01, 1, 1.01, 1, 0, 0, 0, 1, 1.01},
      {1, 1.01, 1, 1.01, 1, 0, 0, 0, 1},
  };
  const Index r = m / 9;
  // Kronecker product pattern (x) I_r
  for (Index a = 0; a < 9; ++a)
    for (Index b = 0; b < 9; ++b)
      for (Index i = 0; i < r; ++i) om(a * r + i, b * r + i) = pattern[a][b];
  const Index copies = m / l;
  for (Index c = 0; c < copies; ++c)
    for (Index i = 0; i < l; ++i) om(m + i, c * l + i) = 1.0;
  return om;
}

/// Whitening squares the conditioning of X^o, so the reference basis is
/// evaluated in extended precision.
inline MatrixXd basis(const MatrixXd& x, const MatrixXd& om) {
  using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  const long double n = static_cast<long double>(x.rows());
  const MatrixXld xl = x.cast<long double>();
  const MatrixXld p = xl * xl.completeOrthogonalDecomposition().pseudoInverse();
  const MatrixXld xo = (MatrixXld::Identity(x.rows(), x.rows()) - p) * om.cast<long double>();
  Eigen::JacobiSVD<MatrixXld> svd(xo.transpose() * xo / n, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VectorXld s = svd.singularValues().cwiseSqrt().cwiseInverse();
  return (xo * svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose()).cast<double>();
}

inline MatrixXd rddot(const charfactor::Panel& p) {
  MatrixXd out(p.l(), p.t());
  for (Index t = 0; t < p.t(); ++t) out.col(t) = p.x(t).householderQr().solve(VectorXd(p.r(t)));
  return out;
}

inline void fix_signs(MatrixXd& g) {
  for (Index c = 0; c < g.cols(); ++c) {
    Index best = 0;
    for (Index r = 1; r < g.rows(); ++r)
      if (std::abs(g(r, c)) > std::abs(g(best, c))) best = r;
    if (g(best, c) < 0) g.col(c) *= -1.0;
  }
}

/// Top-k eigenvectors of R^d R^d'.
inline MatrixXd gamma_plain(const MatrixXd& rd, Index k) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(rd * rd.transpose());
  MatrixXd g(rd.rows(), k);
  for (Index j = 0; j < k; ++j) g.col(j) = eig.eigenvectors().col(rd.rows() - 1 - j);
  fix_signs(g);
  return g;
}

struct Inside {
  VectorXd eta;
  MatrixXd alpha;
  MatrixXd fbreve;
};

inline Inside inside(const charfactor::Panel& p, const MatrixXd& rdd, const MatrixXd& g) {
  Inside out;
  const VectorXd mean = rdd.rowwise().mean();
  out.eta = (MatrixXd::Identity(p.l(), p.l()) - proj(g)) * mean;
  out.alpha.resize(p.n(), p.t());
  out.fbreve.resize(g.cols(), p.t());
  for (Index t = 0; t < p.t(); ++t) {
    const MatrixXd& x = p.x(t);
    const MatrixXd b = x * g;
    out.alpha.col(t) = (MatrixXd::Identity(p.n(), p.n()) - proj(b)) * x * mean;
    const MatrixXd xx = x.transpose() * x;
    out.fbreve.col(t) = (g.transpose() * g).inverse() * g.transpose() * rdd.col(t) +
                        (g.transpose() * xx * g).inverse() * g.transpose() * xx * out.eta;
  }
  return out;
}

struct Outside {
  MatrixXd delta;
  VectorXd zeta_plain, zeta;
  MatrixXd xi;
  std::vector<std::vector<Index>> support;
  MatrixXd alpha;
};

inline Outside outside(const charfactor::Panel& p, const std::vector<MatrixXd>& bases, const std::vector<double>& rho) {
  Outside o;
  const Index m = p.n() - p.l();
  o.delta.resize(m, p.t());
  for (Index t = 0; t < p.t(); ++t) {
    const MatrixXd& b = bases[static_cast<std::size_t>(t)];
    o.delta.col(t) = (b.transpose() * b).ldlt().solve(b.transpose() * p.r(t));
  }
  o.zeta_plain = VectorXd::Zero(m);
  for (Index t = 0; t < p.t(); ++t) o.zeta_plain += o.delta.col(t) / static_cast<double>(p.t());
  MatrixXd xi_tilde = MatrixXd::Zero(m, p.t());
  for (Index t = 0; t < p.t(); ++t)
    for (Index q = 0; q < m; ++q)
      if (std::abs(o.delta(q, t) - o.zeta_plain(q)) >= rho[static_cast<std::size_t>(t)])
        xi_tilde(q, t) = o.delta(q, t) - o.zeta_plain(q);
  o.zeta = o.zeta_plain;
  for (Index t = 0; t < p.t(); ++t) o.zeta -= xi_tilde.col(t) / static_cast<double>(p.t());
  o.xi = MatrixXd::Zero(m, p.t());
  o.support.resize(static_cast<std::size_t>(p.t()));
  for (Index t = 0; t < p.t(); ++t)
    for (Index q = 0; q < m; ++q)
      if (xi_tilde(q, t) != 0.0) {
        o.xi(q, t) = o.delta(q, t) - o.zeta(q);
        o.support[static_cast<std::size_t>(t)].push_back(q);
      }
  o.alpha.resize(p.n(), p.t());
  for (Index t = 0; t < p.t(); ++t) o.alpha.col(t) = bases[static_cast<std::size_t>(t)] * (o.zeta + o.xi.col(t));
  return o;
}

inline MatrixXd debias(const charfactor::Panel& p, const MatrixXd& g, const MatrixXd& fd, const VectorXd& s2) {
  MatrixXd s = MatrixXd::Zero(p.l(), p.l());
  for (Index t = 0; t < p.t(); ++t) s += s2(t) * (p.x(t).transpose() * p.x(t)).inverse();
  return g - s * g * (g.transpose() * g).inverse() * (fd * fd.transpose()).inverse();
}

inline MatrixXd gamma_row_var(const charfactor::Panel& p, const MatrixXd& fd, const VectorXd& s2, Index l) {
  const double tt = static_cast<double>(p.t());
  const double n = static_cast<double>(p.n());
  MatrixXd qf = MatrixXd::Zero(fd.rows(), fd.rows());
  MatrixXd meat = qf;
  for (Index t = 0; t < p.t(); ++t) {
    qf += fd.col(t) * fd.col(t).transpose() / tt;
    const MatrixXd q_inv = (p.x(t).transpose() * p.x(t) / n).inverse();
    meat += s2(t) * q_inv(l, l) * fd.col(t) * fd.col(t).transpose() / tt;
  }
  return qf.inverse() * meat * qf.inverse();
}

/// V_I,it from sigma2_I,it = (NTL)^{-1} sum_j sum_s sigma2_s g_{it,js}^2 with
/// B = X Gamma, a = eta' x and the plug-in moments Q^B_t, Q^{a,B}_t.
inline MatrixXd inside_var(const charfactor::Panel& p, const MatrixXd& g, const MatrixXd& fd, const VectorXd& eta,
                           const VectorXd& rdd_mean, const VectorXd& s2) {
  const Index n = p.n(), tt = p.t(), l = p.l();
  const double nd = static_cast<double>(n);
  MatrixXd qf = MatrixXd::Zero(fd.rows(), fd.rows());
  for (Index t = 0; t < tt; ++t) qf += fd.col(t) * fd.col(t).transpose() / static_cast<double>(tt);
  const MatrixXd qf_inv = qf.inverse();
  const VectorXd fbar = (g.transpose() * g).inverse() * g.transpose() * rdd_mean;
  MatrixXd out(n, tt);
  for (Index t = 0; t < tt; ++t) {
    const MatrixXd& xt = p.x(t);
    const MatrixXd q_inv = (xt.transpose() * xt / nd).inverse();
    const MatrixXd bt = xt * g;
    MatrixXd qb = MatrixXd::Zero(g.cols(), g.cols());
    VectorXd qab = VectorXd::Zero(g.cols());
    for (Index i = 0; i < n; ++i) {
      qb += bt.row(i).transpose() * bt.row(i) / nd;
      qab += eta.dot(xt.row(i)) * bt.row(i).transpose() / nd;
    }
    const MatrixXd qb_inv = qb.inverse();
    for (Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (Index s = 0; s < tt; ++s) {
        const MatrixXd& xs = p.x(s);
        const MatrixXd bs = xs * g;
        const VectorXd gs = qf_inv * fd.col(s);
        const double lead = 1.0 - (qab.transpose() * qb_inv + fbar.transpose()).dot(gs);
        const double coef = bt.row(i).dot(qb_inv * gs);
        for (Index j = 0; j < n; ++j) {
          const double first = xt.row(i).dot(q_inv * xs.row(j).transpose()) - bt.row(i).dot(qb_inv * bs.row(j).transpose());
          const double second = eta.dot(xs.row(j)) - qab.dot(qb_inv * bs.row(j).transpose());
          const double gij = lead * first - coef * second;
          acc += s2(s) * gij * gij;
        }
      }
      const double sigma_i2 = acc / (nd * static_cast<double>(tt) * static_cast<double>(l));
      out(i, t) = sigma_i2 * static_cast<double>(l) / (nd * static_cast<double>(tt));
    }
  }
  return out;
}

inline MatrixXd outside_var(const std::vector<MatrixXd>& bases, const std::vector<std::vector<Index>>& support,
                            const VectorXd& s2) {
  const Index n = bases.front().rows();
  const Index tt = static_cast<Index>(bases.size());
  const double nd = static_cast<double>(n);
  double sbar = 0.0;
  for (Index t = 0; t < tt; ++t) sbar += s2(t) / static_cast<double>(tt);
  MatrixXd out(n, tt);
  for (Index t = 0; t < tt; ++t) {
    const MatrixXd& b = bases[static_cast<std::size_t>(t)];
    const auto& d = support[static_cast<std::size_t>(t)];
    for (Index i = 0; i < n; ++i) {
      double second = 0.0;
      for (Index q : d) second += b(i, q) * b(i, q);
      out(i, t) = sbar / static_cast<double>(tt) * b.row(i).squaredNorm() / nd + s2(t) / nd * second;
    }
  }
  return out;
}

inline double rel_err(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace oracle
