#pragma once

#include "charfactor/outalpha.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>

namespace charfactor {

/// Linear influence representation of a family of studentized cells.
/// Given multipliers g (N x T, one per observation), max_abs_score returns
/// max over cells of |sum_{j,s} w_{cell,js} eps_js g_js| for the
/// implementation's weights w and residuals eps.
class MultiplierScores {
 public:
  virtual ~MultiplierScores() = default;
  virtual Index rows() const = 0;  // multiplier rows (assets)
  virtual Index cols() const = 0;  // multiplier columns (periods)
  virtual double max_abs_score(const MatrixXd& multipliers) const = 0;
};

/// Explicit cells x (rows * cols) weight matrix applied to vec(g).
class DenseScores : public MultiplierScores {
 public:
  DenseScores(MatrixXd weights, Index rows, Index cols);
  Index rows() const override { return rows_; }
  Index cols() const override { return cols_; }
  double max_abs_score(const MatrixXd& multipliers) const override;

 private:
  MatrixXd weights_;
  Index rows_;
  Index cols_;
};

/// Studentized delta~ cells: N^{-1/2} sum_j B_t,jq eps_j,t g_j,t / sigma_t,
/// optionally demeaned over t.
class DeltaScores : public MultiplierScores {
 public:
  DeltaScores(std::shared_ptr<const BasisSet> bases, MatrixXd resid, VectorXd sigma2, bool demean_over_t);
  Index rows() const override { return resid_.rows(); }
  Index cols() const override { return resid_.cols(); }
  double max_abs_score(const MatrixXd& multipliers) const override;

 private:
  std::shared_ptr<const BasisSet> bases_;
  MatrixXd resid_;
  VectorXd sigma2_;
  bool demean_;
};

/// Studentized outside-alpha cells: the persistent part
/// (NT)^{-1} B_t,i' sum_s B_s' eps_s plus the support part
/// N^{-1} sum_{q in D_t} B_t,iq (B_t' eps_t)_q, divided by sqrt(V_O,it).
class OutsideAlphaScores : public MultiplierScores {
 public:
  OutsideAlphaScores(std::shared_ptr<const BasisSet> bases, MatrixXd resid,
                     std::vector<std::vector<Index>> support, MatrixXd v_outside);
  Index rows() const override { return resid_.rows(); }
  Index cols() const override { return resid_.cols(); }
  double max_abs_score(const MatrixXd& multipliers) const override;

 private:
  std::shared_ptr<const BasisSet> bases_;
  MatrixXd resid_;
  std::vector<std::vector<Index>> support_;
  MatrixXd inv_se_;
};

/// (1 - level) empirical quantile of the max score over `draws` Gaussian
/// multiplier draws. Draw d uses the stream keyed by (seed, d), so the
/// result does not depend on `threads`. Requires draws >= 200.
double bootstrap_critical_value(const MultiplierScores& scores, double level, int draws, std::uint64_t seed,
                                int threads = 1);

}  // namespace charfactor
