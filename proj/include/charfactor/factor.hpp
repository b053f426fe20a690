#pragma once

#include "charfactor/outalpha.hpp"
#include "charfactor/panel.hpp"

#include <Eigen/Dense>

#include <vector>

namespace charfactor {

/// Returns mapped into characteristic space, one column per period.
struct TransformedReturns {
  MatrixXd rddot;           // L x T, (X_t'X_t)^{-1} X_t' R_{t+1}
  VectorXd rddot_mean;      // L
  MatrixXd rddot_demeaned;  // L x T
  std::vector<MatrixXd> gram;      // X_t' X_t
  std::vector<MatrixXd> gram_inv;  // (X_t' X_t)^{-1}

  Index l() const { return rddot.rows(); }
  Index t() const { return rddot.cols(); }
};

struct ModelFit {
  MatrixXd gamma;             // L x K
  MatrixXd factors_demeaned;  // K x T
  MatrixXd factors_breve;     // K x T
  VectorXd eta;               // L
  MatrixXd alpha_inside;      // N x T
  VectorXd sigma2;            // T, empty until estimated
  bool debiased = false;

  Index k() const { return gamma.cols(); }
};

struct InsideEstimate {
  VectorXd eta;
  MatrixXd alpha_inside;
  MatrixXd factors_breve;
};

TransformedReturns transform_returns(const Panel& panel);

/// Singular values of the demeaned transformed returns, descending.
VectorXd transformed_spectrum(const TransformedReturns& tr);

/// Top-k left singular vectors of R^d (signs fixed) and F~^d = Gamma~' R^d.
/// Only gamma and factors_demeaned are filled.
ModelFit estimate_gamma_plain(const TransformedReturns& tr, int k);

InsideEstimate estimate_eta_alpha_inside(const Panel& panel, const TransformedReturns& tr,
                                         const MatrixXd& gamma);

/// Plain spectral fit with eta, inside alphas and breve factors filled.
ModelFit fit_plain(const Panel& panel, const TransformedReturns& tr, int k);

/// X_t Gamma f_t + alpha_I,t for every period.
MatrixXd fitted_inside(const Panel& panel, const ModelFit& fit);

/// r - alpha_O - alpha_I - X Gamma f, N x T.
MatrixXd residuals(const Panel& panel, const ModelFit& fit, const OutsideAlphaFit& outside);

/// Per-period mean squared residual.
VectorXd estimate_sigma2(const Panel& panel, const ModelFit& fit, const OutsideAlphaFit& outside);

/// sum_t sigma2_t (X_t'X_t)^{-1}, pairwise-summed over t.
MatrixXd weighted_gram_inverse_sum(const TransformedReturns& tr, const VectorXd& sigma2);

/// Gamma^ = Gamma~ - S Gamma~ (Gamma~'Gamma~)^{-1} (F~ F~')^{-1}, then
/// F^d and the inside quantities recomputed with Gamma^.
ModelFit debias_gamma(const TransformedReturns& tr, const ModelFit& plain, const Panel& panel,
                      const VectorXd& sigma2);

/// argmax_k psi_k / psi_{k+1} over 1..k_max.
int select_rank(const TransformedReturns& tr, int k_max);
int select_rank(const VectorXd& singular_values, int k_max);

/// min(L, T) / 2 capped at 15 (and at least 1).
int default_k_max(Index l, Index t);

/// 1 - sum eps^2 / sum (r - mean r)^2 over all cells.
double r_squared(const Panel& panel, const MatrixXd& resid);

}  // namespace charfactor
