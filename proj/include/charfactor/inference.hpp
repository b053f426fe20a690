#pragma once

#include "charfactor/factor.hpp"
#include "charfactor/outalpha.hpp"
#include "charfactor/panel.hpp"
#include "charfactor/pipeline.hpp"

#include <Eigen/Dense>

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace charfactor {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct VarianceEstimates {
  /// Per characteristic l, the K x K covariance of sqrt(NT) (gamma^_l - H' gamma_l).
  std::vector<MatrixXd> gamma_row_cov;
  MatrixXd v_inside;   // N x T
  MatrixXd v_delta;    // (N-L) x T
  MatrixXd v_outside;  // N x T
};

/// Q_f^{-1} [T^{-1} sum_t sigma2_t [Q_t^{-1}]_ll f^d_t f^d_t'] Q_f^{-1} with
/// Q_t = X_t'X_t / N and Q_f = T^{-1} sum_t f^d_t f^d_t'.
MatrixXd estimate_gamma_row_variance(const Panel& panel, const ModelFit& fit, int l);
std::vector<MatrixXd> estimate_gamma_row_variances(const Panel& panel, const ModelFit& fit);

/// V_I,it = sigma2_I,it L / (NT). The sum over s of
/// sigma2_s v_s Q_s v_s' is expanded into three moment matrices so the
/// whole N x T table costs O(T (N L^2 + K^2 L^2)).
MatrixXd estimate_inside_variance(const Panel& panel, const TransformedReturns& tr, const ModelFit& fit);

/// sigma2_t / N in every cell of column t.
MatrixXd estimate_delta_variance(const VectorXd& sigma2, Index n, Index rows);

/// (mean sigma2 / T) ||B_t,i||^2 / N + (sigma2_t / N) sum_{q in D_t} B_t,iq^2.
MatrixXd estimate_outside_variance(const BasisSet& bases, const OutsideAlphaFit& outside,
                                   const VectorXd& sigma2);

VarianceEstimates estimate_variances(const Panel& panel, const FullFit& full);

inline constexpr std::array<double, 3> kReportLevels = {0.10, 0.05, 0.01};

struct TestReport {
  std::string name;
  std::string method;  // "union-bound", "bootstrap" or "chi2-bonferroni"
  double statistic = 0.0;
  double level = 0.05;
  double critical_value = 0.0;  // at `level`
  std::vector<std::pair<double, double>> critical_values;  // (level, value) at 10/5/1%
  double p_value_bound = 1.0;
  bool reject = false;
  Index n = 0, t = 0, l = 0, k = 0;
  Index cells = 0;
  Index argmax_row = -1;
  Index argmax_col = -1;
};

/// Union-bound critical value Phi^{-1}(1 - level / (2m)).
double max_stat_critical_value(double level, Index m);

/// max |values / sqrt(variances)|, optionally after subtracting each row's
/// time mean from `values`. Throws ZeroVariance on a non-positive variance.
TestReport max_stat_test(const MatrixXd& values, const MatrixXd& variances, bool demean_over_t,
                         double level);

/// chi2_K quantile at 1 - level / n_tests.
double wald_critical_value(int k, double level, int n_tests);

/// W_l = NT gamma^_l' V^{-1} gamma^_l.
TestReport wald_gamma_test(const ModelFit& fit, const VarianceEstimates& variances, int l, double level,
                           int n_tests);

struct ConfidenceBands {
  MatrixXd estimate;
  MatrixXd lo;
  MatrixXd hi;
  BoolMatrix selected;
  double z_selected = 0.0;
  double z_unselected = 0.0;
  Index selected_count = 0;
};

/// Benjamini-Yekutieli step-up on two-sided p-values with the harmonic
/// correction c_m = sum_{j<=m} 1/j. Selected cells use the step-R critical
/// value, the others the step-1 value.
ConfidenceBands fdr_confidence_bands(const MatrixXd& estimates, const MatrixXd& variances, double level);

}  // namespace charfactor
