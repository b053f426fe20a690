#pragma once

#include <vector>

namespace charfactor {

double normal_pdf(double x);
double normal_cdf(double x);
/// 1 - Phi(x) without cancellation for large x.
double normal_sf(double x);
/// Phi^{-1}(p) for p in (0, 1).
double normal_quantile(double p);
/// Phi^{-1}(1 - q), accurate for tiny q.
double normal_upper_quantile(double q);

double chi2_cdf(double x, double dof);
/// 1 - chi2_cdf, computed from the upper incomplete gamma.
double chi2_sf(double x, double dof);
/// Bisection on the regularized lower incomplete gamma, |error| < 1e-8.
double chi2_quantile(double p, double dof);

/// sup_x |F_n(x) - Phi(x)|.
double ks_statistic_normal(std::vector<double> sample);
/// Asymptotic Kolmogorov p-value with the small-sample correction
/// lambda = (sqrt(n) + 0.12 + 0.11 / sqrt(n)) D.
double ks_pvalue(double d, std::size_t n);

}  // namespace charfactor
