#include "charfactor/inference.hpp"

#include "charfactor/distributions.hpp"
#include "charfactor/errors.hpp"
#include "charfactor/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace charfactor {

namespace {

MatrixXd factor_gram_inverse(const ModelFit& fit) {
  const MatrixXd& f = fit.factors_demeaned;
  auto inv = spd_inverse(f * f.transpose() / static_cast<double>(f.cols()));
  if (!inv) throw SingularFactorGram("sample factor covariance is singular");
  return *inv;
}

void require_sigma2(const ModelFit& fit, Index t) {
  if (fit.sigma2.size() != t) throw IncompatibleDimensions("fit has no per-period sigma2");
}

}  // namespace

std::vector<MatrixXd> estimate_gamma_row_variances(const Panel& panel, const ModelFit& fit) {
  const Index t_count = panel.t();
  const Index l_count = panel.l();
  require_sigma2(fit, t_count);
  const MatrixXd qf_inv = factor_gram_inverse(fit);
  const double n = static_cast<double>(panel.n());

  // [Q_t^{-1}]_ll = N [(X_t'X_t)^{-1}]_ll for every l at once.
  MatrixXd qinv_diag(l_count, t_count);
  for (Index t = 0; t < t_count; ++t) {
    auto inv = spd_inverse(panel.x(t).transpose() * panel.x(t), kGramRelativeTolerance);
    if (!inv) throw RankDeficientCharacteristics(static_cast<int>(t), panel.period_labels[static_cast<std::size_t>(t)]);
    qinv_diag.col(t) = n * inv->diagonal();
  }

  std::vector<MatrixXd> out;
  out.reserve(static_cast<std::size_t>(l_count));
  for (Index l = 0; l < l_count; ++l) {
    const MatrixXd meat = pairwise_sum<MatrixXd>(t_count, [&](Index t) -> MatrixXd {
      const VectorXd f = fit.factors_demeaned.col(t);
      return fit.sigma2(t) * qinv_diag(l, t) * (f * f.transpose());
    }) / static_cast<double>(t_count);
    MatrixXd v = qf_inv * meat * qf_inv;
    out.push_back(0.5 * (v + v.transpose()));
  }
  return out;
}

MatrixXd estimate_gamma_row_variance(const Panel& panel, const ModelFit& fit, int l) {
  if (l < 0 || l >= panel.l()) throw InvalidArgument("characteristic index out of range");
  return estimate_gamma_row_variances(panel, fit)[static_cast<std::size_t>(l)];
}

MatrixXd estimate_inside_variance(const Panel& panel, const TransformedReturns& tr, const ModelFit& fit) {
  const Index n = panel.n();
  const Index t_count = panel.t();
  const Index k = fit.k();
  const Index l = panel.l();
  require_sigma2(fit, t_count);
  const double nd = static_cast<double>(n);
  const MatrixXd& gamma = fit.gamma;

  const MatrixXd qf_inv = factor_gram_inverse(fit);
  const MatrixXd g = qf_inv * fit.factors_demeaned;  // K x T, column s is g_s
  auto gg_inv = spd_inverse(gamma.transpose() * gamma);
  if (!gg_inv) throw RankDeficientLoadings("Gamma does not have full column rank");
  const VectorXd f_bar = *gg_inv * gamma.transpose() * tr.rddot_mean;

  // Moment matrices sum_s sigma2_s {1, g_k, g_k g_l} Q_s.
  const Index pairs = k * (k + 1) / 2;
  auto pair_index = [k](Index a, Index b) {
    if (a > b) std::swap(a, b);
    return a * k - a * (a - 1) / 2 + (b - a);
  };
  std::vector<MatrixXd> m1(static_cast<std::size_t>(k), MatrixXd::Zero(l, l));
  std::vector<MatrixXd> m2(static_cast<std::size_t>(pairs), MatrixXd::Zero(l, l));
  const MatrixXd m0 = pairwise_sum<MatrixXd>(t_count, [&](Index s) -> MatrixXd {
    return fit.sigma2(s) / nd * tr.gram[static_cast<std::size_t>(s)];
  });
  for (Index a = 0; a < k; ++a) {
    m1[static_cast<std::size_t>(a)] = pairwise_sum<MatrixXd>(t_count, [&](Index s) -> MatrixXd {
      return fit.sigma2(s) * g(a, s) / nd * tr.gram[static_cast<std::size_t>(s)];
    });
    for (Index b = a; b < k; ++b) {
      m2[static_cast<std::size_t>(pair_index(a, b))] = pairwise_sum<MatrixXd>(t_count, [&](Index s) -> MatrixXd {
        return fit.sigma2(s) * g(a, s) * g(b, s) / nd * tr.gram[static_cast<std::size_t>(s)];
      });
    }
  }
  auto m2_at = [&](Index a, Index b) -> const MatrixXd& { return m2[static_cast<std::size_t>(pair_index(a, b))]; };

  MatrixXd out(n, t_count);
  for (Index t = 0; t < t_count; ++t) {
    const MatrixXd& x = panel.x(t);
    const MatrixXd q = tr.gram[static_cast<std::size_t>(t)] / nd;
    const MatrixXd q_inv = nd * tr.gram_inv[static_cast<std::size_t>(t)];
    auto s_inv = spd_inverse(gamma.transpose() * q * gamma);
    if (!s_inv) throw RankDeficientLoadings("X_t Gamma loses rank in period " + std::to_string(t));
    const MatrixXd proj = gamma * *s_inv * gamma.transpose();  // Gamma (Gamma'Q Gamma)^{-1} Gamma'
    const MatrixXd a_rows = x * (q_inv - proj);                 // rows are A^ for each i
    const VectorXd b_vec = fit.eta - proj * (q * fit.eta);      // B^'
    const VectorXd c = *s_inv * (gamma.transpose() * (q * fit.eta)) + f_bar;
    const MatrixXd d = x * gamma * *s_inv;  // N x K, rows d_it'

    MatrixXd p = m0;
    for (Index a = 0; a < k; ++a) {
      p -= 2.0 * c(a) * m1[static_cast<std::size_t>(a)];
      for (Index b = 0; b < k; ++b) p += c(a) * c(b) * m2_at(a, b);
    }
    MatrixXd r_b(l, k);  // column a is (M1_a - sum_b c_b M2_ab) B^'
    MatrixXd s_bb(k, k);
    for (Index a = 0; a < k; ++a) {
      MatrixXd r = m1[static_cast<std::size_t>(a)];
      for (Index b = 0; b < k; ++b) r -= c(b) * m2_at(a, b);
      r_b.col(a) = r * b_vec;
      for (Index b = 0; b < k; ++b) s_bb(a, b) = b_vec.dot(m2_at(a, b) * b_vec);
    }
    const VectorXd term1 = ((a_rows * p).array() * a_rows.array()).rowwise().sum();
    const VectorXd term2 = ((a_rows * r_b).array() * d.array()).rowwise().sum();
    const VectorXd term3 = ((d * s_bb).array() * d.array()).rowwise().sum();
    out.col(t) = (term1 - 2.0 * term2 + term3).cwiseMax(0.0);
  }
  const double t2 = static_cast<double>(t_count) * static_cast<double>(t_count);
  return out / (nd * t2);
}

MatrixXd estimate_delta_variance(const VectorXd& sigma2, Index n, Index rows) {
  MatrixXd out(rows, sigma2.size());
  for (Index t = 0; t < sigma2.size(); ++t) out.col(t).setConstant(sigma2(t) / static_cast<double>(n));
  return out;
}

MatrixXd estimate_outside_variance(const BasisSet& bases, const OutsideAlphaFit& outside,
                                   const VectorXd& sigma2) {
  const Index n = bases.n();
  const Index t_count = bases.periods();
  if (sigma2.size() != t_count) throw IncompatibleDimensions("sigma2 length must equal T");
  const double nd = static_cast<double>(n);
  const double sigma_bar = sigma2.mean();
  MatrixXd out(n, t_count);
  for (Index t = 0; t < t_count; ++t) {
    const auto basis = bases.at(t);
    VectorXd v = sigma_bar / static_cast<double>(t_count) * basis->row_squared_norms() / nd;
    for (Index q : outside.support[static_cast<std::size_t>(t)]) {
      v += sigma2(t) / nd * basis->column(q).cwiseAbs2();
    }
    out.col(t) = v;
  }
  return out;
}

VarianceEstimates estimate_variances(const Panel& panel, const FullFit& full) {
  VarianceEstimates v;
  v.gamma_row_cov = estimate_gamma_row_variances(panel, full.fit);
  v.v_inside = estimate_inside_variance(panel, full.transformed, full.fit);
  v.v_delta = estimate_delta_variance(full.fit.sigma2, panel.n(), panel.n() - panel.l());
  v.v_outside = estimate_outside_variance(*full.bases, full.outside, full.fit.sigma2);
  return v;
}

double max_stat_critical_value(double level, Index m) {
  if (!(level > 0.0 && level < 1.0) || m < 1) throw InvalidArgument("need level in (0,1) and m >= 1");
  return normal_upper_quantile(level / (2.0 * static_cast<double>(m)));
}

TestReport max_stat_test(const MatrixXd& values, const MatrixXd& variances, bool demean_over_t,
                         double level) {
  if (values.rows() != variances.rows() || values.cols() != variances.cols()) {
    throw IncompatibleDimensions("values and variances must have the same shape");
  }
  MatrixXd v = values;
  if (demean_over_t) v = v.colwise() - v.rowwise().mean();
  TestReport rep;
  rep.method = "union-bound";
  rep.level = level;
  rep.cells = values.size();
  double best = 0.0;
  for (Index c = 0; c < v.cols(); ++c) {
    for (Index r = 0; r < v.rows(); ++r) {
      const double var = variances(r, c);
      if (!(var > 0.0)) throw ZeroVariance(r, c);
      const double z = std::abs(v(r, c)) / std::sqrt(var);
      if (z > best || rep.argmax_row < 0) {
        best = z;
        rep.argmax_row = r;
        rep.argmax_col = c;
      }
    }
  }
  rep.statistic = best;
  rep.critical_value = max_stat_critical_value(level, rep.cells);
  for (double a : kReportLevels) rep.critical_values.emplace_back(a, max_stat_critical_value(a, rep.cells));
  rep.p_value_bound = std::min(1.0, 2.0 * static_cast<double>(rep.cells) * normal_sf(best));
  rep.reject = rep.statistic > rep.critical_value;
  return rep;
}

double wald_critical_value(int k, double level, int n_tests) {
  if (k < 1 || n_tests < 1 || !(level > 0.0 && level < 1.0)) {
    throw InvalidArgument("need K >= 1, n_tests >= 1 and level in (0,1)");
  }
  return chi2_quantile(1.0 - level / static_cast<double>(n_tests), static_cast<double>(k));
}

TestReport wald_gamma_test(const ModelFit& fit, const VarianceEstimates& variances, int l, double level,
                           int n_tests) {
  if (l < 0 || l >= fit.gamma.rows() ||
      static_cast<std::size_t>(l) >= variances.gamma_row_cov.size()) {
    throw InvalidArgument("characteristic index out of range");
  }
  const MatrixXd& v = variances.gamma_row_cov[static_cast<std::size_t>(l)];
  auto v_inv = spd_inverse(v);
  if (!v_inv) throw SingularVariance(l);
  const VectorXd g = fit.gamma.row(l).transpose();
  const double nt = static_cast<double>(fit.alpha_inside.rows()) * static_cast<double>(fit.alpha_inside.cols());
  const int k = static_cast<int>(fit.k());

  TestReport rep;
  rep.name = "W_" + std::to_string(l + 1);
  rep.method = "chi2-bonferroni";
  rep.level = level;
  rep.statistic = nt * g.dot(*v_inv * g);
  rep.critical_value = wald_critical_value(k, level, n_tests);
  for (double a : kReportLevels) rep.critical_values.emplace_back(a, wald_critical_value(k, a, n_tests));
  rep.p_value_bound = std::min(1.0, static_cast<double>(n_tests) * chi2_sf(rep.statistic, k));
  rep.reject = rep.statistic > rep.critical_value;
  rep.n = fit.alpha_inside.rows();
  rep.t = fit.alpha_inside.cols();
  rep.l = fit.gamma.rows();
  rep.k = k;
  rep.cells = 1;
  rep.argmax_row = l;
  return rep;
}

ConfidenceBands fdr_confidence_bands(const MatrixXd& estimates, const MatrixXd& variances, double level) {
  if (estimates.rows() != variances.rows() || estimates.cols() != variances.cols()) {
    throw IncompatibleDimensions("estimates and variances must have the same shape");
  }
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("level must be in (0,1)");
  const Index m = estimates.size();
  ConfidenceBands bands;
  bands.estimate = estimates;
  bands.selected = BoolMatrix::Constant(estimates.rows(), estimates.cols(), false);
  if (m == 0) return bands;

  double c_m = 0.0;
  for (Index j = 1; j <= m; ++j) c_m += 1.0 / static_cast<double>(j);

  std::vector<double> pvals(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    const double var = variances.data()[i];
    if (!(var > 0.0)) throw ZeroVariance(i % estimates.rows(), i / estimates.rows());
    pvals[static_cast<std::size_t>(i)] = 2.0 * normal_sf(std::abs(estimates.data()[i]) / std::sqrt(var));
  }
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return pvals[static_cast<std::size_t>(a)] < pvals[static_cast<std::size_t>(b)];
  });
  const double md = static_cast<double>(m);
  Index r = 0;
  for (Index j = m; j >= 1; --j) {
    const double p = pvals[static_cast<std::size_t>(order[static_cast<std::size_t>(j - 1)])];
    if (p <= static_cast<double>(j) * level / (md * c_m)) {
      r = j;
      break;
    }
  }
  bands.selected_count = r;
  for (Index j = 0; j < r; ++j) bands.selected.data()[order[static_cast<std::size_t>(j)]] = true;
  bands.z_unselected = normal_upper_quantile(level / (2.0 * md * c_m));
  bands.z_selected = r > 0 ? normal_upper_quantile(static_cast<double>(r) * level / (2.0 * md * c_m))
                           : bands.z_unselected;
  const MatrixXd se = variances.cwiseSqrt();
  bands.lo.resize(estimates.rows(), estimates.cols());
  bands.hi.resize(estimates.rows(), estimates.cols());
  for (Index i = 0; i < m; ++i) {
    const double z = bands.selected.data()[i] ? bands.z_selected : bands.z_unselected;
    bands.lo.data()[i] = estimates.data()[i] - z * se.data()[i];
    bands.hi.data()[i] = estimates.data()[i] + z * se.data()[i];
  }
  return bands;
}

}  // namespace charfactor
