#include "charfactor/factor.hpp"

#include "charfactor/errors.hpp"
#include "charfactor/linalg.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace charfactor {

TransformedReturns transform_returns(const Panel& panel) {
  const Index l = panel.l();
  const Index t_count = panel.t();
  TransformedReturns tr;
  tr.rddot.resize(l, t_count);
  tr.gram.resize(static_cast<std::size_t>(t_count));
  tr.gram_inv.resize(static_cast<std::size_t>(t_count));
  for (Index t = 0; t < t_count; ++t) {
    const MatrixXd& x = panel.x(t);
    MatrixXd g = x.transpose() * x;
    auto inv = spd_inverse(g, kGramRelativeTolerance);
    if (!inv) throw RankDeficientCharacteristics(static_cast<int>(t), panel.period_labels[static_cast<std::size_t>(t)]);
    tr.rddot.col(t) = *inv * (x.transpose() * panel.r(t));
    tr.gram[static_cast<std::size_t>(t)] = std::move(g);
    tr.gram_inv[static_cast<std::size_t>(t)] = std::move(*inv);
  }
  tr.rddot_mean = tr.rddot.rowwise().mean();
  tr.rddot_demeaned = tr.rddot.colwise() - tr.rddot_mean;
  return tr;
}

VectorXd transformed_spectrum(const TransformedReturns& tr) {
  Eigen::BDCSVD<MatrixXd> svd(tr.rddot_demeaned);
  return svd.singularValues();
}

ModelFit estimate_gamma_plain(const TransformedReturns& tr, int k) {
  const Index l = tr.l();
  const Index t = tr.t();
  if (k < 1 || k >= std::min(l, t)) {
    throw InvalidArgument("K must be < min(L,T) and >= 1 (K=" + std::to_string(k) +
                          ", L=" + std::to_string(l) + ", T=" + std::to_string(t) + ")");
  }
  Eigen::BDCSVD<MatrixXd> svd(tr.rddot_demeaned, Eigen::ComputeThinU);
  const VectorXd& sv = svd.singularValues();
  const double gap = sv(k - 1) - sv(k);
  if (!(sv(k - 1) > 0.0) || gap <= 1e-12 * sv(k - 1)) {
    throw DegenerateSpectrum("singular values " + std::to_string(k) + " and " +
                             std::to_string(k + 1) + " coincide; loadings are not identified");
  }
  ModelFit fit;
  fit.gamma = svd.matrixU().leftCols(k);
  fix_column_signs(fit.gamma);
  fit.factors_demeaned = fit.gamma.transpose() * tr.rddot_demeaned;
  return fit;
}

InsideEstimate estimate_eta_alpha_inside(const Panel& panel, const TransformedReturns& tr,
                                         const MatrixXd& gamma) {
  const Index k = gamma.cols();
  auto gg_inv = spd_inverse(gamma.transpose() * gamma);
  if (!gg_inv) throw RankDeficientLoadings("Gamma does not have full column rank");

  InsideEstimate out;
  const MatrixXd gamma_pinv = *gg_inv * gamma.transpose();  // (G'G)^{-1} G'
  out.eta = tr.rddot_mean - gamma * (gamma_pinv * tr.rddot_mean);
  out.alpha_inside.resize(panel.n(), panel.t());
  out.factors_breve.resize(k, panel.t());
  for (Index t = 0; t < panel.t(); ++t) {
    const MatrixXd& g = tr.gram[static_cast<std::size_t>(t)];
    const MatrixXd gq = g * gamma;  // X'X Gamma
    auto core = spd_inverse(gamma.transpose() * gq);
    if (!core) throw RankDeficientLoadings("X_t Gamma loses rank in period " + std::to_string(t));
    // (I - P_{X Gamma}) X m = X (m - Gamma (Gamma'GGamma)^{-1} Gamma' G m)
    const VectorXd m = tr.rddot_mean;
    const VectorXd coef = m - gamma * (*core * (gq.transpose() * m));
    out.alpha_inside.col(t) = panel.x(t) * coef;
    out.factors_breve.col(t) = gamma_pinv * tr.rddot.col(t) + *core * (gq.transpose() * out.eta);
  }
  return out;
}

ModelFit fit_plain(const Panel& panel, const TransformedReturns& tr, int k) {
  ModelFit fit = estimate_gamma_plain(tr, k);
  InsideEstimate in = estimate_eta_alpha_inside(panel, tr, fit.gamma);
  fit.eta = std::move(in.eta);
  fit.alpha_inside = std::move(in.alpha_inside);
  fit.factors_breve = std::move(in.factors_breve);
  return fit;
}

MatrixXd fitted_inside(const Panel& panel, const ModelFit& fit) {
  MatrixXd out(panel.n(), panel.t());
  for (Index t = 0; t < panel.t(); ++t) {
    out.col(t) = panel.x(t) * (fit.gamma * fit.factors_breve.col(t)) + fit.alpha_inside.col(t);
  }
  return out;
}

MatrixXd residuals(const Panel& panel, const ModelFit& fit, const OutsideAlphaFit& outside) {
  if (outside.alpha_outside.rows() != panel.n() || outside.alpha_outside.cols() != panel.t()) {
    throw IncompatibleDimensions("outside alphas do not match the panel");
  }
  return panel.returns - outside.alpha_outside - fitted_inside(panel, fit);
}

VectorXd estimate_sigma2(const Panel& panel, const ModelFit& fit, const OutsideAlphaFit& outside) {
  const MatrixXd eps = residuals(panel, fit, outside);
  return eps.colwise().squaredNorm().transpose() / static_cast<double>(panel.n());
}

MatrixXd weighted_gram_inverse_sum(const TransformedReturns& tr, const VectorXd& sigma2) {
  if (sigma2.size() != tr.t()) throw IncompatibleDimensions("sigma2 length must equal T");
  return pairwise_sum<MatrixXd>(tr.t(), [&](Index t) -> MatrixXd {
    return sigma2(t) * tr.gram_inv[static_cast<std::size_t>(t)];
  });
}

ModelFit debias_gamma(const TransformedReturns& tr, const ModelFit& plain, const Panel& panel,
                      const VectorXd& sigma2) {
  const MatrixXd& g = plain.gamma;
  auto ff_inv = spd_inverse(plain.factors_demeaned * plain.factors_demeaned.transpose());
  if (!ff_inv) throw SingularFactorGram("F~ F~' is singular");
  auto gg_inv = spd_inverse(g.transpose() * g);
  if (!gg_inv) throw RankDeficientLoadings("Gamma~ does not have full column rank");

  const MatrixXd s = weighted_gram_inverse_sum(tr, sigma2);
  ModelFit fit;
  fit.gamma = g - s * g * *gg_inv * *ff_inv;
  auto hat_inv = spd_inverse(fit.gamma.transpose() * fit.gamma);
  if (!hat_inv) throw RankDeficientLoadings("debiased Gamma lost rank");
  fit.factors_demeaned = *hat_inv * fit.gamma.transpose() * tr.rddot_demeaned;
  InsideEstimate in = estimate_eta_alpha_inside(panel, tr, fit.gamma);
  fit.eta = std::move(in.eta);
  fit.alpha_inside = std::move(in.alpha_inside);
  fit.factors_breve = std::move(in.factors_breve);
  fit.debiased = true;
  return fit;
}

int select_rank(const VectorXd& sv, int k_max) {
  if (k_max < 1 || k_max >= sv.size()) {
    throw InvalidArgument("k_max must satisfy 1 <= k_max < min(L,T)");
  }
  const double floor = 1e-14 * sv(0);
  int best = 1;
  double best_ratio = -1.0;
  for (int k = 1; k <= k_max; ++k) {
    const double next = sv(k);
    const double ratio =
        next <= floor ? std::numeric_limits<double>::infinity() : sv(k - 1) / next;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = k;
    }
    if (std::isinf(ratio)) break;
  }
  return best;
}

int select_rank(const TransformedReturns& tr, int k_max) {
  return select_rank(transformed_spectrum(tr), k_max);
}

int default_k_max(Index l, Index t) {
  const Index k = std::min<Index>(std::min(l, t) / 2, 15);
  return static_cast<int>(std::max<Index>(k, 1));
}

double r_squared(const Panel& panel, const MatrixXd& resid) {
  const double mean = panel.returns.mean();
  const double total = (panel.returns.array() - mean).square().sum();
  return 1.0 - resid.squaredNorm() / total;
}

}  // namespace charfactor
