#include "charfactor/pipeline.hpp"

#include "charfactor/errors.hpp"

#include <spdlog/spdlog.h>

namespace charfactor {

FullFit fit_model(const Panel& panel, const FitConfig& cfg) {
  FullFit out;
  out.transformed = transform_returns(panel);
  const auto& tr = out.transformed;

  if (cfg.k) {
    out.k = *cfg.k;
  } else {
    const int k_max = cfg.k_max > 0 ? cfg.k_max : default_k_max(panel.l(), panel.t());
    out.k = select_rank(tr, k_max);
    spdlog::info("selected K = {} (k_max = {})", out.k, k_max);
  }
  if (out.k < 1 || out.k >= std::min(panel.l(), panel.t())) {
    throw InvalidArgument("K must be < min(L,T) and >= 1 (K=" + std::to_string(out.k) + ")");
  }

  out.bases = std::make_shared<const BasisSet>(panel, Omega::with_fallback(panel.n(), panel.l(), cfg.omega));
  const MatrixXd delta_raw = estimate_delta_raw(panel, *out.bases);
  const VectorXd sigma2_pre = preliminary_sigma2(delta_raw, panel.n());
  out.outside = threshold_and_refine(delta_raw, sigma2_pre, cfg.threshold, *out.bases);

  out.plain = fit_plain(panel, tr, out.k);
  out.plain.sigma2 = estimate_sigma2(panel, out.plain, out.outside);

  out.fit = debias_gamma(tr, out.plain, panel, out.plain.sigma2);
  out.fit.sigma2 = estimate_sigma2(panel, out.fit, out.outside);

  if (cfg.rethreshold) {
    out.outside = threshold_and_refine(delta_raw, out.fit.sigma2, cfg.threshold, *out.bases);
    out.fit.sigma2 = estimate_sigma2(panel, out.fit, out.outside);
  }

  out.resid = residuals(panel, out.fit, out.outside);
  out.r2 = r_squared(panel, out.resid);
  spdlog::debug("fit done: K={}, support size {}, R2 {:.4f}", out.k, out.outside.support_size(), out.r2);
  return out;
}

}  // namespace charfactor
