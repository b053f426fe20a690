#pragma once

#include "charfactor/factor.hpp"
#include "charfactor/outalpha.hpp"
#include "charfactor/panel.hpp"

#include <memory>
#include <optional>

namespace charfactor {

struct FitConfig {
  /// Number of factors; nullopt selects it by the eigenvalue-ratio rule.
  std::optional<int> k;
  /// Upper bound for rank selection; 0 means default_k_max(L, T).
  int k_max = 0;
  OmegaSpec omega;
  ThresholdConfig threshold = ThresholdConfig::empirical();
  /// Recompute sigma^2 after the debiased fit and threshold again.
  bool rethreshold = false;
};

/// Everything produced by one run of the estimation procedure.
///
/// Step order: transform, outside alphas (thresholded with a preliminary
/// noise scale), plain spectral fit, sigma^2 from the plain residuals,
/// debiasing, final sigma^2 from the debiased residuals.
struct FullFit {
  TransformedReturns transformed;
  std::shared_ptr<const BasisSet> bases;
  OutsideAlphaFit outside;
  ModelFit plain;
  ModelFit fit;
  MatrixXd resid;
  double r2 = 0.0;
  int k = 0;
};

FullFit fit_model(const Panel& panel, const FitConfig& cfg);

}  // namespace charfactor
