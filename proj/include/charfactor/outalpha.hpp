#pragma once

#include "charfactor/panel.hpp"

#include <Eigen/Dense>

#include <array>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace charfactor {

enum class OmegaVariant { Simple, Structured };

struct OmegaSpec {
  OmegaVariant variant = OmegaVariant::Simple;
};

/// 9 x 9 block replicated along the diagonal of the structured Omega.
inline constexpr std::array<double, 81> kStructuredPattern = {
    1,    1.01, 1,    1.01, 1,    1.01, 0,    0,    0,     //
    0,    1,    1.01, 1,    1.01, 1,    1.01, 0,    0,     //
    0,    0,    1,    1.01, 1,    1.01, 1,    1.01, 0,     //
    0,    0,    0,    1,    1.01, 1,    1.01, 1,    1.01,  //
    1,    0,    0,    0,    1,    1.01, 1,    1.01, 1,     //
    1.01, 1,    0,    0,    0,    1,    1.01, 1,    1.01,  //
    1,    1.01, 1,    0,    0,    0,    1,    1.01, 1,     //
    1.01, 1,    1.01, 1,    0,    0,    0,    1,    1.01,  //
    1,    1.01, 1,    1.01, 1,    0,    0,    0,    1,     //
};

/// Dense N x (N-L) matrix whose projection off span(X_t) generates the
/// orthogonal basis. Throws IncompatibleDimensions when the structured
/// variant does not fit (N-L not divisible by 9, or N-L < L).
MatrixXd build_omega(Index n, Index l, const OmegaSpec& spec);

/// Omega with its variant resolved. The simple variant [I; 0] is never
/// materialized; bases built from it use a rank-L closed form.
class Omega {
 public:
  Omega(Index n, Index l, const OmegaSpec& spec);

  /// Same as the constructor but falls back to the simple variant (with a
  /// logged warning) when the structured layout does not fit.
  static Omega with_fallback(Index n, Index l, const OmegaSpec& spec);

  OmegaVariant variant() const { return variant_; }
  Index n() const { return n_; }
  Index l() const { return l_; }
  MatrixXd dense() const;
  const MatrixXd& structured_matrix() const { return matrix_; }

 private:
  Index n_ = 0;
  Index l_ = 0;
  OmegaVariant variant_ = OmegaVariant::Simple;
  MatrixXd matrix_;  // only populated for the structured variant
};

/// B^o_t = X^o_t (X^o_t' X^o_t / N)^{-1/2} with X^o_t = (I - P_{X_t}) Omega.
///
/// Satisfies X_t' B = 0 and B' B = N I. For the simple Omega the Gram matrix
/// X^o' X^o = I - X_1 G^{-1} X_1' is an identity minus a rank-L term, so its
/// inverse square root is I + Y C Y' with an L x L core and every product
/// with B costs O(N L). The structured Omega stores B densely.
class OrthoBasis {
 public:
  OrthoBasis() = default;

  Index n() const { return n_; }
  Index dim() const { return n_ - l_; }

  /// B c for a coefficient vector of length N-L.
  VectorXd apply(const Eigen::Ref<const VectorXd>& coef) const;
  /// B' r for a length-N vector.
  VectorXd apply_transpose(const Eigen::Ref<const VectorXd>& r) const;
  /// (B'B)^{-1} B' r = B' r / N.
  VectorXd coefficients(const Eigen::Ref<const VectorXd>& r) const;
  /// ||B_{i,.}||^2 for every row i.
  VectorXd row_squared_norms() const;
  VectorXd column(Index q) const;
  MatrixXd dense() const;

  friend OrthoBasis build_basis(const MatrixXd& x_t, const Omega& omega);

 private:
  struct LowRank {
    MatrixXd x;         // N x L
    MatrixXd gram_inv;  // (X'X)^{-1}
    MatrixXd y;         // (N-L) x L, X_1 chol(G)^{-T}
    MatrixXd core;      // W diag(1 / (s (1 + s))) W'
  };
  struct Dense {
    MatrixXd b;
  };

  // X^o v and X^o' r for the simple Omega.
  VectorXd lowrank_xo(const LowRank& lr, const Eigen::Ref<const VectorXd>& v) const;
  VectorXd lowrank_xo_t(const LowRank& lr, const Eigen::Ref<const VectorXd>& r) const;

  Index n_ = 0;
  Index l_ = 0;
  std::variant<LowRank, Dense> form_;
};

/// Throws DegenerateOrthoComplement when X^o_t loses rank (relative
/// eigenvalue of X^o' X^o below 1e-12).
OrthoBasis build_basis(const MatrixXd& x_t, const Omega& omega);

/// Per-period bases for a whole panel. Dense (structured) bases are cached
/// only while the total footprint stays under `cache_bytes`; beyond that
/// they are rebuilt on each access.
class BasisSet {
 public:
  BasisSet(const Panel& panel, Omega omega, std::size_t cache_bytes = std::size_t{1} << 30);

  std::shared_ptr<const OrthoBasis> at(Index t) const;
  Index periods() const { return static_cast<Index>(xs_->size()); }
  Index n() const { return omega_.n(); }
  Index l() const { return omega_.l(); }
  const Omega& omega() const { return omega_; }

 private:
  std::shared_ptr<const std::vector<MatrixXd>> xs_;
  Omega omega_;
  std::vector<std::shared_ptr<const OrthoBasis>> cache_;
};

/// delta~_{o,t} = N^{-1} B^o_t' R_{t+1}, one column per period.
MatrixXd estimate_delta_raw(const Panel& panel, const BasisSet& bases);

/// rho_t = c * sigma_t * (log NT)^kappa / sqrt(N).
struct ThresholdConfig {
  double c = 1.0;
  double kappa = 0.6;
  /// Known noise scale used in place of sigma_t (simulation designs).
  std::optional<double> noise_scale;

  static ThresholdConfig empirical() { return {1.0, 0.6, std::nullopt}; }
  static ThresholdConfig simulation() { return {1.5, 0.5, std::nullopt}; }
};

std::vector<double> threshold_levels(const VectorXd& sigma2, Index n, const ThresholdConfig& cfg);

struct OutsideAlphaFit {
  MatrixXd delta_raw;     // (N-L) x T
  VectorXd zeta_plain;    // time average of delta_raw
  MatrixXd xi_tilde;      // thresholded deviations before refinement
  MatrixXd xi;            // refined transitory part
  VectorXd zeta;          // refined persistent part
  std::vector<std::vector<Index>> support;
  VectorXd rho;
  MatrixXd alpha_outside;  // N x T

  Index support_size() const;
};

/// Hard thresholding of delta~ - zeta~ at rho_t, followed by the one-step
/// refinement of zeta and xi, and alpha_O,t = B^o_t (zeta^ + xi^_t).
OutsideAlphaFit threshold_and_refine(const MatrixXd& delta_raw, const VectorXd& sigma2,
                                     const ThresholdConfig& cfg, const BasisSet& bases);

/// Robust per-period noise variance from the outside coefficients alone:
/// N * (1.4826 * median_q |delta~_{t,q} - zeta~_q|)^2. Under noise that is
/// independent across assets, B' E_t / N has covariance sigma_t^2 I / N, so
/// this scale ignores the sparse spikes.
VectorXd preliminary_sigma2(const MatrixXd& delta_raw, Index n);

}  // namespace charfactor
