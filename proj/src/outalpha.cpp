#include "charfactor/outalpha.hpp"

#include "charfactor/errors.hpp"
#include "charfactor/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace charfactor {

MatrixXd build_omega(Index n, Index l, const OmegaSpec& spec) {
  if (l < 1 || n <= l) {
    throw IncompatibleDimensions("Omega needs N > L >= 1, got N=" + std::to_string(n) +
                                 ", L=" + std::to_string(l));
  }
  const Index m = n - l;
  MatrixXd omega = MatrixXd::Zero(n, m);
  if (spec.variant == OmegaVariant::Simple) {
    omega.topRows(m).setIdentity();
    return omega;
  }
  if (m % 9 != 0 || m < l) {
    throw IncompatibleDimensions("structured Omega needs N-L divisible by 9 and N-L >= L, got N-L=" +
                                 std::to_string(m) + ", L=" + std::to_string(l));
  }
  const Index rep = m / 9;
  for (Index a = 0; a < 9; ++a) {
    for (Index b = 0; b < 9; ++b) {
      const double v = kStructuredPattern[static_cast<std::size_t>(a * 9 + b)];
      if (v == 0.0) continue;
      for (Index k = 0; k < rep; ++k) omega(a * rep + k, b * rep + k) = v;
    }
  }
  const Index copies = m / l;
  for (Index c = 0; c < copies; ++c) {
    for (Index k = 0; k < l; ++k) omega(m + k, c * l + k) = 1.0;
  }
  return omega;
}

Omega::Omega(Index n, Index l, const OmegaSpec& spec) : n_(n), l_(l), variant_(spec.variant) {
  if (variant_ == OmegaVariant::Structured) {
    matrix_ = build_omega(n, l, spec);
  } else if (l < 1 || n <= l) {
    throw IncompatibleDimensions("Omega needs N > L >= 1");
  }
}

Omega Omega::with_fallback(Index n, Index l, const OmegaSpec& spec) {
  if (spec.variant == OmegaVariant::Structured && ((n - l) % 9 != 0 || n - l < l)) {
    spdlog::warn("structured Omega needs N-L divisible by 9 (N={}, L={}); using the simple Omega", n, l);
    return Omega(n, l, OmegaSpec{OmegaVariant::Simple});
  }
  return Omega(n, l, spec);
}

MatrixXd Omega::dense() const {
  if (variant_ == OmegaVariant::Structured) return matrix_;
  return build_omega(n_, l_, OmegaSpec{OmegaVariant::Simple});
}

VectorXd OrthoBasis::lowrank_xo(const LowRank& lr, const Eigen::Ref<const VectorXd>& v) const {
  const Index m = n_ - l_;
  VectorXd out = -(lr.x * (lr.gram_inv * (lr.x.topRows(m).transpose() * v)));
  out.head(m) += v;
  return out;
}

VectorXd OrthoBasis::lowrank_xo_t(const LowRank& lr, const Eigen::Ref<const VectorXd>& r) const {
  const Index m = n_ - l_;
  VectorXd out = r.head(m);
  out.noalias() -= lr.x.topRows(m) * (lr.gram_inv * (lr.x.transpose() * r));
  return out;
}

VectorXd OrthoBasis::apply(const Eigen::Ref<const VectorXd>& coef) const {
  if (const auto* lr = std::get_if<LowRank>(&form_)) {
    VectorXd w = coef + lr->y * (lr->core * (lr->y.transpose() * coef));
    return std::sqrt(static_cast<double>(n_)) * lowrank_xo(*lr, w);
  }
  return std::get<Dense>(form_).b * coef;
}

VectorXd OrthoBasis::apply_transpose(const Eigen::Ref<const VectorXd>& r) const {
  if (const auto* lr = std::get_if<LowRank>(&form_)) {
    VectorXd w = lowrank_xo_t(*lr, r);
    w += lr->y * (lr->core * (lr->y.transpose() * w));
    return std::sqrt(static_cast<double>(n_)) * w;
  }
  return std::get<Dense>(form_).b.transpose() * r;
}

VectorXd OrthoBasis::coefficients(const Eigen::Ref<const VectorXd>& r) const {
  return apply_transpose(r) / static_cast<double>(n_);
}

VectorXd OrthoBasis::row_squared_norms() const {
  if (const auto* lr = std::get_if<LowRank>(&form_)) {
    // B B' = N (I - P_X) because B spans the orthogonal complement of X.
    const MatrixXd xg = lr->x * lr->gram_inv;
    const VectorXd leverage = (xg.array() * lr->x.array()).rowwise().sum();
    return static_cast<double>(n_) * (1.0 - leverage.array()).matrix();
  }
  return std::get<Dense>(form_).b.rowwise().squaredNorm();
}

VectorXd OrthoBasis::column(Index q) const {
  if (const auto* d = std::get_if<Dense>(&form_)) return d->b.col(q);
  VectorXd e = VectorXd::Zero(dim());
  e(q) = 1.0;
  return apply(e);
}

MatrixXd OrthoBasis::dense() const {
  if (const auto* d = std::get_if<Dense>(&form_)) return d->b;
  MatrixXd b(n_, dim());
  for (Index q = 0; q < dim(); ++q) b.col(q) = column(q);
  return b;
}

OrthoBasis build_basis(const MatrixXd& x_t, const Omega& omega) {
  const Index n = x_t.rows();
  const Index l = x_t.cols();
  if (n != omega.n() || l != omega.l()) {
    throw IncompatibleDimensions("X_t shape does not match Omega");
  }
  const Index m = n - l;
  OrthoBasis basis;
  basis.n_ = n;
  basis.l_ = l;

  const MatrixXd gram = x_t.transpose() * x_t;
  Eigen::LLT<MatrixXd> chol(gram);
  if (chol.info() != Eigen::Success) {
    throw DegenerateOrthoComplement("X_t' X_t is not positive definite");
  }

  if (omega.variant() == OmegaVariant::Simple) {
    OrthoBasis::LowRank lr;
    lr.x = x_t;
    lr.gram_inv = chol.solve(MatrixXd::Identity(l, l));
    // Y = X_1 L^{-T} so that X_1 G^{-1} X_1' = Y Y'.
    lr.y = chol.matrixL().solve(x_t.topRows(m).transpose()).transpose();
    // Y'Y = I - Z'Z with Z = X_2 L^{-T}; the eigenvalues of X^o' X^o are those
    // of Z'Z (and 1 on the complement). Working with Z avoids forming 1 - lambda.
    const MatrixXd z = chol.matrixL().solve(x_t.bottomRows(l).transpose()).transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(z.transpose() * z);
    const VectorXd mu = eig.eigenvalues().cwiseMax(0.0);
    if (!(mu.minCoeff() > kSpdRelativeTolerance)) {
      throw DegenerateOrthoComplement("(I - P_X) Omega is rank deficient");
    }
    const VectorXd s = mu.cwiseSqrt();
    const VectorXd scale = (s.array() * (1.0 + s.array())).inverse().matrix();
    lr.core = eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();
    basis.form_ = std::move(lr);
    return basis;
  }

  const MatrixXd& om = omega.structured_matrix();
  // Project with an orthonormal basis of span(X_t) and whiten through the
  // polar factor: X^o = U S V' gives X^o (X^o' X^o)^{-1/2} = U V'.
  const Eigen::HouseholderQR<MatrixXd> qr(x_t);
  const MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, l);
  const MatrixXd xo = om - q * (q.transpose() * om);
  const Eigen::BDCSVD<MatrixXd> svd(xo, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(m - 1) * sv(m - 1) <= kSpdRelativeTolerance * sv(0) * sv(0)) {
    throw DegenerateOrthoComplement("(I - P_X) Omega is rank deficient");
  }
  basis.form_ = OrthoBasis::Dense{std::sqrt(static_cast<double>(n)) * svd.matrixU() * svd.matrixV().transpose()};
  return basis;
}

BasisSet::BasisSet(const Panel& panel, Omega omega, std::size_t cache_bytes)
    : xs_(std::make_shared<const std::vector<MatrixXd>>(panel.characteristics)),
      omega_(std::move(omega)) {
  const auto n = static_cast<std::size_t>(panel.n());
  const auto l = static_cast<std::size_t>(panel.l());
  const auto t = static_cast<std::size_t>(panel.t());
  const std::size_t per_period = omega_.variant() == OmegaVariant::Simple
                                     ? (2 * n * l + 2 * l * l) * sizeof(double)
                                     : n * (n - l) * sizeof(double);
  if (per_period * t <= cache_bytes) {
    cache_.reserve(t);
    for (std::size_t p = 0; p < t; ++p) {
      cache_.push_back(std::make_shared<const OrthoBasis>(build_basis((*xs_)[p], omega_)));
    }
  } else {
    spdlog::debug("basis cache disabled ({} bytes per period); bases are rebuilt on access", per_period);
    // Surface degeneracy at construction time even without caching.
    for (std::size_t p = 0; p < t; ++p) build_basis((*xs_)[p], omega_);
  }
}

std::shared_ptr<const OrthoBasis> BasisSet::at(Index t) const {
  if (!cache_.empty()) return cache_[static_cast<std::size_t>(t)];
  return std::make_shared<const OrthoBasis>(build_basis((*xs_)[static_cast<std::size_t>(t)], omega_));
}

MatrixXd estimate_delta_raw(const Panel& panel, const BasisSet& bases) {
  const Index m = panel.n() - panel.l();
  MatrixXd delta(m, panel.t());
  for (Index t = 0; t < panel.t(); ++t) delta.col(t) = bases.at(t)->coefficients(panel.r(t));
  return delta;
}

std::vector<double> threshold_levels(const VectorXd& sigma2, Index n, const ThresholdConfig& cfg) {
  if (!(cfg.c > 0.0) || !(cfg.kappa > 0.0)) {
    throw InvalidArgument("threshold constants c and kappa must be positive");
  }
  const double nt = static_cast<double>(n) * static_cast<double>(sigma2.size());
  const double rate = std::pow(std::log(nt), cfg.kappa) / std::sqrt(static_cast<double>(n));
  std::vector<double> rho(static_cast<std::size_t>(sigma2.size()));
  for (Index t = 0; t < sigma2.size(); ++t) {
    const double sigma = cfg.noise_scale ? *cfg.noise_scale : std::sqrt(std::max(sigma2(t), 0.0));
    rho[static_cast<std::size_t>(t)] = cfg.c * sigma * rate;
  }
  return rho;
}

Index OutsideAlphaFit::support_size() const {
  Index total = 0;
  for (const auto& s : support) total += static_cast<Index>(s.size());
  return total;
}

OutsideAlphaFit threshold_and_refine(const MatrixXd& delta_raw, const VectorXd& sigma2,
                                     const ThresholdConfig& cfg, const BasisSet& bases) {
  const Index m = delta_raw.rows();
  const Index t_count = delta_raw.cols();
  if (sigma2.size() != t_count || bases.periods() != t_count || bases.n() - bases.l() != m) {
    throw IncompatibleDimensions("threshold_and_refine: inconsistent shapes");
  }
  OutsideAlphaFit fit;
  fit.delta_raw = delta_raw;
  fit.zeta_plain = delta_raw.rowwise().mean();
  const auto rho = threshold_levels(sigma2, bases.n(), cfg);
  fit.rho = Eigen::Map<const VectorXd>(rho.data(), t_count);

  fit.xi_tilde = MatrixXd::Zero(m, t_count);
  for (Index t = 0; t < t_count; ++t) {
    for (Index q = 0; q < m; ++q) {
      const double dev = delta_raw(q, t) - fit.zeta_plain(q);
      if (std::abs(dev) >= fit.rho(t)) fit.xi_tilde(q, t) = dev;
    }
  }
  fit.zeta = fit.zeta_plain - fit.xi_tilde.rowwise().mean();

  fit.xi = MatrixXd::Zero(m, t_count);
  fit.support.assign(static_cast<std::size_t>(t_count), {});
  for (Index t = 0; t < t_count; ++t) {
    for (Index q = 0; q < m; ++q) {
      if (fit.xi_tilde(q, t) != 0.0) {
        fit.support[static_cast<std::size_t>(t)].push_back(q);
        fit.xi(q, t) = delta_raw(q, t) - fit.zeta(q);
      }
    }
  }

  fit.alpha_outside.resize(bases.n(), t_count);
  for (Index t = 0; t < t_count; ++t) {
    fit.alpha_outside.col(t) = bases.at(t)->apply(fit.zeta + fit.xi.col(t));
  }
  return fit;
}

VectorXd preliminary_sigma2(const MatrixXd& delta_raw, Index n) {
  const VectorXd zeta = delta_raw.rowwise().mean();
  VectorXd out(delta_raw.cols());
  std::vector<double> dev(static_cast<std::size_t>(delta_raw.rows()));
  for (Index t = 0; t < delta_raw.cols(); ++t) {
    for (Index q = 0; q < delta_raw.rows(); ++q) {
      dev[static_cast<std::size_t>(q)] = std::abs(delta_raw(q, t) - zeta(q));
    }
    const auto mid = dev.begin() + static_cast<std::ptrdiff_t>(dev.size() / 2);
    std::nth_element(dev.begin(), mid, dev.end());
    double med = *mid;
    if (dev.size() % 2 == 0) med = 0.5 * (med + *std::max_element(dev.begin(), mid));
    const double scale = 1.482602218505602 * med;
    out(t) = static_cast<double>(n) * scale * scale;
  }
  return out;
}

}  // namespace charfactor
