#include "charfactor/bootstrap.hpp"

#include "charfactor/errors.hpp"
#include "charfactor/random.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

namespace charfactor {

DenseScores::DenseScores(MatrixXd weights, Index rows, Index cols)
    : weights_(std::move(weights)), rows_(rows), cols_(cols) {
  if (weights_.cols() != rows * cols) throw IncompatibleDimensions("weights must have rows * cols columns");
}

double DenseScores::max_abs_score(const MatrixXd& multipliers) const {
  const Eigen::Map<const VectorXd> g(multipliers.data(), multipliers.size());
  return (weights_ * g).cwiseAbs().maxCoeff();
}

DeltaScores::DeltaScores(std::shared_ptr<const BasisSet> bases, MatrixXd resid, VectorXd sigma2,
                         bool demean_over_t)
    : bases_(std::move(bases)), resid_(std::move(resid)), sigma2_(std::move(sigma2)), demean_(demean_over_t) {
  if (resid_.cols() != sigma2_.size() || resid_.cols() != bases_->periods()) {
    throw IncompatibleDimensions("DeltaScores: inconsistent shapes");
  }
}

double DeltaScores::max_abs_score(const MatrixXd& multipliers) const {
  const Index t_count = resid_.cols();
  const double n = static_cast<double>(resid_.rows());
  MatrixXd raw(bases_->n() - bases_->l(), t_count);
  for (Index t = 0; t < t_count; ++t) {
    raw.col(t) = bases_->at(t)->apply_transpose(resid_.col(t).cwiseProduct(multipliers.col(t))) / n;
  }
  if (demean_) raw = raw.colwise() - raw.rowwise().mean();
  double best = 0.0;
  for (Index t = 0; t < t_count; ++t) {
    const double se = std::sqrt(sigma2_(t) / n);
    if (se > 0.0) best = std::max(best, raw.col(t).cwiseAbs().maxCoeff() / se);
  }
  return best;
}

OutsideAlphaScores::OutsideAlphaScores(std::shared_ptr<const BasisSet> bases, MatrixXd resid,
                                       std::vector<std::vector<Index>> support, MatrixXd v_outside)
    : bases_(std::move(bases)), resid_(std::move(resid)), support_(std::move(support)) {
  if (v_outside.rows() != resid_.rows() || v_outside.cols() != resid_.cols() ||
      static_cast<Index>(support_.size()) != resid_.cols()) {
    throw IncompatibleDimensions("OutsideAlphaScores: inconsistent shapes");
  }
  inv_se_ = v_outside.unaryExpr([](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 0.0; });
}

double OutsideAlphaScores::max_abs_score(const MatrixXd& multipliers) const {
  const Index t_count = resid_.cols();
  const double n = static_cast<double>(resid_.rows());
  const Index m = bases_->n() - bases_->l();
  MatrixXd u(m, t_count);
  for (Index t = 0; t < t_count; ++t) {
    u.col(t) = bases_->at(t)->apply_transpose(resid_.col(t).cwiseProduct(multipliers.col(t)));
  }
  const VectorXd u_bar = u.rowwise().sum() / (n * static_cast<double>(t_count));
  double best = 0.0;
  for (Index t = 0; t < t_count; ++t) {
    VectorXd coef = u_bar;
    for (Index q : support_[static_cast<std::size_t>(t)]) coef(q) += u(q, t) / n;
    const VectorXd score = bases_->at(t)->apply(coef).cwiseProduct(inv_se_.col(t));
    best = std::max(best, score.cwiseAbs().maxCoeff());
  }
  return best;
}

double bootstrap_critical_value(const MultiplierScores& scores, double level, int draws, std::uint64_t seed,
                                int threads) {
  if (draws < 200) throw InvalidArgument("bootstrap needs at least 200 draws");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("level must be in (0,1)");
  std::vector<double> stats(static_cast<std::size_t>(draws));
  auto work = [&](int begin, int end) {
    MatrixXd g(scores.rows(), scores.cols());
    for (int d = begin; d < end; ++d) {
      auto rng = make_stream(seed, static_cast<std::uint64_t>(d));
      fill_normal(g, rng);
      stats[static_cast<std::size_t>(d)] = scores.max_abs_score(g);
    }
  };
  const int workers = std::clamp(threads, 1, draws);
  if (workers == 1) {
    work(0, draws);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back(work, draws * w / workers, draws * (w + 1) / workers);
    }
    for (auto& th : pool) th.join();
  }
  std::sort(stats.begin(), stats.end());
  const auto idx = static_cast<std::size_t>(std::ceil((1.0 - level) * draws - 1e-9)) - 1;
  return stats[std::min(idx, stats.size() - 1)];
}

}  // namespace charfactor
