#pragma once

#include "charfactor/panel.hpp"
#include "charfactor/simlab.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace testutil {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd gaussian(Index r, Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  MatrixXd m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = d(rng);
  return m;
}

/// Random panel with a constant first column and Gaussian characteristics/returns.
inline charfactor::Panel random_panel(Index n, Index t, Index l, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<MatrixXd> xs;
  for (Index p = 0; p < t; ++p) {
    MatrixXd x = gaussian(n, l, rng);
    x.col(0).setOnes();
    xs.push_back(x);
  }
  return charfactor::make_panel(gaussian(n, t, rng), xs);
}

/// Noiseless forward-model config with orthogonal Gamma, nonzero eta/zeta and
/// optional spikes.
inline charfactor::DgpConfig noiseless_config(Index n, Index t, Index l, Index k, std::uint64_t seed, bool spikes) {
  std::mt19937_64 rng(seed);
  charfactor::DgpConfig cfg;
  cfg.n = n;
  cfg.t = t;
  cfg.l = l;
  cfg.k = k;
  cfg.gamma_true = gaussian(l, k, rng);
  cfg.eta_true = gaussian(l, 1, rng, 0.5).col(0);
  cfg.zeta_true = gaussian(n - l, 1, rng, 0.1).col(0);
  cfg.factor_mean = VectorXd::Constant(k, 0.3);
  cfg.factor_cov = MatrixXd::Identity(k, k);
  cfg.noise_sigma = VectorXd::Zero(1);
  if (spikes) {
    cfg.xi_design.active_periods = static_cast<int>(t / 3);
    cfg.xi_design.spikes_per_period = 2;
    cfg.xi_design.center = 2.0;
    cfg.xi_design.halfwidth = 0.5;
  }
  cfg.threshold = charfactor::ThresholdConfig::simulation();
  cfg.threshold.noise_scale = 0.05;
  cfg.seed = seed;
  cfg.finalize();
  return cfg;
}

inline std::string temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("charfactor_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testutil
