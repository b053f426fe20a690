#include "charfactor/simlab.hpp"

#include "charfactor/bootstrap.hpp"
#include "charfactor/distributions.hpp"
#include "charfactor/errors.hpp"
#include "charfactor/factor.hpp"
#include "charfactor/inference.hpp"
#include "charfactor/linalg.hpp"
#include "charfactor/random.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

namespace charfactor {

namespace {

enum Role : std::uint64_t {
  kRoleChars = 1,
  kRoleFactors = 2,
  kRoleXi = 3,
  kRoleNoise = 4,
  kRoleDesign = 5,
  kRoleTrack = 6,
  kRoleBootstrap = 7,
};

MatrixXd cholesky_factor(const MatrixXd& cov, const char* what) {
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw InvalidArgument(std::string(what) + " is not positive definite");
  return llt.matrixL();
}

void run_parallel(int count, int threads, const std::function<void(int)>& body) {
  const int workers = std::clamp(threads, 1, std::max(count, 1));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::uint64_t replication_seed(std::uint64_t seed, int rep) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(rep) + 1));
}

FitConfig fit_config_for(const DgpConfig& cfg, bool known_noise) {
  FitConfig fc;
  fc.k = static_cast<int>(cfg.k);
  fc.omega = cfg.omega_spec;
  fc.threshold = cfg.threshold;
  if (known_noise && cfg.noise_sigma.size() == 1) fc.threshold.noise_scale = cfg.noise_sigma(0);
  return fc;
}

}  // namespace

void DgpConfig::finalize() {
  if (!(k >= 1 && k < l && l < n && t >= 2)) {
    throw IncompatibleDimensions("DGP needs 1 <= K < L < N and T >= 2");
  }
  if (gamma_true.rows() != l || gamma_true.cols() != k) throw IncompatibleDimensions("gamma_true must be L x K");
  if (eta_true.size() == 0) eta_true = VectorXd::Zero(l);
  if (eta_true.size() != l) throw IncompatibleDimensions("eta_true must have length L");
  eta_true -= projector(gamma_true) * eta_true;
  if (char_cov.size() == 0) char_cov = MatrixXd::Identity(l - 1, l - 1);
  if (char_cov.rows() != l - 1 || char_cov.cols() != l - 1) {
    throw IncompatibleDimensions("char_cov must be (L-1) x (L-1)");
  }
  if (char_mean.size() == 0) char_mean = VectorXd::Zero(l - 1);
  if (factor_mean.size() == 0) factor_mean = VectorXd::Zero(k);
  if (factor_cov.size() == 0) factor_cov = MatrixXd::Identity(k, k);
  if (char_mean.size() != l - 1 || factor_mean.size() != k || factor_cov.rows() != k || factor_cov.cols() != k) {
    throw IncompatibleDimensions("characteristic or factor moments have the wrong size");
  }
  if (zeta_true.size() == 0) zeta_true = VectorXd::Zero(n - l);
  if (zeta_true.size() != n - l) throw IncompatibleDimensions("zeta_true must have length N-L");
  if (noise_sigma.size() == 0) noise_sigma = VectorXd::Ones(1);
  if (noise_sigma.size() != 1 && noise_sigma.size() != t) {
    throw IncompatibleDimensions("noise_sigma must be a scalar or have length T");
  }
  if (xi_design.active_periods > t || xi_design.spikes_per_period > n - l || xi_design.active_periods < 0 ||
      xi_design.spikes_per_period < 0) {
    throw IncompatibleDimensions("xi design does not fit the panel");
  }
}

GeneratedPanel generate_panel(const DgpConfig& cfg_in) {
  DgpConfig cfg = cfg_in;
  cfg.finalize();
  const Index n = cfg.n, t_count = cfg.t, l = cfg.l, k = cfg.k;
  const Index m = n - l;

  auto rng_x = make_stream(cfg.seed, 0, kRoleChars);
  auto rng_f = make_stream(cfg.seed, 0, kRoleFactors);
  auto rng_xi = make_stream(cfg.seed, 0, kRoleXi);
  auto rng_e = make_stream(cfg.seed, 0, kRoleNoise);

  const MatrixXd chol_x = cholesky_factor(cfg.char_cov, "char_cov");
  const MatrixXd chol_f = cholesky_factor(cfg.factor_cov, "factor_cov");

  std::vector<MatrixXd> xs(static_cast<std::size_t>(t_count));
  for (Index t = 0; t < t_count; ++t) {
    MatrixXd z(n, l - 1);
    fill_normal(z, rng_x);
    MatrixXd x(n, l);
    x.col(0).setOnes();
    x.rightCols(l - 1) = (z * chol_x.transpose()).rowwise() + cfg.char_mean.transpose();
    xs[static_cast<std::size_t>(t)] = std::move(x);
  }

  Truth truth;
  truth.gamma = cfg.gamma_true;
  truth.eta = cfg.eta_true;
  truth.zeta = cfg.zeta_true;
  MatrixXd zf(k, t_count);
  fill_normal(zf, rng_f);
  truth.factors = (chol_f * zf).colwise() + cfg.factor_mean;

  truth.xi = MatrixXd::Zero(m, t_count);
  const auto& xd = cfg.xi_design;
  if (xd.active_periods > 0 && xd.spikes_per_period > 0) {
    std::vector<Index> periods(static_cast<std::size_t>(t_count));
    std::iota(periods.begin(), periods.end(), Index{0});
    std::vector<Index> active;
    if (xd.last_active) {
      active.push_back(t_count - 1);
      periods.pop_back();
    }
    std::shuffle(periods.begin(), periods.end(), rng_xi);
    for (Index p : periods) {
      if (static_cast<int>(active.size()) >= xd.active_periods) break;
      active.push_back(p);
    }
    std::sort(active.begin(), active.end());
    std::uniform_real_distribution<double> mag(xd.center - xd.halfwidth, xd.center + xd.halfwidth);
    std::bernoulli_distribution sign(0.5);
    std::vector<Index> coords(static_cast<std::size_t>(m));
    for (Index p : active) {
      std::iota(coords.begin(), coords.end(), Index{0});
      for (int s = 0; s < xd.spikes_per_period; ++s) {
        std::uniform_int_distribution<Index> pick(s, m - 1);
        std::swap(coords[static_cast<std::size_t>(s)], coords[static_cast<std::size_t>(pick(rng_xi))]);
        const double v = mag(rng_xi);
        truth.xi(coords[static_cast<std::size_t>(s)], p) = sign(rng_xi) ? v : -v;
      }
    }
  }

  truth.noise.resize(n, t_count);
  for (Index t = 0; t < t_count; ++t) {
    VectorXd e(n);
    fill_normal(e, rng_e, 1.0);
    truth.noise.col(t) = cfg.sigma_at(t) * e;
  }

  Panel skeleton;
  skeleton.returns = MatrixXd::Zero(n, t_count);
  skeleton.characteristics = xs;
  const BasisSet bases(skeleton, Omega::with_fallback(n, l, cfg.omega_spec));

  MatrixXd returns(n, t_count);
  truth.alpha_inside.resize(n, t_count);
  truth.alpha_outside.resize(n, t_count);
  for (Index t = 0; t < t_count; ++t) {
    const MatrixXd& x = xs[static_cast<std::size_t>(t)];
    const MatrixXd b = x * cfg.gamma_true;
    const VectorXd xe = x * cfg.eta_true;
    // The part of X eta spanned by X Gamma moves into f-breve.
    const VectorXd shift = (b.transpose() * b).ldlt().solve(b.transpose() * xe);
    truth.alpha_inside.col(t) = xe - b * shift;
    truth.factors.col(t) += shift;
    truth.alpha_outside.col(t) = bases.at(t)->apply(cfg.zeta_true + truth.xi.col(t));
    returns.col(t) = truth.alpha_outside.col(t) + truth.alpha_inside.col(t) + b * truth.factors.col(t) +
                     truth.noise.col(t);
  }
  GeneratedPanel out{make_panel(std::move(returns), std::move(xs)), std::move(truth)};
  return out;
}

DgpConfig preset_b1(Index n, Index t, Index l, Index k, std::uint64_t design_seed) {
  // Stand-in calibration constants.
  constexpr double kCharCorr = 0.3;
  constexpr double kCharMean = 1.0;
  constexpr double kGammaScale = 0.1;
  constexpr double kFactorMean = 0.05;
  constexpr double kFactorVar = 0.01;
  constexpr double kEtaScale = 0.01;
  constexpr double kZetaScale = 0.01;
  constexpr double kNoiseSigma = 0.15;

  DgpConfig cfg;
  cfg.n = n;
  cfg.t = t;
  cfg.l = l;
  cfg.k = k;
  auto rng = make_stream(design_seed, 0, kRoleDesign);
  cfg.char_cov.resize(l - 1, l - 1);
  for (Index i = 0; i < l - 1; ++i) {
    for (Index j = 0; j < l - 1; ++j) cfg.char_cov(i, j) = std::pow(kCharCorr, static_cast<double>(std::abs(i - j)));
  }
  cfg.char_mean = VectorXd::Constant(l - 1, kCharMean);
  cfg.gamma_true.resize(l, k);
  fill_normal(cfg.gamma_true, rng, kGammaScale);
  cfg.eta_true.resize(l);
  fill_normal(cfg.eta_true, rng, kEtaScale);
  cfg.zeta_true.resize(n - l);
  fill_normal(cfg.zeta_true, rng, kZetaScale);
  cfg.factor_mean = VectorXd::Constant(k, kFactorMean);
  cfg.factor_cov = kFactorVar * MatrixXd::Identity(k, k);
  cfg.xi_design.active_periods = static_cast<int>(std::clamp<Index>((71 * t + 120) / 240, 1, t));
  cfg.xi_design.spikes_per_period = static_cast<int>(std::min<Index>(3, n - l));
  cfg.xi_design.center = 1.0;
  cfg.xi_design.halfwidth = 0.5;
  cfg.noise_sigma = VectorXd::Constant(1, kNoiseSigma);
  cfg.threshold = ThresholdConfig::simulation();
  cfg.seed = design_seed;
  cfg.finalize();
  return cfg;
}

DgpConfig preset_b2(Index n, Index t, double delta1, std::uint64_t design_seed) {
  DgpConfig cfg;
  cfg.n = n;
  cfg.t = t;
  cfg.l = 11;
  cfg.k = 2;
  auto rng = make_stream(design_seed, 0, kRoleDesign);
  cfg.gamma_true.resize(cfg.l, cfg.k);
  fill_normal(cfg.gamma_true, rng, 1.0 / std::sqrt(10.0));
  cfg.char_cov = MatrixXd::Identity(cfg.l - 1, cfg.l - 1);
  cfg.factor_mean = VectorXd::Zero(2);
  cfg.factor_cov = VectorXd(Eigen::Vector2d(4.0, 1.0)).asDiagonal();
  cfg.zeta_true = VectorXd::Zero(n - cfg.l);
  cfg.zeta_true(0) = delta1;
  cfg.noise_sigma = VectorXd::Ones(1);
  cfg.threshold = ThresholdConfig::simulation();
  cfg.seed = design_seed;
  cfg.finalize();
  return cfg;
}

std::vector<double> CoverageStudy::standardized(const std::string& parameter) const {
  std::vector<double> out;
  for (const auto& r : records) {
    if (!r.ok) continue;
    if (parameter == "delta_otq") out.push_back(r.z_delta);
    else if (parameter == "alpha_O_it") out.push_back(r.z_outside);
    else if (parameter == "alpha_I_it") out.push_back(r.z_inside);
    else if (parameter == "alpha_I_it_plain") out.push_back(r.z_inside_plain);
    else if (parameter == "gamma_11") out.push_back(r.z_gamma);
    else if (parameter == "gamma_11_plain") out.push_back(r.z_gamma_plain);
    else throw InvalidArgument("unknown parameter '" + parameter + "'");
  }
  return out;
}

double CoverageStudy::coverage(const std::string& parameter, double level) const {
  for (const auto& row : table) {
    if (row.parameter == parameter && std::abs(row.level - level) < 1e-12) return row.coverage;
  }
  throw InvalidArgument("no coverage row for '" + parameter + "'");
}

ReplicationRecord run_coverage_replication(const DgpConfig& cfg, std::uint64_t rep_seed, Index asset, Index coef,
                                           const StudyOptions& opt) {
  ReplicationRecord rec;
  rec.seed = rep_seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    DgpConfig c = cfg;
    c.seed = rep_seed;
    const GeneratedPanel gen = generate_panel(c);
    const Panel& panel = gen.panel;
    const Truth& truth = gen.truth;
    const Index t_last = panel.t() - 1;
    const double nt = static_cast<double>(panel.n()) * static_cast<double>(panel.t());

    const FullFit full = fit_model(panel, fit_config_for(cfg, opt.known_noise_scale));
    const VarianceEstimates var = estimate_variances(panel, full);

    rec.z_delta = (full.outside.delta_raw(coef, t_last) - (truth.zeta(coef) + truth.xi(coef, t_last))) /
                  std::sqrt(var.v_delta(coef, t_last));
    rec.z_outside = (full.outside.alpha_outside(asset, t_last) - truth.alpha_outside(asset, t_last)) /
                    std::sqrt(var.v_outside(asset, t_last));
    rec.z_inside = (full.fit.alpha_inside(asset, t_last) - truth.alpha_inside(asset, t_last)) /
                   std::sqrt(var.v_inside(asset, t_last));

    // Plain arm: variances evaluated at the plain estimates.
    const MatrixXd v_inside_plain = estimate_inside_variance(panel, full.transformed, full.plain);
    rec.z_inside_plain = (full.plain.alpha_inside(asset, t_last) - truth.alpha_inside(asset, t_last)) /
                         std::sqrt(v_inside_plain(asset, t_last));

    // Rotation to the spectral estimate: Gamma~ ~ Gamma H with
    // H = F^d F~' (F~ F~')^{-1} built from the true demeaned factors.
    const MatrixXd f_true = truth.factors.colwise() - truth.factors.rowwise().mean();
    const MatrixXd& f_plain = full.plain.factors_demeaned;
    const MatrixXd h = f_true * f_plain.transpose() * (f_plain * f_plain.transpose()).inverse();
    const double target = (truth.gamma * h)(0, 0);
    const MatrixXd v_gamma = var.gamma_row_cov[0];
    const MatrixXd v_gamma_plain = estimate_gamma_row_variance(panel, full.plain, 0);
    rec.z_gamma = (full.fit.gamma(0, 0) - target) / std::sqrt(v_gamma(0, 0) / nt);
    rec.z_gamma_plain = (full.plain.gamma(0, 0) - target) / std::sqrt(v_gamma_plain(0, 0) / nt);

    bool exact = true;
    for (Index t = 0; t < panel.t() && exact; ++t) {
      std::vector<Index> want;
      for (Index q = 0; q < truth.xi.rows(); ++q) {
        if (truth.xi(q, t) != 0.0) want.push_back(q);
      }
      exact = want == full.outside.support[static_cast<std::size_t>(t)];
    }
    rec.support_exact = exact;
    rec.ok = std::isfinite(rec.z_delta) && std::isfinite(rec.z_outside) && std::isfinite(rec.z_inside) &&
             std::isfinite(rec.z_gamma) && std::isfinite(rec.z_gamma_plain) && std::isfinite(rec.z_inside_plain);
    if (!rec.ok) rec.error = "non-finite standardized error";
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

CoverageStudy run_coverage_study(const DgpConfig& cfg, int reps, const std::vector<double>& levels,
                                 const StudyOptions& opt) {
  if (reps < 1) throw InvalidArgument("reps must be positive");
  auto track = make_stream(cfg.seed, 0, kRoleTrack);
  const Index asset = opt.track_asset >= 0 ? opt.track_asset
                                           : std::uniform_int_distribution<Index>(0, cfg.n - 1)(track);
  const Index coef = opt.track_coef >= 0 ? opt.track_coef
                                         : std::uniform_int_distribution<Index>(0, cfg.n - cfg.l - 1)(track);

  CoverageStudy study;
  study.records.resize(static_cast<std::size_t>(reps));
  run_parallel(reps, opt.threads, [&](int r) {
    study.records[static_cast<std::size_t>(r)] =
        run_coverage_replication(cfg, replication_seed(cfg.seed, r), asset, coef, opt);
  });
  for (const auto& r : study.records) {
    if (!r.ok) {
      ++study.failures;
      spdlog::warn("replication seed {} failed: {}", r.seed, r.error);
    }
  }
  study.failed = static_cast<double>(study.failures) > 0.01 * reps;

  constexpr double kBinWidth = 0.25;
  constexpr int kBins = 40;
  for (const auto& name : kCoverageParameters) {
    const auto z = study.standardized(name);
    const auto count = static_cast<Index>(z.size());
    for (double level : levels) {
      const double crit = normal_upper_quantile((1.0 - level) / 2.0);
      const auto hits = std::count_if(z.begin(), z.end(), [&](double v) { return std::abs(v) <= crit; });
      CoverageRow row;
      row.parameter = name;
      row.level = level;
      row.reps = count;
      row.coverage = count > 0 ? static_cast<double>(hits) / static_cast<double>(count) : 0.0;
      row.se = count > 0 ? std::sqrt(row.coverage * (1.0 - row.coverage) / static_cast<double>(count)) : 0.0;
      study.table.push_back(row);
    }
    for (int b = 0; b < kBins; ++b) {
      HistogramBin bin;
      bin.parameter = name;
      bin.bin_lo = -5.0 + kBinWidth * b;
      bin.bin_hi = bin.bin_lo + kBinWidth;
      bin.count = std::count_if(z.begin(), z.end(), [&](double v) { return v >= bin.bin_lo && v < bin.bin_hi; });
      bin.ref_density = (normal_cdf(bin.bin_hi) - normal_cdf(bin.bin_lo)) / kBinWidth;
      study.histograms.push_back(bin);
    }
  }
  return study;
}

std::vector<PowerRow> run_power_study(const std::vector<DgpConfig>& grid, int reps, double level,
                                      const std::vector<PowerMethod>& methods, const PowerOptions& opt) {
  if (reps < 1) throw InvalidArgument("reps must be positive");
  std::vector<PowerRow> rows;
  for (const auto& cfg : grid) {
    const double delta1 = cfg.zeta_true.size() > 0 ? cfg.zeta_true(0) : 0.0;
    // decisions[r][method]: 1 reject, 0 accept, -1 failed
    std::vector<std::vector<int>> decisions(static_cast<std::size_t>(reps), std::vector<int>(methods.size(), -1));
    run_parallel(reps, opt.threads, [&](int r) {
      try {
        DgpConfig c = cfg;
        c.seed = replication_seed(cfg.seed, r);
        const GeneratedPanel gen = generate_panel(c);
        const FullFit full = fit_model(gen.panel, fit_config_for(cfg, opt.known_noise_scale));
        const MatrixXd v_out = estimate_outside_variance(*full.bases, full.outside, full.fit.sigma2);
        const TestReport rep = max_stat_test(full.outside.alpha_outside, v_out, false, level);
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
          if (methods[mi] == PowerMethod::Formula) {
            decisions[static_cast<std::size_t>(r)][mi] = rep.reject ? 1 : 0;
          } else {
            const OutsideAlphaScores scores(full.bases, full.resid, full.outside.support, v_out);
            const double crit = bootstrap_critical_value(scores, level, opt.bootstrap_draws,
                                                         make_stream(c.seed, 0, kRoleBootstrap)(), 1);
            decisions[static_cast<std::size_t>(r)][mi] = rep.statistic > crit ? 1 : 0;
          }
        }
      } catch (const std::exception& e) {
        spdlog::warn("power replication {} failed: {}", r, e.what());
      }
    });
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      PowerRow row;
      row.delta1 = delta1;
      row.method = methods[mi] == PowerMethod::Formula ? "formula" : "bootstrap";
      Index rejects = 0;
      for (const auto& d : decisions) {
        if (d[mi] < 0) ++row.failures;
        else if (d[mi] == 1) ++rejects;
      }
      row.reps = reps - row.failures;
      row.rejection_rate = row.reps > 0 ? static_cast<double>(rejects) / static_cast<double>(row.reps) : 0.0;
      row.se = row.reps > 0 ? std::sqrt(row.rejection_rate * (1.0 - row.rejection_rate) / static_cast<double>(row.reps)) : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

double ks_half_pass_rate(const std::vector<double>& sample, int resamples, double alpha, std::uint64_t seed) {
  if (sample.size() < 4 || resamples < 1) throw InvalidArgument("need at least 4 observations and 1 resample");
  auto rng = make_stream(seed, 0, kRoleBootstrap);
  std::vector<double> pool = sample;
  const std::size_t half = pool.size() / 2;
  int pass = 0;
  for (int r = 0; r < resamples; ++r) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::vector<double> sub(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(half));
    if (ks_pvalue(ks_statistic_normal(sub), sub.size()) > alpha) ++pass;
  }
  return static_cast<double>(pass) / resamples;
}

}  // namespace charfactor
