// One PASS/FAIL line per acceptance criterion.
//
//   charfactor_acceptance            run everything
//   charfactor_acceptance 5 7        run selected criteria
//
// Exit status is non-zero when any selected criterion fails.

#include "charfactor/distributions.hpp"
#include "charfactor/errors.hpp"
#include "charfactor/factor.hpp"
#include "charfactor/inference.hpp"
#include "charfactor/linalg.hpp"
#include "charfactor/outalpha.hpp"
#include "charfactor/panel.hpp"
#include "charfactor/pipeline.hpp"
#include "charfactor/random.hpp"
#include "charfactor/simlab.hpp"
#include "oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace charfactor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

MatrixXd gaussian(Index r, Index c, std::mt19937_64& rng, double sd = 1.0) {
  MatrixXd m(r, c);
  fill_normal(m, rng, sd);
  return m;
}

int worker_count() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// ---------------------------------------------------------------------------

Outcome basis_exactness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240101);
  double worst_gram = 0.0, worst_orth = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Index n = std::uniform_int_distribution<Index>(12, 200)(rng);
    const Index l = std::uniform_int_distribution<Index>(1, std::min<Index>(10, n / 3))(rng);
    MatrixXd x = gaussian(n, l, rng);
    x.col(0).setOnes();
    OmegaSpec spec;
    if (rep % 2 == 1 && (n - l) % 9 == 0 && n - l >= l) spec.variant = OmegaVariant::Structured;
    const MatrixXd b = build_basis(x, Omega(n, l, spec)).dense();
    const double nd = static_cast<double>(n);
    worst_gram = std::max(worst_gram, (b.transpose() * b - nd * MatrixXd::Identity(n - l, n - l)).cwiseAbs().maxCoeff() / nd);
    worst_orth = std::max(worst_orth, (x.transpose() * b).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_gram < 1e-8 && worst_orth < 1e-8 && secs < 10.0;
  o.detail = "max rel |B'B - NI| = " + fmt("%.2e", worst_gram) + ", max |X'B| = " + fmt("%.2e", worst_orth) +
             ", " + fmt("%.2f", secs) + " s";
  return o;
}

// Noiseless forward model. A tiny known noise floor keeps rounding-level
// deviations out of the support.
DgpConfig noiseless_dgp(std::uint64_t seed, bool spikes, double noise_floor = 1e-6) {
  std::mt19937_64 rng(seed);
  DgpConfig cfg;
  cfg.n = 150;
  cfg.t = 60;
  cfg.l = 6;
  cfg.k = 2;
  cfg.gamma_true = gaussian(6, 2, rng);
  cfg.eta_true = gaussian(6, 1, rng, 0.3).col(0);
  cfg.zeta_true = gaussian(144, 1, rng, 0.1).col(0);
  cfg.factor_mean = VectorXd::Constant(2, 0.2);
  cfg.noise_sigma = VectorXd::Zero(1);
  if (spikes) {
    cfg.xi_design.active_periods = 18;
    cfg.xi_design.spikes_per_period = 3;
    cfg.xi_design.center = 2.0;
    cfg.xi_design.halfwidth = 0.5;
  }
  cfg.threshold = ThresholdConfig::simulation();
  cfg.threshold.noise_scale = noise_floor;
  cfg.seed = seed;
  cfg.finalize();
  return cfg;
}

struct RecoveryErrors {
  double alpha_inside = 0, alpha_outside = 0, fitted = 0, gamma_dist = 0;
  bool support_exact = true;
};

RecoveryErrors recovery(const DgpConfig& cfg) {
  const auto gen = generate_panel(cfg);
  FitConfig fc;
  fc.k = static_cast<int>(cfg.k);
  fc.threshold = cfg.threshold;
  const auto full = fit_model(gen.panel, fc);
  RecoveryErrors e;
  e.alpha_inside = (full.fit.alpha_inside - gen.truth.alpha_inside).cwiseAbs().maxCoeff();
  e.alpha_outside = (full.outside.alpha_outside - gen.truth.alpha_outside).cwiseAbs().maxCoeff();
  const MatrixXd fitted = full.outside.alpha_outside + fitted_inside(gen.panel, full.fit);
  e.fitted = (fitted - gen.panel.returns).cwiseAbs().maxCoeff();
  e.gamma_dist = subspace_distance(full.fit.gamma, gen.truth.gamma);
  for (Index t = 0; t < gen.panel.t(); ++t) {
    std::vector<Index> want;
    for (Index q = 0; q < gen.truth.xi.rows(); ++q)
      if (gen.truth.xi(q, t) != 0.0) want.push_back(q);
    e.support_exact = e.support_exact && want == full.outside.support[static_cast<std::size_t>(t)];
  }
  return e;
}

RecoveryErrors worst_recovery(bool spikes, double noise_floor) {
  RecoveryErrors worst;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto e = recovery(noiseless_dgp(seed, spikes, noise_floor));
    worst.alpha_inside = std::max(worst.alpha_inside, e.alpha_inside);
    worst.alpha_outside = std::max(worst.alpha_outside, e.alpha_outside);
    worst.fitted = std::max(worst.fitted, e.fitted);
    worst.gamma_dist = std::max(worst.gamma_dist, e.gamma_dist);
    worst.support_exact = worst.support_exact && e.support_exact;
  }
  return worst;
}

bool recovered(const RecoveryErrors& e) {
  return e.alpha_inside < 1e-8 && e.alpha_outside < 1e-8 && e.fitted < 1e-8 && e.gamma_dist < 1e-8 &&
         e.support_exact;
}

std::string describe(const RecoveryErrors& e) {
  return "|dA_I| = " + fmt("%.2e", e.alpha_inside) + ", |dA_O| = " + fmt("%.2e", e.alpha_outside) +
         ", |dR| = " + fmt("%.2e", e.fitted) + ", span dist = " + fmt("%.2e", e.gamma_dist) + ", support " +
         (e.support_exact ? "exact" : "inexact");
}

Outcome exact_recovery(bool spikes) {
  const auto t0 = Clock::now();
  Outcome o;
  if (!spikes) {
    const auto e = worst_recovery(false, 1e-6);
    const double secs = seconds_since(t0);
    o.pass = recovered(e) && secs < 5.0;
    o.detail = "persistent outside alpha only: " + describe(e) + ", " + fmt("%.2f", secs) + " s";
    return o;
  }
  // With spikes the time average leaks xi-bar into every period. A threshold
  // below the leak keeps whole rows (exact alphas, inexact support); one
  // between the leak and the spikes finds the support but leaves the leak in
  // zeta. Report both regimes.
  const auto low = worst_recovery(true, 1e-6);
  const auto mid = worst_recovery(true, 1.35);
  const double secs = seconds_since(t0);
  o.pass = (recovered(low) || recovered(mid)) && secs < 5.0;
  o.detail = "with transitory spikes; rho below the leak: " + describe(low) + "; rho between leak and spikes: " +
             describe(mid) + "; " + fmt("%.2f", secs) + " s";
  return o;
}

Outcome unit_invariance() {
  const auto cfg = noiseless_dgp(21, true);
  const auto gen = generate_panel(cfg);
  FitConfig fc;
  fc.k = 2;
  fc.threshold = cfg.threshold;
  const auto base = fit_model(gen.panel, fc);
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> logw(-3.0, 3.0);
  double worst_i = 0.0, worst_o = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    VectorXd w(cfg.l);
    for (Index j = 0; j < cfg.l; ++j) w(j) = std::exp(logw(rng));
    const Panel scaled = rescale_characteristics(gen.panel, w);
    const auto fit = fit_model(scaled, fc);
    worst_i = std::max(worst_i, (fit.fit.alpha_inside - base.fit.alpha_inside).cwiseAbs().maxCoeff());
    worst_o = std::max(worst_o, (fit.outside.alpha_outside - base.outside.alpha_outside).cwiseAbs().maxCoeff());
  }
  Outcome o;
  o.pass = worst_i < 1e-8 && worst_o < 1e-8;
  o.detail = "max |dA_I| = " + fmt("%.2e", worst_i) + ", max |dA_O| = " + fmt("%.2e", worst_o) + " over 20 W_d";
  return o;
}

Outcome critical_values() {
  struct Row {
    int k;
    double level;
    double want;
  };
  const double z5 = max_stat_critical_value(0.05, 240 * 936);
  const double z1 = max_stat_critical_value(0.01, 240 * 936);
  bool ok = std::abs(z5 - 5.18) <= 0.01 && std::abs(z1 - 5.47) <= 0.01;
  std::ostringstream d;
  d << "z = " << fmt("%.3f", z5) << "/" << fmt("%.3f", z1);
  for (const Row& r : {Row{1, 0.05, 10.3}, Row{1, 0.01, 13.3}, Row{5, 0.05, 19.8}, Row{5, 0.01, 23.5},
                       Row{10, 0.05, 28.8}, Row{10, 0.01, 33.0}}) {
    const double c = wald_critical_value(r.k, r.level, 36);
    ok = ok && std::abs(c - r.want) <= 0.1;
    d << ", chi2(K=" << r.k << "," << r.level << ") = " << fmt("%.2f", c);
  }
  return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// Monte Carlo criteria share one study at N = 300, T = 120, L = 10, K = 2.

const CoverageStudy& b1_study(int reps) {
  static std::map<int, CoverageStudy> cache;
  auto it = cache.find(reps);
  if (it != cache.end()) return it->second;
  auto cfg = preset_b1(300, 120, 10, 2, 2024);
  cfg.seed = 99;
  StudyOptions opt;
  opt.threads = worker_count();
  return cache.emplace(reps, run_coverage_study(cfg, reps, {0.90, 0.95, 0.99}, opt)).first->second;
}

double coverage_of(const std::vector<double>& z, double level) {
  const double crit = normal_upper_quantile((1.0 - level) / 2.0);
  const auto hits = std::count_if(z.begin(), z.end(), [&](double v) { return std::abs(v) <= crit; });
  return static_cast<double>(hits) / static_cast<double>(z.size());
}

Outcome coverage() {
  const auto t0 = Clock::now();
  const auto& study = b1_study(500);
  const double c_delta = study.coverage("delta_otq", 0.95);
  const double c_out = study.coverage("alpha_O_it", 0.95);
  const double c_in = study.coverage("alpha_I_it", 0.95);
  const double c_g = study.coverage("gamma_11", 0.95);
  const double c_gp = study.coverage("gamma_11_plain", 0.95);
  Outcome o;
  o.pass = c_delta >= 0.925 && c_delta <= 0.975 && c_out >= 0.925 && c_out <= 0.975 && c_in >= 0.91 &&
           c_in <= 0.98 && c_g >= 0.91 && c_g <= 0.98 && c_g - c_gp >= 0.20 && !study.failed;
  o.detail = "95% coverage: delta " + fmt("%.3f", c_delta) + ", alpha_O " + fmt("%.3f", c_out) + ", alpha_I " +
             fmt("%.3f", c_in) + ", gamma_11 " + fmt("%.3f", c_g) + ", plain gamma_11 " + fmt("%.3f", c_gp) +
             ", failures " + std::to_string(study.failures) + ", " + fmt("%.0f", seconds_since(t0)) + " s";
  return o;
}

Outcome normality() {
  const auto t0 = Clock::now();
  const auto& study = b1_study(1000);
  const double p_delta = ks_half_pass_rate(study.standardized("delta_otq"), 1000, 0.01, 1);
  const double p_out = ks_half_pass_rate(study.standardized("alpha_O_it"), 1000, 0.01, 2);
  Outcome o;
  o.pass = p_delta >= 0.95 && p_out >= 0.95 && !study.failed;
  o.detail = "KS pass rate over half-samples: delta " + fmt("%.3f", p_delta) + ", alpha_O " + fmt("%.3f", p_out) +
             " (" + std::to_string(study.records.size() - static_cast<std::size_t>(study.failures)) + " reps, " +
             fmt("%.0f", seconds_since(t0)) + " s)";
  return o;
}

Outcome power() {
  const auto t0 = Clock::now();
  std::vector<DgpConfig> grid;
  for (double d : {0.0, 0.01, 0.02, 0.05}) {
    auto cfg = preset_b2(500, 200, d, 2024);
    cfg.seed = 77;
    grid.push_back(cfg);
  }
  PowerOptions opt;
  opt.threads = worker_count();
  const auto rows = run_power_study(grid, 100, 0.01, {PowerMethod::Formula}, opt);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = rows[0].rejection_rate <= 0.02 && rows[3].rejection_rate == 1.0 && rows[2].rejection_rate >= 0.60 &&
           rows[2].rejection_rate <= 0.95 && secs < 1200.0;
  o.detail = "rejection at delta1 = 0/0.01/0.02/0.05: " + fmt("%.2f", rows[0].rejection_rate) + "/" +
             fmt("%.2f", rows[1].rejection_rate) + "/" + fmt("%.2f", rows[2].rejection_rate) + "/" +
             fmt("%.2f", rows[3].rejection_rate) + ", failed reps " + std::to_string(rows[0].failures) + "/" +
             std::to_string(rows[1].failures) + "/" + std::to_string(rows[2].failures) + "/" +
             std::to_string(rows[3].failures) + ", " + fmt("%.0f", secs) + " s";
  return o;
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(8);
  double worst = 0.0;
  std::string worst_name;
  auto track = [&](const std::string& name, double e) {
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };
  for (int rep = 0; rep < 20; ++rep) {
    const Index l = std::uniform_int_distribution<Index>(3, 5)(rng);
    const Index n = rep % 2 == 0 ? std::uniform_int_distribution<Index>(20, 50)(rng) : l + 9 * (rep % 4 == 1 ? 3 : 4);
    const Index t = std::uniform_int_distribution<Index>(8, 15)(rng);
    DgpConfig cfg;
    cfg.n = n;
    cfg.t = t;
    cfg.l = l;
    cfg.k = 2;
    cfg.gamma_true = gaussian(l, 2, rng);
    cfg.eta_true = gaussian(l, 1, rng, 0.3).col(0);
    cfg.zeta_true = gaussian(n - l, 1, rng, 0.05).col(0);
    cfg.xi_design = {3, 2, 1.0, 0.3, true};
    cfg.noise_sigma = VectorXd::LinSpaced(t, 0.05, 0.15);
    const bool structured = rep % 2 == 1;
    cfg.omega_spec.variant = structured ? OmegaVariant::Structured : OmegaVariant::Simple;
    cfg.seed = 500 + static_cast<std::uint64_t>(rep);
    cfg.finalize();
    const auto gen = generate_panel(cfg);
    const Panel& p = gen.panel;

    FitConfig fc;
    fc.k = 2;
    fc.omega = cfg.omega_spec;
    fc.threshold = ThresholdConfig::simulation();
    const auto full = fit_model(p, fc);
    const auto var = estimate_variances(p, full);

    const MatrixXd rdd = oracle::rddot(p);
    track("rddot", oracle::rel_err(full.transformed.rddot, rdd));
    MatrixXd rd = rdd.colwise() - rdd.rowwise().mean();
    const MatrixXd g_plain = oracle::gamma_plain(rd, 2);
    track("gamma_plain", oracle::rel_err(full.plain.gamma, g_plain));
    const auto in_plain = oracle::inside(p, rdd, g_plain);
    track("eta_plain", oracle::rel_err(full.plain.eta, in_plain.eta));
    track("alpha_inside_plain", oracle::rel_err(full.plain.alpha_inside, in_plain.alpha));

    const MatrixXd fd_plain = g_plain.transpose() * rd;
    const MatrixXd g_hat = oracle::debias(p, g_plain, fd_plain, full.plain.sigma2);
    track("gamma_debiased", oracle::rel_err(full.fit.gamma, g_hat));
    const auto in = oracle::inside(p, rdd, g_hat);
    track("eta", oracle::rel_err(full.fit.eta, in.eta));
    track("alpha_inside", oracle::rel_err(full.fit.alpha_inside, in.alpha));
    track("factors_breve", oracle::rel_err(full.fit.factors_breve, in.fbreve));

    const MatrixXd om = oracle::omega(n, l, structured);
    std::vector<MatrixXd> bases;
    for (Index s = 0; s < t; ++s) bases.push_back(oracle::basis(p.x(s), om));
    std::vector<double> rho(full.outside.rho.data(), full.outside.rho.data() + t);
    const auto out = oracle::outside(p, bases, rho);
    track("delta_raw", oracle::rel_err(full.outside.delta_raw, out.delta));
    track("zeta", oracle::rel_err(full.outside.zeta, out.zeta));
    track("xi", oracle::rel_err(full.outside.xi, out.xi));
    track("alpha_outside", oracle::rel_err(full.outside.alpha_outside, out.alpha));
    if (full.outside.support != out.support) track("support", INFINITY);

    const MatrixXd fd = full.fit.factors_demeaned;
    for (Index j = 0; j < l; ++j) {
      track("gamma_row_var", oracle::rel_err(var.gamma_row_cov[static_cast<std::size_t>(j)],
                                             oracle::gamma_row_var(p, fd, full.fit.sigma2, j)));
    }
    track("v_inside", oracle::rel_err(var.v_inside, oracle::inside_var(p, full.fit.gamma, fd, full.fit.eta,
                                                                        rdd.rowwise().mean(), full.fit.sigma2)));
    MatrixXd v_delta(n - l, t);
    for (Index s = 0; s < t; ++s) v_delta.col(s).setConstant(full.fit.sigma2(s) / static_cast<double>(n));
    track("v_delta", oracle::rel_err(var.v_delta, v_delta));
    track("v_outside", oracle::rel_err(var.v_outside, oracle::outside_var(bases, out.support, full.fit.sigma2)));
  }
  Outcome o;
  o.pass = worst < 1e-9;
  o.detail = "largest relative deviation " + fmt("%.2e", worst) + (worst_name.empty() ? "" : " (" + worst_name + ")");
  return o;
}

Outcome performance() {
  DgpConfig cfg;
  cfg.n = 973;
  cfg.t = 240;
  cfg.l = 37;
  cfg.k = 5;
  std::mt19937_64 rng(9);
  cfg.gamma_true = gaussian(37, 5, rng, 0.2);
  cfg.eta_true = gaussian(37, 1, rng, 0.01).col(0);
  cfg.zeta_true = gaussian(936, 1, rng, 0.005).col(0);
  cfg.xi_design = {71, 3, 1.0, 0.5, true};
  cfg.noise_sigma = VectorXd::Constant(1, 0.1);
  cfg.seed = 10;
  cfg.finalize();
  const auto gen = generate_panel(cfg);
  FitConfig fc;
  fc.k = 5;
  const auto t0 = Clock::now();
  const auto full = fit_model(gen.panel, fc);
  const auto var = estimate_variances(gen.panel, full);
  const double secs = seconds_since(t0);

  // The structured Omega needs the dense N x (N-L) basis; time a few periods.
  const Omega structured(973, 37, OmegaSpec{OmegaVariant::Structured});
  const auto t1 = Clock::now();
  int built = 0, degenerate = 0;
  for (Index t = 0; t < 4; ++t) {
    try {
      (void)build_basis(gen.panel.x(t), structured);
      ++built;
    } catch (const DegenerateOrthoComplement&) {
      ++degenerate;
    }
  }
  const double per_period = seconds_since(t1) / 4.0;

  Outcome o;
  o.pass = secs < 60.0 && var.v_inside.allFinite() && var.v_outside.allFinite();
  o.detail = "fit + variances at N=973, T=240, L=37, K=5 in " + fmt("%.2f", secs) +
             " s single-threaded (simple Omega, low-rank basis); a dense structured-Omega basis costs " +
             fmt("%.2f", per_period) + " s per period (" + fmt("%.0f", per_period * 240.0) + " s for T=240, " +
             std::to_string(degenerate) + " of 4 sampled periods below the eigenvalue floor)";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1", basis_exactness},
      {"2a", [] { return exact_recovery(false); }},
      {"2b", [] { return exact_recovery(true); }},
      {"3", unit_invariance},
      {"4", critical_values},
      {"5", coverage},
      {"6", power},
      {"7", normality},
      {"8", oracle_equivalence},
      {"9", performance},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  auto selected = [&](const std::string& id) {
    if (wanted.empty()) return true;
    for (const auto& w : wanted)
      if (w == id || (id.size() > 1 && w == id.substr(0, 1))) return true;
    return false;
  };
  bool all = true;
  for (const auto& [id, fn] : criteria) {
    if (!selected(id)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("criterion %-3s %s  %s\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
