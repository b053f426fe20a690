#pragma once

#include "charfactor/outalpha.hpp"
#include "charfactor/panel.hpp"
#include "charfactor/pipeline.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace charfactor {

struct XiDesign {
  int active_periods = 0;
  int spikes_per_period = 0;
  double center = 1.0;
  double halfwidth = 0.5;
  /// Force the last period into the active set.
  bool last_active = true;
};

struct DgpConfig {
  Index n = 0, t = 0, l = 0, k = 0;
  MatrixXd gamma_true;  // L x K
  VectorXd eta_true;    // L, projected off span(gamma_true) by finalize()
  MatrixXd char_cov;    // (L-1) x (L-1)
  VectorXd char_mean;   // L-1, zero when empty
  VectorXd factor_mean; // K
  MatrixXd factor_cov;  // K x K
  VectorXd zeta_true;   // N-L
  XiDesign xi_design;
  VectorXd noise_sigma;  // length 1 or T
  OmegaSpec omega_spec;
  std::uint64_t seed = 0;

  /// Threshold used when fitting simulated panels.
  ThresholdConfig threshold = ThresholdConfig::simulation();

  /// Shape checks, default fill-ins and the eta projection.
  void finalize();
  double sigma_at(Index t) const { return noise_sigma.size() == 1 ? noise_sigma(0) : noise_sigma(t); }
};

struct Truth {
  MatrixXd gamma;
  VectorXd eta;
  VectorXd zeta;
  MatrixXd xi;             // (N-L) x T
  MatrixXd factors;        // K x T, f-breve
  MatrixXd alpha_inside;   // N x T
  MatrixXd alpha_outside;  // N x T
  MatrixXd noise;          // N x T
};

struct GeneratedPanel {
  Panel panel;
  Truth truth;
};

/// R_{t+1} = B^o_t (zeta + xi_t) + X_t eta + X_t Gamma f_{t+1} + E_{t+1},
/// deterministic in cfg.seed.
GeneratedPanel generate_panel(const DgpConfig& cfg);

/// Stand-in calibration for the heteroskedastic coverage design: AR-type
/// characteristic covariance 0.3^{|i-j|}, sparse spikes centred at 1 with
/// half-width 0.5, noise sd 0.15. Fixed design quantities (Gamma, eta, zeta)
/// are drawn from `design_seed`.
DgpConfig preset_b1(Index n, Index t, Index l, Index k, std::uint64_t design_seed);

/// Power design: L = 10 characteristics plus a constant, K = 2, factors
/// N(0, diag(4, 1)), Gamma ~ N(0, 1/L) fixed by `design_seed`, unit noise,
/// zeta = delta1 e_1 and no transitory part.
DgpConfig preset_b2(Index n, Index t, double delta1, std::uint64_t design_seed);

struct StudyOptions {
  int threads = 1;
  /// Threshold with the true noise scale, as in the simulation designs.
  bool known_noise_scale = true;
  /// Cells tracked in coverage studies; -1 picks them from the config seed.
  Index track_asset = -1;
  Index track_coef = -1;
};

/// Standardized errors (estimate - truth) / se for one replication.
struct ReplicationRecord {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double z_delta = 0.0;
  double z_outside = 0.0;
  double z_inside = 0.0;
  double z_inside_plain = 0.0;
  double z_gamma = 0.0;
  double z_gamma_plain = 0.0;
  bool support_exact = false;
  double seconds = 0.0;
};

struct CoverageRow {
  std::string parameter;
  double level = 0.0;
  double coverage = 0.0;
  Index reps = 0;
  double se = 0.0;
};

struct HistogramBin {
  std::string parameter;
  double bin_lo = 0.0;
  double bin_hi = 0.0;
  Index count = 0;
  double ref_density = 0.0;
};

struct CoverageStudy {
  std::vector<ReplicationRecord> records;
  std::vector<CoverageRow> table;
  std::vector<HistogramBin> histograms;
  Index failures = 0;
  bool failed = false;  // failure rate above 1%

  /// Standardized errors of successful replications for one parameter.
  std::vector<double> standardized(const std::string& parameter) const;
  double coverage(const std::string& parameter, double level) const;
};

/// Parameter names used in coverage tables.
inline const std::vector<std::string> kCoverageParameters = {
    "delta_otq", "alpha_O_it", "alpha_I_it", "alpha_I_it_plain", "gamma_11", "gamma_11_plain"};

ReplicationRecord run_coverage_replication(const DgpConfig& cfg, std::uint64_t rep_seed, Index asset,
                                           Index coef, const StudyOptions& opt);

CoverageStudy run_coverage_study(const DgpConfig& cfg, int reps, const std::vector<double>& levels,
                                 const StudyOptions& opt = {});

enum class PowerMethod { Formula, Bootstrap };

struct PowerOptions {
  int threads = 1;
  int bootstrap_draws = 500;
  bool known_noise_scale = true;
};

struct PowerRow {
  double delta1 = 0.0;
  std::string method;
  double rejection_rate = 0.0;
  Index reps = 0;
  double se = 0.0;
  Index failures = 0;
};

/// Rejection rates of the outside-alpha max test, one row per (config, method).
std::vector<PowerRow> run_power_study(const std::vector<DgpConfig>& grid, int reps, double level,
                                      const std::vector<PowerMethod>& methods, const PowerOptions& opt = {});

/// Fraction of random half-samples whose KS test against N(0,1) has a
/// p-value above `alpha`.
double ks_half_pass_rate(const std::vector<double>& sample, int resamples, double alpha, std::uint64_t seed);

}  // namespace charfactor
