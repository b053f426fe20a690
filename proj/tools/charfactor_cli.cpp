#include "charfactor/errors.hpp"
#include "charfactor/factor.hpp"
#include "charfactor/inference.hpp"
#include "charfactor/io.hpp"
#include "charfactor/panel.hpp"
#include "charfactor/pipeline.hpp"
#include "charfactor/simlab.hpp"
#include "charfactor/bootstrap.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace cf = charfactor;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitStudyFailure = 4;

struct RunConfig {
  std::string input;
  std::string config;
  std::string k = "auto";
  int k_max = 0;
  std::string omega = "simple";
  std::string rho_preset = "empirical";
  std::optional<double> rho_c;
  std::optional<double> rho_kappa;
  std::vector<double> levels = {0.10, 0.05, 0.01};
  int bootstrap_draws = 0;
  std::uint64_t seed = 20240101;
  int threads = 1;
  std::string out = ".";
  bool rank_normalize = false;
  bool rethreshold = false;
  cf::PanelSchema schema;
  json study;
};

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

// Config file values fill whatever the command line left at its default.
void apply_config_file(RunConfig& rc, const CLI::App& sub) {
  if (rc.config.empty()) return;
  const json j = cf::read_json(rc.config);
  auto unset = [&](const char* flag) { return sub.count(flag) == 0; };
  if (j.contains("k") && unset("--k")) rc.k = j["k"].is_string() ? j["k"].get<std::string>() : std::to_string(j["k"].get<int>());
  if (unset("--k-max")) take(j, "k_max", rc.k_max);
  if (unset("--omega")) take(j, "omega", rc.omega);
  if (unset("--rho-preset")) take(j, "rho_preset", rc.rho_preset);
  if (j.contains("rho_c") && unset("--rho-c")) rc.rho_c = j["rho_c"].get<double>();
  if (j.contains("rho_kappa") && unset("--rho-kappa")) rc.rho_kappa = j["rho_kappa"].get<double>();
  if (unset("--levels")) take(j, "levels", rc.levels);
  if (unset("--bootstrap-draws")) take(j, "bootstrap_draws", rc.bootstrap_draws);
  if (unset("--seed")) take(j, "seed", rc.seed);
  if (unset("--threads")) take(j, "threads", rc.threads);
  if (unset("--input")) take(j, "input", rc.input);
  take(j, "rank_normalize", rc.rank_normalize);
  take(j, "rethreshold", rc.rethreshold);
  if (j.contains("schema")) {
    const json& s = j["schema"];
    take(s, "asset_column", rc.schema.asset_column);
    take(s, "period_column", rc.schema.period_column);
    take(s, "return_column", rc.schema.return_column);
    take(s, "characteristic_columns", rc.schema.characteristic_columns);
    take(s, "add_constant", rc.schema.add_constant);
    if (s.contains("missing")) {
      const auto m = s["missing"].get<std::string>();
      if (m == "error") rc.schema.missing = cf::MissingPolicy::Error;
      else if (m == "drop-asset") rc.schema.missing = cf::MissingPolicy::DropAsset;
      else throw cf::MalformedInput("schema.missing must be 'drop-asset' or 'error'");
    }
    if (s.contains("period_format")) rc.schema.period_format = s["period_format"].get<std::string>();
  }
  if (j.contains("study")) rc.study = j["study"];
}

cf::FitConfig fit_config(const RunConfig& rc) {
  cf::FitConfig fc;
  if (rc.k != "auto") {
    try {
      fc.k = std::stoi(rc.k);
    } catch (const std::exception&) {
      throw cf::InvalidArgument("--k must be an integer or 'auto'");
    }
  } else if (rc.k_max != 0 && rc.k_max < 2) {
    throw cf::InvalidArgument("automatic K needs k_max >= 2");
  }
  fc.k_max = rc.k_max;
  fc.omega.variant = rc.omega == "structured" ? cf::OmegaVariant::Structured : cf::OmegaVariant::Simple;
  fc.threshold = rc.rho_preset == "simulation" ? cf::ThresholdConfig::simulation() : cf::ThresholdConfig::empirical();
  if (rc.rho_c) fc.threshold.c = *rc.rho_c;
  if (rc.rho_kappa) fc.threshold.kappa = *rc.rho_kappa;
  if (!(fc.threshold.c > 0.0) || !(fc.threshold.kappa > 0.0)) {
    throw cf::InvalidArgument("threshold constants c and kappa must be positive");
  }
  fc.rethreshold = rc.rethreshold;
  return fc;
}

cf::Panel load(const RunConfig& rc) {
  if (rc.input.empty()) throw cf::DataError("--input is required");
  cf::Panel panel = cf::load_panel(rc.input, rc.schema);
  if (rc.rank_normalize) panel = cf::rank_normalize(panel);
  spdlog::info("panel: N={} T={} L={}", panel.n(), panel.t(), panel.l());
  return panel;
}

std::string out_path(const RunConfig& rc, const std::string& name) { return (fs::path(rc.out) / name).string(); }

void write_fit_artifacts(const RunConfig& rc, const cf::Panel& panel, const cf::FullFit& full) {
  fs::create_directories(rc.out);
  json mf = cf::model_fit_to_json(full.fit);
  mf["N"] = panel.n();
  mf["T"] = panel.t();
  mf["L"] = panel.l();
  mf["plain_gamma"] = cf::matrix_to_json(full.plain.gamma);
  cf::write_json(out_path(rc, "model_fit.json"), mf);
  cf::write_json(out_path(rc, "outside_fit.json"), cf::outside_fit_to_json(full.outside));
  cf::write_panel_matrix_csv(out_path(rc, "alphas_inside.csv"), full.fit.alpha_inside, panel.asset_ids,
                             panel.period_labels, "alpha_inside");
  cf::write_panel_matrix_csv(out_path(rc, "alphas_outside.csv"), full.outside.alpha_outside, panel.asset_ids,
                             panel.period_labels, "alpha_outside");
  cf::write_factor_csv(out_path(rc, "factors.csv"), full.fit.factors_breve, panel.period_labels, "factor");
  cf::write_text(out_path(rc, "r2.txt"), cf::format_double(full.r2) + "\n");
}

int cmd_fit(const RunConfig& rc) {
  const cf::Panel panel = load(rc);
  const cf::FullFit full = cf::fit_model(panel, fit_config(rc));
  write_fit_artifacts(rc, panel, full);
  std::cerr << "fit: K=" << full.k << " support=" << full.outside.support_size() << " R2=" << full.r2 << "\n";
  return 0;
}

json report_json(cf::TestReport rep, const cf::Panel& panel, int k, const std::string& name) {
  rep.name = name;
  rep.n = panel.n();
  rep.t = panel.t();
  rep.l = panel.l();
  rep.k = k;
  return cf::test_report_to_json(rep);
}

int cmd_test(const RunConfig& rc) {
  const cf::Panel panel = load(rc);
  const cf::FullFit full = cf::fit_model(panel, fit_config(rc));
  write_fit_artifacts(rc, panel, full);
  const cf::VarianceEstimates var = cf::estimate_variances(panel, full);
  const double level = 0.05;

  json tests = json::object();
  auto t1 = cf::max_stat_test(full.outside.delta_raw, var.v_delta, false, level);
  auto t2 = cf::max_stat_test(full.outside.delta_raw, var.v_delta, true, level);
  auto to = cf::max_stat_test(full.outside.alpha_outside, var.v_outside, false, level);
  auto ti = cf::max_stat_test(full.fit.alpha_inside, var.v_inside, false, level);
  json j1 = report_json(t1, panel, full.k, "T-stat_1");
  json j2 = report_json(t2, panel, full.k, "T-stat_2");
  json jo = report_json(to, panel, full.k, "T-stat_O");
  json ji = report_json(ti, panel, full.k, "T-stat_I");

  if (rc.bootstrap_draws > 0) {
    const cf::DeltaScores s1(full.bases, full.resid, full.fit.sigma2, false);
    const cf::DeltaScores s2(full.bases, full.resid, full.fit.sigma2, true);
    const cf::OutsideAlphaScores so(full.bases, full.resid, full.outside.support, var.v_outside);
    auto boot = [&](const cf::MultiplierScores& s, json& j) {
      json cv = json::object();
      for (double a : rc.levels) {
        cv[cf::format_double(a)] = cf::bootstrap_critical_value(s, a, rc.bootstrap_draws, rc.seed, rc.threads);
      }
      j["bootstrap_critical_values"] = cv;
    };
    boot(s1, j1);
    boot(s2, j2);
    boot(so, jo);
  }
  tests["T-stat_1"] = j1;
  tests["T-stat_2"] = j2;
  tests["T-stat_O"] = jo;
  tests["T-stat_I"] = ji;

  // Wald tests over the non-constant characteristics with Bonferroni.
  const int first = panel.has_constant ? 1 : 0;
  const int n_tests = static_cast<int>(panel.l()) - first;
  json wald = json::array();
  std::ostringstream csv;
  csv << "characteristic,statistic,cv_10,cv_5,cv_1,p_value_bound,reject_5,reject_1\n";
  for (int l = first; l < panel.l(); ++l) {
    auto w = cf::wald_gamma_test(full.fit, var, l, level, n_tests);
    wald.push_back(cf::test_report_to_json(w));
    csv << (l + 1) << ',' << cf::format_double(w.statistic);
    for (const auto& [a, v] : w.critical_values) csv << ',' << cf::format_double(v);
    csv << ',' << cf::format_double(w.p_value_bound) << ',' << (w.statistic > w.critical_values[1].second ? 1 : 0)
        << ',' << (w.statistic > w.critical_values[2].second ? 1 : 0) << '\n';
  }
  tests["W"] = wald;
  tests["K"] = full.k;
  tests["levels"] = rc.levels;
  cf::write_json(out_path(rc, "tests.json"), tests);
  cf::write_text(out_path(rc, "gamma_wald.csv"), csv.str());

  const double band_level = rc.levels.size() > 1 ? rc.levels[1] : rc.levels.front();
  cf::write_bands_csv(out_path(rc, "bands_alpha_outside.csv"),
                      cf::fdr_confidence_bands(full.outside.alpha_outside, var.v_outside, band_level),
                      panel.asset_ids, panel.period_labels);
  cf::write_bands_csv(out_path(rc, "bands_alpha_inside.csv"),
                      cf::fdr_confidence_bands(full.fit.alpha_inside, var.v_inside, band_level), panel.asset_ids,
                      panel.period_labels);
  std::cerr << "T-stat_1=" << t1.statistic << " (cv " << t1.critical_value << ", m=" << t1.cells << ")"
            << " T-stat_O=" << to.statistic << " T-stat_I=" << ti.statistic << "\n";
  return 0;
}

int cmd_select_rank(const RunConfig& rc) {
  const cf::Panel panel = load(rc);
  const auto tr = cf::transform_returns(panel);
  const int k_max = rc.k_max > 0 ? rc.k_max : cf::default_k_max(panel.l(), panel.t());
  const Eigen::VectorXd sv = cf::transformed_spectrum(tr);
  const int k = cf::select_rank(sv, k_max);
  json j;
  j["k"] = k;
  j["k_max"] = k_max;
  j["singular_values"] = cf::vector_to_json(sv);
  fs::create_directories(rc.out);
  cf::write_json(out_path(rc, "rank.json"), j);
  std::cout << k << "\n";
  return 0;
}

cf::DgpConfig study_dgp(const json& s, double delta1) {
  const std::string preset = s.value("preset", "b1");
  const auto seed = s.value("design_seed", std::uint64_t{7});
  if (preset == "b2") return cf::preset_b2(s.value("n", 500), s.value("t", 200), delta1, seed);
  if (preset != "b1") throw cf::MalformedInput("study.preset must be 'b1' or 'b2'");
  return cf::preset_b1(s.value("n", 300), s.value("t", 120), s.value("l", 10), s.value("k", 2), seed);
}

int cmd_simulate(const RunConfig& rc) {
  if (rc.study.is_null()) throw cf::MalformedInput("simulate needs --config with a 'study' object");
  const json& s = rc.study;
  const std::string kind = s.value("kind", "coverage");
  const int reps = s.value("reps", 100);
  fs::create_directories(rc.out);
  const auto start = std::chrono::steady_clock::now();
  json summary;
  summary["kind"] = kind;
  summary["reps"] = reps;
  bool failed = false;

  if (kind == "coverage") {
    cf::DgpConfig cfg = study_dgp(s, 0.0);
    cfg.seed = rc.seed;
    cf::StudyOptions opt;
    opt.threads = rc.threads;
    const std::vector<double> levels = s.value("levels", std::vector<double>{0.90, 0.95, 0.99});
    const auto study = cf::run_coverage_study(cfg, reps, levels, opt);
    cf::write_coverage_csv(out_path(rc, "coverage.csv"), study.table);
    cf::write_histogram_csv(out_path(rc, "histograms.csv"), study.histograms);
    summary["failures"] = study.failures;
    failed = study.failed;
  } else if (kind == "power") {
    const std::vector<double> grid = s.value("delta_grid", std::vector<double>{0.0, 0.02, 0.05});
    std::vector<cf::DgpConfig> cfgs;
    for (double d : grid) {
      cf::DgpConfig c = study_dgp(s, d);
      c.seed = rc.seed;
      cfgs.push_back(c);
    }
    std::vector<cf::PowerMethod> methods;
    for (const auto& m : s.value("methods", std::vector<std::string>{"formula"})) {
      if (m == "formula") methods.push_back(cf::PowerMethod::Formula);
      else if (m == "bootstrap") methods.push_back(cf::PowerMethod::Bootstrap);
      else throw cf::MalformedInput("unknown power method '" + m + "'");
    }
    cf::PowerOptions opt;
    opt.threads = rc.threads;
    if (rc.bootstrap_draws > 0) opt.bootstrap_draws = rc.bootstrap_draws;
    const auto rows = cf::run_power_study(cfgs, reps, s.value("level", 0.01), methods, opt);
    cf::write_power_csv(out_path(rc, "power.csv"), rows);
    cf::Index failures = 0;
    for (const auto& r : rows) failures += r.failures;
    summary["failures"] = failures;
    failed = static_cast<double>(failures) > 0.01 * static_cast<double>(reps * rows.size());
  } else if (kind == "panel") {
    cf::DgpConfig cfg = study_dgp(s, s.value("delta1", 0.0));
    cfg.seed = rc.seed;
    const auto gen = cf::generate_panel(cfg);
    cf::write_panel_csv(out_path(rc, "panel.csv"), gen.panel);
    summary["failures"] = 0;
  } else {
    throw cf::MalformedInput("study.kind must be coverage, power or panel");
  }
  summary["failed"] = failed;
  summary["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  cf::write_json(out_path(rc, "summary.json"), summary);
  if (failed) {
    std::cerr << "study failed: replication failure rate above 1%\n";
    return kExitStudyFailure;
  }
  return 0;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("charfactor");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("CHARFACTOR_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Conditional characteristic factor models: fit, test, simulate"};
  app.require_subcommand(1);
  RunConfig rc;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--input", rc.input, "long-format panel CSV");
    sub->add_option("--config", rc.config, "JSON run configuration");
    sub->add_option("--k", rc.k, "number of factors or 'auto'");
    sub->add_option("--k-max", rc.k_max, "largest K considered by automatic selection");
    sub->add_option("--omega", rc.omega, "basis generator")->check(CLI::IsMember({"simple", "structured"}));
    sub->add_option("--rho-preset", rc.rho_preset, "threshold preset")
        ->check(CLI::IsMember({"empirical", "simulation"}));
    sub->add_option("--rho-c", rc.rho_c, "threshold constant c");
    sub->add_option("--rho-kappa", rc.rho_kappa, "threshold exponent kappa");
    sub->add_option("--levels", rc.levels, "test levels")->delimiter(',');
    sub->add_option("--bootstrap-draws", rc.bootstrap_draws, "multiplier bootstrap draws (0 disables)");
    sub->add_option("--seed", rc.seed, "random seed");
    sub->add_option("--threads", rc.threads, "worker threads");
    sub->add_option("--out", rc.out, "output directory");
    sub->add_flag("--rank-normalize", rc.rank_normalize, "rank-normalize characteristics first");
  };
  auto* fit = app.add_subcommand("fit", "estimate the model and write fit artifacts");
  auto* test = app.add_subcommand("test", "fit and run the alpha and loading tests");
  auto* sim = app.add_subcommand("simulate", "run a simulation study");
  auto* rank = app.add_subcommand("select-rank", "eigenvalue-ratio choice of K");
  for (auto* sub : {fit, test, sim, rank}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto* sub : {fit, test, sim, rank}) {
      if (sub->parsed()) apply_config_file(rc, *sub);
    }
    if (fit->parsed()) return cmd_fit(rc);
    if (test->parsed()) return cmd_test(rc);
    if (sim->parsed()) return cmd_simulate(rc);
    if (rank->parsed()) return cmd_select_rank(rc);
  } catch (const cf::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const cf::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
