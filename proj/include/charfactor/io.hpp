#pragma once

#include "charfactor/factor.hpp"
#include "charfactor/inference.hpp"
#include "charfactor/outalpha.hpp"
#include "charfactor/simlab.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace charfactor {

/// %.17g, enough digits to round-trip any double.
std::string format_double(double v);

nlohmann::json matrix_to_json(const MatrixXd& m);  // row-major nested arrays
MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const VectorXd& v);
VectorXd vector_from_json(const nlohmann::json& j);

/// gamma, factors_demeaned, factors_breve, eta, sigma2, K, debiased.
nlohmann::json model_fit_to_json(const ModelFit& fit);
/// Inverse of model_fit_to_json; alpha_inside is not stored there and is
/// restored from the CSV artifact separately when needed.
ModelFit model_fit_from_json(const nlohmann::json& j);

nlohmann::json outside_fit_to_json(const OutsideAlphaFit& fit);
nlohmann::json test_report_to_json(const TestReport& rep);

void write_text(const std::string& path, const std::string& text);
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

/// Long format `asset_id,period,<value_name>`.
void write_panel_matrix_csv(const std::string& path, const MatrixXd& m, const std::vector<std::string>& assets,
                            const std::vector<std::string>& periods, const std::string& value_name);
/// Long format `factor,period,<value_name>`.
void write_factor_csv(const std::string& path, const MatrixXd& f, const std::vector<std::string>& periods,
                      const std::string& value_name);
/// `asset_id,period,estimate,lo,hi,selected`.
void write_bands_csv(const std::string& path, const ConfidenceBands& bands, const std::vector<std::string>& assets,
                     const std::vector<std::string>& periods);

void write_coverage_csv(const std::string& path, const std::vector<CoverageRow>& rows);
void write_histogram_csv(const std::string& path, const std::vector<HistogramBin>& bins);
void write_power_csv(const std::string& path, const std::vector<PowerRow>& rows);

/// Write a generated panel in the long CSV layout read by load_panel
/// (constant column omitted).
void write_panel_csv(const std::string& path, const Panel& panel);

}  // namespace charfactor
