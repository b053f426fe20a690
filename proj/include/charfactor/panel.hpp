#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace charfactor {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Balanced panel of excess returns and characteristics.
///
/// Column t of `returns` is the return realized over period t -> t+1, and
/// `characteristics[t]` is the N x L matrix observed at the start of period t.
/// Periods are stored as separate column-major matrices; the stacked
/// NT x L design is never formed.
struct Panel {
  MatrixXd returns;
  std::vector<MatrixXd> characteristics;
  std::vector<std::string> asset_ids;
  std::vector<std::string> period_labels;
  bool has_constant = false;

  Index n() const { return returns.rows(); }
  Index t() const { return returns.cols(); }
  Index l() const { return characteristics.empty() ? 0 : characteristics.front().cols(); }

  const MatrixXd& x(Index period) const { return characteristics[static_cast<std::size_t>(period)]; }
  auto r(Index period) const { return returns.col(period); }
};

enum class MissingPolicy { DropAsset, Error };

enum class TieRule {
  Ordinal,  // ties broken by ascending asset_id
  Average,  // tied observations share the mean of their ranks
};

/// Column mapping for long-format CSV input.
struct PanelSchema {
  std::string asset_column = "asset_id";
  std::string period_column = "period";
  std::string return_column = "ret";
  /// Characteristic columns in order. Empty means every remaining column.
  std::vector<std::string> characteristic_columns;
  MissingPolicy missing = MissingPolicy::DropAsset;
  /// Prepend a column of ones as characteristic 1.
  bool add_constant = true;
  /// std::get_time format for period labels; lexicographic ordering when unset.
  std::optional<std::string> period_format;
};

/// Relative eigenvalue floor used when validating X_t' X_t.
inline constexpr double kGramRelativeTolerance = 1e-10;

/// Build a panel from in-memory matrices and validate it. Asset ids and period
/// labels default to zero-padded "a00", "a01", ... and "p00", "p01", ... when not supplied.
Panel make_panel(MatrixXd returns, std::vector<MatrixXd> characteristics,
                 std::vector<std::string> asset_ids = {},
                 std::vector<std::string> period_labels = {});

/// Shape checks plus the per-period Gram eigenvalue test. Throws
/// IncompatibleDimensions or RankDeficientCharacteristics.
void validate_panel(const Panel& panel);

/// True when column 0 of every X_t is exactly one.
bool detect_constant(const std::vector<MatrixXd>& characteristics);

Panel load_panel(const std::string& path, const PanelSchema& schema);

/// Replace every non-constant characteristic by -0.5 + rank/N within each period.
Panel rank_normalize(const Panel& panel, TieRule ties = TieRule::Ordinal);

/// X_t -> X_t diag(weights) for all t.
Panel rescale_characteristics(const Panel& panel, const VectorXd& weights);

}  // namespace charfactor
