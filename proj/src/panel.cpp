#include "charfactor/panel.hpp"

#include "charfactor/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace charfactor {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty() || s == "NA" || s == "NaN" || s == "nan") return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) {
    throw MalformedInput("cannot parse '" + s + "' as a number");
  }
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

std::time_t parse_period(const std::string& label, const std::string& format) {
  std::tm tm{};
  std::istringstream in(label);
  in >> std::get_time(&tm, format.c_str());
  if (in.fail()) {
    throw MalformedInput("period '" + label + "' does not match format '" + format + "'");
  }
  return timegm(&tm);
}

struct Row {
  std::optional<double> ret;
  std::vector<std::optional<double>> chars;
};

}  // namespace

bool detect_constant(const std::vector<MatrixXd>& characteristics) {
  if (characteristics.empty() || characteristics.front().cols() == 0) return false;
  return std::all_of(characteristics.begin(), characteristics.end(),
                     [](const MatrixXd& x) { return (x.col(0).array() == 1.0).all(); });
}

void validate_panel(const Panel& panel) {
  const Index n = panel.n();
  const Index t = panel.t();
  if (t < 2) throw IncompatibleDimensions("panel needs at least 2 periods, got " + std::to_string(t));
  if (static_cast<Index>(panel.characteristics.size()) != t) {
    throw IncompatibleDimensions("expected one characteristic matrix per period");
  }
  const Index l = panel.l();
  if (l < 1 || n <= l) {
    throw IncompatibleDimensions("need N > L >= 1, got N=" + std::to_string(n) +
                                 ", L=" + std::to_string(l));
  }
  if (static_cast<Index>(panel.asset_ids.size()) != n ||
      static_cast<Index>(panel.period_labels.size()) != t) {
    throw IncompatibleDimensions("asset id / period label counts do not match the panel");
  }
  for (Index p = 0; p < t; ++p) {
    const MatrixXd& x = panel.x(p);
    if (x.rows() != n || x.cols() != l) {
      throw IncompatibleDimensions("characteristic matrix for period " + std::to_string(p) +
                                   " has the wrong shape");
    }
    if (!x.allFinite()) throw RankDeficientCharacteristics(static_cast<int>(p), panel.period_labels[p]);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(x.transpose() * x, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues()(0);
    const double hi = eig.eigenvalues()(l - 1);
    if (!(hi > 0.0) || lo <= kGramRelativeTolerance * hi) {
      throw RankDeficientCharacteristics(static_cast<int>(p), panel.period_labels[p]);
    }
  }
  if (!panel.returns.allFinite()) throw MalformedInput("returns contain non-finite values");
}

Panel make_panel(MatrixXd returns, std::vector<MatrixXd> characteristics,
                 std::vector<std::string> asset_ids, std::vector<std::string> period_labels) {
  Panel panel;
  panel.returns = std::move(returns);
  panel.characteristics = std::move(characteristics);
  // Zero-padded so lexicographic order matches index order after a CSV round trip.
  auto padded = [](const char* prefix, Index i, Index count) {
    std::string digits = std::to_string(i);
    const std::size_t width = std::to_string(std::max<Index>(count - 1, 0)).size();
    return prefix + std::string(width - digits.size(), '0') + digits;
  };
  if (asset_ids.empty()) {
    for (Index i = 0; i < panel.returns.rows(); ++i) asset_ids.push_back(padded("a", i, panel.returns.rows()));
  }
  if (period_labels.empty()) {
    for (Index p = 0; p < panel.returns.cols(); ++p) period_labels.push_back(padded("p", p, panel.returns.cols()));
  }
  panel.asset_ids = std::move(asset_ids);
  panel.period_labels = std::move(period_labels);
  panel.has_constant = detect_constant(panel.characteristics);
  validate_panel(panel);
  return panel;
}

Panel load_panel(const std::string& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw MalformedInput("'" + path + "' is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  auto column_index = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw MissingColumn(name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t asset_col = column_index(schema.asset_column);
  const std::size_t period_col = column_index(schema.period_column);
  const std::size_t ret_col = column_index(schema.return_column);

  std::vector<std::size_t> char_cols;
  if (schema.characteristic_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != asset_col && c != period_col && c != ret_col) char_cols.push_back(c);
    }
  } else {
    for (const auto& name : schema.characteristic_columns) char_cols.push_back(column_index(name));
  }
  if (char_cols.empty() && !schema.add_constant) throw MissingColumn("<characteristics>");

  std::map<std::string, std::map<std::string, Row>> rows;  // asset -> period -> row
  std::set<std::string> periods;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw MalformedInput("line " + std::to_string(line_no) + " has " +
                           std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(header.size()));
    }
    const std::string asset = trim(fields[asset_col]);
    const std::string period = trim(fields[period_col]);
    Row row;
    row.ret = parse_number(fields[ret_col]);
    for (auto c : char_cols) row.chars.push_back(parse_number(fields[c]));
    auto [it, inserted] = rows[asset].emplace(period, std::move(row));
    if (!inserted) {
      throw MalformedInput("duplicate row for asset '" + asset + "' period '" + period + "'");
    }
    periods.insert(period);
  }
  if (rows.empty()) throw MalformedInput("'" + path + "' has no data rows");

  std::vector<std::string> period_labels(periods.begin(), periods.end());
  if (schema.period_format) {
    std::vector<std::pair<std::time_t, std::string>> keyed;
    for (const auto& p : period_labels) keyed.emplace_back(parse_period(p, *schema.period_format), p);
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < keyed.size(); ++i) period_labels[i] = keyed[i].second;
  }

  std::vector<std::string> assets;
  for (const auto& [asset, by_period] : rows) {
    bool complete = by_period.size() == period_labels.size();
    if (complete) {
      for (const auto& [p, row] : by_period) {
        if (!row.ret ||
            std::any_of(row.chars.begin(), row.chars.end(), [](const auto& v) { return !v; })) {
          complete = false;
          break;
        }
      }
    }
    if (complete) {
      assets.push_back(asset);
    } else if (schema.missing == MissingPolicy::Error) {
      throw UnbalancedPanel("asset '" + asset + "' is not observed in every period");
    }
  }
  if (assets.empty()) throw UnbalancedPanel("no asset is observed in every period");

  const Index n = static_cast<Index>(assets.size());
  const Index t = static_cast<Index>(period_labels.size());
  const Index offset = schema.add_constant ? 1 : 0;
  const Index l = static_cast<Index>(char_cols.size()) + offset;

  MatrixXd returns(n, t);
  std::vector<MatrixXd> xs(static_cast<std::size_t>(t), MatrixXd(n, l));
  for (Index i = 0; i < n; ++i) {
    const auto& by_period = rows.at(assets[static_cast<std::size_t>(i)]);
    for (Index p = 0; p < t; ++p) {
      const Row& row = by_period.at(period_labels[static_cast<std::size_t>(p)]);
      returns(i, p) = *row.ret;
      MatrixXd& x = xs[static_cast<std::size_t>(p)];
      if (schema.add_constant) x(i, 0) = 1.0;
      for (Index c = 0; c < static_cast<Index>(row.chars.size()); ++c) x(i, c + offset) = *row.chars[c];
    }
  }
  return make_panel(std::move(returns), std::move(xs), std::move(assets), std::move(period_labels));
}

Panel rank_normalize(const Panel& panel, TieRule ties) {
  Panel out = panel;
  const Index n = panel.n();
  const Index first = panel.has_constant ? 1 : 0;
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index p = 0; p < panel.t(); ++p) {
    MatrixXd& x = out.characteristics[static_cast<std::size_t>(p)];
    for (Index c = first; c < panel.l(); ++c) {
      const auto col = panel.x(p).col(c);
      std::iota(order.begin(), order.end(), Index{0});
      std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (col(a) != col(b)) return col(a) < col(b);
        const auto& ida = panel.asset_ids[static_cast<std::size_t>(a)];
        const auto& idb = panel.asset_ids[static_cast<std::size_t>(b)];
        return ida != idb ? ida < idb : a < b;
      });
      std::size_t pos = 0;
      while (pos < order.size()) {
        std::size_t end = pos + 1;
        if (ties == TieRule::Average) {
          while (end < order.size() && col(order[end]) == col(order[pos])) ++end;
        }
        // ranks pos+1 .. end share their mean under the average rule
        const double rank = 0.5 * static_cast<double>(pos + 1 + end);
        for (std::size_t k = pos; k < end; ++k) {
          x(order[k], c) = -0.5 + rank / static_cast<double>(n);
        }
        pos = end;
      }
    }
  }
  validate_panel(out);
  return out;
}

Panel rescale_characteristics(const Panel& panel, const VectorXd& weights) {
  if (weights.size() != panel.l()) {
    throw IncompatibleDimensions("expected " + std::to_string(panel.l()) + " weights");
  }
  for (Index c = 0; c < weights.size(); ++c) {
    if (!(weights(c) > 0.0)) {
      throw NonPositiveWeight("weight " + std::to_string(c) + " is not positive");
    }
  }
  Panel out = panel;
  for (auto& x : out.characteristics) x = x * weights.asDiagonal();
  out.has_constant = detect_constant(out.characteristics);
  return out;
}

}  // namespace charfactor
