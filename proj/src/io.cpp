#include "charfactor/io.hpp"

#include "charfactor/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace charfactor {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows > 0 ? static_cast<Index>(j[0].size()) : 0;
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    if (static_cast<Index>(j[r].size()) != cols) throw MalformedInput("ragged matrix in JSON");
    for (Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

nlohmann::json vector_to_json(const VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

nlohmann::json model_fit_to_json(const ModelFit& fit) {
  nlohmann::json j;
  j["K"] = fit.k();
  j["debiased"] = fit.debiased;
  j["gamma"] = matrix_to_json(fit.gamma);
  j["eta"] = vector_to_json(fit.eta);
  j["sigma2"] = vector_to_json(fit.sigma2);
  j["factors_demeaned"] = matrix_to_json(fit.factors_demeaned);
  j["factors_breve"] = matrix_to_json(fit.factors_breve);
  return j;
}

ModelFit model_fit_from_json(const nlohmann::json& j) {
  ModelFit fit;
  try {
    fit.gamma = matrix_from_json(j.at("gamma"));
    fit.eta = vector_from_json(j.at("eta"));
    fit.sigma2 = vector_from_json(j.at("sigma2"));
    fit.factors_demeaned = matrix_from_json(j.at("factors_demeaned"));
    fit.factors_breve = matrix_from_json(j.at("factors_breve"));
    fit.debiased = j.at("debiased").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(std::string("model fit JSON: ") + e.what());
  }
  if (fit.gamma.cols() != j.at("K").get<Index>()) throw MalformedInput("model fit JSON: K does not match gamma");
  return fit;
}

nlohmann::json outside_fit_to_json(const OutsideAlphaFit& fit) {
  nlohmann::json j;
  j["zeta"] = vector_to_json(fit.zeta);
  j["zeta_plain"] = vector_to_json(fit.zeta_plain);
  j["rho"] = vector_to_json(fit.rho);
  nlohmann::json support = nlohmann::json::object();
  nlohmann::json xi = nlohmann::json::object();
  for (std::size_t t = 0; t < fit.support.size(); ++t) {
    if (fit.support[t].empty()) continue;
    nlohmann::json idx = nlohmann::json::array();
    nlohmann::json val = nlohmann::json::array();
    for (Index q : fit.support[t]) {
      idx.push_back(q);
      val.push_back(fit.xi(q, static_cast<Index>(t)));
    }
    support[std::to_string(t)] = std::move(idx);
    xi[std::to_string(t)] = std::move(val);
  }
  j["support"] = std::move(support);
  j["xi"] = std::move(xi);
  j["support_size"] = fit.support_size();
  return j;
}

nlohmann::json test_report_to_json(const TestReport& rep) {
  nlohmann::json j;
  j["name"] = rep.name;
  j["method"] = rep.method;
  j["statistic"] = rep.statistic;
  j["level"] = rep.level;
  j["critical_value"] = rep.critical_value;
  nlohmann::json cv = nlohmann::json::object();
  for (const auto& [a, v] : rep.critical_values) {
    char key[16];
    std::snprintf(key, sizeof key, "%g%%", a * 100.0);
    cv[key] = v;
  }
  j["critical_values"] = std::move(cv);
  j["p_value_bound"] = rep.p_value_bound;
  j["reject"] = rep.reject;
  j["counts"] = {{"N", rep.n}, {"T", rep.t}, {"L", rep.l}, {"K", rep.k}, {"m", rep.cells}};
  j["argmax"] = {rep.argmax_row, rep.argmax_col};
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput("'" + path + "': " + e.what());
  }
}

void write_panel_matrix_csv(const std::string& path, const MatrixXd& m, const std::vector<std::string>& assets,
                            const std::vector<std::string>& periods, const std::string& value_name) {
  auto out = open_out(path);
  out << "asset_id,period," << value_name << "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index t = 0; t < m.cols(); ++t) {
      out << csv_field(assets[static_cast<std::size_t>(i)]) << ',' << csv_field(periods[static_cast<std::size_t>(t)])
          << ',' << format_double(m(i, t)) << '\n';
    }
  }
}

void write_factor_csv(const std::string& path, const MatrixXd& f, const std::vector<std::string>& periods,
                      const std::string& value_name) {
  auto out = open_out(path);
  out << "factor,period," << value_name << "\n";
  for (Index k = 0; k < f.rows(); ++k) {
    for (Index t = 0; t < f.cols(); ++t) {
      out << (k + 1) << ',' << csv_field(periods[static_cast<std::size_t>(t)]) << ',' << format_double(f(k, t)) << '\n';
    }
  }
}

void write_bands_csv(const std::string& path, const ConfidenceBands& bands, const std::vector<std::string>& assets,
                     const std::vector<std::string>& periods) {
  auto out = open_out(path);
  out << "asset_id,period,estimate,lo,hi,selected\n";
  for (Index i = 0; i < bands.estimate.rows(); ++i) {
    for (Index t = 0; t < bands.estimate.cols(); ++t) {
      out << csv_field(assets[static_cast<std::size_t>(i)]) << ',' << csv_field(periods[static_cast<std::size_t>(t)])
          << ',' << format_double(bands.estimate(i, t)) << ',' << format_double(bands.lo(i, t)) << ','
          << format_double(bands.hi(i, t)) << ',' << (bands.selected(i, t) ? 1 : 0) << '\n';
    }
  }
}

void write_coverage_csv(const std::string& path, const std::vector<CoverageRow>& rows) {
  auto out = open_out(path);
  out << "parameter,level,coverage,reps,se\n";
  for (const auto& r : rows) {
    out << r.parameter << ',' << format_double(r.level) << ',' << format_double(r.coverage) << ',' << r.reps << ','
        << format_double(r.se) << '\n';
  }
}

void write_histogram_csv(const std::string& path, const std::vector<HistogramBin>& bins) {
  auto out = open_out(path);
  out << "parameter,bin_lo,bin_hi,count,ref_density\n";
  for (const auto& b : bins) {
    out << b.parameter << ',' << format_double(b.bin_lo) << ',' << format_double(b.bin_hi) << ',' << b.count << ','
        << format_double(b.ref_density) << '\n';
  }
}

void write_power_csv(const std::string& path, const std::vector<PowerRow>& rows) {
  auto out = open_out(path);
  out << "delta1,method,rejection_rate,reps,se,failures\n";
  for (const auto& r : rows) {
    out << format_double(r.delta1) << ',' << r.method << ',' << format_double(r.rejection_rate) << ',' << r.reps
        << ',' << format_double(r.se) << ',' << r.failures << '\n';
  }
}

void write_panel_csv(const std::string& path, const Panel& panel) {
  auto out = open_out(path);
  const Index first = panel.has_constant ? 1 : 0;
  out << "asset_id,period,ret";
  for (Index c = first; c < panel.l(); ++c) out << ",c" << (c - first + 1);
  out << '\n';
  for (Index i = 0; i < panel.n(); ++i) {
    for (Index t = 0; t < panel.t(); ++t) {
      out << csv_field(panel.asset_ids[static_cast<std::size_t>(i)]) << ','
          << csv_field(panel.period_labels[static_cast<std::size_t>(t)]) << ',' << format_double(panel.returns(i, t));
      for (Index c = first; c < panel.l(); ++c) out << ',' << format_double(panel.x(t)(i, c));
      out << '\n';
    }
  }
}

}  // namespace charfactor
