#pragma once

// File formats shared by the CLI stages:
//   pattern CSV   realization_id,point_id,dim_0,...,dim_{d-1}
//   samples CSV   realization_id,component_id,dim_0,...,dim_{d-1}
//   mixture JSON  {"dim": d, "components": [{"w", "mean", "cov"}]}
//   diagnostics   [{"test_name", "statistic", "p_value" | "distance", "params", "pass"}]

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pppbayes/decomposition_sampler.hpp"
#include "pppbayes/diagnostics.hpp"
#include "pppbayes/errors.hpp"
#include "pppbayes/mixture_fit.hpp"
#include "pppbayes/point_process.hpp"

namespace pppbayes {

using json = nlohmann::json;

// Shortest text that round-trips the double exactly.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace detail {

inline std::string csv_header(const char* second, std::size_t dim) {
  std::string h = std::string("realization_id,") + second;
  for (std::size_t a = 0; a < dim; ++a) h += ",dim_" + std::to_string(a);
  return h;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  return f;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for reading");
  return f;
}

}  // namespace detail

inline void write_patterns_csv(std::ostream& os, const std::vector<PointPattern>& realizations, std::size_t dim) {
  os << detail::csv_header("point_id", dim) << '\n';
  for (std::size_t r = 0; r < realizations.size(); ++r) {
    detail::require(realizations[r].dim() == dim, "pattern dimension mismatch");
    for (std::size_t p = 0; p < realizations[r].size(); ++p) {
      os << r << ',' << p;
      for (double v : realizations[r][p]) os << ',' << format_double(v);
      os << '\n';
    }
  }
}

// Realizations are indexed 0..max id; ids with no rows come back empty.
inline std::vector<PointPattern> read_patterns_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("pattern CSV is empty");
  const auto header = detail::split_csv(line);
  if (header.size() < 3 || header[0] != "realization_id" || header[1] != "point_id") {
    throw ParseError("pattern CSV header must start with realization_id,point_id");
  }
  const std::size_t dim = header.size() - 2;
  std::vector<PointPattern> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != header.size()) throw ParseError("line " + std::to_string(lineno) + ": wrong column count");
    const auto r = std::stoull(cells[0]);
    while (out.size() <= r) out.emplace_back(dim);
    Vector x(static_cast<Eigen::Index>(dim));
    for (std::size_t a = 0; a < dim; ++a) x[static_cast<Eigen::Index>(a)] = std::stod(cells[a + 2]);
    out[r].push_back(std::move(x));
  }
  return out;
}

inline void write_samples_csv(std::ostream& os, const LabeledPattern& labeled, std::size_t realization_id = 0) {
  detail::require(labeled.labels.size() == labeled.pattern.size(), "one label per point required");
  os << detail::csv_header("component_id", labeled.pattern.dim()) << '\n';
  for (std::size_t p = 0; p < labeled.size(); ++p) {
    os << realization_id << ',' << labeled.labels[p];
    for (double v : labeled.pattern[p]) os << ',' << format_double(v);
    os << '\n';
  }
}

inline void write_samples(const LabeledPattern& labeled, const std::string& path) {
  auto f = detail::open_out(path);
  write_samples_csv(f, labeled);
  if (!f) throw Error("write failed for '" + path + "'");
}

inline LabeledPattern read_samples_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("samples CSV is empty");
  const auto header = detail::split_csv(line);
  if (header.size() < 3 || header[0] != "realization_id" || header[1] != "component_id") {
    throw ParseError("samples CSV header must start with realization_id,component_id");
  }
  const std::size_t dim = header.size() - 2;
  LabeledPattern out{PointPattern(dim), {}};
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != header.size()) throw ParseError("line " + std::to_string(lineno) + ": wrong column count");
    Vector x(static_cast<Eigen::Index>(dim));
    for (std::size_t a = 0; a < dim; ++a) x[static_cast<Eigen::Index>(a)] = std::stod(cells[a + 2]);
    out.pattern.push_back(std::move(x));
    out.labels.push_back(std::stoull(cells[1]));
  }
  return out;
}

inline LabeledPattern read_samples(const std::string& path) {
  auto f = detail::open_in(path);
  return read_samples_csv(f);
}

inline json to_json(const Vector& v) { return json(to_std(v)); }

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Vector vector_from_json(const json& j) { return to_vector(j.get<std::vector<double>>()); }

inline Matrix matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  detail::require<ParseError>(!rows.empty(), "empty matrix");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    detail::require<ParseError>(rows[r].size() == rows[0].size(), "ragged matrix");
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

inline json mixture_to_json(const GaussianMixture& mixture) {
  json comps = json::array();
  for (const auto& c : mixture.components()) {
    comps.push_back({{"w", c.weight}, {"mean", to_json(c.mean)}, {"cov", to_json(c.cov)}});
  }
  return {{"dim", mixture.dim()}, {"components", std::move(comps)}};
}

inline GaussianMixture mixture_from_json(const json& j) {
  try {
    const auto dim = j.at("dim").get<std::size_t>();
    std::vector<GaussianComponent> comps;
    for (const auto& c : j.at("components")) {
      comps.push_back({c.at("w").get<double>(), vector_from_json(c.at("mean")), matrix_from_json(c.at("cov"))});
      detail::require<ParseError>(static_cast<std::size_t>(comps.back().mean.size()) == dim,
                                  "component mean length does not match dim");
    }
    return GaussianMixture(std::move(comps));
  } catch (const json::exception& e) {
    throw ParseError(std::string("mixture JSON: ") + e.what());
  }
}

inline void write_json(const json& j, const std::string& path) {
  auto f = detail::open_out(path);
  f << j.dump(2) << '\n';
  if (!f) throw Error("write failed for '" + path + "'");
}

inline json read_json(const std::string& path) {
  auto f = detail::open_in(path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

inline json diagnostic_to_json(const DiagnosticRecord& d) {
  json j = {{"test_name", d.test_name}, {"statistic", d.statistic}, {"params", d.params}, {"pass", d.pass}};
  if (d.p_value) j["p_value"] = *d.p_value;
  if (d.distance) j["distance"] = *d.distance;
  return j;
}

inline json diagnostics_to_json(const std::vector<DiagnosticRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) arr.push_back(diagnostic_to_json(r));
  return arr;
}

inline json moments_to_json(const MomentReport& m) {
  json j = {{"mean", to_json(m.mean)},
            {"covariance", to_json(m.covariance)},
            {"ess", m.ess},
            {"std_error", to_json(m.std_error)},
            {"samples", m.samples}};
  j["warning"] = m.warning ? json(*m.warning) : json(nullptr);
  return j;
}

}  // namespace pppbayes
