#pragma once

// Experiment configuration: a flat text file of `dotted.key = value` lines.
// Values are numbers, bare words, or bracketed lists `[a, b, c]`; `#` starts
// a comment. Unknown or repeated keys are rejected with the offending line.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pppbayes/errors.hpp"
#include "pppbayes/io.hpp"

namespace pppbayes {

struct ExperimentConfig {
  std::string model;  // unimodal | bimodal | heat2d | kl

  std::string prior_type;  // gaussian | uniform
  std::vector<double> prior_mean;
  std::vector<double> prior_cov_diag;
  std::vector<double> prior_lower;
  std::vector<double> prior_upper;

  std::string observation_mode;  // explicit | synthesize
  std::vector<double> observation;
  std::vector<double> true_theta;
  std::optional<double> noise_var;       // Sigma = noise_var * I
  std::optional<double> noise_relative;  // heat2d: sd = noise_relative * mean(u - T) at true_theta

  std::size_t em_K = 1;
  std::size_t em_M = 10000;
  std::size_t em_max_iter = 500;
  double em_tol = 1e-8;
  std::string em_weighting = "likelihood";  // likelihood | literal

  double gamma = 1000.0;
  std::string method = "direct";
  double box_sigma = 6.0;

  std::size_t oracle_M = 100000;
  std::size_t diagnostics_grid = 0;  // cells per axis for TV/Hellinger; 0 disables

  std::size_t heat_grid = 65;
  std::size_t kl_N = 3;
  double kl_s = 1.0;
  std::size_t kl_nodes = 101;

  std::uint64_t seed_prior = 1;
  std::uint64_t seed_em = 2;
  std::uint64_t seed_sampler = 3;
  std::uint64_t seed_noise = 4;
  std::uint64_t seed_oracle = 5;

  std::string output_dir = "out";

  std::size_t dim() const {
    if (model == "kl") return kl_N;
    return 2;
  }

  // Reseeds every stage from one base seed.
  void set_base_seed(std::uint64_t s) {
    seed_prior = s;
    seed_em = s + 1;
    seed_sampler = s + 2;
    seed_noise = s + 3;
    seed_oracle = s + 4;
  }

  bool operator==(const ExperimentConfig&) const = default;
};

inline const std::vector<std::string>& known_models() {
  static const std::vector<std::string> models = {"unimodal", "bimodal", "heat2d", "kl"};
  return models;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct RawValue {
  std::string text;
  std::size_t line;
};

class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, RawValue> values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string where(const std::string& key) const {
    return "line " + std::to_string(values_.at(key).line) + ", key '" + key + "'";
  }

  std::string str(const std::string& key) const { return values_.at(key).text; }

  double number(const std::string& key) const {
    const auto& t = values_.at(key).text;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || trim(t.substr(used)) != "" || !std::isfinite(v)) {
      throw ParseError(where(key) + ": expected a number, got '" + t + "'");
    }
    return v;
  }

  std::uint64_t integer(const std::string& key) const {
    const double v = number(key);
    if (v < 0 || v != std::floor(v) || v > 9.007199254740992e15) {
      throw ParseError(where(key) + ": expected a nonnegative integer, got '" + str(key) + "'");
    }
    const auto& t = values_.at(key).text;
    // Keep full 64-bit precision for plain digit strings (seeds).
    if (t.find_first_not_of("0123456789") == std::string::npos) return std::stoull(t);
    return static_cast<std::uint64_t>(v);
  }

  std::vector<double> list(const std::string& key) const {
    auto t = trim(values_.at(key).text);
    if (t.size() < 2 || t.front() != '[' || t.back() != ']') {
      throw ParseError(where(key) + ": expected a list like [1, 2], got '" + t + "'");
    }
    t = trim(t.substr(1, t.size() - 2));
    std::vector<double> out;
    if (t.empty()) return out;
    std::stringstream ss(t);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell = trim(cell);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cell.size() || !std::isfinite(v)) {
        throw ParseError(where(key) + ": bad list element '" + cell + "'");
      }
      out.push_back(v);
    }
    return out;
  }

 private:
  std::map<std::string, RawValue> values_;
};

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "model",           "prior.type",       "prior.mean",      "prior.cov_diag",   "prior.lower",
      "prior.upper",     "observation",      "observation.mode", "observation.values", "observation.true_theta",
      "noise.var",       "noise.relative",   "em.K",            "em.M",             "em.max_iter",
      "em.tol",          "em.weighting",     "sampler.gamma",   "sampler.method",   "sampler.box_sigma",
      "oracle.M",        "diagnostics.grid", "heat.grid",       "kl.N",             "kl.s",
      "kl.n_nodes",      "seeds.prior",      "seeds.em",        "seeds.sampler",    "seeds.noise",
      "seeds.oracle",    "output.dir"};
  return keys;
}

inline std::vector<double> kl_prior_variances(std::size_t n, double s) {
  std::vector<double> v;
  for (std::size_t k = 1; k <= n; ++k) v.push_back(std::pow(std::pow(static_cast<double>(k) * std::numbers::pi, 2), -s));
  return v;
}

// Defaults that depend only on the model name (and KL truncation settings).
inline void apply_model_defaults(ExperimentConfig& c) {
  if (c.model == "unimodal") {
    c.prior_type = "gaussian";
    c.prior_mean = {0.0, 0.0};
    c.prior_cov_diag = {1.0, 1.0};
    c.observation_mode = "explicit";
    c.observation = {-0.0173, -0.573};
    c.noise_var = 0.01;
    c.em_K = 3;
    c.diagnostics_grid = 300;
  } else if (c.model == "bimodal") {
    c.prior_type = "gaussian";
    c.prior_mean = {0.0, 0.0};
    c.prior_cov_diag = {1.0, 1.0};
    c.observation_mode = "explicit";
    c.observation = {4.2297};
    c.noise_var = 1.0;
    c.em_K = 2;
    c.diagnostics_grid = 300;
  } else if (c.model == "heat2d") {
    c.prior_type = "uniform";
    c.prior_lower = {-1.0, -1.0};
    c.prior_upper = {1.0, 1.0};
    c.observation_mode = "synthesize";
    c.true_theta = {std::tan(1.0 / 3.0), std::tan(-1.0 / 3.0)};
    c.noise_relative = 0.01;
    c.em_K = 2;
    c.oracle_M = 10000;
    c.diagnostics_grid = 0;
  } else if (c.model == "kl") {
    c.prior_type = "gaussian";
    c.prior_mean.assign(c.kl_N, 0.0);
    c.prior_cov_diag = kl_prior_variances(c.kl_N, c.kl_s);
    c.observation_mode = "synthesize";
    c.true_theta = {0.1, 0.4, -0.4};
    c.true_theta.resize(c.kl_N, 0.0);
    c.noise_var = 1e-4;
    c.em_K = 3;
    // The truth sits 2.5 and 3.8 prior sd out on theta_2, theta_3, so only a
    // sliver of prior draws carries weight: 1e4 draws leave ESS near 1.
    c.em_M = 1000000;
    c.oracle_M = 4000000;
    c.diagnostics_grid = 0;
  }
}

}  // namespace detail

inline void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw ParseError(m); };
  const std::size_t d = c.dim();
  if (c.prior_type == "gaussian") {
    if (c.prior_mean.size() != d || c.prior_cov_diag.size() != d) fail("prior.mean/prior.cov_diag must have length " + std::to_string(d));
    for (double v : c.prior_cov_diag) {
      if (!(v > 0.0)) fail("prior.cov_diag entries must be positive");
    }
  } else if (c.prior_type == "uniform") {
    if (c.prior_lower.size() != d || c.prior_upper.size() != d) fail("prior.lower/prior.upper must have length " + std::to_string(d));
    for (std::size_t i = 0; i < d; ++i) {
      if (!(c.prior_lower[i] < c.prior_upper[i])) fail("prior.lower must be below prior.upper");
    }
  } else {
    fail("prior.type must be gaussian or uniform, got '" + c.prior_type + "'");
  }
  if (c.observation_mode == "synthesize") {
    if (c.true_theta.size() != d) fail("observation.true_theta must have length " + std::to_string(d));
  } else if (c.observation_mode == "explicit") {
    if (c.observation.empty()) fail("explicit observation needs observation.values");
  } else {
    fail("observation.mode must be explicit or synthesize");
  }
  if (!c.noise_var && !c.noise_relative) fail("noise.var or noise.relative is required");
  if (c.noise_var && !(*c.noise_var > 0.0)) fail("noise.var must be positive");
  if (c.noise_relative && !(*c.noise_relative > 0.0)) fail("noise.relative must be positive");
  if (c.noise_relative && c.model != "heat2d") fail("noise.relative is only defined for heat2d");
  if (c.em_K < 1) fail("em.K must be at least 1");
  if (c.em_M < 1) fail("em.M must be positive");
  if (c.em_max_iter < 1) fail("em.max_iter must be positive");
  if (!(c.em_tol > 0.0)) fail("em.tol must be positive");
  if (c.em_weighting != "likelihood" && c.em_weighting != "literal") fail("em.weighting must be likelihood or literal");
  if (!(c.gamma > 0.0)) fail("sampler.gamma must be positive");
  if (c.method != "direct" && c.method != "thinning") fail("sampler.method must be direct or thinning");
  if (!(c.box_sigma >= 4.0)) fail("sampler.box_sigma must be at least 4");
  if (c.oracle_M < 1000) fail("oracle.M must be at least 1000");
  if (c.heat_grid < 33) fail("heat.grid must be at least 33");
  if (c.kl_nodes < 11) fail("kl.n_nodes must be at least 11");
  if (c.kl_N < 1) fail("kl.N must be at least 1");
  if (c.output_dir.empty()) fail("output.dir must not be empty");
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  std::map<std::string, detail::RawValue> raw;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  const auto& keys = detail::known_keys();
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ParseError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (raw.count(key)) throw ParseError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    if (value.empty()) throw ParseError("line " + std::to_string(lineno) + ": key '" + key + "' has no value");
    raw[key] = {value, lineno};
  }
  const detail::ConfigReader r(std::move(raw));
  if (!r.has("model")) throw ParseError("missing required key 'model'");

  ExperimentConfig c;
  c.model = r.str("model");
  const auto& models = known_models();
  if (std::find(models.begin(), models.end(), c.model) == models.end()) {
    throw ParseError(r.where("model") + ": unknown model '" + c.model + "' (expected unimodal|bimodal|heat2d|kl)");
  }
  // KL truncation settings shape the default prior, so read them first.
  if (r.has("kl.N")) c.kl_N = r.integer("kl.N");
  if (r.has("kl.s")) c.kl_s = r.number("kl.s");
  if (c.kl_N < 1) throw ParseError(r.where("kl.N") + ": must be at least 1");
  detail::apply_model_defaults(c);

  if (r.has("prior.type")) {
    c.prior_type = r.str("prior.type");
    if (c.prior_type != "gaussian" && c.prior_type != "uniform") {
      throw ParseError(r.where("prior.type") + ": expected gaussian or uniform");
    }
  }
  if (r.has("prior.mean")) c.prior_mean = r.list("prior.mean");
  if (r.has("prior.cov_diag")) c.prior_cov_diag = r.list("prior.cov_diag");
  if (r.has("prior.lower")) c.prior_lower = r.list("prior.lower");
  if (r.has("prior.upper")) c.prior_upper = r.list("prior.upper");

  if (r.has("observation") && r.has("observation.values")) {
    throw ParseError(r.where("observation") + ": give either observation or observation.values");
  }
  if (r.has("observation")) {
    const auto v = r.str("observation");
    if (v == "synthesize") {
      c.observation_mode = "synthesize";
    } else {
      c.observation_mode = "explicit";
      c.observation = r.list("observation");
    }
  }
  if (r.has("observation.mode")) {
    c.observation_mode = r.str("observation.mode");
    if (c.observation_mode != "explicit" && c.observation_mode != "synthesize") {
      throw ParseError(r.where("observation.mode") + ": expected explicit or synthesize");
    }
  }
  if (r.has("observation.values")) {
    c.observation = r.list("observation.values");
    if (!r.has("observation.mode")) c.observation_mode = "explicit";
  }
  if (r.has("observation.true_theta")) c.true_theta = r.list("observation.true_theta");
  if (r.has("noise.var")) {
    c.noise_var = r.number("noise.var");
    if (!r.has("noise.relative")) c.noise_relative.reset();
  }
  if (r.has("noise.relative")) {
    c.noise_relative = r.number("noise.relative");
    if (!r.has("noise.var")) c.noise_var.reset();
  }
  if (r.has("em.K")) c.em_K = r.integer("em.K");
  if (r.has("em.M")) c.em_M = r.integer("em.M");
  if (r.has("em.max_iter")) c.em_max_iter = r.integer("em.max_iter");
  if (r.has("em.tol")) c.em_tol = r.number("em.tol");
  if (r.has("em.weighting")) c.em_weighting = r.str("em.weighting");
  if (r.has("sampler.gamma")) c.gamma = r.number("sampler.gamma");
  if (r.has("sampler.method")) c.method = r.str("sampler.method");
  if (r.has("sampler.box_sigma")) c.box_sigma = r.number("sampler.box_sigma");
  if (r.has("oracle.M")) c.oracle_M = r.integer("oracle.M");
  if (r.has("diagnostics.grid")) c.diagnostics_grid = r.integer("diagnostics.grid");
  if (r.has("heat.grid")) c.heat_grid = r.integer("heat.grid");
  if (r.has("kl.n_nodes")) c.kl_nodes = r.integer("kl.n_nodes");
  if (r.has("seeds.prior")) c.seed_prior = r.integer("seeds.prior");
  if (r.has("seeds.em")) c.seed_em = r.integer("seeds.em");
  if (r.has("seeds.sampler")) c.seed_sampler = r.integer("seeds.sampler");
  if (r.has("seeds.noise")) c.seed_noise = r.integer("seeds.noise");
  if (r.has("seeds.oracle")) c.seed_oracle = r.integer("seeds.oracle");
  if (r.has("output.dir")) c.output_dir = r.str("output.dir");
  validate_config(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline ExperimentConfig default_config(const std::string& model) { return parse_config_text("model = " + model); }

namespace detail {

inline std::string list_text(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s + "]";
}

}  // namespace detail

// Fully resolved key/value pairs in a fixed order; parse_config_text of the
// rendered text reproduces the config exactly.
inline std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
  using detail::list_text;
  std::vector<std::pair<std::string, std::string>> e;
  e.emplace_back("model", c.model);
  if (c.model == "kl") {
    e.emplace_back("kl.N", std::to_string(c.kl_N));
    e.emplace_back("kl.s", format_double(c.kl_s));
    e.emplace_back("kl.n_nodes", std::to_string(c.kl_nodes));
  }
  if (c.model == "heat2d") e.emplace_back("heat.grid", std::to_string(c.heat_grid));
  e.emplace_back("prior.type", c.prior_type);
  if (c.prior_type == "gaussian") {
    e.emplace_back("prior.mean", list_text(c.prior_mean));
    e.emplace_back("prior.cov_diag", list_text(c.prior_cov_diag));
  } else {
    e.emplace_back("prior.lower", list_text(c.prior_lower));
    e.emplace_back("prior.upper", list_text(c.prior_upper));
  }
  e.emplace_back("observation.mode", c.observation_mode);
  if (!c.observation.empty()) e.emplace_back("observation.values", list_text(c.observation));
  if (!c.true_theta.empty()) e.emplace_back("observation.true_theta", list_text(c.true_theta));
  if (c.noise_var) e.emplace_back("noise.var", format_double(*c.noise_var));
  if (c.noise_relative) e.emplace_back("noise.relative", format_double(*c.noise_relative));
  e.emplace_back("em.K", std::to_string(c.em_K));
  e.emplace_back("em.M", std::to_string(c.em_M));
  e.emplace_back("em.max_iter", std::to_string(c.em_max_iter));
  e.emplace_back("em.tol", format_double(c.em_tol));
  e.emplace_back("em.weighting", c.em_weighting);
  e.emplace_back("sampler.gamma", format_double(c.gamma));
  e.emplace_back("sampler.method", c.method);
  e.emplace_back("sampler.box_sigma", format_double(c.box_sigma));
  e.emplace_back("oracle.M", std::to_string(c.oracle_M));
  e.emplace_back("diagnostics.grid", std::to_string(c.diagnostics_grid));
  e.emplace_back("seeds.prior", std::to_string(c.seed_prior));
  e.emplace_back("seeds.em", std::to_string(c.seed_em));
  e.emplace_back("seeds.sampler", std::to_string(c.seed_sampler));
  e.emplace_back("seeds.noise", std::to_string(c.seed_noise));
  e.emplace_back("seeds.oracle", std::to_string(c.seed_oracle));
  e.emplace_back("output.dir", c.output_dir);
  return e;
}

inline std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_entries(c)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace pppbayes
