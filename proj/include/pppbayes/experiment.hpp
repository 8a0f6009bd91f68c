#pragma once

// fit -> sample -> diagnose pipeline for the four inversion experiments.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pppbayes/bayes_model.hpp"
#include "pppbayes/config.hpp"
#include "pppbayes/decomposition_sampler.hpp"
#include "pppbayes/diagnostics.hpp"
#include "pppbayes/errors.hpp"
#include "pppbayes/forward_models.hpp"
#include "pppbayes/io.hpp"
#include "pppbayes/mixture_fit.hpp"

namespace pppbayes {

// A failure inside one pipeline stage; `stage` names it for the report.
struct StageError : Error {
  StageError(std::string stage_name, const std::string& what)
      : Error(stage_name + ": " + what), stage(std::move(stage_name)) {}
  std::string stage;
};

struct ExperimentModel {
  PosteriorSpec posterior;
  Vector observation;
  std::optional<Vector> true_theta;
  Matrix noise_cov;
};

inline ForwardMap forward_for(const ExperimentConfig& c) {
  if (c.model == "unimodal") return [](const Vector& t) { return unimodal_forward(t); };
  if (c.model == "bimodal") return [](const Vector& t) { return bimodal_forward(t); };
  if (c.model == "heat2d") {
    HeatSetup setup;
    setup.n = c.heat_grid;
    return [setup](const Vector& t) { return heat_forward(setup, t); };
  }
  if (c.model == "kl") {
    KLSetup setup;
    setup.N = c.kl_N;
    setup.s = c.kl_s;
    setup.n_nodes = c.kl_nodes;
    return [setup](const Vector& t) { return kl_forward(setup, t); };
  }
  throw ParseError("unknown model '" + c.model + "'");
}

inline JacobianMap jacobian_for(const ExperimentConfig& c) {
  if (c.model == "unimodal") return [](const Vector& t) { return unimodal_jacobian(t); };
  if (c.model == "bimodal") return [](const Vector& t) { return bimodal_jacobian(t); };
  return {};
}

inline PriorSpec prior_for(const ExperimentConfig& c) {
  if (c.prior_type == "gaussian") {
    return GaussianPrior{to_vector(c.prior_mean), Matrix(to_vector(c.prior_cov_diag).asDiagonal())};
  }
  return UniformBoxPrior{AxisBox(to_vector(c.prior_lower), to_vector(c.prior_upper))};
}

// Builds the posterior, synthesizing the observation when requested as
// G(true_theta) + xi with xi ~ N(0, Sigma) drawn from seeds.noise.
inline ExperimentModel build_model(const ExperimentConfig& c) {
  const ForwardMap forward = forward_for(c);
  std::optional<Vector> truth;
  if (!c.true_theta.empty()) truth = to_vector(c.true_theta);

  std::optional<Vector> clean;
  auto clean_output = [&]() -> const Vector& {
    if (!clean) {
      if (!truth) throw ParseError("observation synthesis needs observation.true_theta");
      clean = forward(*truth);
    }
    return *clean;
  };

  Eigen::Index m = 0;
  if (c.observation_mode == "explicit") {
    m = static_cast<Eigen::Index>(c.observation.size());
  } else {
    m = clean_output().size();
  }

  double sd = 0.0;
  if (c.noise_var) {
    sd = std::sqrt(*c.noise_var);
  } else {
    // heat2d: 1% of the mean temperature rise above the Dirichlet value.
    const double rise = (clean_output().array() - HeatSetup{}.top_temperature).mean();
    sd = *c.noise_relative * std::fabs(rise);
  }
  const Matrix noise_cov = sd * sd * Matrix::Identity(m, m);

  Vector obs;
  if (c.observation_mode == "explicit") {
    obs = to_vector(c.observation);
  } else {
    Rng rng(c.seed_noise);
    obs = clean_output();
    for (Eigen::Index i = 0; i < obs.size(); ++i) obs[i] += sd * rng.normal();
  }
  PosteriorSpec posterior(forward, obs, noise_cov, prior_for(c), jacobian_for(c));
  if (posterior.forward(posterior.prior().mean()).size() != obs.size()) {
    throw ParseError("observation length does not match the model output");
  }
  return {std::move(posterior), std::move(obs), std::move(truth), noise_cov};
}

inline EmConfig em_config_for(const ExperimentConfig& c) {
  EmConfig e;
  e.K = c.em_K;
  e.max_iter = c.em_max_iter;
  e.tol = c.em_tol;
  e.seed = c.seed_em;
  e.weighting = c.em_weighting == "literal" ? ImportanceWeighting::literal : ImportanceWeighting::likelihood;
  return e;
}

inline SamplerConfig sampler_config_for(const ExperimentConfig& c) {
  SamplerConfig s;
  s.gamma = c.gamma;
  s.method = parse_sample_method(c.method);
  s.box_sigma = c.box_sigma;
  s.seed = c.seed_sampler;
  return s;
}

inline json em_report_to_json(const EmReport& r) {
  return {{"iterations", r.iterations},
          {"converged", r.converged},
          {"log_likelihood", r.log_likelihood},
          {"ess", r.ess},
          {"cov_floor", r.cov_floor},
          {"reseeds", r.reseeds},
          {"warnings", r.warnings}};
}

// ---------------------------------------------------------------------------
// Diagnostics for one fitted/sampled run

struct DiagnosticsInput {
  const ExperimentConfig& config;
  const ExperimentModel& model;
  const GaussianMixture& mixture;
  const LabeledPattern& samples;
  const MomentReport& oracle;
};

inline constexpr double kDiagnosticLevel = 0.01;
inline constexpr double kMixtureOracleMeanTol = 0.1;
inline constexpr double kGridTvTol = 0.25;

inline std::vector<DiagnosticRecord> run_diagnostics(const DiagnosticsInput& in) {
  std::vector<DiagnosticRecord> out;
  const auto& mix = in.mixture;
  const std::size_t K = mix.size();
  const auto counts = pattern_counts(in.samples, K);
  const double gamma = in.config.gamma;

  {
    // Total count vs Poisson(gamma), normal approximation.
    DiagnosticRecord d = named_record("total_count_poisson");
    const double z = (static_cast<double>(counts.total) - gamma) / std::sqrt(gamma);
    d.statistic = z;
    d.p_value = two_sided_normal_p(z);
    d.params = {{"gamma", gamma}, {"count", static_cast<double>(counts.total)}};
    d.pass = *d.p_value > kDiagnosticLevel;
    out.push_back(d);
  }
  if (counts.total > 0 && K > 1) {
    // Label counts vs multinomial(total, w).
    DiagnosticRecord d = named_record("label_fractions_chi2");
    double stat = 0.0;
    double dof = -1.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double e = mix[k].weight * static_cast<double>(counts.total);
      if (e <= 0.0) continue;
      stat += std::pow(static_cast<double>(counts.label_counts[k]) - e, 2) / e;
      dof += 1.0;
    }
    d.statistic = stat;
    d.p_value = dof > 0 ? chi_square_sf(stat, dof) : 1.0;
    d.params = {{"dof", dof}, {"count", static_cast<double>(counts.total)}};
    d.pass = *d.p_value > kDiagnosticLevel;
    out.push_back(d);
  }
  if (counts.total > 1) {
    // Pooled sample mean vs mixture mean, per-coordinate z with Bonferroni.
    const auto stats = pattern_statistics(in.samples, K);
    const Vector mm = mix.mean();
    const Matrix mc = mix.covariance();
    double zmax = 0.0;
    for (Eigen::Index a = 0; a < mm.size(); ++a) {
      const double se = std::sqrt(mc(a, a) / static_cast<double>(counts.total));
      zmax = std::max(zmax, std::fabs(stats.mean[a] - mm[a]) / se);
    }
    DiagnosticRecord d = named_record("sample_mean_vs_mixture");
    d.statistic = zmax;
    d.p_value = std::min(1.0, static_cast<double>(mm.size()) * two_sided_normal_p(zmax));
    d.params = {{"dim", static_cast<double>(mm.size())}};
    d.pass = *d.p_value > kDiagnosticLevel;
    out.push_back(d);
  }
  {
    DiagnosticRecord d = named_record("mixture_mean_vs_oracle");
    const double dist = (mix.mean() - in.oracle.mean).cwiseAbs().maxCoeff();
    d.statistic = dist;
    d.distance = dist;
    d.params = {{"tolerance", kMixtureOracleMeanTol}, {"oracle_samples", static_cast<double>(in.oracle.samples)}};
    d.pass = dist <= kMixtureOracleMeanTol;
    out.push_back(d);
  }
  {
    DiagnosticRecord d = named_record("oracle_ess");
    d.statistic = in.oracle.ess;
    d.params = {{"minimum", kMinReliableEss}};
    d.pass = in.oracle.ess >= kMinReliableEss;
    out.push_back(d);
  }
  const std::size_t res = in.config.diagnostics_grid;
  if (res > 0 && mix.dim() <= 3) {
    // Grid on oracle mean +- 6 sd, clipped to a uniform prior's support.
    Vector lo = in.oracle.mean - 6.0 * in.oracle.covariance.diagonal().cwiseSqrt();
    Vector hi = in.oracle.mean + 6.0 * in.oracle.covariance.diagonal().cwiseSqrt();
    if (const auto* u = in.model.posterior.prior().uniform()) {
      lo = lo.cwiseMax(u->box.lower());
      hi = hi.cwiseMin(u->box.upper());
    }
    const AxisBox box(lo, hi);
    const std::vector<std::size_t> resolution(mix.dim(), res);
    const auto post = grid_density_log(
        [&](const Vector& t) { return log_unnormalized_posterior(in.model.posterior, t); }, box, resolution);
    const auto approx = grid_density_log([&](const Vector& t) { return mix.log_density(t); }, box, resolution);
    const double tv = estimate_tv(post, approx);
    const double hell = estimate_hellinger(post, approx);
    DiagnosticRecord dt = named_record("tv_mixture_vs_posterior");
    dt.statistic = tv;
    dt.distance = tv;
    dt.params = {{"cells_per_axis", static_cast<double>(res)}, {"tolerance", kGridTvTol}};
    dt.pass = tv <= kGridTvTol;
    out.push_back(dt);
    DiagnosticRecord dh = named_record("hellinger_mixture_vs_posterior");
    dh.statistic = hell;
    dh.distance = hell;
    dh.params = {{"cells_per_axis", static_cast<double>(res)}};
    dh.pass = tv <= std::numbers::sqrt2 * hell + 1e-12;
    out.push_back(dh);
  }
  return out;
}

// Mixture density at the sampled points, at fixed upper percentiles.
inline std::map<std::string, double> density_quantiles(const GaussianMixture& mix, const LabeledPattern& samples) {
  std::map<std::string, double> out;
  if (samples.pattern.empty()) return out;
  std::vector<double> dens;
  dens.reserve(samples.size());
  for (const auto& x : samples.pattern) dens.push_back(mix.density(x));
  std::sort(dens.begin(), dens.end());
  for (int pct : {85, 90, 95}) {
    const double pos = pct / 100.0 * static_cast<double>(dens.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double t = pos - static_cast<double>(i);
    const double v = i + 1 < dens.size() ? (1 - t) * dens[i] + t * dens[i + 1] : dens[i];
    out["p" + std::to_string(pct)] = v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Whole-run report

struct RunReport {
  ExperimentConfig config;
  Vector observation;
  std::optional<Vector> true_theta;
  GaussianMixture mixture;
  EmReport fit;
  MomentReport oracle;
  std::vector<DiagnosticRecord> diagnostics;
  std::map<std::string, double> quantiles;
  std::map<std::string, double> timings;  // seconds per stage
  std::vector<std::string> files;
  std::size_t sample_count = 0;
};

inline json config_to_json(const ExperimentConfig& c) {
  json j = json::object();
  for (const auto& [k, v] : config_entries(c)) j[k] = v;
  return j;
}

inline json report_to_json(const RunReport& r) {
  json j;
  j["model"] = r.config.model;
  j["config"] = config_to_json(r.config);
  j["seeds"] = {{"prior", r.config.seed_prior},
                {"em", r.config.seed_em},
                {"sampler", r.config.seed_sampler},
                {"noise", r.config.seed_noise},
                {"oracle", r.config.seed_oracle}};
  j["observation"] = to_json(r.observation);
  j["true_theta"] = r.true_theta ? to_json(*r.true_theta) : json(nullptr);
  j["mixture"] = mixture_to_json(r.mixture);
  j["mixture_mean"] = to_json(r.mixture.mean());
  j["mixture_covariance"] = to_json(r.mixture.covariance());
  j["fit"] = em_report_to_json(r.fit);
  j["oracle"] = moments_to_json(r.oracle);
  j["sample_count"] = r.sample_count;
  j["diagnostics"] = diagnostics_to_json(r.diagnostics);
  j["density_quantiles"] = r.quantiles;
  j["files"] = r.files;
  j["timings"] = r.timings;
  return j;
}

inline void write_report(const RunReport& report, const std::string& path) { write_json(report_to_json(report), path); }

namespace detail {

class StageTimer {
 public:
  StageTimer(std::map<std::string, double>& sink, std::string name)
      : sink_(sink), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    sink_[name_] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  std::map<std::string, double>& sink_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

template <typename Fn>
auto stage(const std::string& name, std::map<std::string, double>& timings, Fn&& fn) {
  StageTimer t(timings, name);
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace detail

struct FitOutput {
  GaussianMixture mixture;
  EmReport report;
};

inline FitOutput run_fit(const ExperimentConfig& c, const ExperimentModel& m) {
  auto r = em_fit(m.posterior, c.em_M, em_config_for(c), c.seed_prior);
  return {std::move(r.mixture), std::move(r.report)};
}

inline LabeledPattern run_sample(const ExperimentConfig& c, const GaussianMixture& mixture) {
  return sample_posterior_ppp(mixture, sampler_config_for(c));
}

// Output files written by run_experiment, relative to the output directory.
inline const std::vector<std::string>& experiment_files() {
  static const std::vector<std::string> files = {"samples.csv", "mixture.json", "diagnostics.json", "report.json"};
  return files;
}

// Runs every stage and writes the artifacts. On failure any files already
// written by this run are removed and a StageError is thrown.
inline RunReport run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  validate_config(config);
  RunReport report;
  report.config = config;
  const fs::path dir(config.output_dir);
  std::vector<fs::path> written;
  try {
    const auto model = detail::stage("model", report.timings, [&] { return build_model(config); });
    report.observation = model.observation;
    report.true_theta = model.true_theta;
    auto fit = detail::stage("fit", report.timings, [&] { return run_fit(config, model); });
    report.mixture = fit.mixture;
    report.fit = fit.report;
    const auto samples = detail::stage("sample", report.timings, [&] { return run_sample(config, report.mixture); });
    report.sample_count = samples.size();
    report.oracle = detail::stage("oracle", report.timings,
                                  [&] { return oracle_moments(model.posterior, config.oracle_M, config.seed_oracle); });
    report.diagnostics = detail::stage("diagnose", report.timings, [&] {
      return run_diagnostics({config, model, report.mixture, samples, report.oracle});
    });
    report.quantiles = density_quantiles(report.mixture, samples);

    detail::stage("write", report.timings, [&] {
      fs::create_directories(dir);
      auto track = [&](const std::string& name) {
        written.push_back(dir / name);
        report.files.push_back(name);
        return (dir / name).string();
      };
      write_samples(samples, track("samples.csv"));
      write_json(mixture_to_json(report.mixture), track("mixture.json"));
      write_json(diagnostics_to_json(report.diagnostics), track("diagnostics.json"));
      const auto report_path = track("report.json");
      write_report(report, report_path);
      return 0;
    });
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
  return report;
}

}  // namespace pppbayes
