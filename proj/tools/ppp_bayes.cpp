// ppp_bayes: fit, sample and diagnose Poisson-point-process posterior samplers.
//
//   ppp_bayes experiment <unimodal|bimodal|heat2d|kl> [--config F] [--out D] [--seed S] [--gamma G] [--method M]
//   ppp_bayes fit      --config F [--out D] [--seed S]
//   ppp_bayes sample   --mixture F [--config F] [--out D] [--seed S] [--gamma G] [--method M]
//   ppp_bayes diagnose --config F [--out D] [--mixture F] [--samples F]
//
// Exit status: 0 success, 1 stage failure, 2 configuration error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pppbayes/config.hpp"
#include "pppbayes/experiment.hpp"
#include "pppbayes/io.hpp"

namespace fs = std::filesystem;
using namespace pppbayes;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitStage = 1;
constexpr int kExitConfig = 2;

struct CommonOptions {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<std::string> method;
};

ExperimentConfig resolve_config(const CommonOptions& o, const std::optional<std::string>& model_name) {
  ExperimentConfig c;
  if (!o.config_path.empty()) {
    c = parse_config(o.config_path);
    if (model_name && c.model != *model_name) {
      throw ParseError("config model '" + c.model + "' does not match experiment '" + *model_name + "'");
    }
  } else if (model_name) {
    c = default_config(*model_name);
    c.output_dir = "out/" + *model_name;
  } else {
    throw ParseError("--config is required");
  }
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.seed) c.set_base_seed(*o.seed);
  if (o.gamma) c.gamma = *o.gamma;
  if (o.method) c.method = *o.method;
  validate_config(c);
  return c;
}

void print_diagnostics(const std::vector<DiagnosticRecord>& records) {
  for (const auto& d : records) {
    std::cout << "  " << (d.pass ? "PASS " : "FAIL ") << d.test_name << "  statistic=" << d.statistic;
    if (d.p_value) std::cout << " p=" << *d.p_value;
    std::cout << '\n';
  }
}

int cmd_experiment(const std::string& name, const CommonOptions& o) {
  const auto c = resolve_config(o, name);
  const auto report = run_experiment(c);
  std::cout << "experiment " << c.model << ": " << report.mixture.size() << " components, " << report.fit.iterations
            << " EM iterations" << (report.fit.converged ? "" : " (not converged)") << ", " << report.sample_count
            << " posterior points\n";
  std::cout << "mixture mean: " << report.mixture.mean().transpose() << '\n';
  std::cout << "oracle mean:  " << report.oracle.mean.transpose() << "  (ess " << report.oracle.ess << ")\n";
  print_diagnostics(report.diagnostics);
  std::cout << "wrote " << c.output_dir << '\n';
  return kExitOk;
}

int cmd_fit(const CommonOptions& o) {
  const auto c = resolve_config(o, std::nullopt);
  std::map<std::string, double> timings;
  const auto model = detail::stage("model", timings, [&] { return build_model(c); });
  const auto fit = detail::stage("fit", timings, [&] { return run_fit(c, model); });
  fs::create_directories(c.output_dir);
  write_json(mixture_to_json(fit.mixture), (fs::path(c.output_dir) / "mixture.json").string());
  json fj = em_report_to_json(fit.report);
  fj["config"] = config_to_json(c);
  write_json(fj, (fs::path(c.output_dir) / "fit.json").string());
  std::cout << "fit " << c.model << ": " << fit.report.iterations << " iterations, L = " << fit.report.log_likelihood
            << "\nwrote " << (fs::path(c.output_dir) / "mixture.json").string() << '\n';
  return kExitOk;
}

int cmd_sample(const CommonOptions& o, const std::string& mixture_path) {
  ExperimentConfig c;
  if (!o.config_path.empty()) {
    c = resolve_config(o, std::nullopt);
  } else {
    // Sampling needs only the sampler block; start from any model's defaults.
    c = default_config("bimodal");
    if (!o.out.empty()) c.output_dir = o.out;
    if (o.seed) c.set_base_seed(*o.seed);
    if (o.gamma) c.gamma = *o.gamma;
    if (o.method) c.method = *o.method;
    validate_config(c);
  }
  const auto path = mixture_path.empty() ? (fs::path(c.output_dir) / "mixture.json").string() : mixture_path;
  GaussianMixture mixture;
  try {
    mixture = mixture_from_json(read_json(path));
  } catch (const Error& e) {
    throw ParseError(e.what());
  }
  std::map<std::string, double> timings;
  const auto samples = detail::stage("sample", timings, [&] { return run_sample(c, mixture); });
  fs::create_directories(c.output_dir);
  const auto out = (fs::path(c.output_dir) / "samples.csv").string();
  write_samples(samples, out);
  std::cout << "sampled " << samples.size() << " points (" << c.method << ", gamma " << c.gamma << ")\nwrote " << out
            << '\n';
  return kExitOk;
}

int cmd_diagnose(const CommonOptions& o, const std::string& mixture_path, const std::string& samples_path) {
  const auto c = resolve_config(o, std::nullopt);
  const fs::path dir(c.output_dir);
  GaussianMixture mixture;
  LabeledPattern samples;
  try {
    mixture = mixture_from_json(read_json(mixture_path.empty() ? (dir / "mixture.json").string() : mixture_path));
    samples = read_samples(samples_path.empty() ? (dir / "samples.csv").string() : samples_path);
  } catch (const Error& e) {
    throw ParseError(e.what());
  }
  std::map<std::string, double> timings;
  const auto model = detail::stage("model", timings, [&] { return build_model(c); });
  const auto oracle =
      detail::stage("oracle", timings, [&] { return oracle_moments(model.posterior, c.oracle_M, c.seed_oracle); });
  const auto records =
      detail::stage("diagnose", timings, [&] { return run_diagnostics({c, model, mixture, samples, oracle}); });
  fs::create_directories(dir);
  write_json(diagnostics_to_json(records), (dir / "diagnostics.json").string());
  print_diagnostics(records);
  return kExitOk;
}

void add_common(CLI::App* sub, CommonOptions& o, bool sampling_flags) {
  sub->add_option("--config", o.config_path, "experiment config file (dotted key = value)");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--seed", o.seed, "base seed; stage seeds are seed, seed+1, ..., seed+4");
  if (sampling_flags) {
    sub->add_option("--gamma", o.gamma, "expected number of posterior points");
    sub->add_option("--method", o.method, "component sampler: direct | thinning")
        ->check(CLI::IsMember({"direct", "thinning"}));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Posterior sampling through Poisson point processes"};
  app.require_subcommand(1);

  CommonOptions exp_opts, fit_opts, sample_opts, diag_opts;
  std::string exp_name, mixture_path, diag_mixture, diag_samples;

  auto* exp = app.add_subcommand("experiment", "run fit, sample and diagnose for a named experiment");
  exp->add_option("name", exp_name, "unimodal | bimodal | heat2d | kl")->required();
  add_common(exp, exp_opts, true);

  auto* fit = app.add_subcommand("fit", "fit the Gaussian mixture and write mixture.json");
  add_common(fit, fit_opts, false);

  auto* sample = app.add_subcommand("sample", "sample the posterior PPP from mixture.json into samples.csv");
  sample->add_option("--mixture", mixture_path, "mixture JSON (default: <out>/mixture.json)");
  add_common(sample, sample_opts, true);

  auto* diag = app.add_subcommand("diagnose", "check samples.csv and mixture.json, write diagnostics.json");
  diag->add_option("--mixture", diag_mixture, "mixture JSON (default: <out>/mixture.json)");
  diag->add_option("--samples", diag_samples, "samples CSV (default: <out>/samples.csv)");
  add_common(diag, diag_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*exp) return cmd_experiment(exp_name, exp_opts);
    if (*fit) return cmd_fit(fit_opts);
    if (*sample) return cmd_sample(sample_opts, mixture_path);
    if (*diag) return cmd_diagnose(diag_opts, diag_mixture, diag_samples);
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return kExitStage;
}
