#pragma once

// Posterior sampling by superposition: component k of a fitted mixture is a
// PPP with intensity gamma * w_k * phi_k, sampled independently, and the
// union of all component realizations is a PPP with intensity
// gamma * (mixture density).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pppbayes/errors.hpp"
#include "pppbayes/linalg.hpp"
#include "pppbayes/mixture_fit.hpp"
#include "pppbayes/parallel.hpp"
#include "pppbayes/point_process.hpp"
#include "pppbayes/random.hpp"

namespace pppbayes {

struct LabeledPattern {
  PointPattern pattern;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return pattern.size(); }
};

enum class SampleMethod { direct, thinning };

inline const char* to_string(SampleMethod m) { return m == SampleMethod::direct ? "direct" : "thinning"; }

inline SampleMethod parse_sample_method(const std::string& s) {
  if (s == "direct") return SampleMethod::direct;
  if (s == "thinning") return SampleMethod::thinning;
  throw InvalidArgument("unknown sampling method '" + s + "' (expected direct|thinning)");
}

struct SamplerConfig {
  double gamma = 1000.0;
  SampleMethod method = SampleMethod::direct;
  double box_sigma = 6.0;
  Seed seed = 0;

  void validate() const {
    detail::require(std::isfinite(gamma) && gamma > 0.0, "gamma must be positive");
    detail::require(box_sigma >= 4.0, "box_sigma must be at least 4");
  }
};

// kappa_k ~ Poisson(gamma * w_k), independent across k.
inline std::vector<std::uint64_t> component_counts(const GaussianMixture& mixture, double gamma, Seed seed) {
  detail::require(std::isfinite(gamma) && gamma > 0.0, "gamma must be positive");
  std::vector<std::uint64_t> counts(mixture.size());
  for (std::size_t k = 0; k < mixture.size(); ++k) {
    Rng rng(derive_seed(seed, {k}));
    counts[k] = poisson_variate(rng, gamma * mixture[k].weight);
  }
  return counts;
}

inline PointPattern sample_component_direct(const GaussianComponent& component, std::uint64_t count, Seed seed) {
  const GaussianFactor factor(component.mean, component.cov);
  const auto d = factor.dim();
  Rng rng(seed);
  return sample_binomial(static_cast<std::size_t>(d), count, [&](Rng& r) {
    Vector z(d);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = r.normal();
    return factor.transform(z);
  }, rng);
}

// Thinning box: mean +- box_sigma * sqrt(diag(cov)).
inline AxisBox component_box(const GaussianComponent& component, double box_sigma) {
  const Vector half = box_sigma * component.cov.diagonal().cwiseSqrt();
  return {component.mean - half, component.mean + half};
}

// Bounded intensity expected_count * phi_k on the component box; the bound
// is the mode value, which is exact for a Gaussian.
inline BoundedIntensity component_intensity(const GaussianComponent& component, double expected_count,
                                            double box_sigma) {
  detail::require(std::isfinite(expected_count) && expected_count > 0.0, "expected_count must be positive");
  const GaussianFactor factor(component.mean, component.cov);
  const double lambda_max = expected_count * std::exp(factor.log_mode_density());
  return BoundedIntensity(
      [factor, expected_count](const Vector& x) { return expected_count * std::exp(factor.log_density(x)); },
      component_box(component, box_sigma), lambda_max);
}

inline PointPattern sample_component_thinning(const GaussianComponent& component, double expected_count,
                                              double box_sigma, Seed seed) {
  return sample_ppp_thinning(component_intensity(component, expected_count, box_sigma), seed);
}

inline LabeledPattern sample_posterior_ppp(const GaussianMixture& mixture, const SamplerConfig& config) {
  config.validate();
  const auto counts = component_counts(mixture, config.gamma, derive_seed(config.seed, {0}));
  std::vector<PointPattern> parts(mixture.size(), PointPattern(mixture.dim()));
  parallel_for(mixture.size(), [&](std::size_t k) {
    const Seed s = derive_seed(config.seed, {1, k});
    if (config.method == SampleMethod::direct) {
      parts[k] = sample_component_direct(mixture[k], counts[k], s);
    } else if (mixture[k].weight > 0.0) {
      // Under thinning the count is produced by the component PPP itself.
      parts[k] = sample_component_thinning(mixture[k], config.gamma * mixture[k].weight, config.box_sigma, s);
    }
  });
  LabeledPattern out{superpose(parts, mixture.dim()), {}};
  out.labels.reserve(out.pattern.size());
  for (std::size_t k = 0; k < parts.size(); ++k) out.labels.insert(out.labels.end(), parts[k].size(), k);
  return out;
}

struct PatternSummary {
  std::vector<std::size_t> label_counts;
  std::size_t total = 0;
  Vector mean;
  Matrix covariance;  // divisor n (exact sample moments)
};

inline PatternSummary pattern_counts(const LabeledPattern& labeled, std::size_t num_labels) {
  detail::require(labeled.labels.size() == labeled.pattern.size(), "one label per point required");
  PatternSummary s;
  s.label_counts.assign(num_labels, 0);
  for (auto l : labeled.labels) {
    detail::require(l < num_labels, "label out of range");
    ++s.label_counts[l];
  }
  s.total = labeled.pattern.size();
  return s;
}

inline PatternSummary pattern_statistics(const LabeledPattern& labeled, std::size_t num_labels) {
  auto s = pattern_counts(labeled, num_labels);
  if (labeled.pattern.empty()) throw EmptyPatternError("pattern is empty; moments undefined");
  const auto d = static_cast<Eigen::Index>(labeled.pattern.dim());
  s.mean = Vector::Zero(d);
  for (const auto& x : labeled.pattern) s.mean += x;
  s.mean /= static_cast<double>(s.total);
  s.covariance = Matrix::Zero(d, d);
  for (const auto& x : labeled.pattern) {
    const Vector c = x - s.mean;
    s.covariance.noalias() += c * c.transpose();
  }
  s.covariance /= static_cast<double>(s.total);
  return s;
}

inline PatternSummary pattern_statistics(const LabeledPattern& labeled) {
  std::size_t k = 0;
  for (auto l : labeled.labels) k = std::max(k, l + 1);
  return pattern_statistics(labeled, k);
}

}  // namespace pppbayes
