#pragma once

// Gaussian mixture approximation of a posterior density, fitted by EM on
// self-normalized importance-weighted prior draws.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pppbayes/bayes_model.hpp"
#include "pppbayes/errors.hpp"
#include "pppbayes/linalg.hpp"
#include "pppbayes/parallel.hpp"
#include "pppbayes/random.hpp"

namespace pppbayes {

struct GaussianComponent {
  double weight = 0.0;
  Vector mean;
  Matrix cov;
};

class GaussianMixture {
 public:
  GaussianMixture() = default;

  explicit GaussianMixture(std::vector<GaussianComponent> components) : components_(std::move(components)) {
    detail::require(!components_.empty(), "mixture needs at least one component");
    dim_ = static_cast<std::size_t>(components_.front().mean.size());
    detail::require(dim_ > 0, "mixture dimension must be positive");
    double total = 0.0;
    factors_.reserve(components_.size());
    for (const auto& c : components_) {
      detail::require(static_cast<std::size_t>(c.mean.size()) == dim_, "component mean has wrong length");
      detail::require(std::isfinite(c.weight) && c.weight >= 0.0, "component weight must be nonnegative");
      if (!is_symmetric(c.cov, 1e-12)) throw SpdViolation("component covariance is not symmetric");
      factors_.emplace_back(c.mean, c.cov);
      total += c.weight;
    }
    if (std::fabs(total - 1.0) > 1e-10) {
      throw InvalidArgument("mixture weights sum to " + std::to_string(total) + ", expected 1");
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return components_.size(); }
  const std::vector<GaussianComponent>& components() const noexcept { return components_; }
  const GaussianComponent& operator[](std::size_t k) const { return components_[k]; }
  const GaussianFactor& factor(std::size_t k) const { return factors_[k]; }

  // log(w_k) + log phi_k(theta) for each k.
  void weighted_log_densities(const Vector& theta, double* out) const {
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const double w = components_[k].weight;
      out[k] = w > 0.0 ? std::log(w) + factors_[k].log_density(theta) : kNegInf;
    }
  }

  double log_density(const Vector& theta) const {
    std::vector<double> terms(components_.size());
    weighted_log_densities(theta, terms.data());
    return log_sum_exp(terms.data(), terms.size());
  }

  double density(const Vector& theta) const { return std::exp(log_density(theta)); }

  Vector mean() const {
    Vector m = Vector::Zero(static_cast<Eigen::Index>(dim_));
    for (const auto& c : components_) m += c.weight * c.mean;
    return m;
  }

  // sum_k w_k (Xi_k + m_k m_k^T) - m m^T
  Matrix covariance() const {
    const auto d = static_cast<Eigen::Index>(dim_);
    Matrix second = Matrix::Zero(d, d);
    for (const auto& c : components_) second += c.weight * (c.cov + c.mean * c.mean.transpose());
    const Vector m = mean();
    return second - m * m.transpose();
  }

 private:
  std::vector<GaussianComponent> components_;
  std::vector<GaussianFactor> factors_;
  std::size_t dim_ = 0;
};

inline double mixture_density(const GaussianMixture& mixture, const Vector& theta) {
  return mixture.density(theta);
}

struct WeightedSampleSet {
  std::vector<Vector> samples;
  std::vector<double> weights;

  std::size_t size() const noexcept { return samples.size(); }
  std::size_t dim() const { return samples.empty() ? 0 : static_cast<std::size_t>(samples.front().size()); }
};

// Self-normalizes log-weights; throws DegenerateError if every weight is zero.
inline WeightedSampleSet normalize_log_weights(std::vector<Vector> samples, const std::vector<double>& log_w) {
  detail::require(samples.size() == log_w.size() && !samples.empty(), "samples/weights size mismatch");
  const double lse = log_sum_exp(log_w.data(), log_w.size());
  if (!std::isfinite(lse)) {
    throw DegenerateError("all importance weights are zero; observation incompatible with every sample");
  }
  WeightedSampleSet out{std::move(samples), std::vector<double>(log_w.size())};
  for (std::size_t i = 0; i < log_w.size(); ++i) out.weights[i] = std::exp(log_w[i] - lse);
  return out;
}

enum class ImportanceWeighting {
  likelihood,  // r = exp(-potential), targets the posterior from prior draws
  literal,     // r = potential * prior density, the formula as printed
};

inline std::vector<double> evaluate_potentials(const PosteriorSpec& model, const std::vector<Vector>& samples) {
  std::vector<double> phi(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) { phi[i] = potential(model, samples[i]); });
  return phi;
}

inline WeightedSampleSet weights_from_potentials(const PosteriorSpec& model, std::vector<Vector> samples,
                                                 const std::vector<double>& potentials,
                                                 ImportanceWeighting weighting = ImportanceWeighting::likelihood) {
  std::vector<double> log_w(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (weighting == ImportanceWeighting::likelihood) {
      log_w[i] = -potentials[i];
    } else {
      log_w[i] = potentials[i] > 0.0 ? std::log(potentials[i]) + model.prior().log_density(samples[i]) : kNegInf;
    }
  }
  return normalize_log_weights(std::move(samples), log_w);
}

inline WeightedSampleSet importance_weights(const PosteriorSpec& model, std::vector<Vector> samples,
                                            ImportanceWeighting weighting = ImportanceWeighting::likelihood) {
  const auto phi = evaluate_potentials(model, samples);
  return weights_from_potentials(model, std::move(samples), phi, weighting);
}

struct EStepResult {
  Matrix rho;              // M x K, rows sum to 1
  Vector log_mix_density;  // log sum_k w_k phi_k(theta_i)
};

inline EStepResult e_step(const GaussianMixture& mixture, const std::vector<Vector>& samples) {
  detail::require(!samples.empty(), "e_step needs at least one sample");
  const std::size_t m = samples.size();
  const std::size_t k = mixture.size();
  EStepResult out{Matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)),
                  Vector(static_cast<Eigen::Index>(m))};
  parallel_for((m + kReductionBlock - 1) / kReductionBlock, [&](std::size_t b) {
    std::vector<double> terms(k);
    const std::size_t hi = std::min(m, (b + 1) * kReductionBlock);
    for (std::size_t i = b * kReductionBlock; i < hi; ++i) {
      mixture.weighted_log_densities(samples[i], terms.data());
      const double lse = log_sum_exp(terms.data(), k);
      if (!std::isfinite(lse)) {
        throw DegenerateError("every component density vanishes at sample " + std::to_string(i));
      }
      const auto row = static_cast<Eigen::Index>(i);
      out.log_mix_density[row] = lse;
      for (std::size_t j = 0; j < k; ++j) out.rho(row, static_cast<Eigen::Index>(j)) = std::exp(terms[j] - lse);
    }
  });
  return out;
}

// Xi + floor * I when the smallest eigenvalue of Xi is below floor.
inline Matrix floor_covariance(Matrix cov, double cov_floor) {
  cov = 0.5 * (cov + cov.transpose());
  if (smallest_eigenvalue(cov) < cov_floor) cov += cov_floor * Matrix::Identity(cov.rows(), cov.cols());
  return cov;
}

inline constexpr double kEmptyComponentMass = 1e-12;

struct MStepResult {
  GaussianMixture mixture;
  std::vector<std::size_t> empty_components;  // total weighted responsibility < 1e-12
};

namespace detail {

struct ComponentSums {
  std::vector<double> mass;
  std::vector<Vector> first;
  std::vector<Matrix> scatter;
};

inline ComponentSums zero_sums(std::size_t k, Eigen::Index d, bool with_scatter) {
  ComponentSums s{std::vector<double>(k, 0.0), std::vector<Vector>(k, Vector::Zero(d)), {}};
  if (with_scatter) s.scatter.assign(k, Matrix::Zero(d, d));
  return s;
}

inline ComponentSums add_sums(ComponentSums a, const ComponentSums& b) {
  for (std::size_t j = 0; j < a.mass.size(); ++j) {
    a.mass[j] += b.mass[j];
    a.first[j] += b.first[j];
    if (!a.scatter.empty()) a.scatter[j] += b.scatter[j];
  }
  return a;
}

}  // namespace detail

// Weighted M-step with rho_hat = r_i * rho_ik. Empty components keep weight 0
// and inherit mean/cov from `previous` (or the pooled weighted moments).
inline MStepResult m_step(const WeightedSampleSet& data, const Matrix& rho, double cov_floor,
                          const GaussianMixture* previous = nullptr) {
  const std::size_t m = data.size();
  detail::require(m > 0 && static_cast<std::size_t>(rho.rows()) == m, "m_step: rho rows do not match samples");
  detail::require(data.weights.size() == m, "m_step: weight count mismatch");
  detail::require(cov_floor > 0.0, "cov_floor must be positive");
  const auto k = static_cast<std::size_t>(rho.cols());
  const auto d = static_cast<Eigen::Index>(data.dim());

  auto first_pass = blocked_reduce(
      m, detail::zero_sums(k, d, false),
      [&](std::size_t lo, std::size_t hi) {
        auto s = detail::zero_sums(k, d, false);
        for (std::size_t i = lo; i < hi; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const double w = data.weights[i] * rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            s.mass[j] += w;
            s.first[j] += w * data.samples[i];
          }
        }
        return s;
      },
      detail::add_sums);

  std::vector<Vector> means(k);
  for (std::size_t j = 0; j < k; ++j) {
    means[j] = first_pass.mass[j] > 0.0 ? Vector(first_pass.first[j] / first_pass.mass[j]) : Vector::Zero(d);
  }

  auto second_pass = blocked_reduce(
      m, detail::zero_sums(k, d, true),
      [&](std::size_t lo, std::size_t hi) {
        auto s = detail::zero_sums(k, d, true);
        for (std::size_t i = lo; i < hi; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const double w = data.weights[i] * rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (w == 0.0) continue;
            const Vector c = data.samples[i] - means[j];
            s.scatter[j].noalias() += w * c * c.transpose();
          }
        }
        return s;
      },
      detail::add_sums);

  const double total = std::accumulate(first_pass.mass.begin(), first_pass.mass.end(), 0.0);
  if (!(total > 0.0)) throw DegenerateError("m_step: total weighted responsibility is zero");

  MStepResult out;
  std::vector<GaussianComponent> comps(k);
  for (std::size_t j = 0; j < k; ++j) {
    if (first_pass.mass[j] < kEmptyComponentMass) {
      out.empty_components.push_back(j);
      comps[j].weight = 0.0;
      if (previous != nullptr) {
        comps[j].mean = (*previous)[j].mean;
        comps[j].cov = (*previous)[j].cov;
      } else {
        comps[j].mean = Vector::Zero(d);
        comps[j].cov = Matrix::Identity(d, d);
      }
      continue;
    }
    comps[j].weight = first_pass.mass[j] / total;
    comps[j].mean = means[j];
    comps[j].cov = floor_covariance(second_pass.scatter[j] / first_pass.mass[j], cov_floor);
  }
  // Renormalize so the invariant sum w = 1 holds to rounding.
  double wsum = 0.0;
  for (const auto& c : comps) wsum += c.weight;
  for (auto& c : comps) c.weight /= wsum;
  out.mixture = GaussianMixture(std::move(comps));
  return out;
}

struct WeightedMoments {
  Vector mean;
  Matrix cov;
};

inline WeightedMoments weighted_moments(const WeightedSampleSet& data) {
  const auto d = static_cast<Eigen::Index>(data.dim());
  const auto mean = blocked_reduce(
      data.size(), Vector(Vector::Zero(d)),
      [&](std::size_t lo, std::size_t hi) {
        Vector s = Vector::Zero(d);
        for (std::size_t i = lo; i < hi; ++i) s += data.weights[i] * data.samples[i];
        return s;
      },
      [](Vector a, const Vector& b) { return Vector(a + b); });
  const auto cov = blocked_reduce(
      data.size(), Matrix(Matrix::Zero(d, d)),
      [&](std::size_t lo, std::size_t hi) {
        Matrix s = Matrix::Zero(d, d);
        for (std::size_t i = lo; i < hi; ++i) {
          const Vector c = data.samples[i] - mean;
          s.noalias() += data.weights[i] * c * c.transpose();
        }
        return s;
      },
      [](Matrix a, const Matrix& b) { return Matrix(a + b); });
  return {mean, cov};
}

struct EmConfig {
  std::size_t K = 1;
  std::size_t max_iter = 500;
  double tol = 1e-8;
  // Covariance floor relative to the weighted total variance (trace of the
  // pooled weighted covariance); cov_floor_abs, when set, overrides it.
  double cov_floor_rel = 1e-6;
  std::optional<double> cov_floor_abs;
  Seed seed = 0;
  ImportanceWeighting weighting = ImportanceWeighting::likelihood;
};

struct EmReport {
  std::size_t iterations = 0;
  bool converged = false;
  double log_likelihood = 0.0;
  std::vector<double> history;       // L after initialization and after each iteration
  std::vector<std::size_t> reseeds;  // iterations at which an empty component was reseeded
  double cov_floor = 0.0;
  double ess = 0.0;
  std::vector<std::string> warnings;
};

struct EmResult {
  GaussianMixture mixture;
  EmReport report;
};

namespace detail {

inline std::size_t draw_index(const std::vector<double>& probs, Rng& rng) {
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

inline double weighted_log_likelihood(const WeightedSampleSet& data, const Vector& log_mix) {
  return blocked_reduce(
      data.size(), 0.0,
      [&](std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
          if (data.weights[i] > 0.0) s += data.weights[i] * log_mix[static_cast<Eigen::Index>(i)];
        }
        return s;
      },
      [](double a, double b) { return a + b; });
}

}  // namespace detail

// Means by k-means++ spreading on the weighted set (first pick with
// probability r_i, later picks with probability r_i * D_i^2), covariances set
// to the pooled weighted covariance, equal weights 1/K.
inline GaussianMixture initialize_mixture(const WeightedSampleSet& data, std::size_t K, double cov_floor, Seed seed) {
  Rng rng(seed);
  const std::size_t m = data.size();
  const auto pooled = weighted_moments(data);
  const Matrix cov = floor_covariance(pooled.cov, cov_floor);

  std::vector<std::size_t> chosen;
  std::vector<double> dist2(m, std::numeric_limits<double>::infinity());
  std::vector<double> probs(m);
  for (std::size_t c = 0; c < K; ++c) {
    for (std::size_t i = 0; i < m; ++i) probs[i] = c == 0 ? data.weights[i] : data.weights[i] * dist2[i];
    bool any = std::any_of(probs.begin(), probs.end(), [](double p) { return p > 0.0; });
    if (!any) {
      // Every weighted point already chosen: fall back to unchosen points.
      for (std::size_t i = 0; i < m; ++i) probs[i] = dist2[i] > 0.0 ? 1.0 : 0.0;
      any = std::any_of(probs.begin(), probs.end(), [](double p) { return p > 0.0; });
      if (!any) std::fill(probs.begin(), probs.end(), 1.0);
    }
    const std::size_t pick = detail::draw_index(probs, rng);
    chosen.push_back(pick);
    for (std::size_t i = 0; i < m; ++i) dist2[i] = std::min(dist2[i], (data.samples[i] - data.samples[pick]).squaredNorm());
  }

  std::vector<GaussianComponent> comps;
  comps.reserve(K);
  for (auto idx : chosen) comps.push_back({1.0 / static_cast<double>(K), data.samples[idx], cov});
  return GaussianMixture(std::move(comps));
}

inline EmResult em_fit_weighted(const WeightedSampleSet& data, const EmConfig& config) {
  detail::require(config.K >= 1, "EM needs K >= 1");
  detail::require(config.max_iter >= 1, "EM needs max_iter >= 1");
  detail::require(config.tol > 0.0, "EM tolerance must be positive");
  detail::require(data.size() > 0, "EM needs samples");
  const std::size_t d = data.dim();

  EmReport report;
  {
    double s2 = 0.0;
    for (double w : data.weights) s2 += w * w;
    report.ess = 1.0 / s2;
  }
  // One effective sample carries no spread to fit a covariance to.
  if (!(report.ess >= 2.0)) {
    throw DegenerateError("importance weights collapsed onto a single sample (ESS " + std::to_string(report.ess) +
                          "); observation far outside the prior's reach");
  }
  if (data.size() < 10 * config.K * d) {
    report.warnings.push_back("sample count " + std::to_string(data.size()) + " below 10*K*d = " +
                              std::to_string(10 * config.K * d));
  }
  const auto pooled = weighted_moments(data);
  const double cov_floor = config.cov_floor_abs.value_or(config.cov_floor_rel * std::max(pooled.cov.trace(), 1e-300));
  detail::require(cov_floor > 0.0, "cov_floor must be positive");
  report.cov_floor = cov_floor;

  GaussianMixture mixture = initialize_mixture(data, config.K, cov_floor, config.seed);
  auto es = e_step(mixture, data.samples);
  double ll = detail::weighted_log_likelihood(data, es.log_mix_density);
  report.history.push_back(ll);

  for (std::size_t it = 1; it <= config.max_iter; ++it) {
    auto ms = m_step(data, es.rho, cov_floor, &mixture);
    bool reseeded = false;
    if (!ms.empty_components.empty()) {
      // Reseed at the sample whose weight the current mixture explains worst.
      auto comps = ms.mixture.components();
      for (auto j : ms.empty_components) {
        std::size_t best = 0;
        double best_score = kNegInf;
        for (std::size_t i = 0; i < data.size(); ++i) {
          if (data.weights[i] <= 0.0) continue;
          const double score = std::log(data.weights[i]) - es.log_mix_density[static_cast<Eigen::Index>(i)];
          if (score > best_score) {
            best_score = score;
            best = i;
          }
        }
        comps[j] = {1.0 / static_cast<double>(config.K), data.samples[best], floor_covariance(pooled.cov, cov_floor)};
      }
      double wsum = 0.0;
      for (const auto& c : comps) wsum += c.weight;
      for (auto& c : comps) c.weight /= wsum;
      ms.mixture = GaussianMixture(std::move(comps));
      reseeded = true;
      report.reseeds.push_back(it);
    }
    mixture = std::move(ms.mixture);
    es = e_step(mixture, data.samples);
    const double next = detail::weighted_log_likelihood(data, es.log_mix_density);
    report.history.push_back(next);
    report.iterations = it;
    const bool small_change = std::fabs(next - ll) <= config.tol * std::max(1.0, std::fabs(ll));
    ll = next;
    if (!reseeded && small_change) {
      report.converged = true;
      break;
    }
  }
  report.log_likelihood = ll;
  return {std::move(mixture), std::move(report)};
}

// Draws M prior samples (substreams of prior_seed), weights them and fits.
inline EmResult em_fit(const PosteriorSpec& model, std::size_t M, const EmConfig& config, Seed prior_seed) {
  detail::require(M >= 1, "EM needs at least one prior sample");
  auto samples = prior_sample(model.prior(), M, prior_seed);
  const auto data = importance_weights(model, std::move(samples), config.weighting);
  return em_fit_weighted(data, config);
}

}  // namespace pppbayes
