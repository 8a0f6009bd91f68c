#pragma once

// Bayesian inverse problem u = G(theta) + xi, xi ~ N(0, Sigma): priors, the
// data-misfit potential, the unnormalized posterior and the PPP intensity
// gamma * exp(-potential) * prior density.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pppbayes/errors.hpp"
#include "pppbayes/linalg.hpp"
#include "pppbayes/parallel.hpp"
#include "pppbayes/point_process.hpp"
#include "pppbayes/random.hpp"

namespace pppbayes {

using ForwardMap = std::function<Vector(const Vector&)>;
using JacobianMap = std::function<Matrix(const Vector&)>;

struct GaussianPrior {
  Vector mean;
  Matrix cov;
};

struct UniformBoxPrior {
  AxisBox box;
};

class PriorSpec {
 public:
  PriorSpec(GaussianPrior g) : spec_(g), factor_(GaussianFactor(g.mean, g.cov)) {}  // NOLINT
  PriorSpec(UniformBoxPrior u) : spec_(std::move(u)) {}                              // NOLINT

  static PriorSpec standard_normal(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return GaussianPrior{Vector::Zero(d), Matrix::Identity(d, d)};
  }

  std::size_t dim() const {
    if (const auto* g = gaussian()) return static_cast<std::size_t>(g->mean.size());
    return uniform()->box.dim();
  }

  const GaussianPrior* gaussian() const { return std::get_if<GaussianPrior>(&spec_); }
  const UniformBoxPrior* uniform() const { return std::get_if<UniformBoxPrior>(&spec_); }

  Vector mean() const {
    if (const auto* g = gaussian()) return g->mean;
    const auto& b = uniform()->box;
    return 0.5 * (b.lower() + b.upper());
  }

  double log_density(const Vector& theta) const {
    if (gaussian()) return factor_->log_density(theta);
    const auto& box = uniform()->box;
    return box.contains(theta) ? -std::log(box.volume()) : kNegInf;
  }

  Vector sample(Rng& rng) const {
    if (gaussian()) {
      Vector z(static_cast<Eigen::Index>(dim()));
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
      return factor_->transform(z);
    }
    return uniform()->box.sample_uniform(rng);
  }

 private:
  std::variant<GaussianPrior, UniformBoxPrior> spec_;
  std::optional<GaussianFactor> factor_;
};

inline double prior_log_density(const PriorSpec& prior, const Vector& theta) {
  return prior.log_density(theta);
}

// n i.i.d. prior draws; draw i uses its own substream so the list is the
// same under any thread count.
inline std::vector<Vector> prior_sample(const PriorSpec& prior, std::size_t n, Seed seed) {
  std::vector<Vector> out(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(seed, {i}));
    out[i] = prior.sample(rng);
  });
  return out;
}

class PosteriorSpec {
 public:
  PosteriorSpec(ForwardMap forward, Vector observation, const Matrix& noise_cov, PriorSpec prior,
                JacobianMap jacobian = {})
      : forward_(std::move(forward)),
        jacobian_(std::move(jacobian)),
        observation_(std::move(observation)),
        noise_chol_(cholesky_lower(noise_cov, "noise covariance")),
        prior_(std::move(prior)) {
    detail::require(static_cast<bool>(forward_), "forward map is empty");
    detail::require(noise_chol_.rows() == observation_.size(),
                    "noise covariance size does not match observation length");
  }

  std::size_t dim() const { return prior_.dim(); }
  std::size_t obs_dim() const { return static_cast<std::size_t>(observation_.size()); }
  const Vector& observation() const noexcept { return observation_; }
  const PriorSpec& prior() const noexcept { return prior_; }
  const Matrix& noise_chol() const noexcept { return noise_chol_; }
  bool has_jacobian() const noexcept { return static_cast<bool>(jacobian_); }

  Vector forward(const Vector& theta) const {
    Vector g;
    try {
      g = forward_(theta);
    } catch (const ForwardError&) {
      throw;
    } catch (const std::exception& e) {
      throw ForwardError(std::string("forward map failed: ") + e.what());
    }
    if (g.size() != observation_.size()) {
      throw ForwardError("forward output length " + std::to_string(g.size()) +
                         " does not match observation length " + std::to_string(observation_.size()));
    }
    if (!g.allFinite()) throw ForwardError("forward map returned non-finite values");
    return g;
  }

  Matrix jacobian(const Vector& theta) const {
    detail::require(has_jacobian(), "model has no analytic jacobian");
    return jacobian_(theta);
  }

  // L^{-1}(G(theta) - u) with Sigma = L L^T.
  Vector whitened_residual(const Vector& theta) const {
    Vector r = forward(theta) - observation_;
    noise_chol_.triangularView<Eigen::Lower>().solveInPlace(r);
    return r;
  }

 private:
  ForwardMap forward_;
  JacobianMap jacobian_;
  Vector observation_;
  Matrix noise_chol_;
  PriorSpec prior_;
};

// (G(theta) - u)^T Sigma^{-1} (G(theta) - u), via the Cholesky factor.
inline double potential(const PosteriorSpec& model, const Vector& theta) {
  detail::require(static_cast<std::size_t>(theta.size()) == model.dim(), "theta has wrong length");
  return model.whitened_residual(theta).squaredNorm();
}

// grad = 2 J^T Sigma^{-1} (G - u).
inline Vector potential_gradient(const PosteriorSpec& model, const Vector& theta) {
  const Vector white = model.whitened_residual(theta);
  Matrix wj = model.jacobian(theta);
  model.noise_chol().triangularView<Eigen::Lower>().solveInPlace(wj);
  return 2.0 * wj.transpose() * white;
}

// log of exp(-potential) * prior density; -inf outside prior support, where
// the forward map is not evaluated.
inline double log_unnormalized_posterior(const PosteriorSpec& model, const Vector& theta) {
  const double lp = model.prior().log_density(theta);
  if (lp == kNegInf) return kNegInf;
  return lp - potential(model, theta);
}

inline double unnormalized_posterior_density(const PosteriorSpec& model, const Vector& theta) {
  return std::exp(log_unnormalized_posterior(model, theta));
}

class IntensitySpec {
 public:
  IntensitySpec(PosteriorSpec model, double gamma) : model_(std::move(model)), gamma_(gamma) {
    detail::require(std::isfinite(gamma_) && gamma_ > 0.0, "gamma must be positive");
  }
  const PosteriorSpec& model() const noexcept { return model_; }
  double gamma() const noexcept { return gamma_; }

 private:
  PosteriorSpec model_;
  double gamma_;
};

// gamma * exp(-potential) * prior; the normalizer Z is deliberately omitted.
inline double unnormalized_intensity(const IntensitySpec& spec, const Vector& theta) {
  return spec.gamma() * unnormalized_posterior_density(spec.model(), theta);
}

struct NormalizerEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

// Z = E_prior[exp(-potential)] by plain Monte Carlo over prior draws.
inline NormalizerEstimate estimate_normalizer(const PosteriorSpec& model, std::size_t n_samples, Seed seed) {
  detail::require(n_samples >= 100, "estimate_normalizer needs at least 100 samples");
  const auto draws = prior_sample(model.prior(), n_samples, seed);
  std::vector<double> like(n_samples);
  parallel_for(n_samples, [&](std::size_t i) { like[i] = std::exp(-potential(model, draws[i])); });
  struct Sums {
    double s = 0.0, s2 = 0.0;
  };
  const auto sums = blocked_reduce(
      n_samples, Sums{},
      [&](std::size_t lo, std::size_t hi) {
        Sums p;
        for (std::size_t i = lo; i < hi; ++i) {
          p.s += like[i];
          p.s2 += like[i] * like[i];
        }
        return p;
      },
      [](Sums a, const Sums& b) { return Sums{a.s + b.s, a.s2 + b.s2}; });
  if (!(sums.s > 0.0)) throw DegenerateError("all likelihood values are zero; normalizer estimate degenerate");
  const double n = static_cast<double>(n_samples);
  const double mean = sums.s / n;
  const double var = std::max(0.0, (sums.s2 / n - mean * mean) * n / (n - 1.0));
  return {mean, std::sqrt(var / n), n_samples};
}

}  // namespace pppbayes
