#pragma once

// Finite Poisson point processes on R^d: Poisson counts, mixed binomial
// construction, thinning against a bounded intensity, superposition,
// mapping and independent marking.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pppbayes/errors.hpp"
#include "pppbayes/linalg.hpp"
#include "pppbayes/random.hpp"

namespace pppbayes {

// A finite multiset of points in R^dim, kept in insertion order.
class PointPattern {
 public:
  explicit PointPattern(std::size_t dim = 1) : dim_(dim) {
    detail::require(dim > 0, "pattern dimension must be positive");
  }
  PointPattern(std::size_t dim, std::vector<Vector> points) : PointPattern(dim) {
    points_.reserve(points.size());
    for (auto& p : points) push_back(std::move(p));
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }

  void reserve(std::size_t n) { points_.reserve(n); }
  void push_back(Vector p) {
    if (static_cast<std::size_t>(p.size()) != dim_) {
      throw InvalidArgument("point of length " + std::to_string(p.size()) +
                            " in pattern of dim " + std::to_string(dim_));
    }
    points_.push_back(std::move(p));
  }

  const Vector& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<Vector>& points() const noexcept { return points_; }
  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }

  friend bool operator==(const PointPattern& a, const PointPattern& b) {
    if (a.dim_ != b.dim_ || a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.points_[i] != b.points_[i]) return false;
    }
    return true;
  }

 private:
  std::size_t dim_;
  std::vector<Vector> points_;
};

template <typename Mark>
struct MarkedPattern {
  std::size_t dim = 1;
  std::vector<std::pair<Vector, Mark>> pairs;

  std::size_t size() const noexcept { return pairs.size(); }
};

class AxisBox {
 public:
  AxisBox(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    detail::require(lower_.size() == upper_.size() && lower_.size() > 0,
                    "box bounds must have equal positive length");
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
      detail::require(std::isfinite(lower_[i]) && std::isfinite(upper_[i]) && lower_[i] < upper_[i],
                      "box requires lower < upper on every axis");
    }
  }

  static AxisBox unit(std::size_t dim) {
    return {Vector::Zero(static_cast<Eigen::Index>(dim)), Vector::Ones(static_cast<Eigen::Index>(dim))};
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(lower_.size()); }
  const Vector& lower() const noexcept { return lower_; }
  const Vector& upper() const noexcept { return upper_; }
  double volume() const { return (upper_ - lower_).prod(); }

  bool contains(const Vector& x) const {
    if (x.size() != lower_.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] < lower_[i] || x[i] > upper_[i]) return false;
    }
    return true;
  }

  Vector sample_uniform(Rng& rng) const {
    Vector x(lower_.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(lower_[i], upper_[i]);
    return x;
  }

 private:
  Vector lower_;
  Vector upper_;
};

using IntensityFn = std::function<double(const Vector&)>;

// An intensity function together with a box and a claimed upper bound on it.
// Construction probes the bound at random points; thinning re-checks every
// evaluation and raises BoundViolation if the claim turns out false.
class BoundedIntensity {
 public:
  static constexpr std::size_t kDefaultProbes = 10000;

  BoundedIntensity(IntensityFn eval, AxisBox box, double lambda_max,
                   std::size_t probes = kDefaultProbes, Seed probe_seed = 0x5eed)
      : eval_(std::move(eval)), box_(std::move(box)), lambda_max_(lambda_max) {
    detail::require(static_cast<bool>(eval_), "intensity function is empty");
    detail::require(std::isfinite(lambda_max_) && lambda_max_ > 0.0, "lambda_max must be positive and finite");
    Rng rng(probe_seed);
    for (std::size_t i = 0; i < probes; ++i) (void)checked_eval(box_.sample_uniform(rng));
  }

  const AxisBox& box() const noexcept { return box_; }
  double lambda_max() const noexcept { return lambda_max_; }

  // eval(x), validated against [0, lambda_max].
  double checked_eval(const Vector& x) const {
    const double v = eval_(x);
    if (!(v >= 0.0)) throw InvalidArgument("intensity must be nonnegative (got " + std::to_string(v) + ")");
    if (v > lambda_max_ * (1.0 + 1e-12)) {
      throw BoundViolation("intensity " + std::to_string(v) + " exceeds lambda_max " +
                           std::to_string(lambda_max_));
    }
    return v;
  }

 private:
  IntensityFn eval_;
  AxisBox box_;
  double lambda_max_;
};

inline std::uint64_t sample_poisson_count(double mean, Seed seed) {
  Rng rng(seed);
  return poisson_variate(rng, mean);
}

// Exactly `count` i.i.d. draws from `sampler` (the binomial process).
template <typename Sampler>
PointPattern sample_binomial(std::size_t dim, std::uint64_t count, Sampler&& sampler, Rng& rng) {
  PointPattern out(dim);
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(sampler(rng));
  return out;
}

// Poisson(count_mean) many i.i.d. draws from `sampler`; a PPP with intensity
// measure count_mean * (law of sampler).
template <typename Sampler>
PointPattern sample_mixed_binomial(double count_mean, std::size_t dim, Sampler&& sampler, Seed seed) {
  Rng rng(seed);
  const auto count = poisson_variate(rng, count_mean);
  return sample_binomial(dim, count, std::forward<Sampler>(sampler), rng);
}

inline PointPattern sample_homogeneous(const AxisBox& box, double rate, Seed seed) {
  detail::require(std::isfinite(rate) && rate > 0.0, "homogeneous rate must be positive");
  return sample_mixed_binomial(rate * box.volume(), box.dim(),
                               [&box](Rng& rng) { return box.sample_uniform(rng); }, seed);
}

inline PointPattern thin_candidates(const PointPattern& candidates, const BoundedIntensity& intensity,
                                    Seed seed) {
  detail::require(candidates.dim() == intensity.box().dim(), "candidate/intensity dimension mismatch");
  Rng rng(seed);
  PointPattern out(candidates.dim());
  for (const auto& p : candidates) {
    detail::require(intensity.box().contains(p), "candidate lies outside the intensity box");
    const double accept = intensity.checked_eval(p) / intensity.lambda_max();
    if (rng.uniform() < accept) out.push_back(p);
  }
  return out;
}

// Candidates from a homogeneous PPP at rate lambda_max on the box, then
// independent thinning with probability eval/lambda_max.
inline PointPattern sample_ppp_thinning(const BoundedIntensity& intensity, Seed seed) {
  const auto candidates = sample_homogeneous(intensity.box(), intensity.lambda_max(), derive_seed(seed, {1}));
  return thin_candidates(candidates, intensity, derive_seed(seed, {2}));
}

inline PointPattern superpose(const std::vector<PointPattern>& patterns, std::size_t dim) {
  PointPattern out(dim);
  std::size_t total = 0;
  for (const auto& p : patterns) {
    detail::require(p.dim() == dim, "superpose: mixed pattern dimensions");
    total += p.size();
  }
  out.reserve(total);
  for (const auto& p : patterns) {
    for (const auto& x : p) out.push_back(x);
  }
  return out;
}

inline PointPattern superpose(const std::vector<PointPattern>& patterns) {
  detail::require(!patterns.empty(), "superpose of an empty list needs an explicit dim");
  return superpose(patterns, patterns.front().dim());
}

template <typename Map>
PointPattern map_pattern(const PointPattern& pattern, Map&& f, std::size_t out_dim) {
  PointPattern out(out_dim);
  out.reserve(pattern.size());
  for (const auto& x : pattern) {
    Vector y = f(x);
    if (static_cast<std::size_t>(y.size()) != out_dim) {
      throw ContractViolation("map_pattern: image has length " + std::to_string(y.size()) +
                              ", expected " + std::to_string(out_dim));
    }
    out.push_back(std::move(y));
  }
  return out;
}

// kernel(point, rng) draws one mark from the kernel's distribution at point.
template <typename Kernel>
auto mark_pattern(const PointPattern& pattern, Kernel&& kernel, Seed seed)
    -> MarkedPattern<std::decay_t<decltype(kernel(pattern[0], std::declval<Rng&>()))>> {
  using Mark = std::decay_t<decltype(kernel(pattern[0], std::declval<Rng&>()))>;
  Rng rng(seed);
  MarkedPattern<Mark> out;
  out.dim = pattern.dim();
  out.pairs.reserve(pattern.size());
  for (const auto& x : pattern) out.pairs.emplace_back(x, kernel(x, rng));
  return out;
}

// The binary kernel (1 - pi) delta_0 + pi delta_1.
template <typename Retention>
auto retention_kernel(Retention retention) {
  return [retention = std::move(retention)](const Vector& x, Rng& rng) -> int {
    const double p = retention(x);
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidArgument("retention probability " + std::to_string(p) + " outside [0,1]");
    }
    return rng.uniform() < p ? 1 : 0;
  };
}

template <typename Retention>
PointPattern thin_by_retention(const PointPattern& pattern, Retention&& retention, Seed seed) {
  const auto marked = mark_pattern(pattern, retention_kernel(std::forward<Retention>(retention)), seed);
  PointPattern out(pattern.dim());
  for (const auto& [x, mark] : marked.pairs) {
    if (mark == 1) out.push_back(x);
  }
  return out;
}

template <typename Region>
std::size_t count_in_region(const PointPattern& pattern, Region&& region) {
  std::size_t n = 0;
  for (const auto& x : pattern) {
    if (region(x)) ++n;
  }
  return n;
}

}  // namespace pppbayes
