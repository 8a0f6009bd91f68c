#pragma once

// Statistical checks: grid densities with TV/Hellinger distances, Poisson
// count goodness of fit, disjoint-region independence, count convergence
// under forward-model refinement and an importance-sampling moment oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "pppbayes/bayes_model.hpp"
#include "pppbayes/errors.hpp"
#include "pppbayes/linalg.hpp"
#include "pppbayes/mixture_fit.hpp"
#include "pppbayes/parallel.hpp"
#include "pppbayes/point_process.hpp"

namespace pppbayes {

// ---------------------------------------------------------------------------
// Small distribution helpers

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double two_sided_normal_p(double z) { return std::erfc(std::fabs(z) / std::numbers::sqrt2); }

inline double chi_square_sf(double statistic, double dof) {
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * statistic);
}

// ---------------------------------------------------------------------------
// Grid densities (d <= 3), values at cell centers, last axis fastest.

struct GridDensity {
  AxisBox box;
  std::vector<std::size_t> resolution;
  std::vector<double> values;
  double cell_volume = 0.0;

  std::size_t dim() const { return resolution.size(); }
  std::size_t cells() const { return values.size(); }

  Vector cell_center(std::size_t flat) const {
    const auto d = resolution.size();
    Vector x(static_cast<Eigen::Index>(d));
    for (std::size_t a = d; a-- > 0;) {
      const std::size_t i = flat % resolution[a];
      flat /= resolution[a];
      const auto e = static_cast<Eigen::Index>(a);
      const double w = (box.upper()[e] - box.lower()[e]) / static_cast<double>(resolution[a]);
      x[e] = box.lower()[e] + (static_cast<double>(i) + 0.5) * w;
    }
    return x;
  }

  double mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * cell_volume;
  }

  Vector mean() const {
    Vector m = Vector::Zero(static_cast<Eigen::Index>(dim()));
    for (std::size_t c = 0; c < cells(); ++c) m += values[c] * cell_volume * cell_center(c);
    return m;
  }

  Matrix covariance() const {
    const Vector m = mean();
    const auto d = static_cast<Eigen::Index>(dim());
    Matrix s = Matrix::Zero(d, d);
    for (std::size_t c = 0; c < cells(); ++c) {
      const Vector x = cell_center(c) - m;
      s.noalias() += values[c] * cell_volume * x * x.transpose();
    }
    return s;
  }
};

namespace detail {

inline GridDensity make_grid(const AxisBox& box, const std::vector<std::size_t>& resolution) {
  require(box.dim() == resolution.size(), "grid resolution must give one entry per box axis");
  require(!resolution.empty() && resolution.size() <= 3, "grid densities support dimension 1 to 3");
  std::size_t cells = 1;
  double vol = 1.0;
  for (std::size_t a = 0; a < resolution.size(); ++a) {
    require(resolution[a] >= 1, "grid resolution must be positive");
    cells *= resolution[a];
    const auto e = static_cast<Eigen::Index>(a);
    vol *= (box.upper()[e] - box.lower()[e]) / static_cast<double>(resolution[a]);
  }
  return GridDensity{box, resolution, std::vector<double>(cells, 0.0), vol};
}

inline void normalize_grid(GridDensity& g) {
  const double mass = g.mass();
  if (!(mass > 0.0) || !std::isfinite(mass)) throw DegenerateError("grid density has zero total mass");
  for (double& v : g.values) v /= mass;
}

}  // namespace detail

// Evaluates density_fn at cell centers and normalizes by the midpoint-rule mass.
inline GridDensity grid_density(const std::function<double(const Vector&)>& density_fn, const AxisBox& box,
                                const std::vector<std::size_t>& resolution) {
  auto g = detail::make_grid(box, resolution);
  parallel_for(g.cells(), [&](std::size_t c) {
    const double v = density_fn(g.cell_center(c));
    if (!(v >= 0.0)) throw InvalidArgument("density must be nonnegative");
    g.values[c] = v;
  });
  detail::normalize_grid(g);
  return g;
}

// As grid_density, from a log-density; shifts by the maximum before exp so
// sharply peaked posteriors do not underflow.
inline GridDensity grid_density_log(const std::function<double(const Vector&)>& log_density_fn, const AxisBox& box,
                                    const std::vector<std::size_t>& resolution) {
  auto g = detail::make_grid(box, resolution);
  parallel_for(g.cells(), [&](std::size_t c) { g.values[c] = log_density_fn(g.cell_center(c)); });
  const double mx = *std::max_element(g.values.begin(), g.values.end());
  if (!std::isfinite(mx)) throw DegenerateError("grid log-density is -inf everywhere");
  for (double& v : g.values) v = std::exp(v - mx);
  detail::normalize_grid(g);
  return g;
}

inline void check_matching(const GridDensity& a, const GridDensity& b) {
  const bool same = a.resolution == b.resolution && a.box.lower() == b.box.lower() && a.box.upper() == b.box.upper();
  if (!same) throw InvalidArgument("grid densities are defined on different grids");
}

inline double estimate_tv(const GridDensity& a, const GridDensity& b) {
  check_matching(a, b);
  double s = 0.0;
  for (std::size_t c = 0; c < a.cells(); ++c) s += std::fabs(a.values[c] - b.values[c]);
  return std::clamp(0.5 * s * a.cell_volume, 0.0, 1.0);
}

inline double estimate_hellinger(const GridDensity& a, const GridDensity& b) {
  check_matching(a, b);
  double s = 0.0;
  for (std::size_t c = 0; c < a.cells(); ++c) {
    const double d = std::sqrt(a.values[c]) - std::sqrt(b.values[c]);
    s += d * d;
  }
  return std::clamp(std::sqrt(0.5 * s * a.cell_volume), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Poisson count goodness of fit

struct GofResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
  std::size_t bins = 0;
};

// Pearson chi-square against Poisson(mean). Bins are single counts except the
// two tails, which are pooled until each expected frequency is at least 5.
inline GofResult poisson_count_gof(const std::vector<std::uint64_t>& counts, double mean) {
  detail::require(counts.size() >= 500, "poisson_count_gof needs at least 500 counts");
  detail::require(std::isfinite(mean) && mean > 0.0, "poisson_count_gof needs a positive mean");
  const double n = static_cast<double>(counts.size());
  constexpr double kMinExpected = 5.0;

  // Bin edges [lo_b, hi_b]; the last bin is open-ended.
  struct Bin {
    std::uint64_t lo;
    double prob;
  };
  std::vector<Bin> bins;
  double p = std::exp(-mean);
  double cdf = 0.0;
  std::uint64_t k = 0;
  double acc = 0.0;
  std::uint64_t lo = 0;
  // Walk up until the remaining upper-tail mass itself is below threshold.
  while (true) {
    acc += p;
    cdf += p;
    const double tail = std::max(0.0, 1.0 - cdf);
    if (acc * n >= kMinExpected && tail * n >= kMinExpected) {
      bins.push_back({lo, acc});
      acc = 0.0;
      lo = k + 1;
    }
    if (tail * n < kMinExpected) {
      // Fold the current partial bin and the upper tail into one open bin.
      const double last = acc + tail;
      if (bins.empty() || last * n >= kMinExpected) {
        bins.push_back({lo, last});
      } else {
        bins.back().prob += last;
      }
      break;
    }
    ++k;
    p *= mean / static_cast<double>(k);
  }

  std::vector<double> observed(bins.size(), 0.0);
  for (auto c : counts) {
    std::size_t b = bins.size() - 1;
    while (b > 0 && c < bins[b].lo) --b;
    observed[b] += 1.0;
  }
  GofResult r;
  r.bins = bins.size();
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const double e = bins[b].prob * n;
    r.statistic += (observed[b] - e) * (observed[b] - e) / e;
  }
  r.dof = static_cast<double>(bins.size()) - 1.0;
  r.p_value = r.dof > 0.0 ? chi_square_sf(r.statistic, r.dof) : 1.0;
  return r;
}

// ---------------------------------------------------------------------------
// Independence of counts in disjoint regions

struct CorrelationResult {
  double rho = 0.0;
  double band = 0.0;  // half-width of the 95% normal-approximation band around 0
  std::size_t n = 0;
};

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

template <typename RegionA, typename RegionB>
CorrelationResult disjoint_independence(const std::vector<PointPattern>& patterns, RegionA&& region_a,
                                        RegionB&& region_b) {
  detail::require(patterns.size() >= 500, "disjoint_independence needs at least 500 patterns");
  std::vector<double> ca, cb;
  ca.reserve(patterns.size());
  cb.reserve(patterns.size());
  for (const auto& pat : patterns) {
    double na = 0, nb = 0;
    for (const auto& x : pat) {
      const bool in_a = region_a(x), in_b = region_b(x);
      if (in_a && in_b) throw InvalidArgument("regions overlap at a sampled point");
      na += in_a;
      nb += in_b;
    }
    ca.push_back(na);
    cb.push_back(nb);
  }
  return {pearson(ca, cb), 1.96 / std::sqrt(static_cast<double>(patterns.size())), patterns.size()};
}

// ---------------------------------------------------------------------------
// Count convergence under refinement of the forward model

struct CountConvergenceRow {
  std::size_t resolution = 0;
  std::vector<double> intensity;  // gamma * mu_N(A) for each region
  std::vector<double> deviation;  // |row - reference row|
};

using RegionPredicate = std::function<bool(const Vector&)>;

// Rows in the order of `resolutions`; the last entry is the reference.
inline std::vector<CountConvergenceRow> count_convergence_study(
    const std::function<PosteriorSpec(std::size_t)>& model_family, double gamma,
    const std::vector<RegionPredicate>& regions, const std::vector<std::size_t>& resolutions, const AxisBox& box,
    const std::vector<std::size_t>& grid_resolution) {
  detail::require(!resolutions.empty(), "count_convergence_study needs at least one resolution");
  detail::require(gamma > 0.0, "gamma must be positive");
  std::vector<CountConvergenceRow> rows;
  for (auto res : resolutions) {
    const PosteriorSpec model = model_family(res);
    const auto g = grid_density_log([&](const Vector& t) { return log_unnormalized_posterior(model, t); }, box,
                                    grid_resolution);
    CountConvergenceRow row{res, std::vector<double>(regions.size(), 0.0), {}};
    for (std::size_t c = 0; c < g.cells(); ++c) {
      if (g.values[c] == 0.0) continue;
      const Vector x = g.cell_center(c);
      for (std::size_t r = 0; r < regions.size(); ++r) {
        if (regions[r](x)) row.intensity[r] += g.values[c] * g.cell_volume;
      }
    }
    for (double& v : row.intensity) v *= gamma;
    rows.push_back(std::move(row));
  }
  const auto& ref = rows.back().intensity;
  for (auto& row : rows) {
    row.deviation.resize(ref.size());
    for (std::size_t r = 0; r < ref.size(); ++r) row.deviation[r] = std::fabs(row.intensity[r] - ref[r]);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Importance-sampling oracle

struct MomentReport {
  Vector mean;
  Matrix covariance;
  double ess = 0.0;
  Vector std_error;  // sqrt(diag(cov) / ess)
  std::size_t samples = 0;
  std::optional<std::string> warning;
};

inline constexpr double kMinReliableEss = 50.0;

inline MomentReport moments_from_weighted(const WeightedSampleSet& data) {
  const auto wm = weighted_moments(data);
  double s2 = 0.0;
  for (double w : data.weights) s2 += w * w;
  MomentReport r;
  r.mean = wm.mean;
  r.covariance = 0.5 * (wm.cov + wm.cov.transpose());
  r.ess = 1.0 / s2;
  r.std_error = (r.covariance.diagonal() / r.ess).cwiseSqrt();
  r.samples = data.size();
  if (r.ess < kMinReliableEss) {
    r.warning = "effective sample size " + std::to_string(r.ess) + " below " + std::to_string(kMinReliableEss) +
                "; oracle unreliable";
  }
  return r;
}

// Self-normalized importance sampling with prior draws and likelihood weights.
inline MomentReport oracle_moments(const PosteriorSpec& model, std::size_t M, Seed seed) {
  detail::require(M >= 1000, "oracle_moments needs M >= 1000");
  auto samples = prior_sample(model.prior(), M, seed);
  return moments_from_weighted(importance_weights(model, std::move(samples)));
}

// ---------------------------------------------------------------------------
// Report records

struct DiagnosticRecord {
  std::string test_name;
  double statistic = 0.0;
  std::optional<double> p_value;
  std::optional<double> distance;
  std::map<std::string, double> params;
  bool pass = false;
};

inline DiagnosticRecord named_record(std::string name) {
  DiagnosticRecord d;
  d.test_name = std::move(name);
  return d;
}

}  // namespace pppbayes
