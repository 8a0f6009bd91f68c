#pragma once

// Forward maps for the four inversion experiments: two closed forms, a 1-D
// elliptic problem with a KL-expanded log-coefficient, and 2-D steady heat
// conduction with two circular inclusions.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "pppbayes/errors.hpp"
#include "pppbayes/linalg.hpp"

namespace pppbayes {

// ---------------------------------------------------------------------------
// Closed-form maps

struct UnimodalSetup {
  double x1 = 0.25;
  double x2 = 0.75;
  double noise_var = 0.01;
};

// u(x) = theta2 * x + exp(-theta1) * (x/2 - x^2/2), observed at x1, x2.
inline Vector unimodal_forward(const Vector& theta, const UnimodalSetup& setup = {}) {
  detail::require(theta.size() == 2, "unimodal model takes 2 parameters");
  auto u = [&](double x) { return theta[1] * x + std::exp(-theta[0]) * (x / 2.0 - x * x / 2.0); };
  return Vector{{u(setup.x1), u(setup.x2)}};
}

inline Matrix unimodal_jacobian(const Vector& theta, const UnimodalSetup& setup = {}) {
  Matrix j(2, 2);
  const double e = std::exp(-theta[0]);
  const double xs[2] = {setup.x1, setup.x2};
  for (int r = 0; r < 2; ++r) {
    j(r, 0) = -e * (xs[r] / 2.0 - xs[r] * xs[r] / 2.0);
    j(r, 1) = xs[r];
  }
  return j;
}

// G(theta) = (theta1 - theta2)^2
inline Vector bimodal_forward(const Vector& theta) {
  detail::require(theta.size() == 2, "bimodal model takes 2 parameters");
  const double diff = theta[0] - theta[1];
  return Vector::Constant(1, diff * diff);
}

inline Matrix bimodal_jacobian(const Vector& theta) {
  const double diff = theta[0] - theta[1];
  Matrix j(1, 2);
  j << 2.0 * diff, -2.0 * diff;
  return j;
}

// ---------------------------------------------------------------------------
// 1-D elliptic problem -(exp(p) u')' = 1 on [0,1], u(0) = u(1) = 0

struct Grid1d {
  std::vector<double> x;
  std::vector<double> u;

  // Piecewise-linear interpolation on the uniform mesh.
  double at(double xq) const {
    detail::require(xq >= 0.0 && xq <= 1.0, "interpolation point outside [0,1]");
    const std::size_t cells = x.size() - 1;
    const double s = xq * static_cast<double>(cells);
    std::size_t i = static_cast<std::size_t>(std::floor(s));
    if (i >= cells) i = cells - 1;
    const double t = s - static_cast<double>(i);
    return (1.0 - t) * u[i] + t * u[i + 1];
  }
};

// Conservative three-point scheme with exp(p) sampled at cell midpoints,
// solved by the Thomas algorithm.
template <typename LogCoeff>
Grid1d solve_elliptic_1d(LogCoeff&& log_coeff, std::size_t n_nodes) {
  detail::require<SolverInputError>(n_nodes >= 11, "solve_elliptic_1d needs at least 11 nodes");
  const std::size_t cells = n_nodes - 1;
  const double h = 1.0 / static_cast<double>(cells);
  std::vector<double> a(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    const double p = log_coeff((static_cast<double>(c) + 0.5) * h);
    const double coeff = std::exp(p);
    if (!std::isfinite(p) || !std::isfinite(coeff) || !(coeff > 0.0)) {
      throw SolverInputError("non-finite diffusion coefficient at cell " + std::to_string(c));
    }
    a[c] = coeff;
  }

  Grid1d g;
  g.x.resize(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) g.x[i] = static_cast<double>(i) * h;
  g.u.assign(n_nodes, 0.0);

  // Interior unknowns 1..n-2: -a_{i-1} u_{i-1} + (a_{i-1} + a_i) u_i - a_i u_{i+1} = h^2
  const std::size_t m = n_nodes - 2;
  std::vector<double> cprime(m), dprime(m);
  const double rhs = h * h;
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = k + 1;
    const double lower = -a[i - 1];
    const double diag = a[i - 1] + a[i];
    const double upper = -a[i];
    const double denom = k == 0 ? diag : diag - lower * cprime[k - 1];
    cprime[k] = upper / denom;
    dprime[k] = (k == 0 ? rhs : rhs - lower * dprime[k - 1]) / denom;
  }
  for (std::size_t k = m; k-- > 0;) {
    g.u[k + 1] = k + 1 == m ? dprime[k] : dprime[k] - cprime[k] * g.u[k + 2];
  }
  return g;
}

// p(x) = sum_k theta_k sqrt(2) sin(k pi x); theta_k already carries the
// lambda_k^{-s} prior scaling.
inline double kl_expand(const Vector& theta, double x) {
  double p = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    p += theta[k] * std::numbers::sqrt2 * std::sin(static_cast<double>(k + 1) * std::numbers::pi * x);
  }
  return p;
}

inline std::vector<double> kl_expand(const Vector& theta, const std::vector<double>& xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(kl_expand(theta, x));
  return out;
}

struct KLSetup {
  std::size_t N = 3;
  double s = 1.0;
  std::size_t n_nodes = 101;
  std::vector<double> obs_points = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double noise_var = 1e-4;

  // Prior variance of theta_k: eigenvalue^{-s} with eigenvalue (k pi)^2.
  Vector prior_variances() const {
    Vector v(static_cast<Eigen::Index>(N));
    for (std::size_t k = 0; k < N; ++k) {
      v[static_cast<Eigen::Index>(k)] = std::pow(std::pow(static_cast<double>(k + 1) * std::numbers::pi, 2), -s);
    }
    return v;
  }
};

inline Vector kl_forward(const KLSetup& setup, const Vector& theta) {
  detail::require(static_cast<std::size_t>(theta.size()) == setup.N, "kl model takes N parameters");
  const auto grid = solve_elliptic_1d([&](double x) { return kl_expand(theta, x); }, setup.n_nodes);
  Vector out(static_cast<Eigen::Index>(setup.obs_points.size()));
  for (std::size_t i = 0; i < setup.obs_points.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = grid.at(setup.obs_points[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2-D steady diffusion on the unit square, vertex-centered finite volumes.
// y = 1 is the Dirichlet ("top") edge, y = 0 carries a prescribed inward flux
// q = -kappa du/dy, and x = 0, 1 are insulated.

struct Grid2d {
  std::size_t n = 0;       // nodes per axis, spacing 1/(n-1)
  std::vector<double> u;   // u[j * n + i] at (x_i, y_j)

  double node(std::size_t i, std::size_t j) const { return u[j * n + i]; }

  double bilinear(double x, double y) const {
    const double cells = static_cast<double>(n - 1);
    auto locate = [&](double t, std::size_t& idx, double& frac) {
      detail::require(t >= 0.0 && t <= 1.0, "interpolation point outside the unit square");
      const double s = t * cells;
      idx = std::min(static_cast<std::size_t>(std::floor(s)), n - 2);
      frac = s - static_cast<double>(idx);
    };
    std::size_t i, j;
    double fx, fy;
    locate(x, i, fx);
    locate(y, j, fy);
    return (1 - fx) * (1 - fy) * node(i, j) + fx * (1 - fy) * node(i + 1, j) + (1 - fx) * fy * node(i, j + 1) +
           fx * fy * node(i + 1, j + 1);
  }
};

struct DiffusionProblem2d {
  std::size_t n = 65;
  std::function<double(double, double)> conductivity;
  std::function<double(double, double)> source;  // optional
  double top_value = 0.0;
  std::function<double(double)> bottom_flux;
};

struct DiffusionSolution {
  Grid2d field;
  double top_flux = 0.0;     // discrete flux leaving through the Dirichlet edge
  double bottom_flux = 0.0;  // prescribed flux entering through y = 0
  double source_total = 0.0;
  double relative_residual = 0.0;
};

inline DiffusionSolution solve_diffusion_2d(const DiffusionProblem2d& prob) {
  detail::require<SolverInputError>(prob.n >= 3, "diffusion grid needs at least 3 nodes per axis");
  detail::require<SolverInputError>(static_cast<bool>(prob.conductivity), "conductivity function missing");
  const std::size_t n = prob.n;
  const double h = 1.0 / static_cast<double>(n - 1);
  const std::size_t rows = n - 1;  // unknown rows j = 0..n-2
  const std::size_t unknowns = n * rows;

  std::vector<double> kappa(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const double k = prob.conductivity(static_cast<double>(i) * h, static_cast<double>(j) * h);
      if (!(k > 0.0) || !std::isfinite(k)) throw SolverInputError("conductivity must be positive and finite");
      kappa[j * n + i] = k;
    }
  }
  auto harmonic = [&](std::size_t a, std::size_t b) { return 2.0 * kappa[a] * kappa[b] / (kappa[a] + kappa[b]); };
  auto width = [&](std::size_t i) { return (i == 0 || i == n - 1) ? 0.5 * h : h; };
  auto height = [&](std::size_t j) { return j == 0 ? 0.5 * h : h; };

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(unknowns * 5);
  Vector rhs = Vector::Zero(static_cast<Eigen::Index>(unknowns));
  DiffusionSolution sol;

  auto idx = [&](std::size_t i, std::size_t j) { return static_cast<int>(j * n + i); };
  for (std::size_t j = 0; j < rows; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const int p = idx(i, j);
      double diag = 0.0;
      auto couple = [&](std::size_t i2, std::size_t j2, double face_len) {
        const double c = harmonic(j * n + i, j2 * n + i2) * face_len / h;
        diag += c;
        if (j2 == n - 1) {
          rhs[p] += c * prob.top_value;
        } else {
          trips.emplace_back(p, idx(i2, j2), -c);
        }
      };
      if (i > 0) couple(i - 1, j, height(j));
      if (i + 1 < n) couple(i + 1, j, height(j));
      if (j > 0) couple(i, j - 1, width(i));
      couple(i, j + 1, width(i));
      trips.emplace_back(p, p, diag);

      const double x = static_cast<double>(i) * h;
      const double y = static_cast<double>(j) * h;
      if (prob.source) {
        const double s = prob.source(x, y) * width(i) * height(j);
        rhs[p] += s;
        sol.source_total += s;
      }
      if (j == 0 && prob.bottom_flux) {
        const double q = prob.bottom_flux(x) * width(i);
        rhs[p] += q;
        sol.bottom_flux += q;
      }
    }
  }

  Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(unknowns), static_cast<Eigen::Index>(unknowns));
  a.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw SolverFailure("diffusion system factorization failed");
  Vector u = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !u.allFinite()) throw SolverFailure("diffusion solve failed");
  const double rnorm = rhs.norm();
  sol.relative_residual = (a * u - rhs).norm() / (rnorm > 0.0 ? rnorm : 1.0);
  if (sol.relative_residual > 1e-10) {
    throw SolverFailure("diffusion solve residual " + std::to_string(sol.relative_residual) + " exceeds 1e-10");
  }

  sol.field.n = n;
  sol.field.u.assign(n * n, prob.top_value);
  for (std::size_t k = 0; k < unknowns; ++k) sol.field.u[k] = u[static_cast<Eigen::Index>(k)];
  for (std::size_t i = 0; i < n; ++i) {
    const double c = harmonic((n - 2) * n + i, (n - 1) * n + i) * width(i) / h;
    sol.top_flux += c * (sol.field.node(i, n - 2) - prob.top_value);
  }
  return sol;
}

struct Disk {
  double cx, cy, r;
  bool contains(double x, double y) const { return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r; }
};

struct HeatSetup {
  std::size_t n = 65;
  double kappa0 = 15.0;
  Disk inclusion1{0.3, 0.4, 0.15};
  Disk inclusion2{0.7, 0.4, 0.15};
  double top_temperature = 200.0;  // T
  double bottom_flux = 2000.0;     // q = -kappa0 du/dy at y = 0
  // Nine sensors just inside the heated (flux) surface.
  std::vector<std::pair<double, double>> sensors = {{0.1, 0.1}, {0.2, 0.1}, {0.3, 0.1}, {0.4, 0.1}, {0.5, 0.1},
                                                    {0.6, 0.1}, {0.7, 0.1}, {0.8, 0.1}, {0.9, 0.1}};

  void validate() const {
    detail::require(n >= 33, "heat grid needs n >= 33");
    for (const Disk* d : {&inclusion1, &inclusion2}) {
      detail::require(d->r > 0.0 && d->cx - d->r > 0.0 && d->cx + d->r < 1.0 && d->cy - d->r > 0.0 &&
                          d->cy + d->r < 1.0,
                      "inclusion must lie inside the unit square");
    }
    const double dx = inclusion1.cx - inclusion2.cx, dy = inclusion1.cy - inclusion2.cy;
    detail::require(std::sqrt(dx * dx + dy * dy) > inclusion1.r + inclusion2.r, "inclusions must be disjoint");
  }
};

inline DiffusionSolution solve_heat_2d_full(const HeatSetup& setup, double kappa1, double kappa2) {
  setup.validate();
  if (!(kappa1 > 0.0) || !(kappa2 > 0.0)) throw SolverInputError("inclusion conductivities must be positive");
  DiffusionProblem2d prob;
  prob.n = setup.n;
  prob.conductivity = [&](double x, double y) {
    if (setup.inclusion1.contains(x, y)) return kappa1;
    if (setup.inclusion2.contains(x, y)) return kappa2;
    return setup.kappa0;
  };
  prob.top_value = setup.top_temperature;
  prob.bottom_flux = [q = setup.bottom_flux](double) { return q; };
  return solve_diffusion_2d(prob);
}

inline Grid2d solve_heat_2d(const HeatSetup& setup, double kappa1, double kappa2) {
  return solve_heat_2d_full(setup, kappa1, kappa2).field;
}

inline double heat_conductivity(double theta) { return 30.0 + 6.0 * std::atan(theta); }

inline Vector heat_sensor_values(const HeatSetup& setup, const Grid2d& field) {
  Vector out(static_cast<Eigen::Index>(setup.sensors.size()));
  for (std::size_t s = 0; s < setup.sensors.size(); ++s) {
    out[static_cast<Eigen::Index>(s)] = field.bilinear(setup.sensors[s].first, setup.sensors[s].second);
  }
  return out;
}

// kappa_{1,2} = 30 + 6 atan(theta_{1,2}), then the sensor temperatures.
inline Vector heat_forward(const HeatSetup& setup, const Vector& theta) {
  detail::require(theta.size() == 2, "heat model takes 2 parameters");
  return heat_sensor_values(setup, solve_heat_2d(setup, heat_conductivity(theta[0]), heat_conductivity(theta[1])));
}

}  // namespace pppbayes
