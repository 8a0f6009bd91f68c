#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "pppbayes/bayes_model.hpp"
#include "pppbayes/forward_models.hpp"

using namespace pppbayes;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Forward map returning theta shifted by `offset`, observation zero.
PosteriorSpec shift_model(const Vector& offset, const Matrix& noise) {
  return PosteriorSpec([offset](const Vector& t) -> Vector { return t + offset; }, Vector::Zero(offset.size()), noise,
                       PriorSpec::standard_normal(static_cast<std::size_t>(offset.size())));
}

}  // namespace

TEST(Potential, ZeroResidual) {
  const auto m = shift_model(vec({0, 0}), Matrix::Identity(2, 2));
  EXPECT_EQ(potential(m, vec({0, 0})), 0.0);
}

TEST(Potential, ScaledNoise) {
  const auto m = shift_model(vec({0.1, 0}), 0.01 * Matrix::Identity(2, 2));
  EXPECT_NEAR(potential(m, vec({0, 0})), 1.0, 1e-12);
  const auto m2 = shift_model(vec({1, 1}), Matrix::Identity(2, 2));
  EXPECT_NEAR(potential(m2, vec({0, 0})), 2.0, 1e-14);
}

TEST(Potential, CorrelatedNoiseMatchesExplicitInverse) {
  Matrix s(2, 2);
  s << 2.0, 0.7, 0.7, 1.0;
  const auto m = shift_model(vec({0.3, -1.1}), s);
  const Vector r = vec({0.5 + 0.3, 0.2 - 1.1});
  EXPECT_NEAR(potential(m, vec({0.5, 0.2})), r.dot(s.inverse() * r), 1e-12);
}

TEST(Potential, Errors) {
  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(shift_model(vec({0, 0}), bad), SpdViolation);
  const PosteriorSpec wrong_len([](const Vector&) { return vec({1, 2, 3}); }, vec({0, 0}), Matrix::Identity(2, 2),
                                PriorSpec::standard_normal(2));
  EXPECT_THROW(potential(wrong_len, vec({0, 0})), ForwardError);
  const PosteriorSpec throws([](const Vector&) -> Vector { throw std::runtime_error("diverged"); }, vec({0}),
                             Matrix::Identity(1, 1), PriorSpec::standard_normal(1));
  EXPECT_THROW(potential(throws, vec({0})), ForwardError);
  const PosteriorSpec nan([](const Vector&) { return vec({std::nan("")}); }, vec({0}), Matrix::Identity(1, 1),
                          PriorSpec::standard_normal(1));
  EXPECT_THROW(potential(nan, vec({0})), ForwardError);
}

TEST(PriorLogDensity, Examples) {
  EXPECT_NEAR(prior_log_density(PriorSpec::standard_normal(1), vec({0})), -0.5 * std::log(2 * std::numbers::pi),
              1e-14);
  const PriorSpec box(UniformBoxPrior{AxisBox(vec({-1, -1}), vec({1, 1}))});
  EXPECT_NEAR(prior_log_density(box, vec({0, 0})), std::log(0.25), 1e-15);
  EXPECT_EQ(prior_log_density(box, vec({2, 0})), -INFINITY);
}

TEST(PriorLogDensity, CorrelatedGaussian) {
  Matrix c(2, 2);
  c << 1.5, -0.4, -0.4, 0.8;
  const Vector mu = vec({1, -2});
  const PriorSpec p(GaussianPrior{mu, c});
  const Vector x = vec({0.3, -1.1});
  const Vector d = x - mu;
  const double ref = -std::log(2 * std::numbers::pi) - 0.5 * std::log(c.determinant()) - 0.5 * d.dot(c.inverse() * d);
  EXPECT_NEAR(prior_log_density(p, x), ref, 1e-12);
}

TEST(PriorSample, Examples) {
  EXPECT_TRUE(prior_sample(PriorSpec::standard_normal(2), 0, 1).empty());

  const auto g = prior_sample(PriorSpec::standard_normal(2), 100000, 2);
  for (int a = 0; a < 2; ++a) {
    double m = 0.0;
    for (const auto& x : g) m += x[a];
    EXPECT_NEAR(m / 1e5, 0.0, 3.0 / std::sqrt(1e5));
  }

  const PriorSpec u(UniformBoxPrior{AxisBox(vec({-1}), vec({1}))});
  const auto us = prior_sample(u, 100000, 3);
  std::vector<double> xs;
  for (const auto& x : us) xs.push_back(x[0]);
  // Var of the sample variance of U(-1,1): (mu4 - sigma^4)/n with mu4 = 1/5.
  const double sd = std::sqrt((0.2 - 1.0 / 9.0) / 1e5);
  EXPECT_NEAR(oracle::moments(xs).var, 1.0 / 3.0, 3.0 * sd);
}

TEST(PriorSample, CorrelatedCovariance) {
  Matrix c(2, 2);
  c << 2.0, 0.9, 0.9, 1.0;
  const auto s = prior_sample(PriorSpec(GaussianPrior{vec({0, 0}), c}), 200000, 9);
  Matrix emp = Matrix::Zero(2, 2);
  for (const auto& x : s) emp += x * x.transpose();
  emp /= static_cast<double>(s.size());
  EXPECT_NEAR(emp(0, 0), 2.0, 0.05);
  EXPECT_NEAR(emp(0, 1), 0.9, 0.03);
  EXPECT_NEAR(emp(1, 1), 1.0, 0.02);
}

TEST(UnnormalizedPosterior, Examples) {
  const auto m = shift_model(vec({0}), Matrix::Identity(1, 1));
  EXPECT_NEAR(unnormalized_posterior_density(m, vec({0})), 1.0 / std::sqrt(2 * std::numbers::pi), 1e-15);

  int calls = 0;
  const PosteriorSpec box_model(
      [&calls](const Vector& t) {
        ++calls;
        return t;
      },
      vec({0, 0}), Matrix::Identity(2, 2), PriorSpec(UniformBoxPrior{AxisBox(vec({-1, -1}), vec({1, 1}))}));
  EXPECT_EQ(unnormalized_posterior_density(box_model, vec({1.5, 0})), 0.0);
  EXPECT_EQ(calls, 0);
  EXPECT_GT(unnormalized_posterior_density(box_model, vec({0.9, -0.9})), 0.0);
}

TEST(UnnormalizedPosterior, BoundedByPrior) {
  UnimodalSetup setup;
  const PosteriorSpec m([](const Vector& t) { return unimodal_forward(t); }, vec({-0.0173, -0.573}),
                        setup.noise_var * Matrix::Identity(2, 2), PriorSpec::standard_normal(2));
  const auto pts = prior_sample(m.prior(), 500, 4);
  for (const auto& t : pts) {
    EXPECT_GE(potential(m, t), 0.0);
    EXPECT_LE(unnormalized_posterior_density(m, t), std::exp(m.prior().log_density(t)));
  }
}

TEST(UnnormalizedIntensity, Examples) {
  const auto m = shift_model(vec({0.2}), Matrix::Identity(1, 1));
  const IntensitySpec one(m, 1.0), two(m, 2.0);
  for (double t : {-1.0, 0.0, 0.7}) {
    EXPECT_EQ(unnormalized_intensity(one, vec({t})), unnormalized_posterior_density(m, vec({t})));
    EXPECT_DOUBLE_EQ(unnormalized_intensity(two, vec({t})), 2.0 * unnormalized_intensity(one, vec({t})));
  }
  EXPECT_THROW(IntensitySpec(m, 0.0), InvalidArgument);
  EXPECT_THROW(IntensitySpec(m, -1.0), InvalidArgument);
}

TEST(EstimateNormalizer, ZeroPotential) {
  const PosteriorSpec m([](const Vector&) { return vec({0}); }, vec({0}), Matrix::Identity(1, 1),
                        PriorSpec::standard_normal(1));
  const auto z = estimate_normalizer(m, 1000, 1);
  EXPECT_DOUBLE_EQ(z.value, 1.0);
  EXPECT_EQ(z.std_error, 0.0);
}

TEST(EstimateNormalizer, GaussianIntegral) {
  // potential theta^2 / 2: forward theta, observation 0, noise variance 2.
  const auto m = shift_model(vec({0}), 2.0 * Matrix::Identity(1, 1));
  const auto z4 = estimate_normalizer(m, 10000, 5);
  EXPECT_NEAR(z4.value, 1.0 / std::sqrt(2.0), 3.0 * z4.std_error);
  const auto z6 = estimate_normalizer(m, 1000000, 6);
  EXPECT_NEAR(z6.value, 1.0 / std::sqrt(2.0), 3.0 * z6.std_error);
  EXPECT_NEAR(z4.std_error / z6.std_error, 10.0, 1.0);
  // Consistency between n and 100n.
  EXPECT_LT(std::fabs(z4.value - z6.value), 3.0 * std::hypot(z4.std_error, z6.std_error));
}

TEST(EstimateNormalizer, Errors) {
  const auto m = shift_model(vec({0}), Matrix::Identity(1, 1));
  EXPECT_THROW(estimate_normalizer(m, 99, 1), InvalidArgument);
  const PosteriorSpec far([](const Vector& t) { return t; }, vec({1e6}), Matrix::Identity(1, 1),
                          PriorSpec::standard_normal(1));
  EXPECT_THROW(estimate_normalizer(far, 1000, 1), DegenerateError);
}

TEST(PotentialGradient, FiniteDifferenceAgreement) {
  UnimodalSetup us;
  Matrix s2(2, 2);
  s2 << 0.01, 0.002, 0.002, 0.02;
  const PosteriorSpec uni([](const Vector& t) { return unimodal_forward(t); }, vec({-0.0173, -0.573}), s2,
                          PriorSpec::standard_normal(2), [](const Vector& t) { return unimodal_jacobian(t); });
  const PosteriorSpec bi([](const Vector& t) { return bimodal_forward(t); }, vec({4.2297}), Matrix::Identity(1, 1),
                         PriorSpec::standard_normal(2), [](const Vector& t) { return bimodal_jacobian(t); });
  Rng rng(31);
  for (const auto* m : {&uni, &bi}) {
    for (int k = 0; k < 20; ++k) {
      const Vector t = vec({rng.normal(), rng.normal()});
      const Vector g = potential_gradient(*m, t);
      Vector fd(2);
      for (int a = 0; a < 2; ++a) {
        Vector tp = t, tm = t;
        tp[a] += 1e-6;
        tm[a] -= 1e-6;
        fd[a] = (potential(*m, tp) - potential(*m, tm)) / 2e-6;
      }
      // Relative to the gradient scale; components can vanish individually.
      EXPECT_LT((fd - g).norm() / std::max(g.norm(), 1.0), 1e-5) << t.transpose();
    }
  }
}
