#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "roughmal/covariance.hpp"
#include "roughmal/errors.hpp"
#include "roughmal/flow.hpp"
#include "roughmal/integration.hpp"

using namespace roughmal;

namespace {

SampledPath deterministic(int level, int dim, double (*fn)(double, int)) {
  SampledPath p(level, dim);
  for (std::size_t n = 0; n < p.nodes(); ++n)
    for (int c = 0; c < dim; ++c) p(n, c) = fn(p.time(n), c);
  return p;
}

SampledPath brownian_path(int m, int dim, std::uint64_t seed) {
  return piecewise_linear_path(sample_gaussian(CovarianceModel::brownian(), m, dim, seed, false), m);
}

OneForm sin_form(int D) {
  // diagonal: dy^i = sin(x^i) dx^i
  return OneForm::generic(
      "sin-diag", D, D,
      [D](auto x, auto out) {
        for (int i = 0; i < D; ++i)
          for (int b = 0; b < D; ++b) out[i * D + b] = (i == b) ? sin(x[i]) : x[i] * 0.0;
      },
      4, 1.0);
}

// Midpoint quadrature of ∫ sin(x^i) dx^i along the piecewise-linear path, `sub` steps per cell.
std::vector<double> sin_quadrature(const SampledPath& x, int sub) {
  std::vector<double> acc(x.dim, 0.0);
  for (std::size_t l = 0; l < x.cells(); ++l)
    for (int i = 0; i < x.dim; ++i) {
      const double a = x(l, i), d = x(l + 1, i) - a;
      for (int k = 0; k < sub; ++k) acc[i] += std::sin(a + (k + 0.5) / sub * d) * d / sub;
    }
  return acc;
}

}  // namespace

TEST(Young, PolynomialClosedForm) {
  const auto f = deterministic(10, 1, [](double t, int) { return t; });
  const auto g = deterministic(10, 1, [](double t, int) { return t * t; });
  const auto r = young_integral(f, g, 1.0, 1.0);
  EXPECT_NEAR(r(r.nodes() - 1, 0), 2.0 / 3.0, 1e-6);
  EXPECT_EQ(r(0, 0), 0.0);
}

TEST(Young, UnitIntegrandGivesIncrement) {
  const auto g = brownian_path(8, 2, 3);
  SampledPath f(8, 4);
  for (std::size_t n = 0; n < f.nodes(); ++n) {
    f(n, 0) = 1.0;
    f(n, 3) = 1.0;
  }
  const auto r = young_integral(f, g, 1.0, 2.5);
  for (std::size_t n = 0; n < r.nodes(); n += 17)
    for (int c = 0; c < 2; ++c) EXPECT_NEAR(r(n, c), g(n, c) - g(0, c), 1e-13);
}

TEST(Young, SmoothAgainstBrownianMatchesFineQuadrature) {
  const auto g = brownian_path(10, 1, 11);
  const auto f = deterministic(10, 1, [](double t, int) { return std::cos(2.0 * t) + t * t; });
  const auto r = young_integral(f, g, 1.0, 2.5);
  // independent oracle: 16 midpoint steps per cell with f interpolated linearly
  double oracle = 0.0;
  for (std::size_t l = 0; l < g.cells(); ++l) {
    const double dg = g(l + 1, 0) - g(l, 0);
    for (int k = 0; k < 16; ++k) {
      const double th = (k + 0.5) / 16.0;
      oracle += ((1 - th) * f(l, 0) + th * f(l + 1, 0)) * dg / 16.0;
    }
  }
  EXPECT_NEAR(r(r.nodes() - 1, 0), oracle, 1e-8);
}

TEST(Young, RefusesComplementaryRegularityFailure) {
  const auto g = brownian_path(6, 1, 1);
  EXPECT_THROW(young_integral(g, g, 2.5, 2.5), RegularityError);
  EXPECT_NO_THROW(young_integral(g, g, 1.5, 2.5));
}

TEST(OneFormValidation, RejectsWrongDerivatives) {
  auto eval = [](std::span<const double> x, std::span<double> y) { y[0] = std::sin(x[0]); };
  auto bad = [](std::span<const double> x, int order, std::vector<double>& out) {
    out.assign(1, order == 0 ? std::sin(x[0]) : std::sin(x[0]));  // derivative should be cos
  };
  EXPECT_THROW(OneForm(SmoothMap::from_callbacks("bad", 1, 1, eval, bad), 1, 1, 2, 1.0), ArgumentError);
}

TEST(RoughIntegral, ConstantFormIsLinearMap) {
  const auto x = lift_piecewise_linear(brownian_path(7, 2, 5), 2.5);
  const std::vector<double> a = {0.3, -1.2, 2.0, 0.5, 0.0, 1.0};  // E=3, D=2
  const auto z = rough_integral(OneForm::constant(2, 3, a), x);
  ASSERT_EQ(z.dim(), 5);
  const auto inc = z.increment(0, z.cells());
  const auto xi = x.increment(0, x.cells());
  for (int i = 0; i < 3; ++i) {
    const double expect = a[i * 2] * xi.level(1)[0] + a[i * 2 + 1] * xi.level(1)[1];
    EXPECT_NEAR(inc.level(1)[2 + i], expect, 1e-13);
  }
  // level 2 of the image block is A⊗A applied to x²
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double expect = 0.0;
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c) expect += a[i * 2 + b] * a[j * 2 + c] * xi.level(2)[b * 2 + c];
      EXPECT_NEAR(inc.level(2)[(2 + i) * 5 + (2 + j)], expect, 1e-12);
    }
}

TEST(RoughIntegral, IdentityFormGivesChainRule) {
  const auto path = brownian_path(8, 1, 21);
  const auto x = lift_piecewise_linear(path, 2.5);
  const auto f = OneForm::generic("id", 1, 1, [](auto s, auto out) { out[0] = s[0]; }, 3, 1.0);
  const auto z = rough_integral(f, x);
  for (std::size_t n = 1; n < z.nodes(); n += 13) {
    const auto inc = z.increment(0, n);
    const double xt = path(n, 0);
    EXPECT_NEAR(inc.level(1)[1], xt * xt / 2.0, 1e-12);
    // the joint path (x, x²/2) lies on a curve, so its signature only sees the endpoint
    EXPECT_NEAR(inc.level(2)[1], xt * xt * xt / 3.0, 1e-10);
    EXPECT_NEAR(inc.level(2)[2], xt * xt * xt / 6.0, 1e-10);
  }
}

TEST(RoughIntegral, SinFormMatchesFineQuadrature) {
  const auto path = brownian_path(6, 2, 8);
  const auto z = rough_integral(sin_form(2), lift_piecewise_linear(path, 2.5));
  const auto oracle = sin_quadrature(path, 256);  // 2^14 steps in total
  const auto inc = z.increment(0, z.cells());
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(inc.level(1)[2 + i], oracle[i], 1e-7);
}

TEST(RoughIntegral, OutputIsMultiplicativeAndGeometric) {
  const auto x = lift_piecewise_linear(brownian_path(6, 2, 4), 2.5);
  const auto z = rough_integral(sin_form(2), x);
  const auto full = z.increment(0, z.cells());
  const auto split = tensor_multiply(z.increment(0, 23), z.increment(23, z.cells()));
  for (std::size_t i = 0; i < full.raw().size(); ++i) EXPECT_NEAR(full.raw()[i], split.raw()[i], 1e-12);
  const int D = z.dim();
  for (int a = 0; a < D; ++a)
    for (int b = 0; b < D; ++b) {
      const double sym = full.level(2)[a * D + b] + full.level(2)[b * D + a];
      EXPECT_NEAR(sym, full.level(1)[a] * full.level(1)[b], 1e-12);
    }
}

TEST(RoughIntegral, NonConvergenceReportsResidual) {
  const auto x = lift_piecewise_linear(brownian_path(2, 2, 4), 2.5);
  RoughIntegralOptions opts;
  opts.tolerance = 0.0;
  opts.absolute_floor = 0.0;
  opts.max_depth = 1;
  try {
    rough_integral(sin_form(2), x, opts);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}

TEST(RoughIntegral, ContinuityAlongDyadicApproximations) {
  auto smooth = [](int level) {
    SampledPath p(level, 2);
    for (std::size_t n = 0; n < p.nodes(); ++n) {
      const double t = p.time(n);
      p(n, 0) = std::sin(6.0 * t);
      p(n, 1) = t * t - std::cos(3.0 * t);
    }
    return p;
  };
  // not closed, so the integral depends on the route
  const auto f = OneForm::generic(
      "cross", 2, 1, [](auto x, auto out) {
        out[0] = sin(x[1]);
        out[1] = cos(x[0]);
      },
      4, 1.0);
  const auto ref = rough_integral(f, lift_piecewise_linear(smooth(10), 2.5));
  double prev = INFINITY;
  for (int m = 2; m <= 8; ++m) {
    const auto z = rough_integral(f, lift_piecewise_linear(smooth(m), 2.5));
    const std::size_t stride = std::size_t{1} << (10 - m);
    double dist = 0.0;
    for (std::size_t n = 0; n < z.nodes(); ++n) {
      const auto a = z.trajectory().at(n);
      const auto b = ref.trajectory().at(n * stride);
      for (int c = 2; c < 3; ++c) dist = std::max(dist, std::abs(a[c] - b[c]));
    }
    EXPECT_LT(dist, prev) << "m=" << m;
    prev = dist;
  }
}

TEST(RoughIntegral, GrowthConstantHoldsOnFreshDrivers) {
  const auto f = sin_form(2);
  auto sample = [&](std::uint64_t seed) {
    const auto x = lift_piecewise_linear(brownian_path(4, 2, seed), 2.5);
    const auto z = rough_integral(f, x);
    const std::vector<int> out = {2, 3};
    const auto a = z.project(out);
    GrowthSample g;
    const auto sums = variation_sums(a, 0, a.cells());
    for (std::size_t i = 0; i < sums.size(); ++i) g.z_variation.push_back(std::pow(sums[i], (i + 1) / a.p()));
    for (double v : variation_sums(x, 0, x.cells())) g.x_sum += v;
    return g;
  };
  std::vector<GrowthSample> calib;
  for (std::uint64_t s = 0; s < 100; ++s) calib.push_back(sample(1000 + s));
  const double c2 = fit_growth_constant(calib);
  EXPECT_GT(c2, 0.0);
  int violations = 0;
  for (std::uint64_t s = 0; s < 100; ++s) violations += growth_check(sample(5000 + s), c2).pass ? 0 : 1;
  EXPECT_EQ(violations, 0);
}
