#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "roughmal/jet.hpp"

using namespace roughmal;

TEST(Jet, SpaceSizeIsBinomial) {
  EXPECT_EQ(JetSpace::get(1, 4).size(), 5);
  EXPECT_EQ(JetSpace::get(2, 3).size(), 10);
  EXPECT_EQ(JetSpace::get(5, 4).size(), 126);
  EXPECT_THROW(JetSpace::get(8, 4), std::exception);
}

TEST(Jet, UnivariateSinDerivatives) {
  const auto& sp = JetSpace::get(1, 5);
  const double x0 = 0.7;
  Jet x = Jet::variable(sp, 0, x0);
  Jet s = sin(x) + 2.0;
  const double expect[6] = {std::sin(x0) + 2, std::cos(x0), -std::sin(x0), -std::cos(x0), std::sin(x0), std::cos(x0)};
  for (int k = 0; k <= 5; ++k) {
    std::vector<int> vars(k, 0);
    EXPECT_NEAR(s.partial(vars), expect[k], 1e-14) << k;
  }
}

TEST(Jet, MixedPartialsOfProduct) {
  // f = x^2 y + exp(x y)
  const auto& sp = JetSpace::get(2, 3);
  const double a = 0.3, b = -1.2;
  Jet x = Jet::variable(sp, 0, a), y = Jet::variable(sp, 1, b);
  Jet f = x * x * y + exp(x * y);
  const double e = std::exp(a * b);
  EXPECT_NEAR(f.value(), a * a * b + e, 1e-14);
  const int dx[1] = {0}, dy[1] = {1}, dxy[2] = {0, 1}, dxxy[3] = {0, 0, 1};
  EXPECT_NEAR(f.partial(dx), 2 * a * b + b * e, 1e-13);
  EXPECT_NEAR(f.partial(dy), a * a + a * e, 1e-13);
  EXPECT_NEAR(f.partial(dxy), 2 * a + e + a * b * e, 1e-13);
  // ∂xxy (x^2 y) = 2; ∂xxy exp(xy) = 2 b e + a b^2 e
  EXPECT_NEAR(f.partial(dxxy), 2 + 2 * b * e + a * b * b * e, 1e-12);
}

TEST(Jet, QuotientLogSqrtTanhAgainstFiniteDifferences) {
  const auto& sp = JetSpace::get(1, 2);
  auto g = [](auto x) { return log(x) * sqrt(x) / (1.0 + x) + tanh(x); };
  const double x0 = 1.3, h = 1e-4;
  Jet j = g(Jet::variable(sp, 0, x0));
  auto gd = [](double x) { return std::log(x) * std::sqrt(x) / (1.0 + x) + std::tanh(x); };
  const int d1[1] = {0}, d2[2] = {0, 0};
  EXPECT_NEAR(j.value(), gd(x0), 1e-14);
  EXPECT_NEAR(j.partial(d1), (gd(x0 + h) - gd(x0 - h)) / (2 * h), 1e-8);
  EXPECT_NEAR(j.partial(d2), (gd(x0 + h) - 2 * gd(x0) + gd(x0 - h)) / (h * h), 1e-5);
}

TEST(Jet, ConstantsMixWithSpacedJets) {
  const auto& sp = JetSpace::get(2, 2);
  Jet c = 3.0;
  Jet x = Jet::variable(sp, 0, 1.0);
  Jet r = c * x + c;
  EXPECT_EQ(r.space(), &sp);
  EXPECT_DOUBLE_EQ(r.value(), 6.0);
  const int d1[1] = {0};
  EXPECT_DOUBLE_EQ(r.partial(d1), 3.0);
}
