#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>
#include <vector>

#include "roughmal/covariance.hpp"
#include "roughmal/errors.hpp"
#include "roughmal/malliavin.hpp"
#include "roughmal/rng.hpp"

using namespace roughmal;

namespace {

SampledPath brownian_path(int m, int dim, std::uint64_t seed, bool copy = false) {
  const auto s = sample_gaussian(CovarianceModel::brownian(), m, dim, seed, copy);
  const auto w = piecewise_linear_path(s, m);
  return copy ? concat_components(w, piecewise_linear_path(s, m, true)) : w;
}

SampledPath slope(int m, int dim, double c = 1.0) {
  SampledPath h(m, dim);
  for (std::size_t n = 0; n < h.nodes(); ++n)
    for (int a = 0; a < dim; ++a) h(n, a) = c * h.time(n) * (a + 1);
  return h;
}

SampledPath wiggle(int m, double phase) {
  SampledPath h(m, 1);
  for (std::size_t n = 0; n < h.nodes(); ++n) h(n, 0) = std::sin(3.0 * h.time(n) + phase) - std::sin(phase);
  return h;
}

SampledPath axpy(const SampledPath& w, double s, const SampledPath& h) {
  SampledPath out = w;
  for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] += s * h.values[k];
  return out;
}

RoughPathGrid lift(const SampledPath& p) { return lift_piecewise_linear(p, 2.5); }

// n-th derivative of ε ↦ y_1(w + εh) by a 9-point stencil on the frozen plan.
double fd_derivative(const SampledPath& w, const SampledPath& h, const VectorFieldSystem& vf, std::span<const double> y0,
                     int n, double eps, const StepPlan& plan, int component = 0) {
  std::vector<double> nodes, vals;
  const int half = n == 1 ? 1 : 4;
  for (int k = -half; k <= half; ++k) {
    nodes.push_back(k * eps);
    const auto s = solve_flow_with_plan(lift(axpy(w, k * eps, h)), vf, y0, plan);
    vals.push_back(s.y(s.nodes() - 1)[component]);
  }
  const auto wts = finite_difference_weights(n, nodes);
  double v = 0.0;
  for (std::size_t k = 0; k < wts.size(); ++k) v += wts[k] * vals[k];
  return v;
}

}  // namespace

TEST(Constants, LowOrderValues) {
  const auto& t = derive_constants(4);
  const std::vector<int> e0 = {}, o1 = {1}, o11 = {1, 1}, o2 = {2}, o12 = {1, 2}, o111 = {1, 1, 1};
  EXPECT_EQ(t.lookup(1, e0, true), 1.0);
  EXPECT_TRUE(t.dw[1].empty());
  EXPECT_EQ(t.lookup(2, o11, false), 1.0);
  EXPECT_EQ(t.lookup(2, o1, true), 2.0);
  EXPECT_EQ(t.lookup(3, o111, false), 1.0);
  EXPECT_EQ(t.lookup(3, o12, false), 3.0);
  EXPECT_EQ(t.lookup(3, o11, true), 3.0);
  EXPECT_EQ(t.lookup(3, o2, true), 3.0);
  // order 4 weights sum to the Bell-number count of set partitions
  double dw = 0.0, dh = 0.0;
  for (const auto& term : t.dw[4]) dw += term.coeff;
  for (const auto& term : t.dh[4]) dh += term.coeff;
  EXPECT_EQ(dw, 15.0 - 1.0);
  EXPECT_EQ(dh, 4.0 * 5.0);
  EXPECT_THROW(derive_constants(5), ArgumentError);
}

TEST(FiniteDifferenceWeights, ClassicalStencils) {
  const std::vector<double> nodes = {-1.0, 0.0, 1.0};
  const auto w1 = finite_difference_weights(1, nodes);
  const auto w2 = finite_difference_weights(2, nodes);
  EXPECT_NEAR(w1[0], -0.5, 1e-15);
  EXPECT_NEAR(w1[1], 0.0, 1e-15);
  EXPECT_NEAR(w1[2], 0.5, 1e-15);
  EXPECT_NEAR(w2[0], 1.0, 1e-15);
  EXPECT_NEAR(w2[1], -2.0, 1e-15);
  EXPECT_NEAR(w2[2], 1.0, 1e-15);
  const std::vector<double> wide = {-2, -1, 0, 1, 2};
  const auto w4 = finite_difference_weights(4, wide);
  const double expect[] = {1, -4, 6, -4, 1};
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(w4[k], expect[k], 1e-12);
}

TEST(DirectionalDerivative, ConstantField) {
  const auto vf = make_preset("constant");
  const auto w = brownian_path(6, 1, 4);
  const auto h = wiggle(6, 0.3);
  const std::vector<double> y0 = {0.0};
  const auto st = directional_derivative(lift(w), vf, y0, h, 2);
  for (std::size_t n = 0; n < w.nodes(); ++n) {
    EXPECT_NEAR(st.at(1, n)[0], 0.7 * h(n, 0), 1e-13);
    EXPECT_EQ(st.at(2, n)[0], 0.0);
  }
}

TEST(DirectionalDerivative, LinearFieldClosedForm) {
  const auto vf = make_preset("linear-scalar");
  const auto w = brownian_path(7, 1, 8);
  const auto h = wiggle(7, 1.1);
  const std::vector<double> y0 = {1.5};
  const auto st = directional_derivative(lift(w), vf, y0, h, 4);
  for (std::size_t n = 0; n < w.nodes(); n += 9) {
    const double y = 1.5 * std::exp(w(n, 0));
    double hp = 1.0;
    for (int k = 1; k <= 4; ++k) {
      hp *= h(n, 0);
      EXPECT_NEAR(st.at(k, n)[0], y * hp, 1e-9 * (1 + y)) << "order " << k;
    }
  }
}

TEST(DirectionalDerivative, StartsAtZero) {
  const auto vf = make_preset("smooth-2d");
  const std::vector<double> y0 = {0.1, 0.2};
  const auto st = directional_derivative(lift(brownian_path(4, 2, 1)), vf, y0, slope(4, 2), 3);
  for (int k = 1; k <= 3; ++k)
    for (double v : st.at(k, 0)) EXPECT_EQ(v, 0.0);
}

TEST(DirectionalDerivative, SinFieldMatchesFiniteDifferences) {
  const auto vf = make_preset("sin-scalar");
  const auto w = brownian_path(8, 1, 2024);
  const auto h = slope(8, 1);
  const std::vector<double> y0 = {0.2};
  const auto x = lift(w);
  const auto st = directional_derivative(x, vf, y0, h, 3);
  const double d1 = fd_derivative(w, h, vf, y0, 1, 1e-4, st.plan);
  const double d2 = fd_derivative(w, h, vf, y0, 2, 0.05, st.plan);
  const double d3 = fd_derivative(w, h, vf, y0, 3, 0.05, st.plan);
  const double an1 = st.at(1, w.cells())[0], an2 = st.at(2, w.cells())[0], an3 = st.at(3, w.cells())[0];
  EXPECT_NEAR(an1, d1, 1e-5 * std::abs(d1));
  EXPECT_NEAR(an2, d2, 1e-3 * std::abs(d2));
  EXPECT_NEAR(an3, d3, 1e-3 * std::abs(d3));
}

TEST(DirectionalDerivative, TwoDimensionalFieldMatchesFiniteDifferences) {
  const auto vf = make_preset("smooth-2d");
  const auto w = brownian_path(6, 2, 99);
  SampledPath h(6, 2);
  for (std::size_t n = 0; n < h.nodes(); ++n) {
    h(n, 0) = std::sin(2.0 * h.time(n));
    h(n, 1) = -h.time(n) * h.time(n);
  }
  const std::vector<double> y0 = {0.3, -0.2};
  const auto st = directional_derivative(lift(w), vf, y0, h, 3);
  for (int c = 0; c < 2; ++c)
    for (int n = 1; n <= 3; ++n) {
      const double fd = fd_derivative(w, h, vf, y0, n, n == 1 ? 1e-4 : 0.05, st.plan, c);
      EXPECT_NEAR(st.at(n, w.cells())[c], fd, (n == 1 ? 1e-5 : 1e-3) * std::max(std::abs(fd), 1e-3)) << n << "," << c;
    }
}

TEST(DirectionalDerivative, YoungRouteAgreesAcrossResolutions) {
  const auto vf = make_preset("sin-scalar");
  const auto w = brownian_path(5, 1, 17);
  const auto h = wiggle(5, 0.2);
  const std::vector<double> y0 = {0.4};
  const auto exact = directional_derivative(lift(w), vf, y0, h, 1).at(1, w.cells())[0];
  for (int level = 5; level <= 8; ++level) {
    const auto r = first_derivative_young(lift(w.refine(level)), vf, y0, h.refine(level), 1.0);
    EXPECT_NEAR(r(r.nodes() - 1, 0), exact, 1e-9 * std::abs(exact)) << "level " << level;
    // the derivative on interior nodes too
    const auto& mid = r(r.nodes() / 2, 0);
    EXPECT_NEAR(mid, directional_derivative(lift(w), vf, y0, h, 1).at(1, w.cells() / 2)[0], 1e-9 * (1 + std::abs(mid)));
  }
}

TEST(DirectionalDerivative, RefusesRegularityViolation) {
  const auto vf = make_preset("sin-scalar");
  const std::vector<double> y0 = {0.0};
  DerivativeOptions opts;
  opts.q = 2.0;
  EXPECT_THROW(directional_derivative(lift(brownian_path(4, 1, 1)), vf, y0, slope(4, 1), 1, opts), RegularityError);
  EXPECT_THROW(first_derivative_young(lift(brownian_path(4, 1, 1)), vf, y0, slope(4, 1), 2.0), RegularityError);
}

TEST(DirectionalDerivative, RefusesUnderValidatedField) {
  const auto vf = make_preset("sin-scalar", 2);
  const std::vector<double> y0 = {0.0};
  EXPECT_THROW(directional_derivative(lift(brownian_path(4, 1, 1)), vf, y0, slope(4, 1), 2), ArgumentError);
}

TEST(DirectionalDerivative, FirstOrderTaylorPrediction) {
  const auto vf = make_preset("smooth-2d");
  const auto w = brownian_path(6, 2, 5);
  const auto h = slope(6, 2, 0.5);
  const std::vector<double> y0 = {0.0, 0.1};
  const auto base = solve_flow(lift(w), vf, y0);
  const auto st = directional_derivative(lift(w), vf, y0, h, 1);
  std::vector<double> err;
  for (double s : {0.2, 0.1, 0.05}) {
    const auto shifted = solve_flow(lift(axpy(w, s, h)), vf, y0);
    double e = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double pred = base.y(base.nodes() - 1)[i] + s * st.at(1, w.cells())[i];
      e = std::max(e, std::abs(shifted.y(shifted.nodes() - 1)[i] - pred));
    }
    err.push_back(e);
  }
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(err[k] / err[k + 1], 4.0, 0.6);
}

TEST(Polarization, DiagonalAndSymmetry) {
  const auto vf = make_preset("sin-scalar");
  const auto w = brownian_path(5, 1, 6);
  const std::vector<double> y0 = {0.1};
  const auto x = lift(w);
  const auto h = wiggle(5, 0.4), k = slope(5, 1);
  const std::vector<SampledPath> hh = {h, h};
  const auto diag = directional_derivative(x, vf, y0, h, 2).at(2, w.cells())[0];
  EXPECT_NEAR(polarized_derivative(x, vf, y0, hh)[0], diag, 1e-10 * (1 + std::abs(diag)));
  const std::vector<SampledPath> hk = {h, k}, kh = {k, h};
  const double a = polarized_derivative(x, vf, y0, hk)[0];
  const double b = polarized_derivative(x, vf, y0, kh)[0];
  EXPECT_NEAR(a, b, 1e-8 * (1 + std::abs(a)));
}

TEST(Polarization, ClosedForms) {
  const std::vector<double> y0 = {1.0};
  const auto w = brownian_path(5, 1, 10);
  const auto h = wiggle(5, 0.4), k = slope(5, 1, 0.7);
  const std::vector<SampledPath> hk = {h, k};
  EXPECT_NEAR(polarized_derivative(lift(w), make_preset("constant"), y0, hk)[0], 0.0, 1e-13);
  const double y = std::exp(w(w.cells(), 0));
  const double expect = y * h(h.cells(), 0) * k(k.cells(), 0);
  EXPECT_NEAR(polarized_derivative(lift(w), make_preset("linear-scalar"), y0, hk)[0], expect, 1e-9 * (1 + std::abs(expect)));
}

TEST(Chaos, ConstantFieldFirstOrder) {
  const auto vf = make_preset("constant");
  const auto wb = brownian_path(6, 1, 33, true);
  const std::vector<double> y0 = {0.0};
  const auto xi = xi_chaos(wb, 2, vf, y0);
  for (std::size_t n = 0; n < wb.nodes(); ++n) {
    EXPECT_NEAR(xi[0].at(n)[0], 0.7 * wb(n, 1), 1e-13);
    EXPECT_EQ(xi[1].at(n)[0], 0.0);
  }
}

TEST(Chaos, LinearFieldSecondOrder) {
  const auto vf = make_preset("linear-scalar");
  const auto wb = brownian_path(7, 1, 34, true);
  const std::vector<double> y0 = {1.0};
  const auto xi = xi_chaos(wb, 2, vf, y0);
  for (std::size_t n = 0; n < wb.nodes(); n += 5) {
    const double y = std::exp(wb(n, 0)), b = wb(n, 1);
    EXPECT_NEAR(xi[1].at(n)[0], y * b * b, 1e-9 * (1 + y));
  }
}

// Ξ_n(w, ·) is a polynomial of degree n in the b-increments.
TEST(Chaos, DegreeInCopyIncrements) {
  const auto vf = make_preset("smooth-2d");
  const std::vector<double> y0 = {0.2, 0.0};
  const auto wb = brownian_path(5, 2, 35, true);
  const auto dir = brownian_path(5, 2, 36);
  const auto w = wb.components(0, 2);
  const auto plan = solve_flow(lift(w), vf, y0).plan;
  for (int n = 1; n <= 3; ++n) {
    std::vector<std::vector<ChaosFunctional>> vals;
    for (int k = 0; k <= n + 1; ++k) {
      auto shifted = wb;
      for (std::size_t node = 0; node < wb.nodes(); ++node)
        for (int a = 0; a < 2; ++a) shifted(node, 2 + a) += 0.5 * k * dir(node, a);
      vals.push_back(xi_chaos_with_plan(shifted, n, vf, y0, plan));
    }
    for (int c = 0; c < 2; ++c) {
      double diff = 0.0, scale = 0.0, binom = 1.0;
      for (int k = 0; k <= n + 1; ++k) {
        const double v = vals[k][n - 1].at(wb.cells())[c];
        diff += ((n + 1 - k) % 2 == 0 ? 1.0 : -1.0) * binom * v;
        scale = std::max(scale, std::abs(v));
        binom = binom * (n + 1 - k) / (k + 1);
      }
      EXPECT_LE(std::abs(diff), 1e-9 * std::max(scale, 1.0)) << "n=" << n << " component " << c;
    }
  }
}

TEST(Chaos, TopDerivativeIsConstantInCopy) {
  const auto vf = make_preset("sin-scalar");
  const std::vector<double> y0 = {0.3};
  const auto w = brownian_path(4, 1, 40);
  const auto plan = solve_flow(lift(w), vf, y0).plan;
  std::vector<std::vector<double>> grads;
  for (std::uint64_t s = 0; s < 16; ++s) {
    const auto b = brownian_path(4, 1, 500 + s);
    const double base = xi_chaos_with_plan(concat_components(w, b), 1, vf, y0, plan)[0].at(w.cells())[0];
    std::vector<double> g;
    for (std::size_t k = 0; k < w.cells(); ++k) {
      auto bk = b;
      for (std::size_t n = k + 1; n < bk.nodes(); ++n) bk(n, 0) += 1.0;
      g.push_back(xi_chaos_with_plan(concat_components(w, bk), 1, vf, y0, plan)[0].at(w.cells())[0] - base);
    }
    grads.push_back(g);
  }
  for (std::size_t k = 0; k < w.cells(); ++k) {
    double mean = 0.0, var = 0.0;
    for (const auto& g : grads) mean += g[k] / 16.0;
    for (const auto& g : grads) var += (g[k] - mean) * (g[k] - mean) / 15.0;
    EXPECT_LE(var, 1e-12);
  }
}

// The joint lift is piecewise; the rough route converges to the ODE route as it is refined.
TEST(Chaos, RoughIntegralRouteConverges) {
  const auto vf = make_preset("sin-scalar");
  const std::vector<double> y0 = {0.25};
  const auto wb = brownian_path(3, 1, 41, true);
  SolverOptions tight;
  tight.tolerance = 1e-13;
  const auto ode = xi_chaos(wb, 2, vf, y0, tight);
  std::vector<double> err;
  for (int extra = 3; extra <= 5; ++extra) {
    const auto rough = xi_chaos_rough(wb, 2, vf, y0, 2.5, extra);
    double e = 0.0;
    for (int n = 0; n < 2; ++n)
      for (std::size_t k = 0; k < wb.nodes(); ++k)
        e = std::max(e, std::abs(rough[n].at(k)[0] - ode[n].at(k)[0]) / (1.0 + std::abs(ode[n].at(k)[0])));
    err.push_back(e);
  }
  EXPECT_GT(err[0] / err[1], 8.0);
  EXPECT_GT(err[1] / err[2], 8.0);
  EXPECT_LT(err[2], 1e-6);
}

TEST(Chaos, RoughRouteRefusesVectorState) {
  const std::vector<double> y0 = {0.0, 0.0};
  EXPECT_THROW(xi_chaos_rough(brownian_path(2, 2, 1, true), 1, make_preset("smooth-2d"), y0, 2.5), ArgumentError);
}

TEST(Sensitivities, GradientAndHessianMatchFiniteDifferences) {
  const auto vf = make_preset("smooth-2d");
  const std::vector<double> y0 = {0.1, 0.3};
  const auto w = brownian_path(3, 2, 42);
  const auto sens = forward_sensitivities(w, vf, y0, w.cells(), 1, true);
  const auto plan = solve_flow(lift(w), vf, y0).plan;
  const std::size_t N = w.cells() * 2;
  auto G = [&](const SampledPath& p) {
    const auto s = solve_flow_with_plan(lift(p), vf, y0, plan);
    return s.y(s.nodes() - 1)[1];
  };
  auto bump = [&](const SampledPath& p, std::size_t k, double e) {
    SampledPath q = p;
    for (std::size_t n = k / 2 + 1; n < q.nodes(); ++n) q(n, static_cast<int>(k % 2)) += e;
    return q;
  };
  const double eps = 1e-3;
  for (std::size_t k = 0; k < N; ++k) {
    const double fd = (G(bump(w, k, eps)) - G(bump(w, k, -eps))) / (2 * eps);
    EXPECT_NEAR(sens.g(static_cast<Eigen::Index>(k)), fd, 1e-7);
    for (std::size_t j = 0; j < N; ++j) {
      const double h2 = (G(bump(bump(w, k, eps), j, eps)) - G(bump(bump(w, k, eps), j, -eps)) -
                         G(bump(bump(w, k, -eps), j, eps)) + G(bump(bump(w, k, -eps), j, -eps))) /
                        (4 * eps * eps);
      EXPECT_NEAR(sens.A(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)), h2, 1e-5);
    }
  }
  EXPECT_LE(sens.symmetry_defect, 1e-12);
}

TEST(HSNorm, ConstantFieldBrownian) {
  const auto vf = make_preset("constant");
  const std::vector<double> y0 = {0.0};
  const auto w = brownian_path(6, 1, 3);
  const auto r = hs_norm(CovarianceModel::brownian(), w, 1, w.cells(), vf, y0);
  EXPECT_NEAR(r.hs_norm, 0.7, 1e-12);
  EXPECT_LE(r.oracle_gap, 1e-10);
  const auto r2 = hs_norm(CovarianceModel::brownian(), w, 2, w.cells(), vf, y0);
  EXPECT_NEAR(r2.hs_norm, 0.0, 1e-12);
  EXPECT_LE(r2.oracle_gap, 1e-10);
}

TEST(HSNorm, FirstOrderIdentityOnSinField) {
  const auto vf = make_preset("sin-scalar");
  const std::vector<double> y0 = {0.0};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto w = brownian_path(5, 1, 70 + s);
    const auto r = hs_norm(CovarianceModel::fbm(0.4), w, 1, w.cells(), vf, y0);
    EXPECT_LE(r.oracle_gap, 1e-10);
    EXPECT_GT(r.hs_norm, 0.0);
  }
}

TEST(HSNorm, SecondOrderAgainstXiRoute) {
  const auto vf = make_preset("smooth-2d");
  const std::vector<double> y0 = {0.0, 0.0};
  const auto w = brownian_path(4, 2, 71);
  const auto r = hs_norm(CovarianceModel::brownian(), w, 2, 11, vf, y0, 1);
  EXPECT_LE(r.oracle_gap, 1e-9);
  EXPECT_NEAR(r.t, 11.0 / 16.0, 0.0);
  const auto j = nlohmann::json::parse(hs_report_to_json(r));
  for (const char* key : {"m", "n", "t", "hs_norm", "chaos_mean", "chaos_var", "oracle_gap"}) EXPECT_TRUE(j.contains(key));
}

// Monte Carlo over b against the exact quadratic-form moments.
TEST(HSNorm, SecondOrderMomentsLinearField) {
  const auto vf = make_preset("linear-scalar");
  const std::vector<double> y0 = {1.0};
  const int m = 4;
  const auto w = brownian_path(m, 1, 72);
  const auto r = hs_norm(CovarianceModel::brownian(), w, 2, w.cells(), vf, y0);
  const auto plan = solve_flow(lift(w), vf, y0).plan;
  const int S = 10000;
  double sum = 0.0, sum2 = 0.0;
  std::vector<double> xs;
  for (int s = 0; s < S; ++s) {
    const auto b = brownian_path(m, 1, derive_seed(77, s));
    const double v = xi_chaos_with_plan(concat_components(w, b), 2, vf, y0, plan)[1].at(w.cells())[0];
    xs.push_back(v);
    sum += v;
  }
  const double mean = sum / S;
  for (double v : xs) sum2 += (v - mean) * (v - mean);
  const double var = sum2 / (S - 1);
  double m4 = 0.0;
  for (double v : xs) m4 += std::pow(v - mean, 4);
  m4 /= S;
  EXPECT_NEAR(mean, r.chaos_mean, 4.0 * std::sqrt(var / S));
  EXPECT_NEAR(var, r.chaos_var, 4.0 * std::sqrt((m4 - var * var) / S));
}
