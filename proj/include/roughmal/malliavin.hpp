#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "roughmal/covariance.hpp"
#include "roughmal/flow.hpp"
#include "roughmal/integration.hpp"

namespace roughmal {

constexpr int kMaxDerivativeOrder = 4;
constexpr int kMaxChaosOrder = 3;

// One term of the order-n recursion: a non-decreasing tuple of lower orders and its weight.
struct RecursionTerm {
  std::vector<int> orders;
  double coeff = 0.0;
};

// For each n ≤ n_max: terms against dw (tuples summing to n, length ≥ 2) and against dh
// (tuples summing to n-1, including the empty tuple for σ(y) dh).
struct ConstantsTable {
  int n_max = 0;
  std::vector<std::vector<RecursionTerm>> dw, dh;  // index n, entry 0 unused
  double lookup(int n, std::span<const int> orders, bool against_h) const;
};

// Built once by counting set partitions, then checked against finite differences of the
// flow for a cubic scalar field; a failed check throws NumericalError.
const ConstantsTable& derive_constants(int n);

// Weights w_k with f^(derivative)(0) ≈ Σ w_k f(nodes_k).
std::vector<double> finite_difference_weights(int derivative, std::span<const double> nodes);

struct DerivativeOptions {
  double q = 1.0;  // declared variation exponent of h
  SolverOptions solver;
};

struct DerivativeStack {
  int n_max = 0;
  int e = 0;
  int grid_level = 0;
  std::vector<std::vector<double>> values;  // values[n-1][node * e + i] = D_h^n y
  StepPlan plan;
  std::span<const double> at(int n, std::size_t node) const {
    return {values[n - 1].data() + node * e, static_cast<std::size_t>(e)};
  }
};

// D_h^n y on the grid of x for n = 1..n_max. x must consist of segment cells (a
// piecewise-linear lift); h lives on the same grid or a coarser one.
DerivativeStack directional_derivative(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                                       const SampledPath& h, int n_max, const DerivativeOptions& opts = {});
// Same with the step plan fixed, so the result is a smooth function of the driver.
DerivativeStack directional_derivative_with_plan(const RoughPathGrid& x, const VectorFieldSystem& vf,
                                                 std::span<const double> y0, const SampledPath& h, int n_max,
                                                 const StepPlan& plan, const DerivativeOptions& opts = {});

// D_h y_t = J_t ∫_0^t K σ(y) dh with the integrand sampled on the grid and paired by young_integral.
SampledPath first_derivative_young(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                                   const SampledPath& h, double q);

// D^n y_1<h_1..h_n> by polarization over subset sums (n ≤ 3).
std::vector<double> polarized_derivative(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                                         std::span<const SampledPath> hs, const DerivativeOptions& opts = {});

struct ChaosFunctional {
  int n = 0;
  int m = 0;
  int e = 0;
  std::vector<double> values;  // node * e + i
  std::span<const double> at(std::size_t node) const {
    return {values.data() + node * e, static_cast<std::size_t>(e)};
  }
};

// Ξ_1..Ξ_{n_max} of the doubled piecewise-linear sample (w, b) (dimension 2d, level m):
// the derivative recursion driven by w with b in the role of h.
std::vector<ChaosFunctional> xi_chaos(const SampledPath& doubled, int n_max, const VectorFieldSystem& vf,
                                      std::span<const double> y0, const SolverOptions& opts = {});
std::vector<ChaosFunctional> xi_chaos_with_plan(const SampledPath& doubled, int n_max, const VectorFieldSystem& vf,
                                                std::span<const double> y0, const StepPlan& plan,
                                                const SolverOptions& opts = {});

// The same functionals through a chain of rough integrals over the joint lift of
// (w, b, y, J, K), stored extra_levels finer than the sample. Scalar state (e = 1) only.
std::vector<ChaosFunctional> xi_chaos_rough(const SampledPath& doubled, int n_max, const VectorFieldSystem& vf,
                                            std::span<const double> y0, double p, int extra_levels = 3,
                                            const RoughIntegralOptions& iopts = {});

// Gradient g and Hessian A of Δw ↦ y^component at a grid node, coordinates (cell, a) cell-major,
// from forward sensitivities of the per-cell flow maps.
struct Sensitivities {
  int m = 0;
  int d = 0;
  std::size_t node = 0;
  int component = 0;
  Eigen::VectorXd g;
  Eigen::MatrixXd A;  // empty unless requested
  double symmetry_defect = 0.0;
};
Sensitivities forward_sensitivities(const SampledPath& w, const VectorFieldSystem& vf, std::span<const double> y0,
                                    std::size_t node, int component, bool hessian, const SolverOptions& opts = {});

struct HSNormReport {
  int m = 0;
  int n = 0;
  double t = 0.0;
  double hs_norm = 0.0;
  double chaos_mean = 0.0;  // exact E_b[Ξ_n]
  double chaos_var = 0.0;   // exact Var_b[Ξ_n]
  double oracle_gap = 0.0;  // relative disagreement with the Ξ route
};

// n = 1: |Q^{1/2} g| and E_b[Ξ_1²] recomputed from Ξ_1 on basis directions.
// n = 2: |Q^{1/2} A Q^{1/2}|_HS and Ξ_2(w, b) against bᵀAb on fixed random directions.
HSNormReport hs_norm(const CovarianceModel& model, const SampledPath& w, int n, std::size_t node,
                     const VectorFieldSystem& vf, std::span<const double> y0, int component = 0,
                     const SolverOptions& opts = {});
std::string hs_report_to_json(const HSNormReport& r);

// Q_m ⊗ Id_d in the (cell, a) coordinates.
Eigen::MatrixXd driver_covariance(const CovarianceModel& model, int m, int d);

}  // namespace roughmal
