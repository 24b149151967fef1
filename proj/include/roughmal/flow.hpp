#pragma once

#include <span>
#include <string>
#include <vector>

#include "roughmal/roughpath.hpp"
#include "roughmal/vector_field.hpp"

namespace roughmal {

struct SolverOptions {
  double tolerance = 1e-11;  // per-cell step-doubling defect, relative to 1 + |state|
  int max_depth = 14;        // at most 2^max_depth RK4 steps per cell
  double blowup = 1e9;       // abort when |state| exceeds this
};

// log2 of the number of RK4 steps used on each driver cell.
struct StepPlan {
  std::vector<int> depth;
};

struct FlowState {
  double t = 0.0;
  std::vector<double> y, J, K;  // J, K row-major e×e
};

struct FlowSolution {
  int e = 0;
  int grid_level = 0;
  std::vector<double> states;  // per node: y, J, K
  StepPlan plan;
  double max_kj_defect = 0.0;  // max_t |K_t J_t - Id|_F

  std::size_t stride() const { return static_cast<std::size_t>(e) * (1 + 2 * e); }
  std::size_t nodes() const { return states.size() / stride(); }
  std::span<const double> state(std::size_t node) const { return {states.data() + node * stride(), stride()}; }
  std::span<const double> y(std::size_t node) const { return state(node).subspan(0, e); }
  std::span<const double> J(std::size_t node) const { return state(node).subspan(e, e * e); }
  std::span<const double> K(std::size_t node) const { return state(node).subspan(e + e * e, e * e); }
  FlowState at(std::size_t node) const;
  // max_t of the Frobenius norms of J and K
  double sup_J() const;
  double sup_K() const;
};

// Driver dimension must be d (the field's) or 2d; components beyond d carry zero coefficients.
FlowSolution solve_flow(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                        const SolverOptions& opts = {});
// Re-solve with a frozen plan (no adaptivity): smooth in the driver, for finite differences.
FlowSolution solve_flow_with_plan(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                                  const StepPlan& plan, const SolverOptions& opts = {});

// Joint lift over R^D ⊕ R^e ⊕ Mat(e,e) ⊕ Mat(e,e), in that coordinate order.
struct AugmentedRoughPath {
  RoughPathGrid joint;
  int driver_dim = 0;
  int state_dim = 0;
  FlowSolution flow;

  std::vector<int> driver_coords() const;
  std::vector<int> y_coords() const;
  std::vector<int> j_coords() const;
  std::vector<int> k_coords() const;
  // Drops driver coordinates first..first+count (the copy block of a doubled driver).
  RoughPathGrid discard_driver(int first, int count) const;
};

// Solves the flow and lifts (x, y, J, K) jointly. extra_levels > 0 stores the joint
// lift on a finer grid than the driver's. Segment (piecewise-linear) drivers only.
AugmentedRoughPath solve_rde(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                             const SolverOptions& opts = {}, int extra_levels = 0);

// CSV "t,y_1..y_e,J_11..J_ee,K_11..K_ee".
std::string flow_to_csv(const FlowSolution& sol);

struct GrowthSample {
  std::vector<double> z_variation;  // |z^i|_{p/i-var}, z = (x, y)
  double x_sum = 0.0;               // Σ_i |x^i|_{p/i-var}^{p/i}
  double M = 0.0;                   // field constant (or its linear-growth replacement)
};

struct GrowthReport {
  double c = 0.0;
  std::vector<double> lhs, rhs;
  std::vector<bool> level_pass;
  bool pass = true;
};

// Linear-growth constant sup(|σ(0)|, |∇σ|) estimated like the boundedness constant.
double linear_growth_constant(const VectorFieldSystem& vf);

GrowthSample growth_sample(const AugmentedRoughPath& sol, const VectorFieldSystem& vf);
// Smallest c (to 1e-6, then rounded up by 1%) making every calibration sample satisfy the bound.
double fit_growth_constant(std::span<const GrowthSample> calibration);
GrowthReport growth_check(const GrowthSample& sample, double c);

}  // namespace roughmal
