#pragma once

#include <span>
#include <string>
#include <vector>

#include "roughmal/smooth_map.hpp"

namespace roughmal {

// σ = [V_1..V_d] : R^e -> Mat(e,d), row-major (i, a). ∇^lσ has layout (i, a, j_1..j_l).
class VectorFieldSystem {
 public:
  VectorFieldSystem() = default;
  // Validates derivatives up to max_order against finite differences.
  VectorFieldSystem(std::string name, int e, int d, SmoothMap sigma, int max_order, bool bounded);

  const std::string& name() const { return name_; }
  int state_dim() const { return e_; }
  int driver_dim() const { return d_; }
  int max_order() const { return max_order_; }
  bool bounded() const { return bounded_; }

  void sigma(std::span<const double> y, std::span<double> out) const { map_.eval(y, out); }
  void derivatives(std::span<const double> y, int order, std::vector<std::vector<double>>& out) const;

  // Σ_{j ≤ top} sup |∇^j σ| estimated over a fixed sample of the box [-8,8]^e; +inf when unbounded.
  double boundedness_constant(int top) const;

 private:
  std::string name_;
  int e_ = 0;
  int d_ = 0;
  int max_order_ = 0;
  bool bounded_ = false;
  SmoothMap map_;
};

// constant, linear-scalar, sin-scalar, cubic-scalar, skew-2d, poly-2d, smooth-2d
VectorFieldSystem make_preset(const std::string& name, int max_order = 5);
std::vector<std::string> preset_names();

}  // namespace roughmal
