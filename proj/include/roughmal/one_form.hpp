#pragma once

#include <string>
#include <vector>

#include "roughmal/smooth_map.hpp"

namespace roughmal {

// f : R^D -> Mat(E, D), stored row-major (i, b). ∇^j f has layout (i, b, c_1..c_j).
class OneForm {
 public:
  OneForm() = default;
  // Validates derivatives up to `order` at construction.
  OneForm(SmoothMap map, int D, int E, int order, double growth_c);

  template <class F>
  static OneForm generic(std::string name, int D, int E, F f, int order, double growth_c,
                         std::vector<int> active = {}) {
    return OneForm(SmoothMap::generic(std::move(name), D, E * D, f, std::move(active)), D, E, order, growth_c);
  }

  // x ↦ A constant.
  static OneForm constant(int D, int E, std::vector<double> a);

  const std::string& name() const { return map_.name(); }
  int in_dim() const { return D_; }
  int out_dim() const { return E_; }
  int order() const { return order_; }
  // Declared c with |∇^j f(ξ)| ≤ c (1 + |ξ|)^c.
  double growth_constant() const { return growth_c_; }

  void eval(std::span<const double> x, std::span<double> out) const { map_.eval(x, out); }
  void derivatives(std::span<const double> x, int order, std::vector<std::vector<double>>& out) const;

 private:
  SmoothMap map_;
  int D_ = 0;
  int E_ = 0;
  int order_ = 0;
  double growth_c_ = 0.0;
};

}  // namespace roughmal
