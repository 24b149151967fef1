#include "roughmal/vector_field.hpp"

#include <cmath>
#include <limits>

#include "roughmal/errors.hpp"
#include "roughmal/rng.hpp"

namespace roughmal {

VectorFieldSystem::VectorFieldSystem(std::string name, int e, int d, SmoothMap sigma, int max_order, bool bounded)
    : name_(std::move(name)), e_(e), d_(d), max_order_(max_order), bounded_(bounded), map_(std::move(sigma)) {
  if (map_.in_dim() != e || map_.out_dim() != e * d) throw ArgumentError("vector field " + name_ + " has inconsistent shape");
  if (max_order < 1) throw ArgumentError("vector fields need derivatives of order >= 1");
  map_.validate(max_order);
}

void VectorFieldSystem::derivatives(std::span<const double> y, int order, std::vector<std::vector<double>>& out) const {
  if (order > max_order_) throw ArgumentError("vector field " + name_ + " provides derivatives only up to order " +
                                              std::to_string(max_order_));
  map_.derivatives(y, order, out);
}

double VectorFieldSystem::boundedness_constant(int top) const {
  if (!bounded_) return std::numeric_limits<double>::infinity();
  const NormalStream u(0xB0B0ull, 5);
  std::vector<double> sup(top + 1, 0.0), y(e_);
  std::vector<std::vector<double>> d;
  for (int k = 0; k < 4096; ++k) {
    for (int i = 0; i < e_; ++i) y[i] = 16.0 * u.uniform(static_cast<std::uint64_t>(k) * e_ + i) - 8.0;
    derivatives(y, std::min(top, max_order_), d);
    for (int j = 0; j <= std::min(top, max_order_); ++j) {
      double s = 0.0;
      for (double v : d[j]) s += v * v;
      sup[j] = std::max(sup[j], std::sqrt(s));
    }
  }
  double m = 0.0;
  for (double v : sup) m += v;
  return m;
}

namespace {

using std::cos;
using std::sin;

template <class F>
VectorFieldSystem build(const std::string& name, int e, int d, int max_order, bool bounded, F f) {
  return VectorFieldSystem(name, e, d, SmoothMap::generic(name, e, e * d, f), max_order, bounded);
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"constant", "linear-scalar", "sin-scalar", "cubic-scalar", "skew-2d", "poly-2d", "smooth-2d"};
}

VectorFieldSystem make_preset(const std::string& name, int max_order) {
  if (name == "constant") {
    return build(name, 1, 1, max_order, true, [](auto y, auto out) { out[0] = y[0] * 0.0 + 0.7; });
  }
  if (name == "linear-scalar") {
    return build(name, 1, 1, max_order, false, [](auto y, auto out) { out[0] = y[0]; });
  }
  if (name == "sin-scalar") {
    return build(name, 1, 1, max_order, true, [](auto y, auto out) { out[0] = sin(y[0]) + 2.0; });
  }
  if (name == "cubic-scalar") {
    return build(name, 1, 1, max_order, false, [](auto y, auto out) {
      out[0] = 1.0 + 0.5 * y[0] + 0.3 * y[0] * y[0] + 0.1 * y[0] * y[0] * y[0];
    });
  }
  if (name == "skew-2d") {
    // V(y) = R y with R the rotation generator
    return build(name, 2, 1, max_order, false, [](auto y, auto out) {
      out[0] = -1.0 * y[1];
      out[1] = y[0] * 1.0;
    });
  }
  if (name == "poly-2d") {
    // Fixed pseudo-random coefficients, degree ≤ 2 with a small quadratic part.
    std::vector<double> c(2 * 2 * 6);
    const NormalStream s(2024, 9);
    for (std::size_t k = 0; k < c.size(); ++k) {
      const std::size_t mono = k % 6;
      c[k] = s(k) * (mono == 0 ? 0.5 : (mono < 3 ? 0.3 : 0.05));
    }
    return build(name, 2, 2, max_order, false, [c](auto y, auto out) {
      for (int o = 0; o < 4; ++o) {
        const double* k = c.data() + 6 * o;
        out[o] = k[0] + k[1] * y[0] + k[2] * y[1] + k[3] * y[0] * y[0] + k[4] * y[0] * y[1] + k[5] * y[1] * y[1];
      }
    });
  }
  if (name == "smooth-2d") {
    // Bounded with bounded derivatives; the two fields do not commute.
    return build(name, 2, 2, max_order, true, [](auto y, auto out) {
      out[0] = 1.0 + 0.5 * sin(y[1]);      // V_1^1
      out[1] = 0.4 * cos(y[0] + y[1]);     // V_2^1
      out[2] = 0.3 * cos(y[0]);            // V_1^2
      out[3] = 1.0 + 0.5 * sin(y[0]);      // V_2^2
    });
  }
  throw ConfigError("unknown vector field preset '" + name + "'");
}

}  // namespace roughmal
