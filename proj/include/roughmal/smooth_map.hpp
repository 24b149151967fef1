#pragma once

#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "roughmal/jet.hpp"

namespace roughmal {

// A smooth map R^in -> R^out with derivative tensors on demand.
// Tensor j has layout (o, c_1..c_j) row-major: size out * in^j.
class SmoothMap {
 public:
  using DoubleFn = std::function<void(std::span<const double>, std::span<double>)>;
  using JetFn = std::function<void(std::span<const Jet>, std::span<Jet>)>;
  // Writes ∇^order at x into out (resized by the callee).
  using DerivativeFn = std::function<void(std::span<const double>, int order, std::vector<double>& out)>;

  SmoothMap() = default;

  // f is a generic callable f(std::span<const S> x, std::span<S> y) for S = double and S = Jet.
  // active lists the inputs f actually reads; derivatives in the others are zero.
  template <class F>
  static SmoothMap generic(std::string name, int in, int out, F f, std::vector<int> active = {}) {
    SmoothMap m(std::move(name), in, out, std::move(active));
    m.eval_ = [f](std::span<const double> x, std::span<double> y) { f(x, y); };
    m.jet_ = [f](std::span<const Jet> x, std::span<Jet> y) { f(x, y); };
    return m;
  }

  // Hand-written derivatives; derivative(x, 0, out) must equal eval.
  static SmoothMap from_callbacks(std::string name, int in, int out, DoubleFn eval, DerivativeFn derivative);

  const std::string& name() const { return name_; }
  int in_dim() const { return in_; }
  int out_dim() const { return out_; }
  const std::vector<int>& active() const { return active_; }

  void eval(std::span<const double> x, std::span<double> y) const { eval_(x, y); }
  // ∇^0..∇^order at x; reuses the buffers in out.
  void derivatives(std::span<const double> x, int order, std::vector<std::vector<double>>& out) const;
  std::vector<std::vector<double>> derivatives(std::span<const double> x, int order) const {
    std::vector<std::vector<double>> out;
    derivatives(x, order, out);
    return out;
  }

  // Central differences of ∇^j against ∇^{j+1} for j < order at 32 probes 3·N(0,1);
  // relative tolerance 1e-5. Throws ArgumentError on the first mismatch.
  void validate(int order, std::uint64_t seed = 0x5eedull) const;

 private:
  SmoothMap(std::string name, int in, int out, std::vector<int> active);

  std::string name_;
  int in_ = 0;
  int out_ = 0;
  std::vector<int> active_;
  DoubleFn eval_;
  JetFn jet_;
  DerivativeFn deriv_;
};

}  // namespace roughmal
