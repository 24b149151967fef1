#include "roughmal/smooth_map.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "roughmal/errors.hpp"
#include "roughmal/rng.hpp"

namespace roughmal {

SmoothMap::SmoothMap(std::string name, int in, int out, std::vector<int> active)
    : name_(std::move(name)), in_(in), out_(out), active_(std::move(active)) {
  if (in < 1 || out < 1) throw ArgumentError("smooth map dimensions must be positive");
  if (active_.empty()) {
    active_.resize(in);
    std::iota(active_.begin(), active_.end(), 0);
  }
  for (int a : active_)
    if (a < 0 || a >= in) throw ArgumentError("active coordinate out of range in " + name_);
}

SmoothMap SmoothMap::from_callbacks(std::string name, int in, int out, DoubleFn eval, DerivativeFn derivative) {
  SmoothMap m(std::move(name), in, out, {});
  m.eval_ = std::move(eval);
  m.deriv_ = std::move(derivative);
  return m;
}

void SmoothMap::derivatives(std::span<const double> x, int order, std::vector<std::vector<double>>& out) const {
  out.resize(order + 1);
  if (deriv_) {
    for (int j = 0; j <= order; ++j) {
      deriv_(x, j, out[j]);
      std::size_t expect = out_;
      for (int q = 0; q < j; ++q) expect *= in_;
      if (out[j].size() != expect) throw ArgumentError("derivative callback of " + name_ + " returned a wrongly sized tensor");
    }
    return;
  }
  const int na = static_cast<int>(active_.size());
  std::size_t size = out_;
  for (int j = 0; j <= order; ++j) {
    out[j].assign(size, 0.0);
    size *= in_;
  }
  if (order == 0) {
    eval_(x, out[0]);
    return;
  }
  const JetSpace& sp = JetSpace::get(na, order);
  std::vector<Jet> xj(in_);
  for (int c = 0; c < in_; ++c) xj[c] = Jet(x[c]);
  for (int a = 0; a < na; ++a) xj[active_[a]] = Jet::variable(sp, a, x[active_[a]]);
  std::vector<Jet> yj(out_);
  jet_(xj, yj);
  std::vector<int> vars;
  for (int k = 0; k < sp.size(); ++k) {
    const int j = sp.degree(k);
    const int* e = sp.exponents(k);
    vars.clear();
    for (int a = 0; a < na; ++a)
      for (int r = 0; r < e[a]; ++r) vars.push_back(active_[a]);
    std::sort(vars.begin(), vars.end());
    const double w = sp.factorial_weight(k);
    std::size_t stride = 1;
    for (int q = 0; q < j; ++q) stride *= in_;
    do {
      std::size_t idx = 0;
      for (int v : vars) idx = idx * in_ + v;
      for (int o = 0; o < out_; ++o) out[j][o * stride + idx] = std::as_const(yj[o]).coeff(k) * w;
    } while (std::next_permutation(vars.begin(), vars.end()));
  }
}

void SmoothMap::validate(int order, std::uint64_t seed) const {
  const NormalStream normals(seed, 11);
  std::vector<double> x(in_), xp(in_), xm(in_);
  std::vector<std::vector<double>> d0, dp, dm;
  for (int probe = 0; probe < 32; ++probe) {
    for (int c = 0; c < in_; ++c) x[c] = 3.0 * normals(static_cast<std::uint64_t>(probe) * in_ + c);
    derivatives(x, order, d0);
    std::vector<double> direct(out_);
    eval_(x, direct);
    for (int o = 0; o < out_; ++o) {
      const double tol = 1e-12 * (1.0 + std::abs(direct[o]));
      if (!(std::abs(direct[o] - d0[0][o]) <= tol)) {
        throw ArgumentError("smooth map " + name_ + ": order-0 callback disagrees with evaluation");
      }
    }
    for (int j = 0; j < order; ++j) {
      std::size_t stride = out_;
      for (int q = 0; q < j; ++q) stride *= in_;
      const auto& next = d0[j + 1];
      double scale = 0.0;
      for (double v : next) scale = std::max(scale, std::abs(v));
      for (int c = 0; c < in_; ++c) {
        const double h = 1e-4 * (1.0 + std::abs(x[c]));
        xp = x;
        xm = x;
        xp[c] += h;
        xm[c] -= h;
        derivatives(xp, j, dp);
        derivatives(xm, j, dm);
        for (std::size_t idx = 0; idx < stride; ++idx) {
          const double fd = (dp[j][idx] - dm[j][idx]) / (2 * h);
          const double an = next[idx * in_ + c];
          const double tol = 1e-5 * std::max({std::abs(an), 1e-2 * scale, 1e-9});
          if (!(std::abs(fd - an) <= tol)) {
            std::ostringstream os;
            os << "smooth map " << name_ << ": derivative of order " << (j + 1) << " fails finite-difference validation"
               << " (output entry " << idx << ")"
               << " (probe " << probe << ", coordinate " << c << ", analytic " << an << ", difference " << fd << ")";
            throw ArgumentError(os.str());
          }
        }
      }
    }
  }
}

}  // namespace roughmal
