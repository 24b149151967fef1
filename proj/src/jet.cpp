#include "roughmal/jet.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "roughmal/errors.hpp"

namespace roughmal {

namespace {

void enumerate(int nvars, int remaining, int var, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (var == nvars) {
    out.push_back(cur);
    return;
  }
  for (int e = 0; e <= remaining; ++e) {
    cur[var] = e;
    enumerate(nvars, remaining - e, var + 1, cur, out);
  }
  cur[var] = 0;
}

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

}  // namespace

JetSpace::JetSpace(int nvars, int order) : nvars_(nvars), order_(order) {
  if (nvars < 1 || order < 0) throw ArgumentError("jet space needs nvars >= 1 and order >= 0");
  std::vector<std::vector<int>> all;
  std::vector<int> cur(nvars, 0);
  enumerate(nvars, order, 0, cur, all);
  auto deg = [](const std::vector<int>& e) {
    int s = 0;
    for (int v : e) s += v;
    return s;
  };
  // graded order; within a degree, lexicographically descending so x_0 precedes x_1
  std::stable_sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
    const int da = deg(a), db = deg(b);
    if (da != db) return da < db;
    return a > b;
  });
  size_ = static_cast<int>(all.size());
  if (size_ > Jet::kCapacity) {
    throw ArgumentError("jet space with " + std::to_string(nvars) + " variables at order " +
                        std::to_string(order) + " exceeds jet capacity");
  }
  for (const auto& e : all) {
    exps_.insert(exps_.end(), e.begin(), e.end());
    degree_.push_back(deg(e));
    double w = 1.0;
    for (int v : e) w *= factorial(v);
    weight_.push_back(w);
  }
  var_index_.assign(nvars, -1);
  for (int i = 0; i < nvars && order >= 1; ++i) {
    std::vector<int> e(nvars, 0);
    e[i] = 1;
    var_index_[i] = index(e);
  }
  std::vector<int> sum(nvars);
  for (int a = 0; a < size_; ++a) {
    for (int b = 0; b < size_; ++b) {
      if (degree_[a] + degree_[b] > order) continue;
      for (int v = 0; v < nvars; ++v) sum[v] = exps_[a * nvars + v] + exps_[b * nvars + v];
      products_.push_back({a, b, index(sum)});
    }
  }
}

int JetSpace::index(std::span<const int> exps) const {
  int d = 0;
  for (int v : exps) d += v;
  if (d > order_) return -1;
  for (int k = 0; k < size_; ++k) {
    if (degree_[k] != d) continue;
    if (std::equal(exps.begin(), exps.end(), exps_.begin() + static_cast<std::ptrdiff_t>(k) * nvars_)) return k;
  }
  return -1;
}

const JetSpace& JetSpace::get(int nvars, int order) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<JetSpace>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{nvars, order}];
  if (!slot) slot = std::make_unique<JetSpace>(nvars, order);
  return *slot;
}

Jet::Jet(const JetSpace& sp, double v) : sp_(&sp), n_(sp.size()) {
  std::fill(c_.begin(), c_.begin() + n_, 0.0);
  c_[0] = v;
}

Jet Jet::variable(const JetSpace& sp, int i, double value) {
  Jet j(sp, value);
  if (sp.order() >= 1) j.c_[sp.variable(i)] = 1.0;
  return j;
}

void Jet::promote(const JetSpace* sp) {
  if (sp_ == sp || sp == nullptr) return;
  if (sp_ != nullptr) throw ArgumentError("jets from different spaces cannot be combined");
  sp_ = sp;
  const int n = sp->size();
  std::fill(c_.begin() + n_, c_.begin() + n, 0.0);
  n_ = n;
}

double Jet::partial(std::span<const int> vars) const {
  if (sp_ == nullptr) return vars.empty() ? c_[0] : 0.0;
  std::vector<int> e(sp_->nvars(), 0);
  for (int v : vars) ++e[v];
  const int k = sp_->index(e);
  if (k < 0) throw ArgumentError("partial derivative beyond jet order");
  return c_[k] * sp_->factorial_weight(k);
}

Jet& Jet::operator+=(const Jet& o) {
  promote(o.sp_);
  for (int k = 0; k < o.n_; ++k) c_[k] += o.c_[k];
  return *this;
}

Jet& Jet::operator-=(const Jet& o) {
  promote(o.sp_);
  for (int k = 0; k < o.n_; ++k) c_[k] -= o.c_[k];
  return *this;
}

Jet& Jet::operator*=(double s) {
  for (int k = 0; k < n_; ++k) c_[k] *= s;
  return *this;
}

Jet& Jet::operator*=(const Jet& o) {
  if (o.sp_ == nullptr) return *this *= o.c_[0];
  if (sp_ == nullptr) {
    const double s = c_[0];
    *this = o;
    return *this *= s;
  }
  if (sp_ != o.sp_) throw ArgumentError("jets from different spaces cannot be combined");
  std::array<double, kCapacity> out;
  std::fill(out.begin(), out.begin() + n_, 0.0);
  for (const auto& t : sp_->products()) out[t.c] += c_[t.a] * o.c_[t.b];
  std::copy(out.begin(), out.begin() + n_, c_.begin());
  return *this;
}

Jet Jet::operator-() const {
  Jet r = *this;
  for (int k = 0; k < n_; ++k) r.c_[k] = -r.c_[k];
  return r;
}

Jet Jet::compose(std::span<const double> derivs) const {
  const int order = sp_ == nullptr ? 0 : sp_->order();
  if (static_cast<int>(derivs.size()) < order + 1) throw ArgumentError("compose needs derivatives up to the jet order");
  if (sp_ == nullptr) return Jet(derivs[0]);
  Jet delta = *this;
  delta.c_[0] = 0.0;
  // Horner in δ with Taylor weights f^(k)/k!
  Jet r(*sp_, derivs[order] / factorial(order));
  for (int k = order - 1; k >= 0; --k) {
    r *= delta;
    r.c_[0] += derivs[k] / factorial(k);
  }
  return r;
}

namespace {
int order_of(const Jet& a) { return a.space() == nullptr ? 0 : a.space()->order(); }
}  // namespace

Jet sin(const Jet& a) {
  const int n = order_of(a);
  const double s = std::sin(a.value()), c = std::cos(a.value());
  std::vector<double> d(n + 1);
  const double cyc[4] = {s, c, -s, -c};
  for (int k = 0; k <= n; ++k) d[k] = cyc[k % 4];
  return a.compose(d);
}

Jet cos(const Jet& a) {
  const int n = order_of(a);
  const double s = std::sin(a.value()), c = std::cos(a.value());
  std::vector<double> d(n + 1);
  const double cyc[4] = {c, -s, -c, s};
  for (int k = 0; k <= n; ++k) d[k] = cyc[k % 4];
  return a.compose(d);
}

Jet exp(const Jet& a) {
  const int n = order_of(a);
  std::vector<double> d(n + 1, std::exp(a.value()));
  return a.compose(d);
}

Jet log(const Jet& a) {
  const int n = order_of(a);
  const double x = a.value();
  if (!(x > 0.0)) throw DomainError("log of a jet with non-positive value");
  std::vector<double> d(n + 1);
  d[0] = std::log(x);
  double f = 1.0 / x;  // (k-1)! (-1)^(k-1) / x^k
  for (int k = 1; k <= n; ++k) {
    d[k] = f;
    f *= -static_cast<double>(k) / x;
  }
  return a.compose(d);
}

Jet sqrt(const Jet& a) {
  const int n = order_of(a);
  const double x = a.value();
  if (!(x > 0.0)) throw DomainError("sqrt of a jet needs a positive value");
  std::vector<double> d(n + 1);
  double coef = 1.0, power = 0.5;
  for (int k = 0; k <= n; ++k) {
    d[k] = coef * std::pow(x, power);
    coef *= power;
    power -= 1.0;
  }
  return a.compose(d);
}

Jet reciprocal(const Jet& a) {
  const int n = order_of(a);
  const double x = a.value();
  if (x == 0.0) throw DomainError("reciprocal of a jet with zero value");
  std::vector<double> d(n + 1);
  double f = 1.0 / x;
  for (int k = 0; k <= n; ++k) {
    d[k] = f;
    f *= -static_cast<double>(k + 1) / x;
  }
  return a.compose(d);
}

Jet tanh(const Jet& a) {
  // tanh = 1 - 2/(exp(2a)+1) keeps everything in closed-form primitives
  return 1.0 - 2.0 * reciprocal(exp(2.0 * a) + 1.0);
}

Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }

}  // namespace roughmal
