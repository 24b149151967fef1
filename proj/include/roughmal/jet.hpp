#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace roughmal {

// Monomial basis of the truncated polynomial ring R[δ_1..δ_n] / (degree > order).
class JetSpace {
 public:
  // Cached per (nvars, order); the reference stays valid for the program lifetime.
  static const JetSpace& get(int nvars, int order);

  int nvars() const { return nvars_; }
  int order() const { return order_; }
  int size() const { return size_; }
  int degree(int k) const { return degree_[k]; }
  const int* exponents(int k) const { return exps_.data() + static_cast<std::size_t>(k) * nvars_; }
  // Index of the monomial with the given exponents, -1 if beyond the order.
  int index(std::span<const int> exps) const;
  int variable(int i) const { return var_index_[i]; }
  // Π α_i! for monomial k, converting Taylor coefficients to partial derivatives.
  double factorial_weight(int k) const { return weight_[k]; }

  struct Term {
    int a, b, c;
  };
  // All (a,b) with deg a + deg b ≤ order, c the index of the product monomial.
  const std::vector<Term>& products() const { return products_; }

  JetSpace(int nvars, int order);

 private:
  int nvars_, order_, size_;
  std::vector<int> exps_, degree_, var_index_;
  std::vector<double> weight_;
  std::vector<Term> products_;
};

// Truncated Taylor expansion around a point. A jet without a space is a
// plain constant, which lets generic code write S(2.0).
class Jet {
 public:
  static constexpr int kCapacity = 128;

  Jet(double v = 0.0) : sp_(nullptr), n_(1) { c_[0] = v; }  // NOLINT(implicit)
  Jet(const JetSpace& sp, double v);
  Jet(const Jet& o) : sp_(o.sp_), n_(o.n_) { copy_from(o); }
  Jet& operator=(const Jet& o) {
    sp_ = o.sp_;
    n_ = o.n_;
    copy_from(o);
    return *this;
  }

  static Jet variable(const JetSpace& sp, int i, double value);

  const JetSpace* space() const { return sp_; }
  int size() const { return n_; }
  double value() const { return c_[0]; }
  double coeff(int k) const { return k < n_ ? c_[k] : 0.0; }
  double& coeff(int k) { return c_[k]; }
  // ∂^{vars} at the expansion point; vars lists variable indices with repetition.
  double partial(std::span<const int> vars) const;

  Jet& operator+=(const Jet& o);
  Jet& operator-=(const Jet& o);
  Jet& operator*=(const Jet& o);
  Jet& operator*=(double s);
  Jet& operator+=(double s) {
    c_[0] += s;
    return *this;
  }
  Jet operator-() const;

  // f(this) where derivs[k] = f^(k)(value()), k = 0..order.
  Jet compose(std::span<const double> derivs) const;

 private:
  void copy_from(const Jet& o) {
    for (int k = 0; k < n_; ++k) c_[k] = o.c_[k];
  }
  void promote(const JetSpace* sp);

  const JetSpace* sp_;
  int n_;
  std::array<double, kCapacity> c_;
};

inline Jet operator+(Jet a, const Jet& b) { return a += b; }
inline Jet operator-(Jet a, const Jet& b) { return a -= b; }
inline Jet operator*(const Jet& a, const Jet& b) {
  Jet r = a;
  r *= b;
  return r;
}
inline Jet operator+(Jet a, double b) { return a += b; }
inline Jet operator+(double b, Jet a) { return a += b; }
inline Jet operator-(Jet a, double b) { return a += -b; }
inline Jet operator-(double b, const Jet& a) { return (-a) += b; }
inline Jet operator*(Jet a, double b) { return a *= b; }
inline Jet operator*(double b, Jet a) { return a *= b; }
inline Jet operator/(Jet a, double b) { return a *= 1.0 / b; }
Jet operator/(const Jet& a, const Jet& b);

Jet sin(const Jet& a);
Jet cos(const Jet& a);
Jet exp(const Jet& a);
Jet log(const Jet& a);
Jet sqrt(const Jet& a);
Jet tanh(const Jet& a);
Jet reciprocal(const Jet& a);

}  // namespace roughmal
