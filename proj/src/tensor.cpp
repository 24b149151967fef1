#include "roughmal/tensor.hpp"

#include <cmath>

#include "roughmal/errors.hpp"
#include "roughmal/simd.hpp"

namespace roughmal {

TensorSeries::TensorSeries(int dim, int depth) : dim_(dim), depth_(depth) {
  if (dim < 1 || depth < 0) throw ArgumentError("tensor series needs dim >= 1 and depth >= 0");
  offsets_.resize(depth + 2);
  offsets_[0] = 0;
  std::size_t size = 1;
  for (int k = 0; k <= depth; ++k) {
    offsets_[k + 1] = offsets_[k] + size;
    size *= static_cast<std::size_t>(dim);
  }
  data_.assign(offsets_.back(), 0.0);
}

TensorSeries TensorSeries::unit(int dim, int depth) {
  TensorSeries t(dim, depth);
  t.data_[0] = 1.0;
  return t;
}

TensorSeries TensorSeries::truncated(int new_depth) const {
  TensorSeries t(dim_, new_depth);
  for (int k = 0; k <= new_depth && k <= depth_; ++k) {
    auto src = level(k);
    std::copy(src.begin(), src.end(), t.level(k).begin());
  }
  return t;
}

TensorSeries TensorSeries::extended(int new_depth) const { return truncated(new_depth); }

TensorSeries& TensorSeries::operator+=(const TensorSeries& o) {
  if (o.dim_ != dim_ || o.depth_ != depth_) throw ArgumentError("tensor series shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

TensorSeries& TensorSeries::operator-=(const TensorSeries& o) {
  if (o.dim_ != dim_ || o.depth_ != depth_) throw ArgumentError("tensor series shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

TensorSeries& TensorSeries::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

TensorSeries operator+(TensorSeries a, const TensorSeries& b) { return a += b; }
TensorSeries operator-(TensorSeries a, const TensorSeries& b) { return a -= b; }
TensorSeries operator*(double s, TensorSeries a) { return a *= s; }

void outer_accumulate(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  const std::size_t nb = b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != 0.0) simd::axpy(a[i], b.data(), out.data() + i * nb, nb);
  }
}

TensorSeries tensor_multiply(const TensorSeries& a, const TensorSeries& b) {
  if (a.dim() != b.dim()) throw ArgumentError("tensor product of series over different dimensions");
  const int depth = std::min(a.depth(), b.depth());
  TensorSeries out(a.dim(), depth);
  for (int k = 0; k <= depth; ++k) {
    auto o = out.level(k);
    for (int i = 0; i <= k; ++i) outer_accumulate(a.level(i), b.level(k - i), o);
  }
  return out;
}

void chen_extend(TensorSeries& acc, const TensorSeries& next) {
  if (acc.dim() != next.dim() || acc.depth() != next.depth()) {
    throw ArgumentError("chen combination needs matching dimension and level");
  }
  for (int k = acc.depth(); k >= 1; --k) {
    auto o = acc.level(k);
    auto n = next.level(k);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += n[i];
    for (int a = 1; a < k; ++a) outer_accumulate(acc.level(a), next.level(k - a), o);
  }
}

TensorSeries tensor_exp(const TensorSeries& x) {
  TensorSeries u = x;
  u.scalar() = 0.0;
  TensorSeries result = TensorSeries::unit(x.dim(), x.depth());
  TensorSeries term = TensorSeries::unit(x.dim(), x.depth());
  for (int n = 1; n <= x.depth(); ++n) {
    term = tensor_multiply(term, u);
    term *= 1.0 / n;
    result += term;
  }
  return result;
}

TensorSeries tensor_log(const TensorSeries& g) {
  if (std::abs(g.scalar() - 1.0) > 1e-12) throw DomainError("tensor log needs a unit scalar part");
  TensorSeries u = g;
  u.scalar() = 0.0;
  TensorSeries result(g.dim(), g.depth());
  TensorSeries power = TensorSeries::unit(g.dim(), g.depth());
  for (int n = 1; n <= g.depth(); ++n) {
    power = tensor_multiply(power, u);
    const double c = ((n % 2 == 1) ? 1.0 : -1.0) / n;
    for (std::size_t i = 0; i < result.raw().size(); ++i) result.raw()[i] += c * power.raw()[i];
  }
  return result;
}

namespace {

// Dynkin map r(a_1..a_k) = [..[a_1,a_2],..,a_k] applied linearly to a level-k array.
std::vector<double> dynkin(std::span<const double> p, int dim, int k) {
  if (k == 1) return {p.begin(), p.end()};
  const std::size_t head = p.size() / dim;  // dim^(k-1)
  std::vector<double> out(p.size(), 0.0);
  std::vector<double> slice(head);
  for (int a = 0; a < dim; ++a) {
    for (std::size_t w = 0; w < head; ++w) slice[w] = p[w * dim + a];
    const std::vector<double> q = dynkin(slice, dim, k - 1);
    // q ⊗ e_a - e_a ⊗ q
    for (std::size_t w = 0; w < head; ++w) {
      out[w * dim + a] += q[w];
      out[a * head + w] -= q[w];
    }
  }
  return out;
}

}  // namespace

std::vector<double> lie_project_level(std::span<const double> level, int dim, int k) {
  std::vector<double> r = dynkin(level, dim, k);
  for (double& v : r) v /= k;
  return r;
}

TensorSeries lie_projection(const TensorSeries& x) {
  TensorSeries out(x.dim(), x.depth());
  for (int k = 1; k <= x.depth(); ++k) {
    auto r = lie_project_level(x.level(k), x.dim(), k);
    std::copy(r.begin(), r.end(), out.level(k).begin());
  }
  return out;
}

TensorSeries group_projection(const TensorSeries& g) { return tensor_exp(lie_projection(tensor_log(g))); }

TensorSeries segment_signature(std::span<const double> delta, int depth) {
  const int dim = static_cast<int>(delta.size());
  TensorSeries s = TensorSeries::unit(dim, depth);
  if (depth >= 1) std::copy(delta.begin(), delta.end(), s.level(1).begin());
  for (int k = 2; k <= depth; ++k) {
    auto prev = s.level(k - 1);
    auto cur = s.level(k);
    for (std::size_t w = 0; w < prev.size(); ++w) {
      const double pw = prev[w] / k;
      for (int a = 0; a < dim; ++a) cur[w * dim + a] = pw * delta[a];
    }
  }
  return s;
}

double level_norm(const TensorSeries& x, int k) {
  auto l = x.level(k);
  return std::sqrt(simd::sum_squares(l.data(), l.size()));
}

}  // namespace roughmal
