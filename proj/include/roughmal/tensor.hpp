#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace roughmal {

// Element of the truncated tensor algebra T^(depth)(R^dim), levels 0..depth
// stored contiguously; level k is a dim^k array in row-major word order.
class TensorSeries {
 public:
  TensorSeries() = default;
  TensorSeries(int dim, int depth);  // all zero, including the scalar
  static TensorSeries unit(int dim, int depth);

  int dim() const { return dim_; }
  int depth() const { return depth_; }
  std::size_t level_size(int k) const { return offsets_[k + 1] - offsets_[k]; }

  double scalar() const { return data_[0]; }
  double& scalar() { return data_[0]; }
  std::span<double> level(int k) { return {data_.data() + offsets_[k], level_size(k)}; }
  std::span<const double> level(int k) const { return {data_.data() + offsets_[k], level_size(k)}; }
  std::span<double> raw() { return data_; }
  std::span<const double> raw() const { return data_; }

  // Same content restricted to levels 0..new_depth.
  TensorSeries truncated(int new_depth) const;
  // Zero-padded to more levels.
  TensorSeries extended(int new_depth) const;

  TensorSeries& operator+=(const TensorSeries& o);
  TensorSeries& operator-=(const TensorSeries& o);
  TensorSeries& operator*=(double s);

 private:
  int dim_ = 0;
  int depth_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<double> data_;
};

TensorSeries operator+(TensorSeries a, const TensorSeries& b);
TensorSeries operator-(TensorSeries a, const TensorSeries& b);
TensorSeries operator*(double s, TensorSeries a);

// Truncated product with general scalars; depth = min of the two.
TensorSeries tensor_multiply(const TensorSeries& a, const TensorSeries& b);

// acc <- acc ⊗ next for group-like elements (scalar parts equal to 1).
// Level k becomes acc^k + next^k + Σ_{a=1}^{k-1} acc^a ⊗ next^{k-a}.
void chen_extend(TensorSeries& acc, const TensorSeries& next);

TensorSeries tensor_exp(const TensorSeries& x);  // scalar part of x ignored
TensorSeries tensor_log(const TensorSeries& g);  // scalar part of g must be 1

// Projection of a homogeneous level onto the free Lie algebra (Dynkin map / k).
std::vector<double> lie_project_level(std::span<const double> level, int dim, int k);
// Replaces levels 1..depth of a log by their Lie projections.
TensorSeries lie_projection(const TensorSeries& x);
// exp(Lie(log g)): nearest group-like element in the sense of the log coordinates.
TensorSeries group_projection(const TensorSeries& g);

// Signature of the straight segment with increment delta.
TensorSeries segment_signature(std::span<const double> delta, int depth);

// Frobenius norm of one level.
double level_norm(const TensorSeries& x, int k);

// a ⊗ b for flat arrays of sizes na, nb, accumulated into out (size na*nb).
void outer_accumulate(std::span<const double> a, std::span<const double> b, std::span<double> out);

}  // namespace roughmal
