#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "roughmal/path.hpp"
#include "roughmal/tensor.hpp"

namespace roughmal {

// Geometric rough path known through its per-cell signatures on a dyadic grid.
class RoughPathGrid {
 public:
  RoughPathGrid() = default;
  RoughPathGrid(double p, int grid_level, std::vector<double> origin, std::vector<TensorSeries> cells);

  int dim() const { return dim_; }
  double p() const { return p_; }
  int depth() const { return depth_; }
  int grid_level() const { return level_; }
  std::size_t cells() const { return cells_.size(); }
  std::size_t nodes() const { return cells_.size() + 1; }
  const TensorSeries& cell(std::size_t l) const { return cells_[l]; }
  std::span<const double> origin() const { return origin_; }

  // x_{t_a, t_b} for node indices a ≤ b, folded left from a.
  TensorSeries increment(std::size_t a, std::size_t b) const;
  // Level-1 trajectory origin + x^1_{0,t}.
  const SampledPath& trajectory() const { return trajectory_; }

  // Restriction to the listed coordinates (an algebra morphism, so Chen survives).
  RoughPathGrid project(std::span<const int> coords) const;

 private:
  int dim_ = 0;
  double p_ = 2.0;
  int depth_ = 0;
  int level_ = 0;
  std::vector<double> origin_;
  std::vector<TensorSeries> cells_;
  SampledPath trajectory_;
};

int top_level(double p);  // floor(p), validated for p in [2,4)

RoughPathGrid lift_piecewise_linear(const SampledPath& path, double p);

TensorSeries chen_combine(const TensorSeries& a, const TensorSeries& b);

// Per-level DP sums max over partitions of Σ |x^i|^{p/i} on nodes [s,t]; index i-1.
std::vector<double> variation_sums(const RoughPathGrid& x, std::size_t s, std::size_t t);
double p_variation(const RoughPathGrid& x, int level, std::size_t s, std::size_t t);
double control_omega(const RoughPathGrid& x, std::size_t s, std::size_t t);

// Plain enumeration of all partitions; only for tiny grids (oracle use).
double p_variation_brute_force(const RoughPathGrid& x, int level, std::size_t s, std::size_t t);

struct GreedyPartition {
  double alpha = 0.0;
  std::vector<std::size_t> stops;  // node indices τ_0 = 0 < τ_1 < ... , last one is the final node
  int n_alpha = 0;
};

GreedyPartition greedy_n_alpha(const RoughPathGrid& x, double alpha);

std::string rough_path_to_json(const RoughPathGrid& x);

// True when the cell is the signature of a straight segment (to rounding).
bool is_segment_cell(const TensorSeries& c);

}  // namespace roughmal
