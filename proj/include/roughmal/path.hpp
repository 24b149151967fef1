#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace roughmal {

// Path values at the nodes l·2^-level, l = 0..2^level, stored row-major (node, component).
struct SampledPath {
  int level = 0;
  int dim = 0;
  std::vector<double> values;

  SampledPath() = default;
  SampledPath(int level_, int dim_);

  std::size_t nodes() const { return (std::size_t{1} << level) + 1; }
  std::size_t cells() const { return std::size_t{1} << level; }
  double time(std::size_t node) const;

  std::span<double> at(std::size_t node) { return {values.data() + node * dim, static_cast<std::size_t>(dim)}; }
  std::span<const double> at(std::size_t node) const {
    return {values.data() + node * dim, static_cast<std::size_t>(dim)};
  }
  double& operator()(std::size_t node, int comp) { return values[node * dim + comp]; }
  double operator()(std::size_t node, int comp) const { return values[node * dim + comp]; }

  // Increment of the path over cell l.
  std::vector<double> increment(std::size_t cell) const;

  // Linear interpolation onto a finer dyadic grid; coarse nodes are copied.
  SampledPath refine(int new_level) const;
  // Values at the nodes of a coarser grid.
  SampledPath restrict_to(int new_level) const;
  // Columns [first, first+count).
  SampledPath components(int first, int count) const;
};

SampledPath concat_components(const SampledPath& a, const SampledPath& b);

// "t,<prefix>_1..<prefix>_d", 17 significant digits.
std::string path_to_csv(const SampledPath& path, const std::string& prefix = "component");

}  // namespace roughmal
