#include <cmath>
#include <cstdio>
#include <sstream>

#include "roughmal/errors.hpp"
#include "roughmal/path.hpp"

namespace roughmal {

SampledPath::SampledPath(int level_, int dim_) : level(level_), dim(dim_) {
  if (level_ < 0 || level_ > 24) throw ArgumentError("grid level out of range");
  if (dim_ < 1) throw ArgumentError("path dimension must be positive");
  values.assign(nodes() * static_cast<std::size_t>(dim), 0.0);
}

double SampledPath::time(std::size_t node) const { return std::ldexp(static_cast<double>(node), -level); }

std::vector<double> SampledPath::increment(std::size_t cell) const {
  std::vector<double> d(dim);
  for (int c = 0; c < dim; ++c) d[c] = (*this)(cell + 1, c) - (*this)(cell, c);
  return d;
}

SampledPath SampledPath::refine(int new_level) const {
  if (new_level < level) throw ArgumentError("refinement target is coarser than the path grid");
  SampledPath out(new_level, dim);
  const std::size_t factor = std::size_t{1} << (new_level - level);
  for (std::size_t l = 0; l < cells(); ++l) {
    for (std::size_t j = 0; j < factor; ++j) {
      const double theta = static_cast<double>(j) / static_cast<double>(factor);
      for (int c = 0; c < dim; ++c) {
        const double a = (*this)(l, c), b = (*this)(l + 1, c);
        out(l * factor + j, c) = j == 0 ? a : a + theta * (b - a);
      }
    }
  }
  for (int c = 0; c < dim; ++c) out(out.cells(), c) = (*this)(cells(), c);
  return out;
}

SampledPath SampledPath::restrict_to(int new_level) const {
  if (new_level > level) throw ArgumentError("restriction target is finer than the path grid");
  SampledPath out(new_level, dim);
  const std::size_t factor = std::size_t{1} << (level - new_level);
  for (std::size_t l = 0; l < out.nodes(); ++l) {
    for (int c = 0; c < dim; ++c) out(l, c) = (*this)(l * factor, c);
  }
  return out;
}

SampledPath SampledPath::components(int first, int count) const {
  if (first < 0 || count < 1 || first + count > dim) throw ArgumentError("component range out of bounds");
  SampledPath out(level, count);
  for (std::size_t l = 0; l < nodes(); ++l) {
    for (int c = 0; c < count; ++c) out(l, c) = (*this)(l, first + c);
  }
  return out;
}

SampledPath concat_components(const SampledPath& a, const SampledPath& b) {
  if (a.level != b.level) throw ArgumentError("concatenated paths must share a grid");
  SampledPath out(a.level, a.dim + b.dim);
  for (std::size_t l = 0; l < a.nodes(); ++l) {
    for (int c = 0; c < a.dim; ++c) out(l, c) = a(l, c);
    for (int c = 0; c < b.dim; ++c) out(l, a.dim + c) = b(l, c);
  }
  return out;
}

std::string path_to_csv(const SampledPath& path, const std::string& prefix) {
  std::ostringstream os;
  os << "t";
  for (int c = 0; c < path.dim; ++c) os << ',' << prefix << '_' << (c + 1);
  os << '\n';
  char buf[64];
  for (std::size_t l = 0; l < path.nodes(); ++l) {
    std::snprintf(buf, sizeof buf, "%.17g", path.time(l));
    os << buf;
    for (int c = 0; c < path.dim; ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", path(l, c));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace roughmal
