#include "roughmal/roughpath.hpp"

#include <cmath>
#include <json.hpp>

#include "roughmal/errors.hpp"
#include "roughmal/simd.hpp"

namespace roughmal {

int top_level(double p) {
  if (!(p >= 2.0 && p < 4.0)) throw ArgumentError("roughness p must lie in [2,4)");
  return static_cast<int>(std::floor(p));
}

RoughPathGrid::RoughPathGrid(double p, int grid_level, std::vector<double> origin, std::vector<TensorSeries> cells)
    : p_(p), level_(grid_level), origin_(std::move(origin)), cells_(std::move(cells)) {
  depth_ = top_level(p);
  dim_ = static_cast<int>(origin_.size());
  if (cells_.size() != (std::size_t{1} << grid_level)) throw ArgumentError("cell count does not match the grid level");
  for (const auto& c : cells_) {
    if (c.dim() != dim_ || c.depth() != depth_) throw ArgumentError("cell tensors do not match the rough path shape");
  }
  trajectory_ = SampledPath(level_, dim_);
  for (int c = 0; c < dim_; ++c) trajectory_(0, c) = origin_[c];
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    auto d = cells_[l].level(1);
    for (int c = 0; c < dim_; ++c) trajectory_(l + 1, c) = trajectory_(l, c) + d[c];
  }
}

TensorSeries RoughPathGrid::increment(std::size_t a, std::size_t b) const {
  if (a > b || b > cells_.size()) throw ArgumentError("increment needs node indices a <= b within the grid");
  if (a == b) return TensorSeries::unit(dim_, depth_);
  TensorSeries acc = cells_[a];
  for (std::size_t l = a + 1; l < b; ++l) chen_extend(acc, cells_[l]);
  return acc;
}

RoughPathGrid RoughPathGrid::project(std::span<const int> coords) const {
  const int k = static_cast<int>(coords.size());
  for (int c : coords)
    if (c < 0 || c >= dim_) throw ArgumentError("projection coordinate out of range");
  std::vector<double> origin(k);
  for (int i = 0; i < k; ++i) origin[i] = origin_[coords[i]];
  std::vector<TensorSeries> cells;
  cells.reserve(cells_.size());
  for (const auto& c : cells_) {
    TensorSeries t = TensorSeries::unit(k, depth_);
    for (int lev = 1; lev <= depth_; ++lev) {
      auto src = c.level(lev);
      auto dst = t.level(lev);
      std::vector<int> word(lev, 0);
      for (std::size_t w = 0; w < dst.size(); ++w) {
        std::size_t rem = w, idx = 0;
        for (int q = lev - 1; q >= 0; --q) {
          word[q] = static_cast<int>(rem % k);
          rem /= k;
        }
        for (int q = 0; q < lev; ++q) idx = idx * dim_ + coords[word[q]];
        dst[w] = src[idx];
      }
    }
    cells.push_back(std::move(t));
  }
  return RoughPathGrid(p_, level_, std::move(origin), std::move(cells));
}

RoughPathGrid lift_piecewise_linear(const SampledPath& path, double p) {
  const int depth = top_level(p);
  std::vector<TensorSeries> cells;
  cells.reserve(path.cells());
  for (std::size_t l = 0; l < path.cells(); ++l) cells.push_back(segment_signature(path.increment(l), depth));
  std::vector<double> origin(path.at(0).begin(), path.at(0).end());
  return RoughPathGrid(p, path.level, std::move(origin), std::move(cells));
}

TensorSeries chen_combine(const TensorSeries& a, const TensorSeries& b) {
  TensorSeries out = a;
  chen_extend(out, b);
  return out;
}

std::vector<double> variation_sums(const RoughPathGrid& x, std::size_t s, std::size_t t) {
  if (s > t || t >= x.nodes()) throw ArgumentError("variation interval must be grid-aligned and ordered");
  const int depth = x.depth();
  std::vector<double> result(depth, 0.0);
  if (s == t) return result;
  const std::size_t n = t - s;
  std::vector<TensorSeries> running;  // running[k] = x_{s+k, s+j}
  running.reserve(n);
  std::vector<std::vector<double>> v(depth, std::vector<double>(n + 1, 0.0));
  std::vector<double> cost(n);
  for (std::size_t j = 1; j <= n; ++j) {
    const TensorSeries& c = x.cell(s + j - 1);
    for (auto& r : running) chen_extend(r, c);
    running.push_back(c);
    for (int i = 1; i <= depth; ++i) {
      const double e = x.p() / i;
      for (std::size_t k = 0; k < j; ++k) cost[k] = std::pow(level_norm(running[k], i), e);
      simd::max_plus(v[i - 1].data(), cost.data(), j, &v[i - 1][j]);
    }
  }
  for (int i = 0; i < depth; ++i) result[i] = v[i][n];
  return result;
}

double p_variation(const RoughPathGrid& x, int level, std::size_t s, std::size_t t) {
  if (level < 1 || level > x.depth()) throw ArgumentError("variation level out of range");
  const auto sums = variation_sums(x, s, t);
  return std::pow(sums[level - 1], level / x.p());
}

double control_omega(const RoughPathGrid& x, std::size_t s, std::size_t t) {
  double w = 0.0;
  for (double v : variation_sums(x, s, t)) w += v;
  return w;
}

double p_variation_brute_force(const RoughPathGrid& x, int level, std::size_t s, std::size_t t) {
  if (level < 1 || level > x.depth()) throw ArgumentError("variation level out of range");
  if (s > t || t >= x.nodes()) throw ArgumentError("variation interval must be grid-aligned and ordered");
  if (s == t) return 0.0;
  const std::size_t n = t - s;
  if (n > 20) throw ArgumentError("brute-force variation is limited to 20 cells");
  const double e = x.p() / level;
  double best = 0.0;
  for (unsigned long mask = 0; mask < (1ul << (n - 1)); ++mask) {
    double sum = 0.0;
    std::size_t prev = s;
    for (std::size_t k = 1; k <= n; ++k) {
      if (k < n && !(mask & (1ul << (k - 1)))) continue;
      sum += std::pow(level_norm(x.increment(prev, s + k), level), e);
      prev = s + k;
    }
    best = std::max(best, sum);
  }
  return std::pow(best, level / x.p());
}

GreedyPartition greedy_n_alpha(const RoughPathGrid& x, double alpha) {
  if (!(alpha > 0.0)) throw ArgumentError("greedy partition needs alpha > 0");
  GreedyPartition g;
  g.alpha = alpha;
  g.stops.push_back(0);
  const std::size_t last = x.cells();
  const int depth = x.depth();
  std::size_t tau = 0;
  while (tau < last) {
    // forward DP from tau until the control reaches alpha
    std::vector<TensorSeries> running;
    std::vector<std::vector<double>> v(depth, std::vector<double>(1, 0.0));
    std::vector<double> cost;
    std::size_t next = last;
    for (std::size_t j = 1; tau + j <= last; ++j) {
      const TensorSeries& c = x.cell(tau + j - 1);
      for (auto& r : running) chen_extend(r, c);
      running.push_back(c);
      cost.resize(j);
      double omega = 0.0;
      for (int i = 1; i <= depth; ++i) {
        const double e = x.p() / i;
        for (std::size_t k = 0; k < j; ++k) cost[k] = std::pow(level_norm(running[k], i), e);
        double best;
        simd::max_plus(v[i - 1].data(), cost.data(), j, &best);
        v[i - 1].push_back(best);
        omega += best;
      }
      if (omega >= alpha) {
        next = tau + j;
        break;
      }
    }
    tau = next;
    g.stops.push_back(tau);
    if (tau < last) ++g.n_alpha;
  }
  return g;
}

std::string rough_path_to_json(const RoughPathGrid& x) {
  nlohmann::json j;
  j["dimension"] = x.dim();
  j["p"] = x.p();
  j["level"] = x.depth();
  j["grid_m"] = x.grid_level();
  j["origin"] = std::vector<double>(x.origin().begin(), x.origin().end());
  const int d = x.dim();
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t l = 0; l < x.cells(); ++l) {
    const auto& c = x.cell(l);
    nlohmann::json cell;
    auto l1 = c.level(1);
    cell["l1"] = std::vector<double>(l1.begin(), l1.end());
    auto l2 = c.level(2);
    nlohmann::json m2 = nlohmann::json::array();
    for (int a = 0; a < d; ++a) m2.push_back(std::vector<double>(l2.begin() + a * d, l2.begin() + (a + 1) * d));
    cell["l2"] = m2;
    if (x.depth() >= 3) {
      auto l3 = c.level(3);
      nlohmann::json m3 = nlohmann::json::array();
      for (int a = 0; a < d; ++a) {
        nlohmann::json rows = nlohmann::json::array();
        for (int b = 0; b < d; ++b) {
          auto off = l3.begin() + (a * d + b) * d;
          rows.push_back(std::vector<double>(off, off + d));
        }
        m3.push_back(rows);
      }
      cell["l3"] = m3;
    }
    cells.push_back(cell);
  }
  j["cells"] = cells;
  return j.dump();
}

bool is_segment_cell(const TensorSeries& c) {
  const TensorSeries seg = segment_signature(c.level(1), c.depth());
  for (int k = 2; k <= c.depth(); ++k) {
    auto a = c.level(k);
    auto b = seg.level(k);
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      scale = std::max(scale, std::abs(b[i]));
      diff = std::max(diff, std::abs(a[i] - b[i]));
    }
    if (diff > 1e-13 * std::max(scale, 1e-300) && diff > 1e-300) return false;
  }
  return true;
}

}  // namespace roughmal
