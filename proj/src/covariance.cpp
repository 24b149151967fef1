#include "roughmal/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <string>

#include "roughmal/errors.hpp"
#include "roughmal/rng.hpp"
#include "roughmal/simd.hpp"

namespace roughmal {

CovarianceModel CovarianceModel::fbm(double hurst) {
  if (!(hurst > 0.25 && hurst <= 1.0)) {
    throw DomainError("Hurst parameter must lie in (1/4, 1], got " + std::to_string(hurst));
  }
  return {CovarianceKind::FractionalBrownian, hurst};
}

double CovarianceModel::rho() const {
  if (kind == CovarianceKind::Brownian) return 1.0;
  return std::max(1.0, 1.0 / (2.0 * hurst));
}

double covariance_eval(const CovarianceModel& model, double s, double t) {
  if (!(s >= 0.0 && s <= 1.0 && t >= 0.0 && t <= 1.0)) throw DomainError("covariance arguments must lie in [0,1]");
  if (model.kind == CovarianceKind::Brownian) return std::min(s, t);
  const double h2 = 2.0 * model.hurst;
  return 0.5 * (std::pow(s, h2) + std::pow(t, h2) - std::pow(std::abs(t - s), h2));
}

namespace {

void check_level(int m) {
  if (m < 0 || m > kMaxSampleLevel) {
    throw ArgumentError("grid level " + std::to_string(m) + " outside [0, " + std::to_string(kMaxSampleLevel) + "]");
  }
}

}  // namespace

Eigen::MatrixXd increment_covariance(const CovarianceModel& model, int m) {
  check_level(m);
  const int n = 1 << m;
  const double dt = std::ldexp(1.0, -m);
  if (model.kind == CovarianceKind::Brownian) return Eigen::MatrixXd::Identity(n, n) * dt;
  // stationary increments: Toeplitz in |k - l|
  const double h2 = 2.0 * model.hurst;
  const double scale = std::pow(dt, h2);
  std::vector<double> gamma(n);
  for (int k = 0; k < n; ++k) {
    const double kk = k;
    gamma[k] = 0.5 * scale * (std::pow(kk + 1.0, h2) + std::pow(std::abs(kk - 1.0), h2) - 2.0 * std::pow(kk, h2));
  }
  Eigen::MatrixXd q(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) q(i, j) = gamma[std::abs(i - j)];
  return q;
}

void CovarianceFactor::apply(std::span<const double> z, std::span<double> out) const {
  const std::size_t n = z.size();
  if (diagonal) {
    for (std::size_t i = 0; i < n; ++i) out[i] = diag_scale * z[i];
    return;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = simd::dot(lower.data() + i * n, z.data(), i + 1);
}

namespace {

std::shared_ptr<const CovarianceFactor> build_factor(const CovarianceModel& model, int m) {
  auto f = std::make_shared<CovarianceFactor>();
  f->level = m;
  const int n = 1 << m;
  if (model.kind == CovarianceKind::Brownian ||
      (model.kind == CovarianceKind::FractionalBrownian && model.hurst == 0.5)) {
    f->diagonal = true;
    f->diag_scale = std::sqrt(std::ldexp(1.0, -m));
    return f;
  }
  const Eigen::MatrixXd q = increment_covariance(model, m);
  for (double jitter : {0.0, 1e-15, 1e-14, 1e-13, 1e-12}) {
    Eigen::LLT<Eigen::MatrixXd> llt(q + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() != Eigen::Success) continue;
    const Eigen::MatrixXd l = llt.matrixL();
    bool finite = true;
    f->lower.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j) {
        f->lower[static_cast<std::size_t>(i) * n + j] = l(i, j);
        finite = finite && std::isfinite(l(i, j));
      }
    }
    if (!finite) continue;
    f->jitter = jitter;
    return f;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q, Eigen::EigenvaluesOnly);
  throw ModelError("increment covariance at level " + std::to_string(m) +
                   " is not factorizable; smallest eigenvalue " + std::to_string(eig.eigenvalues().minCoeff()));
}

}  // namespace

std::shared_ptr<const CovarianceFactor> covariance_factor(const CovarianceModel& model, int m) {
  check_level(m);
  static std::mutex mu;
  static std::map<std::tuple<int, double, int>, std::shared_ptr<const CovarianceFactor>> cache;
  const auto key = std::make_tuple(static_cast<int>(model.kind), model.hurst, m);
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  auto f = build_factor(model, m);
  std::lock_guard<std::mutex> lock(mu);
  auto [it, inserted] = cache.emplace(key, f);
  return it->second;
}

GaussianSample sample_gaussian(const CovarianceModel& model, int m, int dim, std::uint64_t seed, bool with_copy) {
  check_level(m);
  if (dim < 1) throw ArgumentError("sample dimension must be positive");
  const auto factor = covariance_factor(model, m);
  GaussianSample s;
  s.model = model;
  s.level = m;
  s.dim = dim;
  s.seed = seed;
  const std::size_t n = std::size_t{1} << m;
  std::vector<double> z(n), out(n);
  auto fill = [&](std::uint32_t stream, std::vector<double>& dst) {
    dst.assign(n * dim, 0.0);
    const NormalStream normals(seed, stream);
    for (int c = 0; c < dim; ++c) {
      for (std::size_t l = 0; l < n; ++l) z[l] = normals(static_cast<std::uint64_t>(c) * n + l);
      factor->apply(z, out);
      for (std::size_t l = 0; l < n; ++l) dst[l * dim + c] = out[l];
    }
  };
  fill(0, s.dw);
  if (with_copy) fill(1, s.db);
  return s;
}

SampledPath path_from_increments(std::span<const double> increments, int level, int dim) {
  SampledPath p(level, dim);
  if (increments.size() != p.cells() * dim) throw ArgumentError("increment array does not match the grid");
  for (std::size_t l = 0; l < p.cells(); ++l) {
    for (int c = 0; c < dim; ++c) p(l + 1, c) = p(l, c) + increments[l * dim + c];
  }
  return p;
}

SampledPath piecewise_linear_path(const GaussianSample& sample, int eval_level, bool copy) {
  if (eval_level < sample.level) throw ArgumentError("evaluation grid is coarser than the sample grid");
  if (copy && !sample.has_copy()) throw ArgumentError("sample carries no independent copy");
  const SampledPath p = path_from_increments(copy ? sample.db : sample.dw, sample.level, sample.dim);
  return eval_level == sample.level ? p : p.refine(eval_level);
}

// ---------------------------------------------------------------------------
// 2D rho-variation

namespace {

struct RectTable {
  int n;  // grid points - 1
  std::vector<double> r;  // R(t_a, t_b), (n+1)^2
  double operator()(int a, int b) const { return r[static_cast<std::size_t>(a) * (n + 1) + b]; }
  double rect(int a0, int a1, int b0, int b1) const {
    return (*this)(a1, b1) - (*this)(a0, b1) - (*this)(a1, b0) + (*this)(a0, b0);
  }
};

double partition_sum(const RectTable& t, const std::vector<int>& p1, const std::vector<int>& p2, double rho) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < p1.size(); ++i)
    for (std::size_t j = 0; j + 1 < p2.size(); ++j)
      s += std::pow(std::abs(t.rect(p1[i], p1[i + 1], p2[j], p2[j + 1])), rho);
  return s;
}

// Best partition of the free axis given the fixed one (exact DP, R symmetric).
double best_other_axis(const RectTable& t, const std::vector<int>& fixed, double rho, std::vector<int>* argpart) {
  const int n = t.n;
  std::vector<double> v(n + 1, 0.0), cost(n + 1);
  std::vector<int> from(n + 1, 0);
  for (int j = 1; j <= n; ++j) {
    for (int i = 0; i < j; ++i) {
      double c = 0.0;
      for (std::size_t r = 0; r + 1 < fixed.size(); ++r) {
        const double a = std::abs(t.rect(fixed[r], fixed[r + 1], i, j));
        c += rho == 1.0 ? a : std::pow(a, rho);
      }
      cost[i] = c;
    }
    double best;
    from[j] = static_cast<int>(simd::max_plus(v.data(), cost.data(), j, &best));
    v[j] = best;
  }
  if (argpart != nullptr) {
    std::vector<int> p;
    for (int j = n; j > 0; j = from[j]) p.push_back(j);
    p.push_back(0);
    std::reverse(p.begin(), p.end());
    *argpart = p;
  }
  return v[n];
}

RectTable make_table(const CovarianceFunction& cov, int m) {
  RectTable t;
  t.n = 1 << m;
  t.r.resize(static_cast<std::size_t>(t.n + 1) * (t.n + 1));
  for (int a = 0; a <= t.n; ++a)
    for (int b = 0; b <= t.n; ++b) t.r[static_cast<std::size_t>(a) * (t.n + 1) + b] = cov(std::ldexp(a, -m), std::ldexp(b, -m));
  return t;
}

RhoVariationResult exact_rho(const CovarianceFunction& cov, int m, double rho) {
  const RectTable t = make_table(cov, m);
  const int n = t.n;
  RhoVariationResult res;
  res.exact = true;
  res.level = m;
  double best = -1.0;
  const unsigned masks = 1u << std::max(0, n - 1);
  std::vector<int> p1, p2;
  for (unsigned mask = 0; mask < masks; ++mask) {
    p1.assign(1, 0);
    for (int k = 1; k < n; ++k)
      if (mask & (1u << (k - 1))) p1.push_back(k);
    p1.push_back(n);
    const double v = best_other_axis(t, p1, rho, &p2);
    if (v > best) {
      best = v;
      res.axis1 = p1;
      res.axis2 = p2;
    }
  }
  res.value = std::pow(best, 1.0 / rho);
  return res;
}

}  // namespace

RhoVariationResult rho_variation_2d(const CovarianceFunction& cov, int m, double rho) {
  if (!(rho >= 1.0)) throw ArgumentError("rho-variation needs rho >= 1");
  if (m < 0 || m > 10) throw ArgumentError("rho-variation level must lie in [0, 10]");
  if (m <= kExactRhoVariationLevel) return exact_rho(cov, m, rho);
  // Coordinate ascent seeded by the previous level's optimum: each level
  // starts from a feasible pair at least as good, so values never decrease in m.
  RhoVariationResult prev = rho_variation_2d(cov, m - 1, rho);
  const RectTable t = make_table(cov, m);
  std::vector<int> p1, p2;
  for (int k : prev.axis1) p1.push_back(2 * k);
  for (int k : prev.axis2) p2.push_back(2 * k);
  double cur = partition_sum(t, p1, p2, rho);
  for (int round = 0; round < 20; ++round) {
    std::vector<int> n1, n2;
    best_other_axis(t, p1, rho, &n2);
    const double next = best_other_axis(t, n2, rho, &n1);
    if (!(next > cur)) break;
    p1 = n1;
    p2 = n2;
    cur = next;
  }
  RhoVariationResult res;
  res.exact = false;
  res.level = m;
  res.axis1 = p1;
  res.axis2 = p2;
  res.value = std::max(std::pow(cur, 1.0 / rho), prev.value);
  return res;
}

RhoVariationResult rho_variation_2d(const CovarianceModel& model, int m, double rho) {
  return rho_variation_2d([model](double s, double t) { return covariance_eval(model, s, t); }, m, rho);
}

double default_q(double hurst) { return hurst >= 0.5 ? 1.0 : 1.0 / (hurst + 0.5) + 0.01; }

double default_p(const CovarianceModel& model) {
  const double two_rho = 2.0 * model.rho();
  return two_rho + 0.25 * (4.0 - two_rho);
}

// ---------------------------------------------------------------------------
// Cameron-Martin coordinates

double path_variation(const SampledPath& path, double exponent) {
  if (!(exponent >= 1.0)) throw ArgumentError("variation exponent must be >= 1");
  const std::size_t n = path.nodes();
  std::vector<double> v(n, 0.0), cost(n);
  for (std::size_t j = 1; j < n; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      double s = 0.0;
      for (int c = 0; c < path.dim; ++c) {
        const double d = path(j, c) - path(i, c);
        s += d * d;
      }
      cost[i] = std::pow(std::sqrt(s), exponent);
    }
    simd::max_plus(v.data(), cost.data(), j, &v[j]);
  }
  return std::pow(v[n - 1], 1.0 / exponent);
}

CameronMartinCoords cameron_martin_coords(const CovarianceModel& model, int m, int dim, double p, double q) {
  if (dim < 1) throw ArgumentError("Cameron-Martin dimension must be positive");
  if (!(q >= 1.0)) throw ArgumentError("q must be >= 1");
  if (m > 10) throw ArgumentError("Cameron-Martin coordinates are limited to level 10");
  CameronMartinCoords c;
  c.level = m;
  c.dim = dim;
  c.p = p;
  c.q = q;
  c.covariance = increment_covariance(model, m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.covariance);
  c.eigenvalues = eig.eigenvalues();
  c.eigenvectors = eig.eigenvectors();
  c.rank_tolerance = 1e-12 * std::max(1e-300, c.eigenvalues.cwiseAbs().maxCoeff()) * c.covariance.rows();

  // Embedding constant over eigen-directions and a fixed set of random directions h = Q a.
  const int n = static_cast<int>(c.covariance.rows());
  double worst = 0.0;
  auto probe = [&](const Eigen::VectorXd& a) {
    const Eigen::VectorXd h = c.covariance * a;
    const double hn = std::sqrt(std::max(0.0, a.dot(h)));
    if (hn <= 0.0) return;
    const SampledPath path = path_from_increments({h.data(), static_cast<std::size_t>(n)}, m, 1);
    worst = std::max(worst, path_variation(path, q) / hn);
  };
  for (int k = 0; k < n; ++k)
    if (c.eigenvalues(k) > c.rank_tolerance) probe(c.eigenvectors.col(k));
  const NormalStream normals(0xC0FFEEull, 7);
  for (int r = 0; r < 64; ++r) {
    Eigen::VectorXd a(n);
    for (int k = 0; k < n; ++k) a(k) = normals(static_cast<std::uint64_t>(r) * n + k);
    probe(a);
  }
  c.embedding_constant = worst;
  return c;
}

namespace {

// Coefficients of the range projection, inf flag when a component leaves the range.
double quad_form(const CameronMartinCoords& c, std::span<const double> h, std::span<const double> k, bool* outside) {
  const int n = static_cast<int>(c.covariance.rows());
  if (h.size() != static_cast<std::size_t>(n) * c.dim || k.size() != h.size()) {
    throw ArgumentError("Cameron-Martin coefficient vector has the wrong size");
  }
  double total = 0.0;
  for (int comp = 0; comp < c.dim; ++comp) {
    Eigen::VectorXd hv(n), kv(n);
    for (int l = 0; l < n; ++l) {
      hv(l) = h[static_cast<std::size_t>(l) * c.dim + comp];
      kv(l) = k[static_cast<std::size_t>(l) * c.dim + comp];
    }
    const Eigen::VectorXd hc = c.eigenvectors.transpose() * hv;
    const Eigen::VectorXd kc = c.eigenvectors.transpose() * kv;
    const double scale = std::max(hv.norm(), kv.norm());
    for (int j = 0; j < n; ++j) {
      const double lam = c.eigenvalues(j);
      if (lam > c.rank_tolerance) {
        total += hc(j) * kc(j) / lam;
      } else if (std::abs(hc(j)) > 1e-9 * scale || std::abs(kc(j)) > 1e-9 * scale) {
        *outside = true;
      }
    }
  }
  return total;
}

}  // namespace

double cm_norm(const CameronMartinCoords& coords, std::span<const double> h_increments) {
  bool outside = false;
  const double s = quad_form(coords, h_increments, h_increments, &outside);
  if (outside) return std::numeric_limits<double>::infinity();
  return std::sqrt(std::max(0.0, s));
}

double cm_inner(const CameronMartinCoords& coords, std::span<const double> h, std::span<const double> k) {
  bool outside = false;
  const double s = quad_form(coords, h, k, &outside);
  if (outside) throw DomainError("Cameron-Martin inner product of an element outside the range");
  return s;
}

}  // namespace roughmal
