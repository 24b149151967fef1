#include "roughmal/integration.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "roughmal/errors.hpp"

namespace roughmal {

namespace {

// Left-point Riemann-Stieltjes sums at the level of g.
SampledPath left_point_sums(const SampledPath& f, const SampledPath& g) {
  const int D = g.dim, E = f.dim / g.dim;
  SampledPath out(g.level, E);
  for (std::size_t l = 0; l < g.cells(); ++l) {
    for (int i = 0; i < E; ++i) {
      double s = 0.0;
      for (int b = 0; b < D; ++b) s += f(l, i * D + b) * (g(l + 1, b) - g(l, b));
      out(l + 1, i) = out(l, i) + s;
    }
  }
  return out;
}

}  // namespace

SampledPath young_integral(const SampledPath& f, const SampledPath& g, double q, double p) {
  if (!(p >= 1.0 && q >= 1.0)) throw ArgumentError("variation exponents must be >= 1");
  if (!(1.0 / p + 1.0 / q > 1.0)) {
    std::ostringstream os;
    os << "Young pairing needs 1/p + 1/q > 1, got p=" << p << ", q=" << q;
    throw RegularityError(os.str());
  }
  if (g.dim < 1 || f.dim % g.dim != 0) throw ArgumentError("integrand dimension must be a multiple of the integrator's");
  const int level = std::max(f.level, g.level);
  const SampledPath f0 = f.refine(level), g0 = g.refine(level);
  const SampledPath s0 = left_point_sums(f0, g0);
  const SampledPath s1 = left_point_sums(f0.refine(level + 1), g0.refine(level + 1)).restrict_to(level);
  // Richardson: the left-point error is first order in the mesh
  SampledPath out(level, s0.dim);
  for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] = 2.0 * s1.values[k] - s0.values[k];
  return out;
}

namespace {

class PieceIntegrator {
 public:
  PieceIntegrator(const OneForm& f, int L, const RoughIntegralOptions& opts) : f_(f), L_(L), opts_(opts) {
    D_ = f.in_dim();
    E_ = f.out_dim();
    Dout_ = D_ + E_;
  }

  // exp of the joint log-signature of one log-linear piece based at xi.
  TensorSeries piece(std::span<const double> xi, const TensorSeries& ell) {
    f_.derivatives(xi, L_, T_);
    const TensorSeries X = tensor_exp(ell.extended(L_ + 1));
    const int D = D_, E = E_, Do = Dout_;
    TensorSeries lam(Do, L_);
    auto l1 = lam.level(1);
    auto e1 = ell.level(1);
    for (int b = 0; b < D; ++b) l1[b] = e1[b];
    std::size_t Dj = 1;
    for (int j = 0; j <= L_; ++j) {
      auto Xj = X.level(j + 1);
      const auto& t = T_[j];
      for (int i = 0; i < E; ++i) {
        double s = 0.0;
        for (int b = 0; b < D; ++b) {
          const double* row = t.data() + (static_cast<std::size_t>(i) * D + b) * Dj;
          for (std::size_t c = 0; c < Dj; ++c) s += row[c] * Xj[c * D + b];
        }
        l1[D + i] += s;
      }
      Dj *= D;
    }
    if (L_ < 2) return tensor_exp(lam);

    fh_.assign(static_cast<std::size_t>(Do) * D, 0.0);
    for (int b = 0; b < D; ++b) fh_[b * D + b] = 1.0;
    for (int i = 0; i < E; ++i)
      for (int b = 0; b < D; ++b) fh_[(D + i) * D + b] = T_[0][i * D + b];
    auto Fh = [&](int p, int b) { return fh_[static_cast<std::size_t>(p) * D + b]; };

    auto l2 = lam.level(2);
    auto e2 = ell.level(2);
    std::vector<double> tmp(static_cast<std::size_t>(Do) * D, 0.0);
    for (int p = 0; p < Do; ++p)
      for (int b = 0; b < D; ++b) {
        double s = 0.0;
        for (int a = 0; a < D; ++a) s += Fh(p, a) * e2[a * D + b];
        tmp[p * D + b] = s;
      }
    for (int p = 0; p < Do; ++p)
      for (int q = 0; q < Do; ++q) {
        double s = 0.0;
        for (int b = 0; b < D; ++b) s += tmp[p * D + b] * Fh(q, b);
        l2[p * Do + q] = s;
      }

    // third-degree correction from the first-order variation of f along the piece
    const auto& T1 = T_[1];
    auto t1 = [&](int i, int a, int c) { return T1[(static_cast<std::size_t>(i) * D + a) * D + c]; };
    auto X1 = X.level(1);
    auto X2 = X.level(2);
    auto X3 = X.level(3);
    auto x3 = [&](int a, int b, int c) { return X3[(static_cast<std::size_t>(a) * D + b) * D + c]; };
    std::vector<double> y11(Do, 0.0), y12(Do, 0.0);
    for (int p = 0; p < Do; ++p)
      for (int a = 0; a < D; ++a) y11[p] += Fh(p, a) * X1[a];
    for (int i = 0; i < E; ++i) {
      double s = 0.0;
      for (int a = 0; a < D; ++a)
        for (int c = 0; c < D; ++c) s += t1(i, a, c) * X2[c * D + a];
      y12[D + i] = s;
    }
    std::vector<double> U(static_cast<std::size_t>(E) * D, 0.0), V(static_cast<std::size_t>(D) * E, 0.0);
    for (int i = 0; i < E; ++i)
      for (int a = 0; a < D; ++a)
        for (int c = 0; c < D; ++c) {
          const double w = t1(i, a, c);
          if (w == 0.0) continue;
          for (int b = 0; b < D; ++b) U[i * D + b] += w * x3(c, a, b);
        }
    for (int i = 0; i < E; ++i)
      for (int b = 0; b < D; ++b)
        for (int c = 0; c < D; ++c) {
          const double w = t1(i, b, c);
          if (w == 0.0) continue;
          for (int a = 0; a < D; ++a) V[a * E + i] += w * (x3(c, a, b) + x3(a, c, b));
        }
    for (int p = 0; p < Do; ++p)
      for (int q = 0; q < Do; ++q) {
        double s = -0.5 * (y11[p] * y12[q] + y12[p] * y11[q]);
        if (p >= D)
          for (int b = 0; b < D; ++b) s += U[(p - D) * D + b] * Fh(q, b);
        if (q >= D)
          for (int a = 0; a < D; ++a) s += Fh(p, a) * V[a * E + (q - D)];
        l2[p * Do + q] += s;
      }
    for (int p = 0; p < Do; ++p)
      for (int q = p; q < Do; ++q) {
        const double a = 0.5 * (l2[p * Do + q] - l2[q * Do + p]);
        l2[p * Do + q] = a;
        l2[q * Do + p] = -a;
      }

    if (L_ >= 3) {
      auto e3 = ell.level(3);
      auto l3 = lam.level(3);
      const std::size_t D2 = static_cast<std::size_t>(D) * D;
      std::vector<double> a1(static_cast<std::size_t>(Do) * D2, 0.0), a2(static_cast<std::size_t>(Do) * Do * D, 0.0);
      for (int p = 0; p < Do; ++p)
        for (int b1 = 0; b1 < D; ++b1) {
          const double w = Fh(p, b1);
          if (w == 0.0) continue;
          for (std::size_t r = 0; r < D2; ++r) a1[p * D2 + r] += w * e3[b1 * D2 + r];
        }
      for (int p = 0; p < Do; ++p)
        for (int q = 0; q < Do; ++q)
          for (int b2 = 0; b2 < D; ++b2) {
            const double w = Fh(q, b2);
            if (w == 0.0) continue;
            for (int b3 = 0; b3 < D; ++b3) a2[(p * Do + q) * D + b3] += w * a1[p * D2 + b2 * D + b3];
          }
      for (int p = 0; p < Do; ++p)
        for (int q = 0; q < Do; ++q)
          for (int r = 0; r < Do; ++r) {
            double s = 0.0;
            for (int b3 = 0; b3 < D; ++b3) s += Fh(r, b3) * a2[(p * Do + q) * D + b3];
            l3[(static_cast<std::size_t>(p) * Do + q) * Do + r] = s;
          }
    }
    return tensor_exp(lam);
  }

  TensorSeries integrate(const std::vector<double>& xi, const TensorSeries& ell, double tol) {
    return refine(xi, ell, piece(xi, ell), tol, 0);
  }

 private:
  // `whole` is piece(xi, ell), passed down so each level evaluates only the halves.
  TensorSeries refine(const std::vector<double>& xi, const TensorSeries& ell, const TensorSeries& whole, double tol,
                      int depth) {
    TensorSeries half = ell;
    half *= 0.5;
    half.scalar() = 0.0;
    std::vector<double> mid = xi;
    for (int b = 0; b < D_; ++b) mid[b] += half.level(1)[b];
    const TensorSeries left = piece(xi, half);
    const TensorSeries right = piece(mid, half);
    TensorSeries split = left;
    chen_extend(split, right);
    double defect = 0.0, scale = 0.0;
    for (std::size_t k = 1; k < whole.raw().size(); ++k) {
      defect = std::max(defect, std::abs(whole.raw()[k] - split.raw()[k]));
      scale = std::max(scale, std::abs(whole.raw()[k]));
    }
    // below this the halves only differ by rounding
    if (defect <= tol || defect <= 64.0 * std::numeric_limits<double>::epsilon() * scale) return split;
    if (depth >= opts_.max_depth) {
      std::ostringstream os;
      os << "rough integral of " << f_.name() << " did not converge after " << depth << " halvings; residual defect "
         << defect << " above tolerance " << tol;
      throw NumericalError(os.str());
    }
    TensorSeries out = refine(xi, half, left, 0.5 * tol, depth + 1);
    chen_extend(out, refine(mid, half, right, 0.5 * tol, depth + 1));
    return out;
  }

  const OneForm& f_;
  int L_;
  RoughIntegralOptions opts_;
  int D_ = 0, E_ = 0, Dout_ = 0;
  std::vector<std::vector<double>> T_;
  std::vector<double> fh_;
};

}  // namespace

RoughPathGrid rough_integral(const OneForm& f, const RoughPathGrid& x, const RoughIntegralOptions& opts) {
  if (f.in_dim() != x.dim()) throw ArgumentError("one-form and rough path dimensions differ");
  const int L = x.depth();
  if (f.order() < L) throw ArgumentError("one-form " + f.name() + " lacks derivatives up to the rough path level");
  PieceIntegrator integ(f, L, opts);
  const int D = x.dim(), E = f.out_dim();
  std::vector<TensorSeries> cells;
  cells.reserve(x.cells());
  const auto& traj = x.trajectory();
  for (std::size_t l = 0; l < x.cells(); ++l) {
    const TensorSeries& c = x.cell(l);
    double omega = 0.0;
    for (int k = 1; k <= L; ++k) omega += std::pow(level_norm(c, k), x.p() / k);
    const TensorSeries ell = lie_projection(tensor_log(c));
    std::vector<double> xi(traj.at(l).begin(), traj.at(l).end());
    cells.push_back(integ.integrate(xi, ell, opts.tolerance * omega + opts.absolute_floor));
  }
  std::vector<double> origin(x.origin().begin(), x.origin().end());
  origin.resize(D + E, 0.0);
  return RoughPathGrid(x.p(), x.grid_level(), std::move(origin), std::move(cells));
}

}  // namespace roughmal
