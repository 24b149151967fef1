#include "roughmal/malliavin.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "roughmal/errors.hpp"
#include "roughmal/rng.hpp"

namespace roughmal {

// ---------------------------------------------------------------------------
// constants

namespace {

// Block-size multisets of all set partitions of {1..n}, with multiplicities.
std::map<std::vector<int>, int> partition_shapes(int n) {
  std::map<std::vector<int>, int> shapes;
  if (n == 0) {
    shapes[{}] = 1;
    return shapes;
  }
  // restricted growth strings: a[0] = 0, a[i] ≤ 1 + max(a[0..i-1])
  std::vector<int> a(n, 0);
  for (;;) {
    const int blocks = *std::max_element(a.begin(), a.end()) + 1;
    std::vector<int> sizes(blocks, 0);
    for (int v : a) ++sizes[v];
    std::sort(sizes.begin(), sizes.end());
    ++shapes[sizes];
    int i = n - 1;
    for (; i > 0; --i) {
      const int mx = *std::max_element(a.begin(), a.begin() + i);
      if (a[i] <= mx) break;
    }
    if (i == 0) break;
    ++a[i];
    std::fill(a.begin() + i + 1, a.end(), 0);
  }
  return shapes;
}

ConstantsTable build_table(int n_max) {
  ConstantsTable t;
  t.n_max = n_max;
  t.dw.resize(n_max + 1);
  t.dh.resize(n_max + 1);
  for (int n = 1; n <= n_max; ++n) {
    for (const auto& [shape, count] : partition_shapes(n))
      if (shape.size() >= 2) t.dw[n].push_back({shape, static_cast<double>(count)});
    // ε σ(y^ε) differentiated n times: n copies of the (n-1)-st derivative of σ(y^ε)
    for (const auto& [shape, count] : partition_shapes(n - 1)) t.dh[n].push_back({shape, static_cast<double>(n * count)});
  }
  return t;
}

}  // namespace

double ConstantsTable::lookup(int n, std::span<const int> orders, bool against_h) const {
  if (n < 1 || n > n_max) throw ArgumentError("constants table does not cover this order");
  const auto& terms = against_h ? dh[n] : dw[n];
  for (const auto& term : terms)
    if (std::equal(term.orders.begin(), term.orders.end(), orders.begin(), orders.end())) return term.coeff;
  return 0.0;
}

std::vector<double> finite_difference_weights(int derivative, std::span<const double> nodes) {
  // Fornberg's recursion, expansion point 0
  const int n = static_cast<int>(nodes.size()) - 1;
  if (derivative < 0 || derivative > n) throw ArgumentError("finite-difference stencil too short for this derivative");
  const int M = derivative;
  std::vector<std::vector<double>> c(n + 1, std::vector<double>(M + 1, 0.0));
  double c1 = 1.0, c4 = nodes[0];
  c[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    const int mn = std::min(i, M);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[i];
    for (int j = 0; j < i; ++j) {
      const double c3 = nodes[i] - nodes[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n + 1);
  for (int i = 0; i <= n; ++i) w[i] = c[i][M];
  return w;
}

// ---------------------------------------------------------------------------
// derivative recursion as an ODE on segment cells

namespace {

// out[i] += coeff · Σ_a Δ_a ∇^lσ^i_a<v_1, ..., v_l>
void contract(const std::vector<double>& T, int l, int e, int d, const std::vector<const double*>& vs,
              std::span<const double> delta, double coeff, double* out, std::vector<double>& buf,
              std::vector<double>& next) {
  buf.assign(T.begin(), T.end());
  std::size_t size = T.size();
  for (int k = l; k >= 1; --k) {
    size /= e;
    next.assign(size, 0.0);
    const double* v = vs[k - 1];
    for (std::size_t idx = 0; idx < size; ++idx) {
      double s = 0.0;
      for (int j = 0; j < e; ++j) s += buf[idx * e + j] * v[j];
      next[idx] = s;
    }
    buf.swap(next);
  }
  for (int i = 0; i < e; ++i) {
    double s = 0.0;
    for (int a = 0; a < d; ++a) s += buf[i * d + a] * delta[a];
    out[i] += coeff * s;
  }
}

// State (y, J, K, A_1..A_n) with D^k y = J A_k.
class DerivativeField {
 public:
  DerivativeField(const VectorFieldSystem& vf, int n, const ConstantsTable& table)
      : vf_(vf), e_(vf.state_dim()), d_(vf.driver_dim()), n_(n), table_(table) {}

  std::size_t size() const { return static_cast<std::size_t>(e_) * (1 + 2 * e_ + n_); }

  void rhs(std::span<const double> s, std::span<const double> dw, std::span<const double> dh, std::span<double> out) {
    const int e = e_, d = d_;
    vf_.derivatives(s.subspan(0, e), std::max(n_, 1), T_);
    const double* J = s.data() + e;
    const double* K = s.data() + e + e * e;
    std::fill(out.begin(), out.end(), 0.0);
    B_.assign(static_cast<std::size_t>(e) * e, 0.0);
    for (int i = 0; i < e; ++i) {
      for (int a = 0; a < d; ++a) out[i] += T_[0][i * d + a] * dw[a];
      for (int j = 0; j < e; ++j)
        for (int a = 0; a < d; ++a) B_[i * e + j] += dw[a] * T_[1][(i * d + a) * e + j];
    }
    for (int i = 0; i < e; ++i)
      for (int j = 0; j < e; ++j) {
        double bj = 0.0, kb = 0.0;
        for (int k = 0; k < e; ++k) {
          bj += B_[i * e + k] * J[k * e + j];
          kb += K[i * e + k] * B_[k * e + j];
        }
        out[e + i * e + j] = bj;
        out[e + e * e + i * e + j] = -kb;
      }
    D_.assign(static_cast<std::size_t>(n_) * e, 0.0);
    for (int k = 0; k < n_; ++k) {
      const double* A = s.data() + e * (1 + 2 * e) + k * e;
      for (int i = 0; i < e; ++i)
        for (int j = 0; j < e; ++j) D_[k * e + i] += J[i * e + j] * A[j];
    }
    std::vector<const double*> vs;
    for (int k = 1; k <= n_; ++k) {
      r_.assign(e, 0.0);
      for (const auto& term : table_.dw[k]) {
        vs.clear();
        for (int o : term.orders) vs.push_back(D_.data() + (o - 1) * e);
        contract(T_[term.orders.size()], static_cast<int>(term.orders.size()), e, d, vs, dw, term.coeff, r_.data(), buf_,
                 next_);
      }
      for (const auto& term : table_.dh[k]) {
        vs.clear();
        for (int o : term.orders) vs.push_back(D_.data() + (o - 1) * e);
        contract(T_[term.orders.size()], static_cast<int>(term.orders.size()), e, d, vs, dh, term.coeff, r_.data(), buf_,
                 next_);
      }
      double* dA = out.data() + e * (1 + 2 * e) + (k - 1) * e;
      for (int i = 0; i < e; ++i) {
        double v = 0.0;
        for (int j = 0; j < e; ++j) v += K[i * e + j] * r_[j];
        dA[i] = v;
      }
    }
  }

 private:
  const VectorFieldSystem& vf_;
  int e_, d_, n_;
  const ConstantsTable& table_;
  std::vector<std::vector<double>> T_;
  std::vector<double> B_, D_, r_, buf_, next_;
};

DerivativeStack run_recursion(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                              const SampledPath& h_in, int n_max, const StepPlan& plan, const ConstantsTable& table) {
  const int e = vf.state_dim(), d = vf.driver_dim();
  if (x.dim() != d && x.dim() != 2 * d) throw ArgumentError("driver dimension must equal d or 2d of the vector field");
  if (h_in.dim != d) throw ArgumentError("direction h must have the driver dimension of the vector field");
  if (h_in.level > x.grid_level()) throw ArgumentError("direction h lives on a finer grid than the driver");
  if (static_cast<int>(y0.size()) != e) throw ArgumentError("initial condition has the wrong dimension");
  if (plan.depth.size() != x.cells()) throw ArgumentError("step plan does not match the driver grid");
  const SampledPath h = h_in.level == x.grid_level() ? h_in : h_in.refine(x.grid_level());
  DerivativeField field(vf, n_max, table);
  const std::size_t n = field.size();
  std::vector<double> s(n, 0.0), k1(n), k2(n), k3(n), k4(n), tmp(n);
  std::copy(y0.begin(), y0.end(), s.begin());
  for (int i = 0; i < e; ++i) {
    s[e + i * e + i] = 1.0;
    s[e + e * e + i * e + i] = 1.0;
  }
  DerivativeStack out;
  out.n_max = n_max;
  out.e = e;
  out.grid_level = x.grid_level();
  out.plan = plan;
  out.values.assign(n_max, std::vector<double>(x.nodes() * e, 0.0));
  std::vector<double> dw(d);
  for (std::size_t l = 0; l < x.cells(); ++l) {
    const TensorSeries& cell = x.cell(l);
    if (!is_segment_cell(cell)) throw ArgumentError("derivative recursion needs a piecewise-linear driver");
    for (int a = 0; a < d; ++a) dw[a] = cell.level(1)[a];
    const std::vector<double> dh = h.increment(l);
    const std::size_t steps = std::size_t{1} << plan.depth[l];
    const double dt = 1.0 / static_cast<double>(steps);
    for (std::size_t st = 0; st < steps; ++st) {
      field.rhs(s, dw, dh, k1);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + 0.5 * dt * k1[i];
      field.rhs(tmp, dw, dh, k2);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + 0.5 * dt * k2[i];
      field.rhs(tmp, dw, dh, k3);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + dt * k3[i];
      field.rhs(tmp, dw, dh, k4);
      for (std::size_t i = 0; i < n; ++i) s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    double size = 0.0;
    for (double v : s) size = std::max(size, std::abs(v));
    if (!(size <= 1e9)) {
      std::ostringstream os;
      os << "derivative recursion blew up on cell " << l << " (last valid time " << x.trajectory().time(l) << ")";
      throw NumericalError(os.str());
    }
    const double* J = s.data() + e;
    for (int k = 0; k < n_max; ++k) {
      const double* A = s.data() + e * (1 + 2 * e) + k * e;
      double* dst = out.values[k].data() + (l + 1) * e;
      for (int i = 0; i < e; ++i) {
        double v = 0.0;
        for (int j = 0; j < e; ++j) v += J[i * e + j] * A[j];
        dst[i] = v;
      }
    }
  }
  return out;
}

void check_regularity(double p, double q) {
  if (!(1.0 / p + 1.0 / q > 1.0)) {
    std::ostringstream os;
    os << "direction h with q=" << q << " is not complementary to the driver's p=" << p;
    throw RegularityError(os.str());
  }
}

void validate_table(const ConstantsTable& table) {
  // cubic scalar field along a smooth driver, h a parabola
  const VectorFieldSystem vf = make_preset("cubic-scalar", table.n_max + 1);
  const int m = 5;
  SampledPath w(m, 1), h(m, 1);
  for (std::size_t k = 0; k < w.nodes(); ++k) {
    const double t = w.time(k);
    w(k, 0) = 0.6 * std::sin(3.0 * t) + 0.4 * t;
    h(k, 0) = t - 0.5 * t * t;
  }
  const std::vector<double> y0 = {0.3};
  const RoughPathGrid x = lift_piecewise_linear(w, 2.5);
  const FlowSolution base = solve_flow(x, vf, y0);
  const DerivativeStack stack = run_recursion(x, vf, y0, h, table.n_max, base.plan, table);
  const double eps = 0.05;
  std::vector<double> nodes, values;
  for (int k = -4; k <= 4; ++k) {
    nodes.push_back(k * eps);
    SampledPath shifted = w;
    for (std::size_t i = 0; i < shifted.values.size(); ++i) shifted.values[i] += k * eps * h.values[i];
    const FlowSolution s = solve_flow_with_plan(lift_piecewise_linear(shifted, 2.5), vf, y0, base.plan);
    values.push_back(s.y(s.nodes() - 1)[0]);
  }
  for (int n = 1; n <= table.n_max; ++n) {
    const auto wts = finite_difference_weights(n, nodes);
    double fd = 0.0;
    for (std::size_t k = 0; k < wts.size(); ++k) fd += wts[k] * values[k];
    const double an = stack.at(n, w.cells())[0];
    if (!(std::abs(fd - an) <= 1e-3 * std::max(std::abs(an), 1e-6))) {
      std::ostringstream os;
      os << "recursion constants fail the finite-difference check at order " << n << " (recursion " << an
         << ", finite difference " << fd << ")";
      throw NumericalError(os.str());
    }
  }
}

}  // namespace

const ConstantsTable& derive_constants(int n) {
  if (n < 1 || n > kMaxDerivativeOrder) throw ArgumentError("constants are tabulated for orders 1..4");
  static const ConstantsTable table = [] {
    ConstantsTable t = build_table(kMaxDerivativeOrder);
    validate_table(t);
    return t;
  }();
  return table;
}

DerivativeStack directional_derivative_with_plan(const RoughPathGrid& x, const VectorFieldSystem& vf,
                                                 std::span<const double> y0, const SampledPath& h, int n_max,
                                                 const StepPlan& plan, const DerivativeOptions& opts) {
  if (n_max < 1 || n_max > kMaxDerivativeOrder) throw ArgumentError("derivative order must be in 1..4");
  if (vf.max_order() < n_max + 1) throw ArgumentError("vector field " + vf.name() + " is not validated to the needed order");
  check_regularity(x.p(), opts.q);
  return run_recursion(x, vf, y0, h, n_max, plan, derive_constants(n_max));
}

DerivativeStack directional_derivative(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                                       const SampledPath& h, int n_max, const DerivativeOptions& opts) {
  if (n_max < 1 || n_max > kMaxDerivativeOrder) throw ArgumentError("derivative order must be in 1..4");
  check_regularity(x.p(), opts.q);
  const FlowSolution base = solve_flow(x, vf, y0, opts.solver);
  return directional_derivative_with_plan(x, vf, y0, h, n_max, base.plan, opts);
}

SampledPath first_derivative_young(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                                   const SampledPath& h, double q) {
  check_regularity(x.p(), q);
  const int e = vf.state_dim(), d = vf.driver_dim();
  const FlowSolution sol = solve_flow(x, vf, y0);
  SampledPath f(x.grid_level(), e * d);
  std::vector<double> sig(static_cast<std::size_t>(e) * d);
  for (std::size_t n = 0; n < sol.nodes(); ++n) {
    vf.sigma(sol.y(n), sig);
    const auto K = sol.K(n);
    for (int i = 0; i < e; ++i)
      for (int a = 0; a < d; ++a) {
        double v = 0.0;
        for (int j = 0; j < e; ++j) v += K[i * e + j] * sig[j * d + a];
        f(n, i * d + a) = v;
      }
  }
  const SampledPath I = young_integral(f, h, q, x.p());
  SampledPath out(I.level, e);
  const std::size_t stride = std::size_t{1} << (I.level - x.grid_level());
  for (std::size_t n = 0; n < sol.nodes(); ++n) {
    const auto J = sol.J(n);
    for (int i = 0; i < e; ++i) {
      double v = 0.0;
      for (int j = 0; j < e; ++j) v += J[i * e + j] * I(n * stride, j);
      out(n * stride, i) = v;
    }
  }
  return out.level == x.grid_level() ? out : out.restrict_to(x.grid_level());
}

std::vector<double> polarized_derivative(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                                         std::span<const SampledPath> hs, const DerivativeOptions& opts) {
  const int n = static_cast<int>(hs.size());
  if (n < 1 || n > 3) throw ArgumentError("polarization is provided for orders 1..3");
  const FlowSolution base = solve_flow(x, vf, y0, opts.solver);
  const int e = vf.state_dim();
  std::vector<double> acc(e, 0.0);
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    SampledPath sum = hs[0];
    std::fill(sum.values.begin(), sum.values.end(), 0.0);
    int size = 0;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) {
        ++size;
        for (std::size_t k = 0; k < sum.values.size(); ++k) sum.values[k] += hs[i].values[k];
      }
    const auto st = directional_derivative_with_plan(x, vf, y0, sum, n, base.plan, opts);
    const double sign = ((n - size) % 2 == 0) ? 1.0 : -1.0;
    const auto v = st.at(n, x.cells());
    for (int i = 0; i < e; ++i) acc[i] += sign * v[i];
  }
  double fact = 1.0;
  for (int k = 2; k <= n; ++k) fact *= k;
  for (double& v : acc) v /= fact;
  return acc;
}

// ---------------------------------------------------------------------------
// chaos functionals

std::vector<ChaosFunctional> xi_chaos_with_plan(const SampledPath& doubled, int n_max, const VectorFieldSystem& vf,
                                                std::span<const double> y0, const StepPlan& plan, const SolverOptions&) {
  if (n_max < 1 || n_max > kMaxChaosOrder) throw ArgumentError("chaos functionals are provided for orders 1..3");
  const int d = vf.driver_dim();
  if (doubled.dim != 2 * d) throw ArgumentError("doubled sample must have dimension 2d");
  if (vf.max_order() < n_max + 1) throw ArgumentError("vector field " + vf.name() + " is not validated to the needed order");
  const RoughPathGrid x = lift_piecewise_linear(doubled.components(0, d), 2.5);
  const DerivativeStack st = run_recursion(x, vf, y0, doubled.components(d, d), n_max, plan, derive_constants(n_max));
  std::vector<ChaosFunctional> out;
  for (int n = 1; n <= n_max; ++n) out.push_back({n, doubled.level, vf.state_dim(), st.values[n - 1]});
  return out;
}

std::vector<ChaosFunctional> xi_chaos(const SampledPath& doubled, int n_max, const VectorFieldSystem& vf,
                                      std::span<const double> y0, const SolverOptions& opts) {
  const int d = vf.driver_dim();
  if (doubled.dim != 2 * d) throw ArgumentError("doubled sample must have dimension 2d");
  const FlowSolution base = solve_flow(lift_piecewise_linear(doubled.components(0, d), 2.5), vf, y0, opts);
  return xi_chaos_with_plan(doubled, n_max, vf, y0, base.plan, opts);
}

namespace {

// σ_a^(l)(y) for a scalar state, as a double or as a jet in the one-form's variables.
double sigma_derivative(const VectorFieldSystem& vf, int a, int l, double y) {
  std::vector<std::vector<double>> T;
  const double yy[1] = {y};
  vf.derivatives(yy, l, T);
  return T[l][a];
}

Jet sigma_derivative(const VectorFieldSystem& vf, int a, int l, const Jet& y) {
  if (y.space() == nullptr) return Jet(sigma_derivative(vf, a, l, y.value()));
  const int order = y.space()->order();
  std::vector<std::vector<double>> T;
  const double yy[1] = {y.value()};
  vf.derivatives(yy, l + order, T);
  std::vector<double> derivs(order + 1);
  for (int k = 0; k <= order; ++k) derivs[k] = T[l + k][a];
  return y.compose(derivs);
}

// The order-k integrand K·(Σ C ∇^lσ<Ξ..> dw + Σ C' ∇^lσ<Ξ..> db) as a one-form on the
// current joint path (w, b, y, J, K, a_1, .., a_{k-1}), with Ξ_i = J a_i.
struct ChaosForm {
  const VectorFieldSystem* vf;
  const ConstantsTable* table;
  int d, k;

  template <class S>
  void operator()(std::span<const S> z, std::span<S> out) const {
    const int D = static_cast<int>(z.size());
    const S& y = z[2 * d];
    const S& J = z[2 * d + 1];
    const S& K = z[2 * d + 2];
    std::vector<S> xi;
    for (int i = 1; i < k; ++i) xi.push_back(J * z[2 * d + 2 + i]);
    for (int c = 0; c < D; ++c) out[c] = S(0.0);
    for (int a = 0; a < d; ++a) {
      S sw(0.0), sb(0.0);
      for (const auto& term : table->dw[k]) {
        S prod = sigma_derivative(*vf, a, static_cast<int>(term.orders.size()), y) * term.coeff;
        for (int o : term.orders) prod = prod * xi[o - 1];
        sw = sw + prod;
      }
      for (const auto& term : table->dh[k]) {
        S prod = sigma_derivative(*vf, a, static_cast<int>(term.orders.size()), y) * term.coeff;
        for (int o : term.orders) prod = prod * xi[o - 1];
        sb = sb + prod;
      }
      out[a] = K * sw;
      out[d + a] = K * sb;
    }
  }
};

}  // namespace

std::vector<ChaosFunctional> xi_chaos_rough(const SampledPath& doubled, int n_max, const VectorFieldSystem& vf,
                                            std::span<const double> y0, double p, int extra_levels,
                                            const RoughIntegralOptions& iopts) {
  if (vf.state_dim() != 1) throw ArgumentError("the rough-integral route is implemented for scalar states only");
  if (n_max < 1 || n_max > kMaxChaosOrder) throw ArgumentError("chaos functionals are provided for orders 1..3");
  const int d = vf.driver_dim();
  if (doubled.dim != 2 * d) throw ArgumentError("doubled sample must have dimension 2d");
  const RoughPathGrid x = lift_piecewise_linear(doubled, p);
  if (vf.max_order() < n_max + x.depth()) throw ArgumentError("vector field " + vf.name() + " is not validated to the needed order");
  const ConstantsTable& table = derive_constants(n_max);
  const AugmentedRoughPath rde = solve_rde(x, vf, y0, {}, extra_levels);
  RoughPathGrid cur = rde.joint;
  for (int k = 1; k <= n_max; ++k) {
    std::vector<int> active;
    for (int c = 2 * d; c < cur.dim(); ++c) active.push_back(c);
    const OneForm f = OneForm::generic("xi-" + std::to_string(k), cur.dim(), 1, ChaosForm{&vf, &table, d, k}, x.depth(),
                                       1.0, active);
    cur = rough_integral(f, cur, iopts);
  }
  std::vector<ChaosFunctional> out;
  const std::size_t stride = std::size_t{1} << extra_levels;
  const auto& traj = cur.trajectory();
  for (int k = 1; k <= n_max; ++k) {
    ChaosFunctional c{k, doubled.level, 1, std::vector<double>(doubled.nodes(), 0.0)};
    for (std::size_t n = 0; n < doubled.nodes(); ++n)
      c.values[n] = traj(n * stride, 2 * d + 1) * traj(n * stride, 2 * d + 2 + k);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// forward sensitivities

namespace {

// Per-cell flow map Φ(y, Δ) with first and second derivatives in (y, Δ).
struct CellMap {
  std::vector<double> P, U, Yyy, Yyd, Ydd;
};

class SensitivityField {
 public:
  explicit SensitivityField(const VectorFieldSystem& vf) : vf_(vf), e_(vf.state_dim()), d_(vf.driver_dim()) {
    const std::size_t e = e_, d = d_;
    oY_ = e;
    oU_ = oY_ + e * e;
    oYyy_ = oU_ + e * d;
    oYyd_ = oYyy_ + e * e * e;
    oYdd_ = oYyd_ + e * e * d;
    size_ = oYdd_ + e * d * d;
  }
  std::size_t size() const { return size_; }

  void rhs(std::span<const double> s, std::span<const double> delta, std::span<double> out) {
    const int e = e_, d = d_;
    vf_.derivatives(s.subspan(0, e), 2, T_);
    auto t1 = [&](int i, int a, int j) { return T_[1][(i * d + a) * e + j]; };
    auto t2 = [&](int i, int a, int j, int k) { return T_[2][((i * d + a) * e + j) * e + k]; };
    Fy_.assign(static_cast<std::size_t>(e) * e, 0.0);
    Fyy_.assign(static_cast<std::size_t>(e) * e * e, 0.0);
    for (int i = 0; i < e; ++i)
      for (int a = 0; a < d; ++a)
        for (int j = 0; j < e; ++j) {
          Fy_[i * e + j] += delta[a] * t1(i, a, j);
          for (int k = 0; k < e; ++k) Fyy_[(i * e + j) * e + k] += delta[a] * t2(i, a, j, k);
        }
    const double* Y = s.data() + oY_;
    const double* U = s.data() + oU_;
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < e; ++i)
      for (int a = 0; a < d; ++a) out[i] += T_[0][i * d + a] * delta[a];
    // first order: Fy·X plus the inhomogeneity for U
    auto lin = [&](std::size_t off, int cols) {
      for (int i = 0; i < e; ++i)
        for (int c = 0; c < cols; ++c) {
          double v = 0.0;
          for (int k = 0; k < e; ++k) v += Fy_[i * e + k] * s[off + static_cast<std::size_t>(k) * cols + c];
          out[off + static_cast<std::size_t>(i) * cols + c] += v;
        }
    };
    lin(oY_, e);
    lin(oU_, d);
    for (int i = 0; i < e; ++i)
      for (int a = 0; a < d; ++a) out[oU_ + i * d + a] += T_[0][i * d + a];
    lin(oYyy_, e * e);
    lin(oYyd_, e * d);
    lin(oYdd_, d * d);
    for (int i = 0; i < e; ++i)
      for (int m = 0; m < e; ++m)
        for (int n = 0; n < e; ++n) {
          const double f = Fyy_[(i * e + m) * e + n];
          if (f == 0.0) continue;
          for (int j = 0; j < e; ++j) {
            for (int k = 0; k < e; ++k) out[oYyy_ + (i * e + j) * e + k] += f * Y[m * e + j] * Y[n * e + k];
            for (int a = 0; a < d; ++a) out[oYyd_ + (i * e + j) * d + a] += f * Y[m * e + j] * U[n * d + a];
          }
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) out[oYdd_ + (i * d + a) * d + b] += f * U[m * d + a] * U[n * d + b];
        }
    for (int i = 0; i < e; ++i)
      for (int m = 0; m < e; ++m)
        for (int a = 0; a < d; ++a) {
          const double f = t1(i, a, m);  // ∂_{y_m} ∂_{Δ_a} F^i
          for (int j = 0; j < e; ++j) out[oYyd_ + (i * e + j) * d + a] += f * Y[m * e + j];
          for (int b = 0; b < d; ++b) {
            out[oYdd_ + (i * d + b) * d + a] += f * U[m * d + b];
            out[oYdd_ + (i * d + a) * d + b] += f * U[m * d + b];
          }
        }
  }

  CellMap unpack(std::span<const double> s) const {
    CellMap c;
    c.P.assign(s.begin() + oY_, s.begin() + oU_);
    c.U.assign(s.begin() + oU_, s.begin() + oYyy_);
    c.Yyy.assign(s.begin() + oYyy_, s.begin() + oYyd_);
    c.Yyd.assign(s.begin() + oYyd_, s.begin() + oYdd_);
    c.Ydd.assign(s.begin() + oYdd_, s.end());
    return c;
  }

  std::size_t y_offset() const { return oY_; }

 private:
  const VectorFieldSystem& vf_;
  int e_, d_;
  std::size_t oY_, oU_, oYyy_, oYyd_, oYdd_, size_;
  std::vector<std::vector<double>> T_;
  std::vector<double> Fy_, Fyy_;
};

}  // namespace

Sensitivities forward_sensitivities(const SampledPath& w, const VectorFieldSystem& vf, std::span<const double> y0,
                                    std::size_t node, int component, bool hessian, const SolverOptions& opts) {
  const int e = vf.state_dim(), d = vf.driver_dim();
  if (w.dim < d) throw ArgumentError("driver has fewer components than the vector field");
  if (node >= w.nodes()) throw ArgumentError("node outside the grid");
  if (component < 0 || component >= e) throw ArgumentError("state component out of range");
  const SampledPath wd = w.dim == d ? w : w.components(0, d);
  const FlowSolution base = solve_flow(lift_piecewise_linear(wd, 2.5), vf, y0, opts);
  SensitivityField field(vf);
  const std::size_t n = field.size();
  std::vector<CellMap> maps;
  std::vector<double> s(n), k1(n), k2(n), k3(n), k4(n), tmp(n);
  std::vector<double> y(y0.begin(), y0.end());
  for (std::size_t l = 0; l < node; ++l) {
    std::fill(s.begin(), s.end(), 0.0);
    std::copy(y.begin(), y.end(), s.begin());
    for (int i = 0; i < e; ++i) s[field.y_offset() + i * e + i] = 1.0;
    const std::vector<double> delta = wd.increment(l);
    const std::size_t steps = std::size_t{1} << base.plan.depth[l];
    const double dt = 1.0 / static_cast<double>(steps);
    for (std::size_t st = 0; st < steps; ++st) {
      field.rhs(s, delta, k1);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + 0.5 * dt * k1[i];
      field.rhs(tmp, delta, k2);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + 0.5 * dt * k2[i];
      field.rhs(tmp, delta, k3);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + dt * k3[i];
      field.rhs(tmp, delta, k4);
      for (std::size_t i = 0; i < n; ++i) s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    std::copy(s.begin(), s.begin() + e, y.begin());
    maps.push_back(field.unpack(s));
  }

  Sensitivities out;
  out.m = w.level;
  out.d = d;
  out.node = node;
  out.component = component;
  const std::size_t N = w.cells() * d;
  out.g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
  if (hessian) out.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  // backward pass for G = y^component at `node`: M = ∂G/∂s_l, H = ∂²G/∂s_l²
  Eigen::RowVectorXd M = Eigen::RowVectorXd::Zero(e);
  M(component) = 1.0;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(e, e);
  std::vector<Eigen::MatrixXd> W(node);  // W[l](a, j) = ∂²G/∂Δ_{l,a}∂s_l^j
  std::vector<Eigen::MatrixXd> Pm(node), Um(node);
  double asym = 0.0, scale = 0.0;
  for (std::size_t l = node; l-- > 0;) {
    const CellMap& c = maps[l];
    Eigen::MatrixXd P(e, e), U(e, d);
    for (int i = 0; i < e; ++i) {
      for (int j = 0; j < e; ++j) P(i, j) = c.P[i * e + j];
      for (int a = 0; a < d; ++a) U(i, a) = c.U[i * d + a];
    }
    Pm[l] = P;
    Um[l] = U;
    const Eigen::RowVectorXd gl = M * U;
    for (int a = 0; a < d; ++a) out.g(static_cast<Eigen::Index>(l * d + a)) = gl(a);
    if (hessian) {
      Eigen::MatrixXd diag = U.transpose() * H * U;
      Eigen::MatrixXd Wl = U.transpose() * H * P;
      Eigen::MatrixXd Hn = P.transpose() * H * P;
      for (int i = 0; i < e; ++i) {
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) diag(a, b) += M(i) * c.Ydd[(i * d + a) * d + b];
        for (int a = 0; a < d; ++a)
          for (int j = 0; j < e; ++j) Wl(a, j) += M(i) * c.Yyd[(i * e + j) * d + a];
        for (int j = 0; j < e; ++j)
          for (int k = 0; k < e; ++k) Hn(j, k) += M(i) * c.Yyy[(i * e + j) * e + k];
      }
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) out.A(static_cast<Eigen::Index>(l * d + a), static_cast<Eigen::Index>(l * d + b)) = diag(a, b);
      W[l] = Wl;
      H = Hn;
      asym = std::max(asym, (H - H.transpose()).cwiseAbs().maxCoeff());
      asym = std::max(asym, (diag - diag.transpose()).cwiseAbs().maxCoeff());
      scale = std::max({scale, H.cwiseAbs().maxCoeff(), diag.cwiseAbs().maxCoeff()});
    }
    M = M * P;
  }
  if (hessian) {
    // off-diagonal blocks: ∂²G/∂Δ_l∂Δ_k = W_l · ∂s_l/∂Δ_k for k < l
    for (std::size_t k = 0; k < node; ++k) {
      Eigen::MatrixXd v = Um[k];  // ∂s_{k+1}/∂Δ_k
      for (std::size_t l = k + 1; l < node; ++l) {
        const Eigen::MatrixXd blk = W[l] * v;  // (a at l, b at k)
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) {
            out.A(static_cast<Eigen::Index>(l * d + a), static_cast<Eigen::Index>(k * d + b)) = blk(a, b);
            out.A(static_cast<Eigen::Index>(k * d + b), static_cast<Eigen::Index>(l * d + a)) = blk(a, b);
          }
        v = Pm[l] * v;
      }
    }
    out.symmetry_defect = asym / std::max(scale, 1e-300);
    if (out.symmetry_defect > 1e-6) {
      std::ostringstream os;
      os << "Hessian symmetrization defect " << out.symmetry_defect << " exceeds 1e-6";
      throw NumericalError(os.str());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hilbert-Schmidt norms

Eigen::MatrixXd driver_covariance(const CovarianceModel& model, int m, int d) {
  const Eigen::MatrixXd Q = increment_covariance(model, m);
  const Eigen::Index N = Q.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(N * d, N * d);
  for (Eigen::Index l = 0; l < N; ++l)
    for (Eigen::Index k = 0; k < N; ++k)
      for (int a = 0; a < d; ++a) out(l * d + a, k * d + a) = Q(l, k);
  return out;
}

HSNormReport hs_norm(const CovarianceModel& model, const SampledPath& w, int n, std::size_t node,
                     const VectorFieldSystem& vf, std::span<const double> y0, int component, const SolverOptions& opts) {
  if (n < 1 || n > 2) throw ArgumentError("Hilbert-Schmidt norms are provided for n = 1, 2");
  const int d = vf.driver_dim(), m = w.level;
  const SampledPath wd = w.dim == d ? w : w.components(0, d);
  const Sensitivities sens = forward_sensitivities(wd, vf, y0, node, component, n == 2, opts);
  const Eigen::MatrixXd Q = driver_covariance(model, m, d);
  const RoughPathGrid x = lift_piecewise_linear(wd, 2.5);
  const FlowSolution base = solve_flow(x, vf, y0, opts);
  HSNormReport r;
  r.m = m;
  r.n = n;
  r.t = w.time(node);
  const std::size_t N = wd.cells() * d;
  auto basis_direction = [&](std::size_t k) {
    SampledPath h(m, d);
    const std::size_t cell = k / d;
    const int a = static_cast<int>(k % d);
    for (std::size_t nd = cell + 1; nd < h.nodes(); ++nd) h(nd, a) = 1.0;
    return h;
  };
  if (n == 1) {
    const double gqg = sens.g.dot(Q * sens.g);
    r.hs_norm = std::sqrt(gqg);
    r.chaos_mean = 0.0;
    r.chaos_var = gqg;
    // Ξ_1 is linear in Δb, so its coefficients come from basis directions
    Eigen::VectorXd gh(static_cast<Eigen::Index>(N));
    for (std::size_t k = 0; k < N; ++k) {
      const auto st = run_recursion(x, vf, y0, basis_direction(k), 1, base.plan, derive_constants(1));
      gh(static_cast<Eigen::Index>(k)) = st.at(1, node)[component];
    }
    const double e2 = gh.dot(Q * gh);
    r.oracle_gap = std::abs(e2 - gqg) / std::max(gqg, 1e-300);
    if (gqg == 0.0) r.oracle_gap = std::abs(e2);
    return r;
  }
  const Eigen::MatrixXd AQ = sens.A * Q;
  r.chaos_mean = AQ.trace();
  const double hs2 = (AQ * AQ).trace();
  r.hs_norm = std::sqrt(std::max(hs2, 0.0));
  r.chaos_var = 2.0 * hs2;
  const NormalStream z(0xC4A05ull, 3);
  const double sd = std::pow(2.0, -0.5 * m);
  double gap = 0.0;
  for (int rep = 0; rep < 8; ++rep) {
    SampledPath h(m, d);
    Eigen::VectorXd b(static_cast<Eigen::Index>(N));
    for (std::size_t k = 0; k < N; ++k) b(static_cast<Eigen::Index>(k)) = sd * z(rep * N + k);
    for (std::size_t l = 0; l < wd.cells(); ++l)
      for (int a = 0; a < d; ++a) h(l + 1, a) = h(l, a) + b(static_cast<Eigen::Index>(l * d + a));
    const auto st = run_recursion(x, vf, y0, h, 2, base.plan, derive_constants(2));
    const double quad = b.dot(sens.A * b);
    const double scale = std::max(std::abs(quad), sens.A.norm() * b.squaredNorm());
    if (scale > 0.0) gap = std::max(gap, std::abs(st.at(2, node)[component] - quad) / scale);
  }
  r.oracle_gap = gap;
  return r;
}

std::string hs_report_to_json(const HSNormReport& r) {
  nlohmann::json j;
  j["m"] = r.m;
  j["n"] = r.n;
  j["t"] = r.t;
  j["hs_norm"] = r.hs_norm;
  j["chaos_mean"] = r.chaos_mean;
  j["chaos_var"] = r.chaos_var;
  j["oracle_gap"] = r.oracle_gap;
  return j.dump();
}

}  // namespace roughmal
