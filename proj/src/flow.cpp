#include "roughmal/flow.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "roughmal/errors.hpp"
#include "roughmal/rng.hpp"

namespace roughmal {

namespace {

// Lie coordinates of one driver cell, restricted to the field's d coordinates.
struct CellDriver {
  bool segment = true;
  std::vector<double> l1, l2, l3;  // l2, l3 empty for segments
};

TensorSeries restrict_cell(const TensorSeries& c, int d) {
  if (c.dim() == d) return c;
  TensorSeries t = TensorSeries::unit(d, c.depth());
  for (int k = 1; k <= c.depth(); ++k) {
    auto src = c.level(k);
    auto dst = t.level(k);
    for (std::size_t w = 0; w < dst.size(); ++w) {
      std::size_t rem = w, idx = 0, mul = 1;
      for (int q = 0; q < k; ++q) {
        idx += (rem % d) * mul;
        rem /= d;
        mul *= c.dim();
      }
      dst[w] = src[idx];
    }
  }
  return t;
}

CellDriver make_driver(const TensorSeries& cell, int d) {
  const TensorSeries c = restrict_cell(cell, d);
  CellDriver dr;
  dr.segment = is_segment_cell(c);
  if (dr.segment) {
    dr.l1.assign(c.level(1).begin(), c.level(1).end());
    return dr;
  }
  const TensorSeries ell = lie_projection(tensor_log(c));
  dr.l1.assign(ell.level(1).begin(), ell.level(1).end());
  dr.l2.assign(ell.level(2).begin(), ell.level(2).end());
  if (c.depth() >= 3) dr.l3.assign(ell.level(3).begin(), ell.level(3).end());
  return dr;
}

// The augmented field W_a(y, J, K) = (σ_a(y), ∇σ_a(y) J, -K ∇σ_a(y)) and its derivatives.
class AugmentedField {
 public:
  explicit AugmentedField(const VectorFieldSystem& vf) : vf_(vf), e_(vf.state_dim()), d_(vf.driver_dim()) {}

  std::size_t size() const { return static_cast<std::size_t>(e_) * (1 + 2 * e_); }

  void rhs(std::span<const double> s, const CellDriver& dr, std::span<double> out) {
    if (dr.segment) {
      segment(s, dr.l1, out);
    } else {
      log_field(s, dr, out);
    }
  }

  void segment(std::span<const double> s, std::span<const double> delta, std::span<double> out) {
    vf_.derivatives(s.subspan(0, e_), 1, T_);
    const int e = e_, d = d_;
    const double* sig = T_[0].data();
    const double* t1 = T_[1].data();
    a_.assign(static_cast<std::size_t>(e) * e, 0.0);
    for (int i = 0; i < e; ++i) {
      double v = 0.0;
      for (int a = 0; a < d; ++a) v += sig[i * d + a] * delta[a];
      out[i] = v;
      for (int j = 0; j < e; ++j) {
        double w = 0.0;
        for (int a = 0; a < d; ++a) w += delta[a] * t1[(i * d + a) * e + j];
        a_[i * e + j] = w;
      }
    }
    const double* J = s.data() + e;
    const double* K = s.data() + e + e * e;
    double* dJ = out.data() + e;
    double* dK = out.data() + e + e * e;
    for (int i = 0; i < e; ++i)
      for (int j = 0; j < e; ++j) {
        double aj = 0.0, ka = 0.0;
        for (int k = 0; k < e; ++k) {
          aj += a_[i * e + k] * J[k * e + j];
          ka += K[i * e + k] * a_[k * e + j];
        }
        dJ[i * e + j] = aj;
        dK[i * e + j] = -ka;
      }
  }

  void log_field(std::span<const double> s, const CellDriver& dr, std::span<double> out) {
    const int order = dr.l3.empty() ? 2 : 3;
    vf_.derivatives(s.subspan(0, e_), order, T_);
    s_ = s;
    const std::size_t n = size();
    const int d = d_;
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<std::vector<double>> W(d, std::vector<double>(n));
    for (int a = 0; a < d; ++a) W_(a, W[a]);
    for (int a = 0; a < d; ++a) axpy(dr.l1[a], W[a], out);
    std::vector<double> t1(n), t2(n), t3(n), u(n);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        const double c2 = dr.l2[a * d + b];
        const bool need3 = !dr.l3.empty();
        if (c2 == 0.0 && !need3) continue;
        // U_ab = DW_b W_a - DW_a W_b
        DW(b, W[a], t1);
        DW(a, W[b], t2);
        for (std::size_t k = 0; k < n; ++k) u[k] = t1[k] - t2[k];
        axpy(0.5 * c2, u, out);
        if (!need3) continue;
        for (int c = 0; c < d; ++c) {
          const double c3 = dr.l3[(a * d + b) * d + c];
          if (c3 == 0.0) continue;
          // [U_ab, W_c] = DW_c U_ab - DU_ab W_c
          std::vector<double> r(n), q(n);
          DW(c, u, r);
          D2W(b, W[a], W[c], q);
          for (std::size_t k = 0; k < n; ++k) r[k] -= q[k];
          DW(a, W[c], t1);
          DW(b, t1, q);
          for (std::size_t k = 0; k < n; ++k) r[k] -= q[k];
          D2W(a, W[b], W[c], q);
          for (std::size_t k = 0; k < n; ++k) r[k] += q[k];
          DW(b, W[c], t1);
          DW(a, t1, q);
          for (std::size_t k = 0; k < n; ++k) r[k] += q[k];
          axpy(c3 / 3.0, r, out);
        }
      }
  }

 private:
  static void axpy(double c, const std::vector<double>& v, std::span<double> out) {
    for (std::size_t k = 0; k < v.size(); ++k) out[k] += c * v[k];
  }
  double t1(int i, int a, int j) const { return T_[1][(i * d_ + a) * e_ + j]; }
  double t2(int i, int a, int j, int k) const { return T_[2][((i * d_ + a) * e_ + j) * e_ + k]; }
  double t3(int i, int a, int j, int k, int l) const { return T_[3][(((i * d_ + a) * e_ + j) * e_ + k) * e_ + l]; }

  void W_(int a, std::vector<double>& out) const {
    const int e = e_;
    const double* J = s_.data() + e;
    const double* K = s_.data() + e + e * e;
    for (int i = 0; i < e; ++i) out[i] = T_[0][i * d_ + a];
    for (int i = 0; i < e; ++i)
      for (int j = 0; j < e; ++j) {
        double bj = 0.0, kb = 0.0;
        for (int k = 0; k < e; ++k) {
          bj += t1(i, a, k) * J[k * e + j];
          kb += K[i * e + k] * t1(k, a, j);
        }
        out[e + i * e + j] = bj;
        out[e + e * e + i * e + j] = -kb;
      }
  }

  // ∇B_a<u>[i][j] = Σ_k ∂_k ∂_j σ^i_a u_k
  void grad_b(int a, const double* u, std::vector<double>& g) const {
    const int e = e_;
    g.assign(static_cast<std::size_t>(e) * e, 0.0);
    for (int i = 0; i < e; ++i)
      for (int j = 0; j < e; ++j) {
        double v = 0.0;
        for (int k = 0; k < e; ++k) v += t2(i, a, j, k) * u[k];
        g[i * e + j] = v;
      }
  }

  void DW(int a, const std::vector<double>& v, std::vector<double>& out) const {
    const int e = e_;
    const double* J = s_.data() + e;
    const double* K = s_.data() + e + e * e;
    const double* u = v.data();
    const double* VJ = v.data() + e;
    const double* VK = v.data() + e + e * e;
    std::vector<double> g;
    grad_b(a, u, g);
    for (int i = 0; i < e; ++i) {
      double y = 0.0;
      for (int k = 0; k < e; ++k) y += t1(i, a, k) * u[k];
      out[i] = y;
    }
    for (int i = 0; i < e; ++i)
      for (int j = 0; j < e; ++j) {
        double dj = 0.0, dk = 0.0;
        for (int k = 0; k < e; ++k) {
          dj += g[i * e + k] * J[k * e + j] + t1(i, a, k) * VJ[k * e + j];
          dk += VK[i * e + k] * t1(k, a, j) + K[i * e + k] * g[k * e + j];
        }
        out[e + i * e + j] = dj;
        out[e + e * e + i * e + j] = -dk;
      }
  }

  void D2W(int a, const std::vector<double>& v1, const std::vector<double>& v2, std::vector<double>& out) const {
    const int e = e_;
    const double* J = s_.data() + e;
    const double* K = s_.data() + e + e * e;
    const double* u1 = v1.data();
    const double* u2 = v2.data();
    const double* VJ1 = v1.data() + e;
    const double* VJ2 = v2.data() + e;
    const double* VK1 = v1.data() + e + e * e;
    const double* VK2 = v2.data() + e + e * e;
    std::vector<double> g1, g2, h(static_cast<std::size_t>(e) * e, 0.0);
    grad_b(a, u1, g1);
    grad_b(a, u2, g2);
    for (int i = 0; i < e; ++i) {
      double y = 0.0;
      for (int j = 0; j < e; ++j)
        for (int k = 0; k < e; ++k) y += t2(i, a, j, k) * u1[j] * u2[k];
      out[i] = y;
    }
    if (T_.size() > 3) {
      for (int i = 0; i < e; ++i)
        for (int j = 0; j < e; ++j) {
          double v = 0.0;
          for (int k = 0; k < e; ++k)
            for (int l = 0; l < e; ++l) v += t3(i, a, j, k, l) * u1[k] * u2[l];
          h[i * e + j] = v;
        }
    }
    for (int i = 0; i < e; ++i)
      for (int j = 0; j < e; ++j) {
        double dj = 0.0, dk = 0.0;
        for (int k = 0; k < e; ++k) {
          dj += h[i * e + k] * J[k * e + j] + g1[i * e + k] * VJ2[k * e + j] + g2[i * e + k] * VJ1[k * e + j];
          dk += VK1[i * e + k] * g2[k * e + j] + VK2[i * e + k] * g1[k * e + j] + K[i * e + k] * h[k * e + j];
        }
        out[e + i * e + j] = dj;
        out[e + e * e + i * e + j] = -dk;
      }
  }

  const VectorFieldSystem& vf_;
  int e_, d_;
  std::vector<std::vector<double>> T_;
  std::vector<double> a_;
  std::span<const double> s_;
};

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

class CellStepper {
 public:
  explicit CellStepper(const VectorFieldSystem& vf) : field_(vf) {
    const std::size_t n = field_.size();
    for (auto* v : {&k1_, &k2_, &k3_, &k4_, &tmp_}) v->resize(n);
  }

  // 2^depth classical RK4 steps over the unit cell time.
  void run(std::span<const double> s_in, const CellDriver& dr, int depth, std::vector<double>& s_out) {
    s_out.assign(s_in.begin(), s_in.end());
    const std::size_t steps = std::size_t{1} << depth;
    const double h = 1.0 / static_cast<double>(steps);
    const std::size_t n = s_out.size();
    for (std::size_t st = 0; st < steps; ++st) {
      field_.rhs(s_out, dr, k1_);
      for (std::size_t i = 0; i < n; ++i) tmp_[i] = s_out[i] + 0.5 * h * k1_[i];
      field_.rhs(tmp_, dr, k2_);
      for (std::size_t i = 0; i < n; ++i) tmp_[i] = s_out[i] + 0.5 * h * k2_[i];
      field_.rhs(tmp_, dr, k3_);
      for (std::size_t i = 0; i < n; ++i) tmp_[i] = s_out[i] + h * k3_[i];
      field_.rhs(tmp_, dr, k4_);
      for (std::size_t i = 0; i < n; ++i) s_out[i] += h / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }
  }

  AugmentedField& field() { return field_; }

 private:
  AugmentedField field_;
  std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

void check_driver(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0) {
  const int d = vf.driver_dim();
  if (x.dim() != d && x.dim() != 2 * d) throw ArgumentError("driver dimension must equal d or 2d of the vector field");
  if (static_cast<int>(y0.size()) != vf.state_dim()) throw ArgumentError("initial condition has the wrong dimension");
}

void init_state(const VectorFieldSystem& vf, std::span<const double> y0, std::vector<double>& s) {
  const int e = vf.state_dim();
  s.assign(static_cast<std::size_t>(e) * (1 + 2 * e), 0.0);
  std::copy(y0.begin(), y0.end(), s.begin());
  for (int i = 0; i < e; ++i) {
    s[e + i * e + i] = 1.0;
    s[e + e * e + i * e + i] = 1.0;
  }
}

double kj_defect(std::span<const double> s, int e) {
  const double* J = s.data() + e;
  const double* K = s.data() + e + e * e;
  double sum = 0.0;
  for (int i = 0; i < e; ++i)
    for (int j = 0; j < e; ++j) {
      double v = (i == j) ? -1.0 : 0.0;
      for (int k = 0; k < e; ++k) v += K[i * e + k] * J[k * e + j];
      sum += v * v;
    }
  return std::sqrt(sum);
}

FlowSolution solve_impl(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                        const StepPlan* frozen, const SolverOptions& opts) {
  check_driver(x, vf, y0);
  const int e = vf.state_dim(), d = vf.driver_dim();
  if (frozen != nullptr && frozen->depth.size() != x.cells()) throw ArgumentError("step plan does not match the driver grid");
  FlowSolution sol;
  sol.e = e;
  sol.grid_level = x.grid_level();
  std::vector<double> s;
  init_state(vf, y0, s);
  sol.states.reserve(s.size() * x.nodes());
  sol.states.insert(sol.states.end(), s.begin(), s.end());
  sol.plan.depth.resize(x.cells());
  CellStepper stepper(vf);
  std::vector<double> coarse, fine;
  int prev_depth = 0;
  for (std::size_t l = 0; l < x.cells(); ++l) {
    const CellDriver dr = make_driver(x.cell(l), d);
    int depth;
    if (frozen != nullptr) {
      depth = frozen->depth[l];
      stepper.run(s, dr, depth, fine);
    } else {
      depth = std::max(0, prev_depth - 1);
      stepper.run(s, dr, depth, coarse);
      for (;;) {
        ++depth;
        if (depth > opts.max_depth) {
          std::ostringstream os;
          os << "flow solver did not meet tolerance on cell " << l << " (last valid time " << x.trajectory().time(l) << ")";
          throw NumericalError(os.str());
        }
        stepper.run(s, dr, depth, fine);
        double defect = 0.0;
        for (std::size_t i = 0; i < fine.size(); ++i) defect = std::max(defect, std::abs(fine[i] - coarse[i]));
        if (defect <= opts.tolerance * (1.0 + max_abs(fine)) || !std::isfinite(defect)) break;
        coarse.swap(fine);
      }
    }
    const double size = max_abs(fine);
    if (!(size <= opts.blowup)) {
      std::ostringstream os;
      os << "flow blew up on cell " << l << " (|state| = " << size << "; last valid time " << x.trajectory().time(l) << ")";
      throw NumericalError(os.str());
    }
    sol.plan.depth[l] = depth;
    prev_depth = depth;
    s.swap(fine);
    sol.states.insert(sol.states.end(), s.begin(), s.end());
    sol.max_kj_defect = std::max(sol.max_kj_defect, kj_defect(s, e));
  }
  return sol;
}

}  // namespace

FlowState FlowSolution::at(std::size_t node) const {
  FlowState st;
  st.t = std::ldexp(static_cast<double>(node), -grid_level);
  auto yy = y(node), jj = J(node), kk = K(node);
  st.y.assign(yy.begin(), yy.end());
  st.J.assign(jj.begin(), jj.end());
  st.K.assign(kk.begin(), kk.end());
  return st;
}

double FlowSolution::sup_J() const {
  double m = 0.0;
  for (std::size_t n = 0; n < nodes(); ++n) {
    double s = 0.0;
    for (double v : J(n)) s += v * v;
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

double FlowSolution::sup_K() const {
  double m = 0.0;
  for (std::size_t n = 0; n < nodes(); ++n) {
    double s = 0.0;
    for (double v : K(n)) s += v * v;
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

FlowSolution solve_flow(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                        const SolverOptions& opts) {
  return solve_impl(x, vf, y0, nullptr, opts);
}

FlowSolution solve_flow_with_plan(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                                  const StepPlan& plan, const SolverOptions& opts) {
  return solve_impl(x, vf, y0, &plan, opts);
}

std::vector<int> AugmentedRoughPath::driver_coords() const {
  std::vector<int> c(driver_dim);
  for (int i = 0; i < driver_dim; ++i) c[i] = i;
  return c;
}

std::vector<int> AugmentedRoughPath::y_coords() const {
  std::vector<int> c(state_dim);
  for (int i = 0; i < state_dim; ++i) c[i] = driver_dim + i;
  return c;
}

std::vector<int> AugmentedRoughPath::j_coords() const {
  std::vector<int> c(state_dim * state_dim);
  for (int i = 0; i < state_dim * state_dim; ++i) c[i] = driver_dim + state_dim + i;
  return c;
}

std::vector<int> AugmentedRoughPath::k_coords() const {
  std::vector<int> c(state_dim * state_dim);
  for (int i = 0; i < state_dim * state_dim; ++i) c[i] = driver_dim + state_dim + state_dim * state_dim + i;
  return c;
}

RoughPathGrid AugmentedRoughPath::discard_driver(int first, int count) const {
  std::vector<int> keep;
  for (int i = 0; i < joint.dim(); ++i)
    if (i < first || i >= first + count || i >= driver_dim) keep.push_back(i);
  return joint.project(keep);
}

AugmentedRoughPath solve_rde(const RoughPathGrid& x, const VectorFieldSystem& vf, std::span<const double> y0,
                             const SolverOptions& opts, int extra_levels) {
  if (extra_levels < 0 || x.grid_level() + extra_levels > 16) throw ArgumentError("joint lift refinement out of range");
  AugmentedRoughPath out;
  out.flow = solve_flow(x, vf, y0, opts);
  const int e = vf.state_dim(), d = vf.driver_dim(), D = x.dim(), L = x.depth();
  const int ns = e * (1 + 2 * e);
  const int Dz = D + ns;
  out.driver_dim = D;
  out.state_dim = e;

  AugmentedField field(vf);
  const int sub = 1 << extra_levels;
  std::vector<TensorSeries> cells;
  cells.reserve(x.cells() * sub);
  std::vector<double> s(out.flow.state(0).begin(), out.flow.state(0).end());
  // RK4 state: s, then signature levels 1..L of the step
  std::size_t sig_size = 0, lev = 1;
  for (int k = 1; k <= L; ++k) {
    lev *= Dz;
    sig_size += lev;
  }
  const std::size_t n = ns + sig_size;
  std::vector<double> st(n), k1(n), k2(n), k3(n), k4(n), tmp(n), zdot(Dz);
  auto rhs = [&](const std::vector<double>& u, const CellDriver& dr, std::span<const double> delta, std::vector<double>& du) {
    field.segment(std::span<const double>(u.data(), ns), dr.l1, std::span<double>(du.data(), ns));
    for (int a = 0; a < D; ++a) zdot[a] = delta[a];
    for (int i = 0; i < ns; ++i) zdot[D + i] = du[i];
    double* out_sig = du.data() + ns;
    const double* in_sig = u.data() + ns;
    for (int a = 0; a < Dz; ++a) out_sig[a] = zdot[a];
    std::size_t in_off = 0, out_off = Dz, size = Dz;
    for (int k = 2; k <= L; ++k) {
      for (std::size_t w = 0; w < size; ++w)
        for (int a = 0; a < Dz; ++a) out_sig[out_off + w * Dz + a] = in_sig[in_off + w] * zdot[a];
      in_off = out_off;
      out_off += size * Dz;
      size *= Dz;
    }
  };
  for (std::size_t l = 0; l < x.cells(); ++l) {
    const TensorSeries& cell = x.cell(l);
    if (!is_segment_cell(cell)) throw ArgumentError("joint lift needs a piecewise-linear (segment) driver");
    const CellDriver dr = make_driver(cell, d);
    auto delta = cell.level(1);
    const int depth = std::max(out.flow.plan.depth[l], extra_levels);
    const std::size_t steps = std::size_t{1} << depth;
    const std::size_t per_out = steps / sub;
    const double h = 1.0 / static_cast<double>(steps);
    TensorSeries acc = TensorSeries::unit(Dz, L);
    for (std::size_t stp = 0; stp < steps; ++stp) {
      std::copy(s.begin(), s.end(), st.begin());
      std::fill(st.begin() + ns, st.end(), 0.0);
      rhs(st, dr, delta, k1);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = st[i] + 0.5 * h * k1[i];
      rhs(tmp, dr, delta, k2);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = st[i] + 0.5 * h * k2[i];
      rhs(tmp, dr, delta, k3);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = st[i] + h * k3[i];
      rhs(tmp, dr, delta, k4);
      for (std::size_t i = 0; i < n; ++i) st[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      std::copy(st.begin(), st.begin() + ns, s.begin());
      TensorSeries sig = TensorSeries::unit(Dz, L);
      std::copy(st.begin() + ns, st.end(), sig.raw().begin() + 1);
      chen_extend(acc, group_projection(sig));
      if ((stp + 1) % per_out == 0) {
        cells.push_back(acc);
        acc = TensorSeries::unit(Dz, L);
      }
    }
  }
  std::vector<double> origin(x.origin().begin(), x.origin().end());
  auto s0 = out.flow.state(0);
  origin.insert(origin.end(), s0.begin(), s0.end());
  out.joint = RoughPathGrid(x.p(), x.grid_level() + extra_levels, std::move(origin), std::move(cells));
  return out;
}

std::string flow_to_csv(const FlowSolution& sol) {
  std::ostringstream os;
  const int e = sol.e;
  os << "t";
  for (int i = 0; i < e; ++i) os << ",y_" << (i + 1);
  for (int i = 0; i < e; ++i)
    for (int j = 0; j < e; ++j) os << ",J_" << (i + 1) << (j + 1);
  for (int i = 0; i < e; ++i)
    for (int j = 0; j < e; ++j) os << ",K_" << (i + 1) << (j + 1);
  os << '\n';
  char buf[64];
  for (std::size_t n = 0; n < sol.nodes(); ++n) {
    std::snprintf(buf, sizeof buf, "%.17g", std::ldexp(static_cast<double>(n), -sol.grid_level));
    os << buf;
    for (double v : sol.state(n)) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

double linear_growth_constant(const VectorFieldSystem& vf) {
  const int e = vf.state_dim();
  std::vector<double> y(e, 0.0);
  std::vector<std::vector<double>> d;
  vf.derivatives(y, 1, d);
  double c = 0.0;
  for (double v : d[0]) c += v * v;
  c = std::sqrt(c);
  const NormalStream u(0x11AEull, 6);
  for (int k = 0; k < 4096; ++k) {
    for (int i = 0; i < e; ++i) y[i] = 16.0 * u.uniform(static_cast<std::uint64_t>(k) * e + i) - 8.0;
    vf.derivatives(y, 1, d);
    double g = 0.0;
    for (double v : d[1]) g += v * v;
    c = std::max(c, std::sqrt(g));
  }
  return c;
}

GrowthSample growth_sample(const AugmentedRoughPath& sol, const VectorFieldSystem& vf) {
  GrowthSample g;
  std::vector<int> zc = sol.driver_coords();
  for (int c : sol.y_coords()) zc.push_back(c);
  const RoughPathGrid z = sol.joint.project(zc);
  const RoughPathGrid x = sol.joint.project(sol.driver_coords());
  const auto zs = variation_sums(z, 0, z.cells());
  for (std::size_t i = 0; i < zs.size(); ++i) g.z_variation.push_back(std::pow(zs[i], (i + 1) / z.p()));
  for (double v : variation_sums(x, 0, x.cells())) g.x_sum += v;
  if (vf.bounded()) {
    g.M = vf.boundedness_constant(x.depth() + 1);
  } else {
    double ysup = 0.0;
    for (std::size_t n = 0; n < sol.flow.nodes(); ++n) {
      double s = 0.0;
      for (double v : sol.flow.y(n)) s += v * v;
      ysup = std::max(ysup, std::sqrt(s));
    }
    g.M = 2.0 * linear_growth_constant(vf) * (1.0 + ysup);
  }
  return g;
}

namespace {
double growth_rhs(const GrowthSample& s, double c) { return c * std::pow(1.0 + s.M, c) * std::pow(1.0 + s.x_sum, c); }
}  // namespace

double fit_growth_constant(std::span<const GrowthSample> calibration) {
  auto ok = [&](double c) {
    for (const auto& s : calibration)
      for (double v : s.z_variation)
        if (v > growth_rhs(s, c)) return false;
    return true;
  };
  double lo = 0.0, hi = 1.0;
  while (!ok(hi)) {
    hi *= 2.0;
    if (hi > 1e3) throw NumericalError("growth constant fit diverged");
  }
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? hi : lo) = mid;
  }
  return hi * 1.01;
}

GrowthReport growth_check(const GrowthSample& sample, double c) {
  GrowthReport r;
  r.c = c;
  const double rhs = growth_rhs(sample, c);
  for (double v : sample.z_variation) {
    r.lhs.push_back(v);
    r.rhs.push_back(rhs);
    r.level_pass.push_back(v <= rhs);
    r.pass = r.pass && v <= rhs;
  }
  return r;
}

}  // namespace roughmal
