#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wsurf/errors.hpp"
#include "wsurf/node_field.hpp"
#include "wsurf/path_engine.hpp"

namespace wsurf {

/// gamma at or below this value is degenerate (only the zero path, a null set).
inline constexpr double kTolGamma = 1e-12;
/// Nodes with |D_s g| <= kTolURelative * max_s |D_s g| get u(s) = 0.
inline constexpr double kTolURelative = 1e-12;

/// g(x) = ½ ∫₀¹ |x(t)|² dt.
inline double eval_g(const BrownianPath& x) {
  const std::size_t N = x.grid().steps();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    auto c = x.component(i);
    double s = 0.5 * (c[0] * c[0] + c[N] * c[N]);
    for (std::size_t k = 1; k < N; ++k) s += c[k] * c[k];
    acc += s;
  }
  return 0.5 * acc / static_cast<double>(N);
}

/// D_s g = ∫_s¹ x(t) dt by suffix trapezoidal sums; Dg(t_N) = 0.
inline GridFunctionH malliavin_derivative_g(const BrownianPath& x) {
  GridFunctionH dg(x.dim(), x.grid());
  const std::size_t N = x.grid().steps();
  const double half_dt = 0.5 * x.grid().dt();
  for (std::size_t i = 0; i < x.dim(); ++i) {
    auto c = x.component(i);
    auto d = dg.component(i);
    d[N] = 0.0;
    for (std::size_t k = N; k-- > 0;) d[k] = d[k + 1] + half_dt * (c[k] + c[k + 1]);
  }
  return dg;
}

/// max_k |v(t_k)|.
inline double max_norm(const GridFunctionH& v) {
  double m = 0.0;
  for (std::size_t k = 0; k < v.nodes(); ++k) m = std::max(m, v.norm_at(k));
  return m;
}

/// γ = ∫₀¹ |D_s g| ds from a precomputed Dg.
inline double gamma_from(const GridFunctionH& dg) {
  std::vector<double> norms(dg.nodes());
  for (std::size_t k = 0; k < dg.nodes(); ++k) norms[k] = dg.norm_at(k);
  return quadrature(dg.grid(), norms);
}

inline double gamma(const BrownianPath& x) { return gamma_from(malliavin_derivative_g(x)); }

struct UnitField {
  GridFunctionH u;
  std::size_t guarded = 0;

  double guarded_fraction() const noexcept {
    return static_cast<double>(guarded) / static_cast<double>(u.nodes());
  }
};

/// u(s) = D_s g / |D_s g| away from the guard, 0 on guarded nodes (always s = 1).
inline UnitField unit_field_u(const GridFunctionH& dg) {
  UnitField out{GridFunctionH(dg.dim(), dg.grid())};
  const double tol = kTolURelative * max_norm(dg);
  for (std::size_t k = 0; k < dg.nodes(); ++k) {
    const double r = dg.norm_at(k);
    if (r <= tol) {
      ++out.guarded;
      continue;
    }
    for (std::size_t i = 0; i < dg.dim(); ++i) out.u(i, k) = dg(i, k) / r;
  }
  return out;
}

inline UnitField unit_field_u(const BrownianPath& x) {
  return unit_field_u(malliavin_derivative_g(x));
}

/// (Kf)(θ) = ∫₀¹ (1 − max(s, θ)) f(s) ds at every node θ = t_j, with the
/// trapezoid rule in s. The kernel splits at s = θ:
///   (Kf)(t_j) = (1 − t_j) Σ_{k≤j} w_k f_k + Σ_{k>j} w_k (1 − t_k) f_k,
/// so one prefix and one suffix pass give O(N) per coordinate.
inline GridFunctionH split_kernel_transform(const GridFunctionH& f) {
  const TimeGrid& grid = f.grid();
  const std::size_t N = grid.steps();
  GridFunctionH out(f.dim(), grid);
  std::vector<double> suffix(N + 2);
  for (std::size_t i = 0; i < f.dim(); ++i) {
    auto fv = f.component(i);
    auto o = out.component(i);
    suffix[N + 1] = 0.0;
    for (std::size_t k = N + 1; k-- > 0;)
      suffix[k] = suffix[k + 1] + grid.weight(k) * (1.0 - grid.node(k)) * fv[k];
    double prefix = 0.0;
    for (std::size_t j = 0; j <= N; ++j) {
      prefix += grid.weight(j) * fv[j];
      o[j] = (1.0 - grid.node(j)) * prefix + suffix[j + 1];
    }
  }
  return out;
}

/// D_θ γ = ∫₀¹ u(s) (1 − max(s, θ)) ds; guarded nodes of u contribute nothing.
inline GridFunctionH d_gamma(const GridFunctionH& u) { return split_kernel_transform(u); }

inline GridFunctionH d_gamma(const BrownianPath& x) {
  return d_gamma(unit_field_u(x).u);
}

/// h̃(t) = ∫₀¹ (1 − max(t, r)) h(r) dr, so that ⟨Dg, h⟩_H = W(h̃) pathwise.
inline GridFunctionH tilde_transform(const GridFunctionH& h) { return split_kernel_transform(h); }

/// Skorohod integral δ(u) of the unit field, as the exact divergence of the
/// simple process Σ_k u(t_k) 1_(t_k, t_{k+1}] on the increment space:
///   δ(u) = Σ_k ⟨u(t_k), Δx_k⟩ − Σ_k Δt · (1 − t_k − Δt/2) · (n − 1)/|D_{t_k} g|.
/// The correction is Δt · tr ∂u(t_k)/∂Δx_k: ∂(y/|y|)/∂y has trace (n − 1)/|y|
/// and D_{t_k}g moves by (1 − t_k − Δt/2) per unit of Δx_k. u depends on x(s)
/// itself, so the plain backward sum is not a Skorohod integral here.
inline double skorohod_u(const BrownianPath& x, const GridFunctionH& dg, const GridFunctionH& u) {
  require_same_shape(u, x, "skorohod_u");
  require_same_shape(dg, x, "skorohod_u");
  const TimeGrid& grid = x.grid();
  const std::size_t N = grid.steps();
  const double dt = grid.dt();
  const double n_minus_1 = static_cast<double>(x.dim()) - 1.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    auto uv = u.component(i);
    auto xv = x.component(i);
    for (std::size_t k = 0; k < N; ++k) sum += uv[k] * (xv[k + 1] - xv[k]);
  }
  double trace = 0.0;
  if (n_minus_1 > 0.0) {
    for (std::size_t k = 0; k < N; ++k) {
      if (u.norm_at(k) == 0.0) continue;  // guarded node
      trace += (1.0 - grid.node(k) - 0.5 * dt) / dg.norm_at(k);
    }
    trace *= dt * n_minus_1;
  }
  return sum - trace;
}

/// Every explicit Malliavin object of g along one path.
struct MalliavinRecord {
  double g = 0.0;
  GridFunctionH dg;
  double gamma = 0.0;
  GridFunctionH u;
  std::size_t guarded_nodes = 0;
  GridFunctionH dgamma;
  GridFunctionH dinv_gamma;  // zero when degenerate
  double delta_u = 0.0;
  double u_dot_dgamma = 0.0;                                        // ⟨u, Dγ⟩_H
  double delta_u_over_gamma = std::numeric_limits<double>::quiet_NaN();  // NaN when degenerate
  bool degenerate = false;
};

inline MalliavinRecord malliavin_record(const BrownianPath& x) {
  GridFunctionH dg = malliavin_derivative_g(x);
  UnitField uf = unit_field_u(dg);
  MalliavinRecord rec{eval_g(x), dg, gamma_from(dg), std::move(uf.u), uf.guarded,
                      GridFunctionH(x.dim(), x.grid()), GridFunctionH(x.dim(), x.grid())};
  rec.dgamma = d_gamma(rec.u);
  rec.delta_u = skorohod_u(x, rec.dg, rec.u);
  rec.u_dot_dgamma = inner(rec.u, rec.dgamma);
  rec.degenerate = !(rec.gamma > kTolGamma);
  if (!rec.degenerate) {
    const double inv_g2 = 1.0 / (rec.gamma * rec.gamma);
    for (std::size_t j = 0; j < rec.dgamma.raw().size(); ++j)
      rec.dinv_gamma.raw()[j] = -rec.dgamma.raw()[j] * inv_g2;
    rec.delta_u_over_gamma = rec.delta_u / rec.gamma + rec.u_dot_dgamma * inv_g2;
  }
  return rec;
}

inline double skorohod_u(const BrownianPath& x) {
  GridFunctionH dg = malliavin_derivative_g(x);
  return skorohod_u(x, dg, unit_field_u(dg).u);
}

/// D(1/γ) = −Dγ/γ².
inline GridFunctionH d_inv_gamma(const MalliavinRecord& rec) {
  if (rec.degenerate) throw DegenerateGamma(rec.gamma);
  return rec.dinv_gamma;
}

/// δ(u/γ) = δ(u)/γ + ⟨u, Dγ⟩_H/γ² (product rule with F = 1/γ). u/γ is not
/// backward-adapted, so no direct Itô-type sum of u/γ is ever formed.
inline double skorohod_u_over_gamma(const MalliavinRecord& rec) {
  if (rec.degenerate) throw DegenerateGamma(rec.gamma);
  return rec.delta_u_over_gamma;
}

/// X = f(W(h_1), ..., W(h_d)) with a supplied gradient.
struct CylindricalFunctional {
  std::string name;
  std::vector<GridFunctionH> directions;
  std::function<double(std::span<const double>)> f;
  std::function<void(std::span<const double>, std::span<double>)> grad;

  static CylindricalFunctional constant(double c, std::string name = "const") {
    return {std::move(name), {}, [c](std::span<const double>) { return c; },
            [](std::span<const double>, std::span<double>) {}};
  }

  /// X = W(h).
  static CylindricalFunctional wiener(GridFunctionH h, std::string name = "W(h)") {
    return {std::move(name),
            {std::move(h)},
            [](std::span<const double> y) { return y[0]; },
            [](std::span<const double>, std::span<double> g) { g[0] = 1.0; }};
  }
};

/// The Wiener coordinates (W(h_1)(x), ..., W(h_d)(x)).
inline std::vector<double> wiener_coordinates(const CylindricalFunctional& X, const BrownianPath& x) {
  std::vector<double> y(X.directions.size());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = forward_ito(X.directions[k], x);
  return y;
}

/// Value and ∇f at the Wiener coordinates of x, with finiteness checks.
struct CylindricalPoint {
  std::vector<double> coords;
  double value = 0.0;
  std::vector<double> gradient;
};

inline CylindricalPoint evaluate_point(const CylindricalFunctional& X, std::vector<double> coords) {
  CylindricalPoint p{std::move(coords), 0.0, std::vector<double>(X.directions.size(), 0.0)};
  p.value = X.f(p.coords);
  if (!std::isfinite(p.value)) throw NumericError(X.name + ": non-finite value");
  X.grad(p.coords, p.gradient);
  for (double gk : p.gradient)
    if (!std::isfinite(gk)) throw NumericError(X.name + ": non-finite gradient");
  return p;
}

inline CylindricalPoint evaluate_point(const CylindricalFunctional& X, const BrownianPath& x) {
  return evaluate_point(X, wiener_coordinates(X, x));
}

inline double eval_cylindrical(const CylindricalFunctional& X, const BrownianPath& x) {
  return evaluate_point(X, x).value;
}

/// DX = Σ_k ∂_k f(W(h_1), ..., W(h_d)) h_k.
inline GridFunctionH grad_cylindrical(const CylindricalFunctional& X, const BrownianPath& x) {
  const CylindricalPoint p = evaluate_point(X, x);
  GridFunctionH dx(x.dim(), x.grid());
  for (std::size_t k = 0; k < X.directions.size(); ++k) {
    require_same_shape(X.directions[k], x, "grad_cylindrical");
    auto src = X.directions[k].raw();
    auto dst = dx.raw();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += p.gradient[k] * src[j];
  }
  return dx;
}

/// ⟨DX, v⟩_H = Σ_k ∂_k f · ⟨h_k, v⟩_H.
inline double grad_dot(const CylindricalFunctional& X, const CylindricalPoint& p, const GridFunctionH& v) {
  double acc = 0.0;
  for (std::size_t k = 0; k < X.directions.size(); ++k)
    if (p.gradient[k] != 0.0) acc += p.gradient[k] * inner(X.directions[k], v);
  return acc;
}

/// δ(X u/γ) = X δ(u/γ) − ⟨DX, u⟩_H/γ. For X ≡ 1 this returns δ(u/γ) unchanged.
inline double skorohod_X_u_over_gamma(const CylindricalFunctional& X, const MalliavinRecord& rec,
                                      const BrownianPath& x) {
  if (rec.degenerate) throw DegenerateGamma(rec.gamma);
  const CylindricalPoint p = evaluate_point(X, x);
  return p.value * rec.delta_u_over_gamma - grad_dot(X, p, rec.u) / rec.gamma;
}

/// Debug dump of records, one row per path.
inline void write_record_csv_header(std::ostream& os) {
  os << "path,g,gamma,delta_u,u_dot_dgamma,delta_u_over_gamma,guarded_nodes,max_abs_dgamma,degenerate\n";
}

inline void write_record_csv_row(std::ostream& os, std::size_t path, const MalliavinRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%.17g,%d\n", path, r.g,
                r.gamma, r.delta_u, r.u_dot_dgamma, r.delta_u_over_gamma, r.guarded_nodes,
                max_norm(r.dgamma), r.degenerate ? 1 : 0);
  os << buf;
}

}  // namespace wsurf
