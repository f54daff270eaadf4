#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wsurf/density.hpp"
#include "wsurf/errors.hpp"
#include "wsurf/stats.hpp"

namespace wsurf {

/// Samples a one-sided slab needs before it may enter the extrapolation.
inline constexpr std::size_t kMinSlabOccupancy = 100;

struct SlabEstimate {
  double eps = 0.0;
  double value = 0.0;
  double se = 0.0;
  std::size_t occupancy = 0;
};

inline bool in_slab(double g, double r, double eps) noexcept { return g > r && g <= r + eps; }

/// (1/ε) E[X · 1_{r < g ≤ r+ε}] over per-path columns x, g.
inline SlabEstimate slab_integral(std::span<const double> x, std::span<const double> g, double r, double eps) {
  if (!(eps > 0.0)) throw ConfigError("slab_integral: eps must be positive");
  if (x.size() != g.size()) throw ConfigError("slab_integral: column size mismatch");
  std::size_t occ = 0;
  for (double gi : g) occ += in_slab(gi, r, eps) ? 1 : 0;
  if (occ == 0) throw EmptySlab("no samples in (" + std::to_string(r) + ", " + std::to_string(r + eps) + "]");
  const double inv = 1.0 / eps;
  const Estimate e = mean_of(g.size(), [&](std::size_t i) { return in_slab(g[i], r, eps) ? x[i] * inv : 0.0; });
  return {eps, e.value, e.se, occ};
}

/// ε_k = top · 2^{−k}, k = 0..rungs−1.
inline std::vector<double> default_eps_ladder(double top = 0.2, std::size_t rungs = 6) {
  std::vector<double> eps(rungs);
  for (std::size_t k = 0; k < rungs; ++k) eps[k] = std::ldexp(top, -static_cast<int>(k));
  return eps;
}

inline void require_eps_ladder(std::span<const double> eps) {
  if (eps.empty()) throw ConfigError("eps ladder is empty");
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (!(eps[k] > 0.0)) throw ConfigError("eps ladder entries must be positive");
    if (k > 0 && !(eps[k] < eps[k - 1])) throw ConfigError("eps ladder must strictly decrease");
  }
}

/// Slab estimates along an ε-ladder, and the linear-in-ε extrapolation through
/// the two finest rungs with at least kMinSlabOccupancy samples:
///   S(0) ≈ (ε_a S(ε_b) − ε_b S(ε_a)) / (ε_a − ε_b).
/// The extrapolant is a per-path linear combination, so path_value() lets
/// callers pair it with other per-path estimators.
struct SlabLadder {
  double r = 0.0;
  std::vector<SlabEstimate> rungs;  // empty rungs carry occupancy 0
  std::size_t usable = 0;
  double eps_a = 0.0, coef_a = 0.0;  // coarser rung of the pair
  double eps_b = 0.0, coef_b = 0.0;  // finer rung
  double value = 0.0;
  double se = 0.0;
  bool clamped = false;
  std::string flags;
  LineFit increment_fit;  // log|S(ε) − S(ε/2)| against log ε over usable neighbours

  double path_value(double x, double g) const noexcept {
    double v = 0.0;
    if (coef_a != 0.0 && in_slab(g, r, eps_a)) v += coef_a * x / eps_a;
    if (in_slab(g, r, eps_b)) v += coef_b * x / eps_b;
    return v;
  }
};

inline SlabLadder slab_ladder(std::span<const double> x, std::span<const double> g, double r,
                              std::span<const double> eps) {
  require_eps_ladder(eps);
  if (x.size() != g.size()) throw ConfigError("slab_ladder: column size mismatch");
  SlabLadder L;
  L.r = r;
  std::vector<std::size_t> good;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    try {
      L.rungs.push_back(slab_integral(x, g, r, eps[k]));
    } catch (const EmptySlab&) {
      L.rungs.push_back({eps[k], 0.0, 0.0, 0});
    }
    if (L.rungs.back().occupancy >= kMinSlabOccupancy) good.push_back(k);
  }
  L.usable = good.size();
  if (good.empty()) {
    bool any = false;
    for (const auto& s : L.rungs) any = any || s.occupancy > 0;
    if (!any) throw EmptySlab("every rung of the ladder is empty at r=" + std::to_string(r));
    // Fall back to the coarsest nonempty rung, flagged.
    for (std::size_t k = 0; k < L.rungs.size(); ++k)
      if (L.rungs[k].occupancy > 0) { good.push_back(k); break; }
    L.flags = "under-occupied";
  }
  if (good.size() == 1) {
    L.eps_b = eps[good[0]];
    L.coef_b = 1.0;
    if (L.flags.empty()) L.flags = "single-rung";
  } else {
    const double ea = eps[good[good.size() - 2]], eb = eps[good.back()];
    L.eps_a = ea;
    L.eps_b = eb;
    L.coef_a = -eb / (ea - eb);
    L.coef_b = ea / (ea - eb);
  }
  bool nonnegative = true;
  for (double v : x) nonnegative = nonnegative && v >= 0.0;
  const Estimate e = mean_of(g.size(), [&](std::size_t i) { return L.path_value(x[i], g[i]); });
  L.value = e.value;
  L.se = e.se;
  if (nonnegative && L.value < 0.0) {
    L.value = 0.0;
    L.clamped = true;
    L.flags += L.flags.empty() ? "clamped" : ";clamped";
  }
  std::vector<double> lx, ly;
  for (std::size_t j = 1; j < good.size(); ++j) {
    const auto a = good[j - 1], b = good[j];
    const double d = std::abs(L.rungs[a].value - L.rungs[b].value);
    if (d > 0.0) {
      lx.push_back(std::log(eps[a]));
      ly.push_back(std::log(d));
    }
  }
  if (lx.size() >= 2) L.increment_fit = fit_line(lx, ly);
  return L;
}

/// ∫_{g=r} X dσ_r by two routes: slab extrapolation and the conditional product
/// E[X | g=r] · f̂₁(r) (Nadaraya–Watson times KDE with one bandwidth).
struct SurfaceEstimate {
  double r = 0.0;
  std::string integrand;
  SlabLadder slab;
  double product = std::numeric_limits<double>::quiet_NaN();
  double product_se = std::numeric_limits<double>::quiet_NaN();
  double bandwidth = 0.0;
  std::string flags;
  double route_diff_se = std::numeric_limits<double>::quiet_NaN();  // paired SE of slab − product
};

/// KDE value and NW ratio with the KDE computed as mean_of(K), the product
/// SE as the per-path SE of K·X.
struct ProductEstimate {
  double value = 0.0;
  double se = 0.0;
  double conditional = 0.0;
  double density = 0.0;
};

inline ProductEstimate conditional_product(std::span<const double> x, std::span<const double> g, double r,
                                           double bandwidth) {
  const ConditionalEstimate c = conditional_expectation(x, g, r, bandwidth);
  const Estimate f = mean_of(g.size(), [&](std::size_t i) { return gaussian_kernel(g[i] - r, bandwidth); });
  const Estimate kx =
      mean_of(g.size(), [&](std::size_t i) { return gaussian_kernel(g[i] - r, bandwidth) * x[i]; });
  return {c.value * f.value, kx.se, c.value, f.value};
}

inline SurfaceEstimate surface_integral(std::span<const double> x, std::span<const double> g, double r,
                                        std::span<const double> eps, double bandwidth,
                                        std::string integrand = "X") {
  SurfaceEstimate s;
  s.r = r;
  s.integrand = std::move(integrand);
  s.slab = slab_ladder(x, g, r, eps);
  s.bandwidth = bandwidth;
  try {
    const ProductEstimate p = conditional_product(x, g, r, bandwidth);
    s.product = p.value;
    s.product_se = p.se;
    bool nonnegative = true;
    for (double v : x) nonnegative = nonnegative && v >= 0.0;
    if (nonnegative && s.product < 0.0) s.product = 0.0;
    const Estimate d = mean_of(g.size(), [&](std::size_t i) {
      return s.slab.path_value(x[i], g[i]) - gaussian_kernel(g[i] - r, bandwidth) * x[i];
    });
    s.route_diff_se = d.se;
  } catch (const InsufficientLocalSamples&) {
    s.flags = "insufficient-local-samples";
  }
  return s;
}

/// The Lipschitz ramp a ↦ clamp((r − a)/ε, 0, 1): 1 below r − ε, 0 above r.
inline double theta_ramp(double a, double r, double eps) noexcept {
  return std::clamp((r - a) / eps, 0.0, 1.0);
}

/// Lipschitz approximant of 1_{|g − r| > 0}: 1 − θ-ramp in |g − r| with width δ,
/// i.e. min(1, |g − r|/δ). Sharpens as δ → 0.
inline double concentration_integrand(double g, double r, double delta) noexcept {
  return 1.0 - theta_ramp(std::abs(g - r), delta, delta);
}

inline std::vector<double> concentration_column(std::span<const double> g, double r, double delta) {
  if (!(delta > 0.0)) throw ConfigError("concentration probe: delta must be positive");
  std::vector<double> x(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) x[i] = concentration_integrand(g[i], r, delta);
  return x;
}

/// Per-path inputs of the level-set integration by parts for one (X, h):
/// g, X, ⟨Dg,h⟩_H, W(h), ⟨DX,h⟩_H.
struct IbpColumns {
  std::span<const double> g, x, dg_h, w_h, dx_h;
};

/// E[1_{g<r} (⟨DX,h⟩_H − X W(h))]. This is the sign that makes the identity
/// with ∫_{g=r} X⟨Dg,h⟩ dσ_r hold (σ_r sits on the outer boundary of {g<r}).
inline Estimate ibp_rhs(const IbpColumns& c, double r) {
  return mean_of(c.g.size(), [&](std::size_t i) { return c.g[i] < r ? c.dx_h[i] - c.x[i] * c.w_h[i] : 0.0; });
}

inline std::vector<double> ibp_integrand(const IbpColumns& c) {
  std::vector<double> y(c.g.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = c.x[i] * c.dg_h[i];
  return y;
}

/// Slab-extrapolated ∫_{g=r} X ⟨Dg,h⟩_H dσ_r.
inline SlabLadder ibp_lhs(const IbpColumns& c, double r, std::span<const double> eps) {
  const auto y = ibp_integrand(c);
  return slab_ladder(y, c.g, r, eps);
}

struct IbpCell {
  std::string x_id, h_id;
  double r = 0.0;
  SlabLadder lhs;
  Estimate rhs;
  double diff = 0.0;
  double combined_se = 0.0;  // per-path paired SE of lhs − rhs
  double z = 0.0;
  bool pass = false;
};

inline IbpCell ibp_cell(const IbpColumns& c, double r, std::span<const double> eps, std::string x_id,
                        std::string h_id, double z_max = 3.0) {
  IbpCell cell;
  cell.x_id = std::move(x_id);
  cell.h_id = std::move(h_id);
  cell.r = r;
  const auto y = ibp_integrand(c);
  cell.lhs = slab_ladder(y, c.g, r, eps);
  cell.rhs = ibp_rhs(c, r);
  cell.diff = cell.lhs.value - cell.rhs.value;
  const Estimate d = mean_of(c.g.size(), [&](std::size_t i) {
    const double rhs_i = c.g[i] < r ? c.dx_h[i] - c.x[i] * c.w_h[i] : 0.0;
    return cell.lhs.path_value(y[i], c.g[i]) - rhs_i;
  });
  cell.combined_se = d.se;
  cell.z = z_score(cell.diff, cell.combined_se);
  cell.pass = cell.z <= z_max;
  return cell;
}

struct IbpReport {
  std::vector<IbpCell> cells;
  std::size_t passed() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const IbpCell& c) { return c.pass; }));
  }
  double pass_fraction() const { return cells.empty() ? 1.0 : static_cast<double>(passed()) / cells.size(); }
  double mean_combined_se() const {
    double s = 0.0;
    for (const auto& c : cells) s += c.combined_se;
    return cells.empty() ? 0.0 : s / static_cast<double>(cells.size());
  }
  double worst_z() const {
    double z = 0.0;
    for (const auto& c : cells) z = std::max(z, c.z);
    return z;
  }
};

}  // namespace wsurf
