#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "wsurf/density.hpp"
#include "wsurf/errors.hpp"
#include "wsurf/node_field.hpp"
#include "wsurf/surface.hpp"

namespace wsurf {

/// Sup-norm bounds of V and its derivatives (C³_b constants).
struct PotentialBounds {
  double sup_value = 0.0;          // ‖V‖_∞
  double sup_gradient = 0.0;       // ‖∇V‖_∞
  double sup_hessian = 0.0;        // ‖∇²V‖_∞ (operator norm)
  double sup_third = 0.0;          // ‖∇³V‖_∞
  double sup_laplacian = 0.0;      // ‖ΔV‖_∞
  double sup_grad_laplacian = 0.0; // ‖∇ΔV‖_∞
};

/// A potential V: ℝⁿ → ℝ with gradient, Laplacian and bound constants.
struct PotentialSpec {
  std::string name;
  std::size_t dim = 0;
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  std::function<double(std::span<const double>)> laplacian;
  PotentialBounds bounds;
  bool zero = false;

  void validate() const {
    if (!value || !gradient || !laplacian) throw ConfigError("potential " + name + ": missing callable");
    const PotentialBounds& b = bounds;
    for (double v : {b.sup_value, b.sup_gradient, b.sup_hessian, b.sup_third, b.sup_laplacian, b.sup_grad_laplacian})
      if (!std::isfinite(v) || v < 0.0) throw ConfigError("potential " + name + ": bounds must be finite and >= 0");
  }

  /// Lipschitz constant of B ↦ log ρ₁(B)⁻¹ in sup norm:
  /// ‖∇V‖ (endpoint) + ‖∇V‖‖∇²V‖ (½∫|∇V|²) + ½‖∇ΔV‖ (½∫ΔV).
  double lipschitz_constant() const noexcept {
    return bounds.sup_gradient + bounds.sup_gradient * bounds.sup_hessian + 0.5 * bounds.sup_grad_laplacian;
  }
};

/// Shortest round-trippable spelling of an amplitude ("0.5", not "0.500000").
inline std::string short_number(double a) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, a);
    if (std::strtod(buf, nullptr) == a) break;
  }
  return buf;
}

inline PotentialSpec zero_potential(std::size_t n) {
  return {"zero", n, [](std::span<const double>) { return 0.0; },
          [](std::span<const double>, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); },
          [](std::span<const double>) { return 0.0; }, PotentialBounds{}, true};
}

/// V(x) = a Σ cos x_i.
inline PotentialSpec cos_potential(std::size_t n, double a) {
  const double nn = static_cast<double>(n), aa = std::abs(a);
  PotentialBounds b{nn * aa, aa * std::sqrt(nn), aa, aa, nn * aa, aa * std::sqrt(nn)};
  return {"cos:" + short_number(a), n,
          [a](std::span<const double> x) {
            double s = 0.0;
            for (double v : x) s += std::cos(v);
            return a * s;
          },
          [a](std::span<const double> x, std::span<double> g) {
            for (std::size_t i = 0; i < x.size(); ++i) g[i] = -a * std::sin(x[i]);
          },
          [a](std::span<const double> x) {
            double s = 0.0;
            for (double v : x) s += std::cos(v);
            return -a * s;
          },
          b, a == 0.0};
}

/// V(x) = a / (1 + |x|²).
inline PotentialSpec bump_potential(std::size_t n, double a) {
  const double nn = static_cast<double>(n), aa = std::abs(a);
  // With s = |x|²: |∇V| = 2a√s/(1+s)² ≤ 9a/(8√3); ‖∇²V‖ ≤ 2a (attained at 0);
  // ΔV = a((8 − 2n)s − 2n)/(1+s)³ so |ΔV| ≤ 2an;
  // |∇ΔV| = 2a√s |(8 + 4n) − 2(8 − 2n)s|/(1+s)⁴, bounded termwise with
  // max √s/(1+s)⁴ < 0.2217 and max s^{3/2}/(1+s)⁴ < 0.0710. ‖∇³V‖ ≤ 24a is crude.
  const double grad_lap = 4.0 * aa * ((2.0 * nn + 4.0) * 0.2217 + std::abs(8.0 - 2.0 * nn) * 0.0710);
  PotentialBounds b{aa, 9.0 * aa / (8.0 * std::sqrt(3.0)), 2.0 * aa, 24.0 * aa, 2.0 * aa * nn, grad_lap};
  return {"bump:" + short_number(a), n,
          [a](std::span<const double> x) {
            double r2 = 0.0;
            for (double v : x) r2 += v * v;
            return a / (1.0 + r2);
          },
          [a](std::span<const double> x, std::span<double> g) {
            double r2 = 0.0;
            for (double v : x) r2 += v * v;
            const double q = 1.0 + r2;
            for (std::size_t i = 0; i < x.size(); ++i) g[i] = -2.0 * a * x[i] / (q * q);
          },
          [a, nn](std::span<const double> x) {
            double r2 = 0.0;
            for (double v : x) r2 += v * v;
            const double q = 1.0 + r2;
            return a * (8.0 * r2 - 2.0 * nn * q) / (q * q * q);
          },
          b, a == 0.0};
}

/// "zero", "cos:<a>", "bump:<a>".
inline PotentialSpec make_potential(const std::string& spec, std::size_t n) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  double a = 0.0;
  if (colon != std::string::npos) {
    try {
      std::size_t used = 0;
      a = std::stod(spec.substr(colon + 1), &used);
      if (used != spec.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("potential: bad amplitude in '" + spec + "'");
    }
  }
  if (kind == "zero" && colon == std::string::npos) return zero_potential(n);
  if (kind == "cos" && colon != std::string::npos) return cos_potential(n, a);
  if (kind == "bump" && colon != std::string::npos) return bump_potential(n, a);
  throw ConfigError("unknown potential '" + spec + "' (expected zero, cos:<a> or bump:<a>)");
}

/// Euler–Maruyama solution of du = −∇V(u)dt + dB, u(0) = 0, with ∇V(u) at every node.
struct SdePath {
  BrownianPath u;
  GridFunctionH drift;  // ∇V(u(t_k))
};

/// u_k = B_k + A_k with A_0 = 0, A_{k+1} = A_k − ∇V(u_k)Δt, which is the
/// recursion u_{k+1} = u_k − ∇V(u_k)Δt + ΔB_k; for V ≡ 0 it returns B exactly.
inline SdePath euler_maruyama(const PotentialSpec& V, const BrownianPath& b) {
  const std::size_t n = b.dim(), N = b.grid().steps();
  if (V.dim != n) throw GridMismatch("euler_maruyama: potential dimension differs from path dimension");
  const double dt = b.grid().dt();
  SdePath s{BrownianPath(n, b.grid()), GridFunctionH(n, b.grid())};
  std::vector<double> acc(n, 0.0), point(n), grad(n);
  for (std::size_t k = 0; k <= N; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      point[i] = b(i, k) + acc[i];
      s.u(i, k) = point[i];
    }
    V.gradient(point, grad);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(point[i]) || !std::isfinite(grad[i]))
        throw NumericError("euler_maruyama: non-finite state for " + V.name);
      s.drift(i, k) = grad[i];
      acc[i] -= grad[i] * dt;
    }
  }
  return s;
}

/// log ρ₁ = Σ_k ⟨∇V(u_k), ΔB_k⟩ − ½ Σ_k |∇V(u_k)|² Δt (both left endpoint, so
/// exp of it is an exact discrete martingale).
inline double log_rho1_stochastic(const SdePath& s, const BrownianPath& b) {
  require_same_shape(s.drift, b, "rho1_stochastic");
  const std::size_t N = b.grid().steps();
  const double dt = b.grid().dt();
  double ito = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < b.dim(); ++i) {
    auto d = s.drift.component(i);
    auto x = b.component(i);
    for (std::size_t k = 0; k < N; ++k) {
      ito += d[k] * (x[k + 1] - x[k]);
      quad += d[k] * d[k];
    }
  }
  return ito - 0.5 * quad * dt;
}

inline double rho1_stochastic(const SdePath& s, const BrownianPath& b) { return std::exp(log_rho1_stochastic(s, b)); }

/// V(y(1)) − V(0) + ½∫|∇V(y)|² − ½∫ΔV(y), trapezoid in time. grad_sq may be
/// supplied (|∇V(y(t_k))|²) to avoid recomputing the gradient.
inline double representation_exponent(const PotentialSpec& V, const NodeField<PathTag>& y,
                                      const std::vector<double>* grad_sq = nullptr) {
  const std::size_t n = y.dim(), N = y.grid().steps();
  std::vector<double> point(n), grad(n), gs(N + 1), lap(N + 1);
  for (std::size_t k = 0; k <= N; ++k) {
    for (std::size_t i = 0; i < n; ++i) point[i] = y(i, k);
    if (grad_sq) {
      gs[k] = (*grad_sq)[k];
    } else {
      V.gradient(point, grad);
      double s = 0.0;
      for (double g : grad) s += g * g;
      gs[k] = s;
    }
    lap[k] = V.laplacian(point);
  }
  std::vector<double> end(n), origin(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) end[i] = y(i, N);
  return V.value(end) - V.value(origin) + 0.5 * quadrature(y.grid(), gs) - 0.5 * quadrature(y.grid(), lap);
}

/// ρ₁(u) without a stochastic integral (Itô's formula applied to V(u)).
inline double log_rho1_representation(const PotentialSpec& V, const SdePath& s) {
  const std::size_t N = s.u.grid().steps();
  std::vector<double> gs(N + 1, 0.0);
  for (std::size_t k = 0; k <= N; ++k)
    for (std::size_t i = 0; i < s.u.dim(); ++i) gs[k] += s.drift(i, k) * s.drift(i, k);
  return representation_exponent(V, s.u, &gs);
}

inline double rho1_representation(const PotentialSpec& V, const SdePath& s) {
  return std::exp(log_rho1_representation(V, s));
}

/// ρ₁(B)⁻¹: the representation evaluated on B itself, negated in the exponent.
inline double log_inv_rho1_of_B(const BrownianPath& b, const PotentialSpec& V) {
  if (V.dim != b.dim()) throw GridMismatch("inv_rho1_of_B: potential dimension differs from path dimension");
  return -representation_exponent(V, b);
}

inline double inv_rho1_of_B(const BrownianPath& b, const PotentialSpec& V) { return std::exp(log_inv_rho1_of_B(b, V)); }

/// Range of the representation exponent allowed by the bound constants:
/// |V(y(1)) − V(0)| ≤ 2‖V‖, 0 ≤ ½∫|∇V|² ≤ ½‖∇V‖², |½∫ΔV| ≤ ½‖ΔV‖.
struct ExponentRange {
  double lo = 0.0, hi = 0.0;
};

inline ExponentRange representation_range(const PotentialSpec& V) {
  const auto& b = V.bounds;
  return {-(2.0 * b.sup_value + 0.5 * b.sup_laplacian),
          2.0 * b.sup_value + 0.5 * b.sup_gradient * b.sup_gradient + 0.5 * b.sup_laplacian};
}

/// Per-path Girsanov quantities.
struct GirsanovRecord {
  double rho1_stochastic = 1.0;
  double rho1_representation = 1.0;
  double inv_rho1_of_B = 1.0;
  double g_of_u = 0.0;
};

/// φ₁(r) = E[ρ₁(B)⁻¹ | g(B) = r] · f̂₁(r): Nadaraya–Watson times KDE on the
/// same g(B) samples and bandwidth. SE is the per-path SE of K_h(g − r) ρ₁(B)⁻¹.
inline DensityCurve phi1_density(std::span<const double> g_b, std::span<const double> inv_rho,
                                 std::span<const double> r_grid, double bandwidth, Provenance prov) {
  require_r_grid(r_grid);
  const DensityCurve f = kde_density(g_b, r_grid, bandwidth, prov);
  DensityCurve c{"conditional-product", {r_grid.begin(), r_grid.end()}, {}, {}, {}, prov, {}};
  for (std::size_t j = 0; j < r_grid.size(); ++j) {
    const double r = r_grid[j];
    try {
      const ConditionalEstimate ce = conditional_expectation(inv_rho, g_b, r, bandwidth);
      const Estimate kx = mean_of(g_b.size(), [&](std::size_t i) { return gaussian_kernel(g_b[i] - r, bandwidth) * inv_rho[i]; });
      c.estimate.push_back(ce.value * f.estimate[j]);
      c.se.push_back(kx.se);
      c.flags.emplace_back();
    } catch (const InsufficientLocalSamples&) {
      c.estimate.push_back(0.0);
      c.se.push_back(0.0);
      c.flags.emplace_back("insufficient-local-samples");
    }
  }
  c.params = {{"bandwidth", bandwidth}};
  c.params.emplace_back("grid_mass", c.integral());
  return c;
}

/// KDE of g(u) for u simulated directly under μ.
inline DensityCurve empirical_density_gu(std::span<const double> g_u, std::span<const double> r_grid,
                                         double bandwidth, Provenance prov) {
  return kde_density(g_u, r_grid, bandwidth, prov, "empirical-sde");
}

/// Slab ladder on {g(u) = r}.
inline SlabLadder theta_slab(std::span<const double> x, std::span<const double> g_u, double r,
                             std::span<const double> eps) {
  return slab_ladder(x, g_u, r, eps);
}

}  // namespace wsurf
