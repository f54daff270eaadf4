#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wsurf/errors.hpp"
#include "wsurf/stats.hpp"

namespace wsurf {

/// Which run an estimate came from.
struct Provenance {
  std::size_t n = 0;
  std::size_t steps = 0;
  std::size_t paths = 0;
  std::uint64_t seed = 0;
};

/// Estimates of a density (or F'_X) on an r-grid.
struct DensityCurve {
  std::string method;  // kde | malliavin | malliavin-X | laplace-inversion | empirical-sde | conditional-product
  std::vector<double> r;
  std::vector<double> estimate;
  std::vector<double> se;
  std::vector<std::string> flags;  // per point, empty when clean
  Provenance prov;
  std::vector<std::pair<std::string, double>> params;

  std::size_t size() const noexcept { return r.size(); }

  double param(const std::string& key, double fallback = std::nan("")) const {
    for (const auto& [k, v] : params)
      if (k == key) return v;
    return fallback;
  }

  /// Trapezoidal ∫ estimate dr over the grid.
  double integral() const {
    double acc = 0.0;
    for (std::size_t j = 1; j < r.size(); ++j)
      acc += 0.5 * (estimate[j] + estimate[j - 1]) * (r[j] - r[j - 1]);
    return acc;
  }
};

inline void require_r_grid(std::span<const double> r) {
  if (r.empty()) throw ConfigError("r-grid is empty");
  for (std::size_t j = 1; j < r.size(); ++j)
    if (!(r[j] > r[j - 1])) throw ConfigError("r-grid must be strictly increasing");
}

/// `points` equispaced levels between the 2nd and 98th percentile of g.
inline std::vector<double> default_r_grid(std::span<const double> g, std::size_t points = 32) {
  if (g.empty()) throw ConfigError("default_r_grid: empty sample");
  std::vector<double> v(g.begin(), g.end());
  const double lo = quantile(v, 0.02), hi = quantile(v, 0.98);
  std::vector<double> r(points);
  for (std::size_t j = 0; j < points; ++j)
    r[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(points - 1);
  return r;
}

/// Levels at the given sample quantiles of g (used for the "central r" checks).
inline std::vector<double> quantile_levels(std::span<const double> g, std::span<const double> qs) {
  std::vector<double> v(g.begin(), g.end());
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double q : qs) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    out.push_back(v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]));
  }
  return out;
}

/// Silverman's rule: 0.9 min(sd, IQR/1.34) M^{-1/5}.
inline double silverman_bandwidth(std::span<const double> g) {
  if (g.size() < 2) throw ConfigError("silverman_bandwidth: need at least two samples");
  const Estimate m = mean_estimate(g);
  const double sd = m.se * std::sqrt(static_cast<double>(g.size()));
  std::vector<double> v(g.begin(), g.end());
  const double iqr = quantile(v, 0.75) - quantile(v, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(g.size()), -0.2);
}

inline double gaussian_kernel(double x, double h) {
  const double z = x / h;
  return std::exp(-0.5 * z * z) / (h * std::sqrt(2.0 * std::numbers::pi));
}

/// Gaussian-kernel density estimate of the samples of g, SE from the per-path
/// kernel values.
inline DensityCurve kde_density(std::span<const double> g, std::span<const double> r_grid,
                                double bandwidth, Provenance prov, std::string method = "kde") {
  if (g.empty()) throw ConfigError("kde_density: empty ensemble");
  if (!(bandwidth > 0.0)) throw ConfigError("kde_density: bandwidth must be positive");
  require_r_grid(r_grid);
  DensityCurve c{std::move(method), {r_grid.begin(), r_grid.end()}, {}, {}, {}, prov, {}};
  for (double r : r_grid) {
    const Estimate e = mean_of(g.size(), [&](std::size_t i) { return gaussian_kernel(g[i] - r, bandwidth); });
    c.estimate.push_back(e.value);
    c.se.push_back(e.se);
    c.flags.emplace_back();
  }
  c.params = {{"bandwidth", bandwidth}, {"grid_mass", c.integral()}};
  c.params.emplace_back("tail_mass", 1.0 - c.integral());
  return c;
}

/// f(r) = E[w · 1_{g > r}] for per-path weights w (δ(u/γ) gives f₁, δ(X u/γ)
/// gives F'_X). Non-finite weights (degenerate γ) contribute 0 and are counted.
inline DensityCurve indicator_weighted_density(std::span<const double> g, std::span<const double> w,
                                               std::span<const double> r_grid, Provenance prov,
                                               std::string method) {
  if (g.empty()) throw ConfigError("density: empty ensemble");
  if (g.size() != w.size()) throw ConfigError("density: column size mismatch");
  require_r_grid(r_grid);
  std::size_t degenerate = 0;
  for (double v : w)
    if (!std::isfinite(v)) ++degenerate;
  DensityCurve c{std::move(method), {r_grid.begin(), r_grid.end()}, {}, {}, {}, prov, {}};
  for (double r : r_grid) {
    const Estimate e = mean_of(g.size(), [&](std::size_t i) {
      return (g[i] > r && std::isfinite(w[i])) ? w[i] : 0.0;
    });
    c.estimate.push_back(e.value);
    c.se.push_back(e.se);
    c.flags.emplace_back();
  }
  c.params = {{"degenerate_gamma", static_cast<double>(degenerate)}};
  return c;
}

/// f₁(r) = E[δ(u/γ) 1_{g>r}].
inline DensityCurve malliavin_density(std::span<const double> g, std::span<const double> delta_u_over_gamma,
                                      std::span<const double> r_grid, Provenance prov) {
  return indicator_weighted_density(g, delta_u_over_gamma, r_grid, prov, "malliavin");
}

/// f_X(r) = F'_X(r) = E[δ(X u/γ) 1_{g>r}].
inline DensityCurve malliavin_density_X(std::span<const double> g, std::span<const double> delta_X_u_over_gamma,
                                        std::span<const double> r_grid, Provenance prov) {
  return indicator_weighted_density(g, delta_X_u_over_gamma, r_grid, prov, "malliavin-X");
}

struct ConditionalEstimate {
  double value = 0.0;
  double se = 0.0;
  double effective_samples = 0.0;
  double bandwidth = 0.0;
};

/// Nadaraya–Watson estimate of E[X | g = r] with a Gaussian kernel; SE by the
/// delta method on the ratio. Throws InsufficientLocalSamples when the Kish
/// effective sample size (ΣK)²/ΣK² is below `min_effective`.
inline ConditionalEstimate conditional_expectation(std::span<const double> x, std::span<const double> g,
                                                   double r, double bandwidth,
                                                   double min_effective = 100.0) {
  if (!(bandwidth > 0.0)) throw ConfigError("conditional_expectation: bandwidth must be positive");
  if (x.size() != g.size()) throw ConfigError("conditional_expectation: column size mismatch");
  double sk = 0, sk2 = 0, skx = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double k = gaussian_kernel(g[i] - r, bandwidth);
    sk += k;
    sk2 += k * k;
    skx += k * x[i];
  }
  const double ess = sk2 > 0.0 ? sk * sk / sk2 : 0.0;
  if (ess < min_effective) throw InsufficientLocalSamples(r, ess);
  const double v = skx / sk;
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double k = gaussian_kernel(g[i] - r, bandwidth);
    s += k * k * (x[i] - v) * (x[i] - v);
  }
  return {v, std::sqrt(s) / sk, ess, bandwidth};
}

/// E[e^{−λ g}] by Monte Carlo.
inline Estimate laplace_mc(std::span<const double> g, double lambda) {
  if (lambda < 0.0) throw ConfigError("laplace_mc: lambda must be >= 0");
  return mean_of(g.size(), [&](std::size_t i) { return std::exp(-lambda * g[i]); });
}

inline double log_cosh(double x) {
  x = std::abs(x);
  return x + std::log1p(std::exp(-2.0 * x)) - std::numbers::ln2;
}

/// Cameron–Martin: E[exp(−λ · ½∫|B|²)] = (cosh √λ)^{−n/2}.
inline double laplace_oracle(double lambda, std::size_t n) {
  if (lambda < 0.0) throw ConfigError("laplace_oracle: lambda must be >= 0");
  return std::exp(-0.5 * static_cast<double>(n) * log_cosh(std::sqrt(lambda)));
}

/// Gaver–Stehfest weights V_1..V_L (L even).
inline std::vector<double> stehfest_weights(int order) {
  if (order < 2 || order % 2 != 0) throw ConfigError("Stehfest order must be even and >= 2");
  const int m = order / 2;
  auto fact = [](int k) {
    long double f = 1.0L;
    for (int j = 2; j <= k; ++j) f *= j;
    return f;
  };
  std::vector<double> v(order);
  for (int k = 1; k <= order; ++k) {
    long double s = 0.0L;
    for (int j = (k + 1) / 2; j <= std::min(k, m); ++j)
      s += std::pow(static_cast<long double>(j), m) * fact(2 * j) /
           (fact(m - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k));
    v[k - 1] = static_cast<double>(((m + k) % 2 == 0 ? 1.0L : -1.0L) * s);
  }
  return v;
}

/// f(t) ≈ (ln 2 / t) Σ_k V_k F(k ln 2 / t).
template <class Transform>
double gaver_stehfest(Transform&& F, double t, const std::vector<double>& weights) {
  const double a = std::numbers::ln2 / t;
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) acc += weights[k] * F(static_cast<double>(k + 1) * a);
  return a * acc;
}

/// Density of g by Gaver–Stehfest inversion of the closed-form transform.
/// A point is flagged "ill-conditioned" when orders order−2, order, order+2
/// disagree by more than 1% relative.
inline DensityCurve invert_laplace(std::size_t n, std::span<const double> r_grid, int order = 12) {
  require_r_grid(r_grid);
  if (!(r_grid.front() > 0.0)) throw ConfigError("invert_laplace: r must be positive");
  const auto w = stehfest_weights(order);
  const auto w_lo = stehfest_weights(order - 2);
  const auto w_hi = stehfest_weights(order + 2);
  auto F = [n](double s) { return laplace_oracle(s, n); };
  DensityCurve c{"laplace-inversion", {r_grid.begin(), r_grid.end()}, {}, {}, {}, Provenance{n, 0, 0, 0}, {}};
  for (double r : r_grid) {
    const double f = gaver_stehfest(F, r, w);
    const double lo = gaver_stehfest(F, r, w_lo);
    const double hi = gaver_stehfest(F, r, w_hi);
    const double scale = std::max(std::abs(f), 1e-300);
    const bool bad = std::abs(lo - f) > 0.01 * scale || std::abs(hi - f) > 0.01 * scale;
    c.estimate.push_back(f);
    c.se.push_back(0.0);
    c.flags.emplace_back(bad ? "ill-conditioned" : "");
  }
  c.params = {{"order", static_cast<double>(order)}};
  return c;
}

/// Value of the inverted density at one level.
inline double inverted_density(std::size_t n, double r, int order = 12) {
  const double rr[1] = {r};
  return invert_laplace(n, rr, order).estimate[0];
}

struct TailRow {
  double eta = 0.0;
  double probability = 0.0;
  std::size_t count = 0;
  bool zero_count = false;
};

/// Inverse-moment and small-ball diagnostics for γ.
struct MomentReport {
  double p = 0.0;
  double estimate = 0.0;  // E[γ^{-p}]
  double se = 0.0;
  double top_percent_share = 0.0;  // share of Σγ^{-p} from the largest 1% of samples
  bool heavy_tail = false;         // top_percent_share > 0.5
  double se_stability = 0.0;       // 2·SE(M)/SE(M/4); ≈ 1 when the variance is finite
  std::vector<TailRow> tail;
  double slope = 0.0;  // d log P(γ<η) / d log η
  double slope_se = 0.0;
  std::size_t slope_points = 0;
  Estimate z_variance;  // Var(∫₀¹ t B¹(t) dt), σ² = 2/15
};

inline MomentReport inv_gamma_moments(std::span<const double> gamma, double p) {
  if (p < 0.0) throw ConfigError("inv_gamma_moments: p must be >= 0");
  if (gamma.empty()) throw ConfigError("inv_gamma_moments: empty sample");
  MomentReport rep;
  rep.p = p;
  if (p == 0.0) {
    rep.estimate = 1.0;
    return rep;
  }
  std::vector<double> v(gamma.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::pow(gamma[i], -p);
  const Estimate e = mean_estimate(v);
  rep.estimate = e.value;
  rep.se = e.se;
  const Estimate quarter = mean_estimate(std::span<const double>(v).first(std::max<std::size_t>(2, v.size() / 4)));
  rep.se_stability = quarter.se > 0.0 ? 2.0 * e.se / quarter.se : 0.0;
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t top = std::max<std::size_t>(1, sorted.size() / 100);
  double top_sum = 0.0, total = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    total += sorted[i];
    if (i < top) top_sum += sorted[i];
  }
  rep.top_percent_share = top_sum / total;
  rep.heavy_tail = rep.top_percent_share > 0.5;
  return rep;
}

/// Geometric η-ladder from hi down to lo.
inline std::vector<double> eta_ladder(double hi = 0.2, double lo = 0.02, std::size_t points = 10) {
  std::vector<double> eta(points);
  for (std::size_t j = 0; j < points; ++j)
    eta[j] = hi * std::pow(lo / hi, static_cast<double>(j) / static_cast<double>(points - 1));
  return eta;
}

/// Empirical P(γ < η) on a decreasing ladder in (0,1), the count-weighted
/// log-log slope over nonzero rungs, and Var(Z) from the supplied Z samples.
inline MomentReport gamma_tail(std::span<const double> gamma, std::span<const double> eta,
                               std::span<const double> z_samples = {}) {
  for (std::size_t j = 0; j < eta.size(); ++j) {
    if (!(eta[j] > 0.0 && eta[j] < 1.0)) throw ConfigError("gamma_tail: eta must lie in (0,1)");
    if (j > 0 && !(eta[j] < eta[j - 1])) throw ConfigError("gamma_tail: eta ladder must decrease");
  }
  MomentReport rep;
  std::vector<double> x, y, w;
  const double M = static_cast<double>(gamma.size());
  for (double e : eta) {
    std::size_t c = 0;
    for (double g : gamma) c += (g < e) ? 1 : 0;
    rep.tail.push_back({e, static_cast<double>(c) / M, c, c == 0});
    if (c > 0) {
      x.push_back(std::log(e));
      y.push_back(std::log(static_cast<double>(c) / M));
      w.push_back(static_cast<double>(c));
    }
  }
  rep.slope_points = x.size();
  if (x.size() >= 2) {
    const LineFit fit = fit_line(x, y, w);
    rep.slope = fit.slope;
    rep.slope_se = fit.slope_se;
  }
  if (z_samples.size() > 1) rep.z_variance = variance_estimate(z_samples);
  return rep;
}

}  // namespace wsurf
