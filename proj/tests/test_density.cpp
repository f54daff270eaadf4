#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "wsurf/density.hpp"
#include "wsurf/malliavin.hpp"
#include "wsurf/path_engine.hpp"

using namespace wsurf;

namespace {

constexpr std::size_t kN = 3, kSteps = 128, kM = 100000;

// One shared ensemble: per-path g, γ, δ(u/γ), W(e1), δ(W(e1) u/γ) and Z = ∫ t B¹ dt.
struct Columns {
  std::vector<double> g, gamma, duog, w1, dxuog, z;
  Provenance prov{kN, kSteps, kM, 101};
};

const Columns& cols() {
  static const Columns c = [] {
    Columns c;
    for (auto* v : {&c.g, &c.gamma, &c.duog, &c.w1, &c.dxuog, &c.z}) v->resize(kM);
    const TimeGrid grid(kSteps);
    const auto X = CylindricalFunctional::wiener(unit_direction(kN, grid, 0));
    for_each_path(EnsembleSpec{kN, grid, kM, 4096, RngSpec{101}}, 1, [&](std::size_t m, const BrownianPath& p) {
      const auto rec = malliavin_record(p);
      c.g[m] = rec.g;
      c.gamma[m] = rec.gamma;
      c.duog[m] = rec.delta_u_over_gamma;
      c.w1[m] = eval_cylindrical(X, p);
      c.dxuog[m] = skorohod_X_u_over_gamma(X, rec, p);
      std::vector<double> tb(grid.nodes());
      for (std::size_t k = 0; k < grid.nodes(); ++k) tb[k] = grid.node(k) * p(0, k);
      c.z[m] = quadrature(grid, tb);
    });
    return c;
  }();
  return c;
}

double outside(const std::vector<double>& g, double lo, double hi) {
  return static_cast<double>(std::count_if(g.begin(), g.end(), [&](double v) { return v < lo || v > hi; })) /
         static_cast<double>(g.size());
}

double argmax_r(const DensityCurve& c) {
  return c.r[std::max_element(c.estimate.begin(), c.estimate.end()) - c.estimate.begin()];
}

}  // namespace

TEST(RGrid, DefaultSpansCentralPercentiles) {
  const auto& c = cols();
  const auto r = default_r_grid(c.g);
  ASSERT_EQ(r.size(), 32u);
  EXPECT_NEAR(r.front(), quantile(c.g, 0.02), 1e-12);
  EXPECT_NEAR(r.back(), quantile(c.g, 0.98), 1e-12);
  EXPECT_NO_THROW(require_r_grid(r));
  const std::vector<double> bad{0.1, 0.1};
  EXPECT_THROW(require_r_grid(bad), ConfigError);
  EXPECT_THROW(require_r_grid(std::vector<double>{}), ConfigError);
}

TEST(Kde, NonnegativeAndNormalized) {
  const auto& c = cols();
  const auto r = default_r_grid(c.g, 64);
  const auto k = kde_density(c.g, r, silverman_bandwidth(c.g), c.prov);
  for (std::size_t j = 0; j < k.size(); ++j) {
    EXPECT_GE(k.estimate[j], 0.0);
    EXPECT_GE(k.se[j], 0.0);
  }
  const double mass = k.integral() + outside(c.g, r.front(), r.back());
  EXPECT_NEAR(mass, 1.0, 0.02);
  EXPECT_EQ(k.method, "kde");
  EXPECT_GT(k.param("bandwidth"), 0.0);
}

TEST(Kde, RejectsBadInput) {
  const std::vector<double> r{0.5, 1.0};
  EXPECT_THROW(kde_density(std::vector<double>{}, r, 0.1, {}), ConfigError);
  EXPECT_THROW(kde_density(cols().g, r, 0.0, {}), ConfigError);
}

TEST(MalliavinDensity, EmptyIndicatorBeyondMaxIsExactlyZero) {
  const auto& c = cols();
  const double top = *std::max_element(c.g.begin(), c.g.end());
  const std::vector<double> r{top, top + 1.0};
  const auto f = malliavin_density(c.g, c.duog, r, c.prov);
  EXPECT_EQ(f.estimate[0], 0.0);
  EXPECT_EQ(f.estimate[1], 0.0);
}

TEST(MalliavinDensity, AtZeroEqualsFullMean) {
  const auto& c = cols();
  const std::vector<double> r{0.0};
  const auto f = malliavin_density(c.g, c.duog, r, c.prov);
  EXPECT_EQ(f.estimate[0], mean_estimate(c.duog).value);
  // E[δ(u/γ)] = 0 while f₁(0) = 0, consistent with the indicator covering everything.
  EXPECT_LE(z_score(f.estimate[0], f.se[0]), 4.0);
}

TEST(MalliavinDensity, Normalized) {
  const auto& c = cols();
  const auto r = default_r_grid(c.g, 64);
  const auto f = malliavin_density(c.g, c.duog, r, c.prov);
  EXPECT_NEAR(f.integral() + outside(c.g, r.front(), r.back()), 1.0, 0.02);
  EXPECT_EQ(f.param("degenerate_gamma"), 0.0);
}

TEST(MalliavinDensity, MatchesKdeAtItsPeak) {
  const auto& c = cols();
  const double h = silverman_bandwidth(c.g);
  const auto r = default_r_grid(c.g);
  const double rp = argmax_r(kde_density(c.g, r, h, c.prov));
  // Paired per-path difference of the two estimators.
  const Estimate d = mean_of(kM, [&](std::size_t i) {
    return gaussian_kernel(c.g[i] - rp, h) - (c.g[i] > rp ? c.duog[i] : 0.0);
  });
  EXPECT_LE(z_score(d.value, d.se), 3.0) << "r=" << rp << " diff=" << d.value;
}

TEST(MalliavinDensity, NonFiniteWeightsCountedAsDegenerate) {
  const std::vector<double> g{0.5, 1.0, 2.0}, w{1.0, NAN, 2.0}, r{0.1};
  const auto f = malliavin_density(g, w, r, {});
  EXPECT_EQ(f.param("degenerate_gamma"), 1.0);
  EXPECT_DOUBLE_EQ(f.estimate[0], 1.0);
}

TEST(MalliavinDensityX, ConstantFunctionals) {
  const auto& c = cols();
  const auto r = default_r_grid(c.g, 8);
  const auto f1 = malliavin_density(c.g, c.duog, r, c.prov);
  const auto fx = malliavin_density_X(c.g, c.duog, r, c.prov);
  EXPECT_EQ(f1.estimate, fx.estimate);
  EXPECT_EQ(f1.se, fx.se);
  std::vector<double> scaled(kM);
  for (std::size_t i = 0; i < kM; ++i) scaled[i] = 2.5 * c.duog[i];
  const auto fc = malliavin_density_X(c.g, scaled, r, c.prov);
  for (std::size_t j = 0; j < r.size(); ++j)
    EXPECT_NEAR(fc.estimate[j], 2.5 * f1.estimate[j], 1e-12 * std::abs(2.5 * f1.estimate[j]));
}

TEST(MalliavinDensityX, WienerFunctionalMatchesConditionalProduct) {
  const auto& c = cols();
  const double h = silverman_bandwidth(c.g);
  for (double q : {0.3, 0.5, 0.7}) {
    const double r = quantile(c.g, q);
    const Estimate d = mean_of(kM, [&](std::size_t i) {
      return (c.g[i] > r ? c.dxuog[i] : 0.0) - gaussian_kernel(c.g[i] - r, h) * c.w1[i];
    });
    EXPECT_LE(z_score(d.value, d.se), 3.0) << "q=" << q;
  }
}

TEST(ConditionalExpectation, OneAndG) {
  const auto& c = cols();
  const double h = silverman_bandwidth(c.g);
  const std::vector<double> one(kM, 1.0);
  const double r = quantile(c.g, 0.5);
  const auto e1 = conditional_expectation(one, c.g, r, h);
  EXPECT_EQ(e1.value, 1.0);
  EXPECT_EQ(e1.bandwidth, h);
  EXPECT_GE(e1.effective_samples, 100.0);
  const auto eg = conditional_expectation(c.g, c.g, r, h);
  EXPECT_LE(std::abs(eg.value - r), 3.0 * eg.se + h);
}

TEST(ConditionalExpectation, ErrorsAndSymmetry) {
  const auto& c = cols();
  const double h = silverman_bandwidth(c.g);
  EXPECT_THROW(conditional_expectation(c.g, c.g, 100.0, h), InsufficientLocalSamples);
  EXPECT_THROW(conditional_expectation(c.g, c.g, 1.0, 0.0), ConfigError);
  // B -> −B fixes g and flips W(e1), so E[W(e1) | g = r] = 0.
  const auto e = conditional_expectation(c.w1, c.g, quantile(c.g, 0.5), h);
  EXPECT_LE(z_score(e.value, e.se), 3.0);
}

TEST(Laplace, OracleAndMonteCarlo) {
  const auto& c = cols();
  EXPECT_EQ(laplace_oracle(0.0, 3), 1.0);
  EXPECT_EQ(laplace_mc(c.g, 0.0).value, 1.0);
  EXPECT_NEAR(laplace_oracle(1.0, 3), 0.5216, 1e-4);
  EXPECT_NEAR(laplace_oracle(4.0, 3), std::pow(std::cosh(2.0), -1.5), 1e-15);
  for (double lambda : {1.0, 4.0}) {
    const Estimate e = laplace_mc(c.g, lambda);
    EXPECT_LE(std::abs(e.value - laplace_oracle(lambda, 3)), 3.0 * e.se + 2e-3) << lambda;
  }
  EXPECT_THROW(laplace_mc(c.g, -1.0), ConfigError);
  EXPECT_NEAR(log_cosh(800.0), 800.0 - std::log(2.0), 1e-9);
}

TEST(Inversion, StehfestOnKnownTransform) {
  const auto w = stehfest_weights(12);
  double s = 0.0;
  for (double v : w) s += v;
  EXPECT_NEAR(s, 0.0, 1e-6);
  for (double t : {0.5, 1.0, 2.0})
    EXPECT_NEAR(gaver_stehfest([](double p) { return 1.0 / (p + 1.0); }, t, w), std::exp(-t), 1e-4);
}

TEST(Inversion, NormalizedAndVanishingNearZero) {
  std::vector<double> r;
  for (double x = 0.005; x <= 6.0 + 1e-12; x += 0.005) r.push_back(x);
  const auto f = invert_laplace(3, r);
  EXPECT_NEAR(f.integral(), 1.0, 0.01);
  const double peak = *std::max_element(f.estimate.begin(), f.estimate.end());
  EXPECT_LT(inverted_density(3, 0.01), 0.05 * peak);
  EXPECT_EQ(f.method, "laplace-inversion");
  EXPECT_THROW(invert_laplace(3, std::vector<double>{0.0, 1.0}), ConfigError);
}

TEST(Inversion, AgreesWithKdeAtCentralLevels) {
  const auto& c = cols();
  const double h = silverman_bandwidth(c.g);
  std::vector<double> r;
  for (double q : {0.3, 0.4, 0.5, 0.6, 0.7}) r.push_back(quantile(c.g, q));
  const auto k = kde_density(c.g, r, h, c.prov);
  const auto f = invert_laplace(3, r);
  for (std::size_t j = 0; j < r.size(); ++j) {
    EXPECT_TRUE(f.flags[j].empty());
    EXPECT_NEAR(k.estimate[j] / f.estimate[j], 1.0, 0.05) << r[j];
  }
}

TEST(Moments, InverseGamma) {
  const auto& c = cols();
  EXPECT_EQ(inv_gamma_moments(c.gamma, 0.0).estimate, 1.0);
  const auto p1 = inv_gamma_moments(c.gamma, 1.0);
  EXPECT_TRUE(std::isfinite(p1.estimate));
  EXPECT_GT(p1.estimate, 0.0);
  EXPECT_FALSE(p1.heavy_tail);
  EXPECT_NEAR(p1.se_stability, 1.0, 0.3);
  const auto p25 = inv_gamma_moments(c.gamma, 2.5);
  EXPECT_TRUE(std::isfinite(p25.estimate));
  EXPECT_EQ(p25.heavy_tail, p25.top_percent_share > 0.5);
  EXPECT_THROW(inv_gamma_moments(c.gamma, -1.0), ConfigError);
}

TEST(GammaTail, VarianceOfZAndSlope) {
  const auto& c = cols();
  const auto rep = gamma_tail(c.gamma, eta_ladder(), c.z);
  EXPECT_LE(std::abs(rep.z_variance.value - 2.0 / 15.0), 4.0 * rep.z_variance.se);
  ASSERT_GE(rep.slope_points, 2u);
  EXPECT_GE(rep.slope, 3.0 - 0.5);
  for (const auto& row : rep.tail) EXPECT_LE(row.probability, 1.0);
  const std::vector<double> one{0.999};
  EXPECT_LE(gamma_tail(c.gamma, one).tail[0].probability, 1.0);
}

TEST(GammaTail, ZeroCountsFlaggedAndLadderValidated) {
  const auto& c = cols();
  const std::vector<double> tiny{1e-3, 1e-6};
  const auto rep = gamma_tail(c.gamma, tiny);
  EXPECT_TRUE(rep.tail[1].zero_count);
  EXPECT_THROW(gamma_tail(c.gamma, std::vector<double>{0.1, 0.2}), ConfigError);
  EXPECT_THROW(gamma_tail(c.gamma, std::vector<double>{1.5}), ConfigError);
}
