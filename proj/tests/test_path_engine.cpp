#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "wsurf/ensemble_io.hpp"
#include "wsurf/path_engine.hpp"
#include "wsurf/stats.hpp"

using namespace wsurf;

namespace {

EnsembleSpec spec_of(std::size_t n, std::size_t N, std::size_t M, std::uint64_t seed, std::size_t batch = 64) {
  return {n, TimeGrid(N), M, batch, RngSpec{seed}};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("wsurf_test_" + name);
}

}  // namespace

TEST(TimeGrid, NodesAndWeights) {
  TimeGrid g(4);
  EXPECT_EQ(g.nodes(), 5u);
  EXPECT_EQ(g.node(0), 0.0);
  EXPECT_EQ(g.node(4), 1.0);
  EXPECT_DOUBLE_EQ(g.dt(), 0.25);
  EXPECT_DOUBLE_EQ(g.weight(0), 0.125);
  EXPECT_DOUBLE_EQ(g.weight(2), 0.25);
  EXPECT_THROW(TimeGrid(0), ConfigError);
}

TEST(Quadrature, ConstantAffineAndQuadratic) {
  for (std::size_t N : {2, 7, 512}) {
    TimeGrid g(N);
    std::vector<double> one(g.nodes(), 1.0), t(g.nodes());
    for (std::size_t k = 0; k < g.nodes(); ++k) t[k] = g.node(k);
    EXPECT_EQ(quadrature(g, one), 1.0);
    EXPECT_EQ(quadrature(g, t), 0.5);
  }
  TimeGrid g(512);
  std::vector<double> t2(g.nodes());
  for (std::size_t k = 0; k < g.nodes(); ++k) t2[k] = g.node(k) * g.node(k);
  EXPECT_NEAR(quadrature(g, t2), 1.0 / 3.0, 1e-5);
  EXPECT_THROW(quadrature(g, std::vector<double>(3)), GridMismatch);
}

TEST(Quadrature, LinearAndMonotone) {
  Engine eng(7);
  StandardNormal z;
  TimeGrid g(33);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> a(g.nodes()), b(g.nodes()), c(g.nodes());
    for (std::size_t k = 0; k < g.nodes(); ++k) {
      a[k] = z(eng);
      b[k] = a[k] + std::abs(z(eng));
      c[k] = 2.5 * a[k] - 1.5 * b[k];
    }
    EXPECT_LE(quadrature(g, a), quadrature(g, b));
    EXPECT_NEAR(quadrature(g, c), 2.5 * quadrature(g, a) - 1.5 * quadrature(g, b), 1e-12);
  }
}

TEST(SampleEnsemble, TinyPathIsDeterministic) {
  const auto a = sample_ensemble(spec_of(3, 2, 1, 99));
  const auto b = sample_ensemble(spec_of(3, 2, 1, 99));
  ASSERT_EQ(a.size(), 1u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[0](i, 0), 0.0);
  EXPECT_NE(a[0](0, 1), 0.0);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == sample_ensemble(spec_of(3, 2, 1, 100)));
}

TEST(SampleEnsemble, RejectsInvalidSizes) {
  EXPECT_THROW(sample_ensemble(spec_of(0, 8, 10, 1)), ConfigError);
  EXPECT_THROW(sample_ensemble(spec_of(1, 1, 10, 1)), ConfigError);
  EXPECT_THROW(sample_ensemble(spec_of(1, 8, 0, 1)), ConfigError);
  EXPECT_THROW(sample_ensemble(spec_of(1, 8, 10, 1, 0)), ConfigError);
}

TEST(SampleEnsemble, WorkerCountDoesNotChangeValues) {
  const auto spec = spec_of(2, 16, 1000, 5, 37);
  const auto one = sample_ensemble(spec, 1);
  for (unsigned w : {2u, 3u, 8u}) EXPECT_EQ(one, sample_ensemble(spec, w));
}

TEST(SampleEnsemble, BatchSizeIsPartOfTheContract) {
  // Same seed with a different batch layout is a different (still valid) ensemble.
  EXPECT_FALSE(sample_ensemble(spec_of(1, 8, 100, 5, 10)) == sample_ensemble(spec_of(1, 8, 100, 5, 20)));
}

TEST(RngSpec, SubSeedsDistinctAndPure) {
  RngSpec r{12345};
  std::set<std::uint64_t> seen;
  for (std::uint64_t b = 0; b < 100000; ++b) seen.insert(r.sub_seed(b));
  EXPECT_EQ(seen.size(), 100000u);
  EXPECT_EQ(r.sub_seed(17), RngSpec{12345}.sub_seed(17));
}

TEST(SampleEnsemble, IncrementStatistics) {
  // Standardized increments: mean 0 and variance Δt per coordinate, 4 SE.
  const std::size_t n = 3, N = 4, M = 100000;
  const auto spec = spec_of(n, N, M, 2024, 4096);
  std::vector<RunningStats> mean(n), sq(n), endpoint(n);
  for_each_path(spec, 1, [&](std::size_t, const BrownianPath& p) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < N; ++k) {
        const double d = p(i, k + 1) - p(i, k);
        mean[i].push(d);
        sq[i].push(d * d);
      }
      endpoint[i].push(p(i, N));
    }
  });
  const double dt = 1.0 / N;
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_LE(z_score(mean[i].mean(), mean[i].std_error()), 4.0);
    EXPECT_LE(z_score(sq[i].mean() - dt, sq[i].std_error()), 4.0);
    EXPECT_LE(z_score(endpoint[i].mean(), endpoint[i].std_error()), 4.0);
  }
}

TEST(ForwardIto, ConstantDirectionTelescopes) {
  const auto ens = sample_ensemble(spec_of(2, 50, 5, 3));
  const auto h = unit_direction(2, TimeGrid(50), 0);
  for (const auto& p : ens.paths) EXPECT_NEAR(forward_ito(h, p), p(0, 50), 1e-12);
}

TEST(ForwardIto, VarianceIsNormSquared) {
  const std::size_t M = 100000;
  const auto spec = spec_of(2, 8, M, 11, 4096);
  const auto h = unit_direction(2, TimeGrid(8), 0);
  std::vector<double> w(M);
  for_each_path(spec, 1, [&](std::size_t m, const BrownianPath& p) { w[m] = forward_ito(h, p); });
  const Estimate v = variance_estimate(w);
  EXPECT_LE(z_score(v.value - norm_sq(h), v.se), 4.0);
  const Estimate m = mean_estimate(w);
  EXPECT_LE(z_score(m.value, m.se), 4.0);
}

TEST(ForwardIto, NonConstantDeterministicIntegrand) {
  const std::size_t M = 100000;
  const TimeGrid g(16);
  const auto spec = spec_of(1, 16, M, 12, 4096);
  const auto h = make_grid_function(1, g, [](std::size_t, double t) { return std::cos(3.0 * t); });
  std::vector<double> w(M);
  for_each_path(spec, 1, [&](std::size_t m, const BrownianPath& p) { w[m] = forward_ito(h, p); });
  // Left-endpoint sum variance is Σ h(t_k)² Δt exactly.
  double expect = 0.0;
  for (std::size_t k = 0; k < 16; ++k) expect += h(0, k) * h(0, k) * g.dt();
  const Estimate v = variance_estimate(w);
  EXPECT_LE(z_score(v.value - expect, v.se), 4.0);
}

TEST(ForwardIto, DeterministicTestPath) {
  const TimeGrid g(512);
  const auto x = make_path(1, g, [](std::size_t, double t) { return t; });
  const auto h = make_grid_function(1, g, [](std::size_t, double t) { return 0.5 * (1.0 - t * t); });
  EXPECT_NEAR(forward_ito(h, x), 1.0 / 3.0, 2e-3);
}

TEST(ForwardIto, GridMismatchRejected) {
  const auto x = make_path(1, TimeGrid(8), [](std::size_t, double t) { return t; });
  EXPECT_THROW(forward_ito(unit_direction(1, TimeGrid(16), 0), x), GridMismatch);
  EXPECT_THROW(forward_ito(unit_direction(2, TimeGrid(8), 0), x), GridMismatch);
  EXPECT_THROW(backward_ito(unit_direction(1, TimeGrid(16), 0), x), GridMismatch);
}

TEST(BackwardIto, ConstantIntegrand) {
  const auto ens = sample_ensemble(spec_of(3, 40, 5, 8));
  const auto e1 = unit_direction(3, TimeGrid(40), 0);
  for (const auto& p : ens.paths) {
    EXPECT_NEAR(backward_ito(e1, p), p(0, 40), 1e-12);
    EXPECT_EQ(backward_ito(e1, p), forward_ito(e1, p));
  }
  const auto c = scaled(make_grid_function(3, TimeGrid(40), [](std::size_t i, double) { return 0.3 * (i + 1.0); }), 2.0);
  for (const auto& p : ens.paths) EXPECT_EQ(backward_ito(c, p), forward_ito(c, p));
}

TEST(BackwardIto, TestPathWithUnitField) {
  const TimeGrid g(512);
  const auto x = make_path(1, g, [](std::size_t, double t) { return t; });
  EXPECT_NEAR(backward_ito(unit_direction(1, g, 0), x), 1.0, 1e-12);
}

TEST(Coarsen, RestrictsNodes) {
  const auto ens = sample_ensemble(spec_of(2, 8, 1, 4));
  const auto c = coarsen(ens[0], 2);
  EXPECT_EQ(c.grid().steps(), 4u);
  for (std::size_t k = 0; k <= 4; ++k) EXPECT_EQ(c(1, k), ens[0](1, 2 * k));
  EXPECT_THROW(coarsen(ens[0], 3), ConfigError);
}

TEST(ParallelBatches, PropagatesFirstException) {
  EXPECT_THROW(parallel_batches(10, 3, [](std::size_t b) {
                 if (b == 4) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}

TEST(EnsembleIo, RoundTripAndDescribe) {
  const auto ens = sample_ensemble(spec_of(3, 16, 50, 777, 16));
  const auto file = temp_file("roundtrip.bin");
  persist_ensemble(ens, file);
  EXPECT_EQ(std::filesystem::file_size(file), 40u + 50u * 3u * 17u * 8u);
  const auto h = describe_ensemble(file);
  EXPECT_EQ(h.dim, 3u);
  EXPECT_EQ(h.steps, 16u);
  EXPECT_EQ(h.paths, 50u);
  EXPECT_EQ(h.seed, 777u);
  EXPECT_EQ(h.batch_size, 16u);
  EXPECT_EQ(load_ensemble(file), ens);
  EXPECT_EQ(load_ensemble(file, {3, 16, 50}), ens);
  std::filesystem::remove(file);
}

TEST(EnsembleIo, ShapeMismatchAndCorruption) {
  const auto ens = sample_ensemble(spec_of(2, 8, 4, 1));
  const auto file = temp_file("shape.bin");
  persist_ensemble(ens, file);
  EXPECT_THROW(load_ensemble(file, {std::nullopt, 16, std::nullopt}), ShapeMismatch);
  EXPECT_THROW(load_ensemble(file, {3, std::nullopt, std::nullopt}), ShapeMismatch);
  std::filesystem::resize_file(file, std::filesystem::file_size(file) - 8);
  EXPECT_THROW(load_ensemble(file), FormatError);
  {
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    os << "JUNKJUNKJUNK";
  }
  EXPECT_THROW(describe_ensemble(file), FormatError);
  std::filesystem::remove(file);
  EXPECT_THROW(describe_ensemble(file), FormatError);
}

TEST(EnsembleIo, LittleEndianLayout) {
  PathEnsemble ens{spec_of(1, 2, 1, 0x0102030405060708ULL, 1), {make_path(1, TimeGrid(2), [](std::size_t, double t) { return t; })}};
  const auto file = temp_file("layout.bin");
  persist_ensemble(ens, file);
  std::ifstream is(file, std::ios::binary);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(is)), {});
  ASSERT_EQ(b.size(), 40u + 3u * 8u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "WSPE");
  EXPECT_EQ(b[4], 1);   // version
  EXPECT_EQ(b[8], 1);   // n
  EXPECT_EQ(b[12], 2);  // N
  EXPECT_EQ(b[16], 1);  // M
  EXPECT_EQ(b[24], 0x08);
  EXPECT_EQ(b[31], 0x01);
  // value 0.5 at node 1: 0x3FE0000000000000 little-endian
  EXPECT_EQ(b[40 + 8 + 7], 0x3F);
  EXPECT_EQ(b[40 + 8 + 6], 0xE0);
  std::filesystem::remove(file);
}
