#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "wsurf/errors.hpp"
#include "wsurf/node_field.hpp"
#include "wsurf/rng.hpp"
#include "wsurf/time_grid.hpp"

namespace wsurf {

/// Shape and seeding of a Brownian ensemble. Paths are produced batch by batch;
/// batch b draws from RngSpec::engine_for(b), so the values depend on
/// (seed, n, N, M, batch size) and never on how batches are scheduled.
struct EnsembleSpec {
  std::size_t dim = 3;
  TimeGrid grid{512};
  std::size_t paths = 1000;
  std::size_t batch_size = 4096;
  RngSpec rng{};

  void validate() const {
    if (dim < 1) throw ConfigError("ensemble: dimension n must be >= 1");
    if (grid.steps() < 2) throw ConfigError("ensemble: steps N must be >= 2");
    if (paths < 1) throw ConfigError("ensemble: path count M must be >= 1");
    if (batch_size < 1) throw ConfigError("ensemble: batch size must be >= 1");
  }

  std::size_t batches() const noexcept { return (paths + batch_size - 1) / batch_size; }
  std::size_t batch_begin(std::size_t b) const noexcept { return b * batch_size; }
  std::size_t batch_end(std::size_t b) const noexcept {
    return std::min(paths, (b + 1) * batch_size);
  }
};

/// Draws one path: x(0) = 0 and i.i.d. N(0, Δt) increments, coordinate by coordinate.
inline void generate_path(BrownianPath& x, Engine& engine) {
  StandardNormal normal;
  const double sd = std::sqrt(x.grid().dt());
  for (std::size_t i = 0; i < x.dim(); ++i) {
    auto c = x.component(i);
    c[0] = 0.0;
    for (std::size_t k = 1; k < c.size(); ++k) c[k] = c[k - 1] + sd * normal(engine);
  }
}

inline unsigned default_workers() {
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs task(b) for every batch index on a pool of `workers` threads.
/// The first exception thrown by any task is rethrown on the caller.
template <class Task>
void parallel_batches(std::size_t batches, unsigned workers, Task&& task) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(batches)));
  if (workers == 1) {
    for (std::size_t b = 0; b < batches; ++b) task(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto loop = [&] {
    for (std::size_t b = next++; b < batches; b = next++) {
      try {
        task(b);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = batches;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(loop);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Streams every path of the ensemble without storing it:
/// fn(state, path_index, path) with one default-constructed State per batch.
template <class State, class Fn>
void for_each_path(const EnsembleSpec& spec, unsigned workers, Fn&& fn) {
  spec.validate();
  parallel_batches(spec.batches(), workers, [&](std::size_t b) {
    Engine engine = spec.rng.engine_for(b);
    BrownianPath path(spec.dim, spec.grid);
    State state{};
    for (std::size_t m = spec.batch_begin(b); m < spec.batch_end(b); ++m) {
      generate_path(path, engine);
      fn(state, m, static_cast<const BrownianPath&>(path));
    }
  });
}

template <class Fn>
void for_each_path(const EnsembleSpec& spec, unsigned workers, Fn&& fn) {
  struct None {};
  for_each_path<None>(spec, workers,
                      [&](None&, std::size_t m, const BrownianPath& p) { fn(m, p); });
}

/// An ensemble held in memory (small M, persistence, deterministic tests).
struct PathEnsemble {
  EnsembleSpec spec;
  std::vector<BrownianPath> paths;

  std::size_t size() const noexcept { return paths.size(); }
  const BrownianPath& operator[](std::size_t m) const { return paths[m]; }

  friend bool operator==(const PathEnsemble& a, const PathEnsemble& b) {
    return a.spec.dim == b.spec.dim && a.spec.grid == b.spec.grid &&
           a.spec.paths == b.spec.paths && a.spec.batch_size == b.spec.batch_size &&
           a.spec.rng.master_seed == b.spec.rng.master_seed && a.paths == b.paths;
  }
};

inline PathEnsemble sample_ensemble(const EnsembleSpec& spec, unsigned workers = 1) {
  spec.validate();
  PathEnsemble ens{spec, std::vector<BrownianPath>(spec.paths, BrownianPath(spec.dim, spec.grid))};
  for_each_path(spec, workers, [&](std::size_t m, const BrownianPath& p) { ens.paths[m] = p; });
  return ens;
}

/// Discrete Wiener/Itô integral with left-endpoint integrand:
///   Σ_k ⟨h(t_k), x(t_{k+1}) − x(t_k)⟩.
inline double forward_ito(const GridFunctionH& h, const BrownianPath& x) {
  require_same_shape(h, x, "forward_ito");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    auto hv = h.component(i);
    auto xv = x.component(i);
    for (std::size_t k = 0; k + 1 < xv.size(); ++k) acc += hv[k] * (xv[k + 1] - xv[k]);
  }
  return acc;
}

/// Backward sum with right-endpoint integrand: Σ_k ⟨u(t_{k+1}), x(t_{k+1}) − x(t_k)⟩.
/// This converges to the Skorohod integral only when u(s) is independent of the
/// increments on [0, s]; skorohod_u does not rely on it.
inline double backward_ito(const GridFunctionH& u, const BrownianPath& x) {
  require_same_shape(u, x, "backward_ito");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    auto uv = u.component(i);
    auto xv = x.component(i);
    for (std::size_t k = 0; k + 1 < xv.size(); ++k) acc += uv[k + 1] * (xv[k + 1] - xv[k]);
  }
  return acc;
}

/// Restriction of a path to the grid with N/factor steps (every factor-th node).
/// A Brownian path on the fine grid restricts to an exact Brownian path on the coarse one.
inline BrownianPath coarsen(const BrownianPath& fine, std::size_t factor) {
  if (factor == 0 || fine.grid().steps() % factor != 0)
    throw ConfigError("coarsen: factor must divide the step count");
  BrownianPath coarse(fine.dim(), TimeGrid(fine.grid().steps() / factor));
  for (std::size_t i = 0; i < fine.dim(); ++i)
    for (std::size_t k = 0; k < coarse.nodes(); ++k) coarse(i, k) = fine(i, k * factor);
  return coarse;
}

}  // namespace wsurf
