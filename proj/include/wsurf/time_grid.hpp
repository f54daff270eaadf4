#pragma once

#include <cstddef>
#include <span>

#include "wsurf/errors.hpp"

namespace wsurf {

/// Uniform grid t_k = k/N, k = 0..N, on [0, 1].
class TimeGrid {
public:
  explicit TimeGrid(std::size_t steps) : steps_(steps) {
    if (steps == 0) throw ConfigError("TimeGrid: steps must be positive");
  }

  std::size_t steps() const noexcept { return steps_; }
  std::size_t nodes() const noexcept { return steps_ + 1; }
  double dt() const noexcept { return 1.0 / static_cast<double>(steps_); }
  double node(std::size_t k) const noexcept {
    return static_cast<double>(k) / static_cast<double>(steps_);
  }

  /// Trapezoid weight of node k.
  double weight(std::size_t k) const noexcept {
    return (k == 0 || k == steps_) ? 0.5 * dt() : dt();
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
  std::size_t steps_;
};

/// Trapezoidal rule for ∫₀¹ f dt from node values. Exact on affine f, and
/// quadrature(1) == 1 bit-exactly (the node sum is divided by N, not scaled by 1/N).
inline double quadrature(const TimeGrid& grid, std::span<const double> f) {
  if (f.size() != grid.nodes()) throw GridMismatch("quadrature: value count != grid nodes");
  const std::size_t N = grid.steps();
  double acc = 0.5 * (f[0] + f[N]);
  for (std::size_t k = 1; k < N; ++k) acc += f[k];
  return acc / static_cast<double>(N);
}

}  // namespace wsurf
