#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wsurf/errors.hpp"
#include "wsurf/time_grid.hpp"

namespace wsurf {

/// n-dimensional values on the nodes of a TimeGrid, stored coordinate-major:
/// component i occupies the contiguous block [i*(N+1), (i+1)*(N+1)).
/// The tag keeps paths and elements of H from being mixed up.
template <class Tag>
class NodeField {
public:
  NodeField(std::size_t dim, TimeGrid grid)
      : dim_(dim), grid_(grid), values_(dim * grid.nodes(), 0.0) {
    if (dim == 0) throw ConfigError("dimension must be at least 1");
  }

  std::size_t dim() const noexcept { return dim_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t nodes() const noexcept { return grid_.nodes(); }

  std::span<double> component(std::size_t i) noexcept {
    return {values_.data() + i * nodes(), nodes()};
  }
  std::span<const double> component(std::size_t i) const noexcept {
    return {values_.data() + i * nodes(), nodes()};
  }

  double& operator()(std::size_t i, std::size_t k) noexcept { return values_[i * nodes() + k]; }
  double operator()(std::size_t i, std::size_t k) const noexcept {
    return values_[i * nodes() + k];
  }

  /// Euclidean norm of the value at node k.
  double norm_at(std::size_t k) const noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) s += (*this)(i, k) * (*this)(i, k);
    return std::sqrt(s);
  }

  std::span<double> raw() noexcept { return values_; }
  std::span<const double> raw() const noexcept { return values_; }

  bool same_shape(const NodeField& o) const noexcept { return dim_ == o.dim_ && grid_ == o.grid_; }

  template <class OtherTag>
  bool same_shape(const NodeField<OtherTag>& o) const noexcept {
    return dim_ == o.dim() && grid_ == o.grid();
  }

  friend bool operator==(const NodeField&, const NodeField&) = default;

private:
  std::size_t dim_;
  TimeGrid grid_;
  std::vector<double> values_;
};

struct PathTag {};
struct HilbertTag {};

/// A discretized path x(t_k) ∈ ℝⁿ (Brownian sample, SDE solution, test path).
using BrownianPath = NodeField<PathTag>;

/// A discretized element of H = L²(0,1;ℝⁿ).
using GridFunctionH = NodeField<HilbertTag>;

template <class A, class B>
void require_same_shape(const NodeField<A>& a, const NodeField<B>& b, const char* what) {
  if (!a.same_shape(b)) throw GridMismatch(std::string(what) + ": grid or dimension mismatch");
}

/// ⟨v, w⟩_H by trapezoidal quadrature of ⟨v(t), w(t)⟩_{ℝⁿ}.
inline double inner(const GridFunctionH& v, const GridFunctionH& w) {
  require_same_shape(v, w, "inner");
  const std::size_t N = v.grid().steps();
  double acc = 0.0;
  for (std::size_t i = 0; i < v.dim(); ++i) {
    auto a = v.component(i);
    auto b = w.component(i);
    double s = 0.5 * (a[0] * b[0] + a[N] * b[N]);
    for (std::size_t k = 1; k < N; ++k) s += a[k] * b[k];
    acc += s;
  }
  return acc / static_cast<double>(N);
}

inline double norm_sq(const GridFunctionH& v) { return inner(v, v); }
inline double norm(const GridFunctionH& v) { return std::sqrt(norm_sq(v)); }

/// Builds h from a callable (i, t) -> h_i(t).
template <class F>
GridFunctionH make_grid_function(std::size_t dim, TimeGrid grid, F&& f) {
  GridFunctionH h(dim, grid);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t k = 0; k < grid.nodes(); ++k) h(i, k) = f(i, grid.node(k));
  return h;
}

/// Constant unit vector e_i.
inline GridFunctionH unit_direction(std::size_t dim, TimeGrid grid, std::size_t i) {
  return make_grid_function(dim, grid, [i](std::size_t j, double) { return j == i ? 1.0 : 0.0; });
}

inline GridFunctionH scaled(const GridFunctionH& h, double a) {
  GridFunctionH out = h;
  for (double& v : out.raw()) v *= a;
  return out;
}

/// Deterministic path from a callable (i, t) -> x_i(t); used for test paths.
template <class F>
BrownianPath make_path(std::size_t dim, TimeGrid grid, F&& f) {
  BrownianPath x(dim, grid);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t k = 0; k < grid.nodes(); ++k) x(i, k) = f(i, grid.node(k));
  return x;
}

}  // namespace wsurf
