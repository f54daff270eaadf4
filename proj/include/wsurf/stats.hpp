#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace wsurf {

/// Streaming (count, mean, M2) accumulator. merge() is the Chan et al. pairwise
/// update, so per-batch accumulators can be combined in any grouping.
class RunningStats {
public:
  void push(double x) noexcept {
    ++count_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(count_);
    m2_ += d * (x - mean_);
  }

  void merge(const RunningStats& o) noexcept {
    if (o.count_ == 0) return;
    if (count_ == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(o.count_);
    const double d = o.mean_ - mean_;
    const double n = na + nb;
    mean_ += d * nb / n;
    m2_ += o.m2_ + d * d * na * nb / n;
    count_ += o.count_;
  }

  std::size_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }
  double m2() const noexcept { return m2_; }
  double variance() const noexcept {
    return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
  }
  double std_error() const noexcept {
    return count_ > 1 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
  }

private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Monte Carlo estimate with standard error.
struct Estimate {
  double value = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

inline Estimate to_estimate(const RunningStats& s) { return {s.mean(), s.std_error(), s.count()}; }

/// Mean of per-path values with i.i.d. standard error. Accumulates per block of
/// `block` values and merges blocks in index order.
inline Estimate mean_estimate(std::span<const double> values, std::size_t block = 4096) {
  RunningStats total;
  for (std::size_t b = 0; b < values.size(); b += block) {
    RunningStats part;
    const std::size_t e = std::min(values.size(), b + block);
    for (std::size_t i = b; i < e; ++i) part.push(values[i]);
    total.merge(part);
  }
  return to_estimate(total);
}

/// Mean of f(i) over i in [0, count).
template <class F>
Estimate mean_of(std::size_t count, F&& f, std::size_t block = 4096) {
  RunningStats total;
  for (std::size_t b = 0; b < count; b += block) {
    RunningStats part;
    const std::size_t e = std::min(count, b + block);
    for (std::size_t i = b; i < e; ++i) part.push(f(i));
    total.merge(part);
  }
  return to_estimate(total);
}

/// z-score of a difference; a zero SE with zero difference counts as 0.
inline double z_score(double diff, double se) {
  if (se > 0.0) return std::abs(diff) / se;
  return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

/// Sample variance with the standard error of the variance estimator,
/// SE² ≈ (m4 − s⁴)/M.
inline Estimate variance_estimate(std::span<const double> values) {
  const Estimate m = mean_estimate(values);
  const double n = static_cast<double>(values.size());
  double m2 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - m.value;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  const double var = m2 * n / (n - 1.0);
  return {var, std::sqrt(std::max(0.0, m4 - m2 * m2) / n), values.size()};
}

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
  std::size_t points = 0;
};

/// Weighted least squares y ≈ a + b x. slope_se uses the weights as inverse
/// variances (1/Σw-scaled), which is what the tail and refinement fits feed in.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y,
                        std::span<const double> w = {}) {
  if (x.size() != y.size() || (!w.empty() && w.size() != x.size()))
    throw std::invalid_argument("fit_line: size mismatch");
  if (x.size() < 2) throw std::invalid_argument("fit_line: need at least two points");
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    sw += wi;
    sx += wi * x[i];
    sy += wi * y[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    sxx += wi * (x[i] - mx) * (x[i] - mx);
    sxy += wi * (x[i] - mx) * (y[i] - my);
  }
  LineFit fit;
  fit.points = x.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (w.empty()) {
    double rss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - fit.intercept - fit.slope * x[i];
      rss += e * e;
    }
    fit.slope_se = x.size() > 2 ? std::sqrt(rss / static_cast<double>(x.size() - 2) / sxx) : 0.0;
  } else {
    fit.slope_se = std::sqrt(1.0 / sxx);
  }
  return fit;
}

/// q-quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

}  // namespace wsurf
