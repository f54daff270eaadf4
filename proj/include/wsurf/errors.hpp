#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wsurf {

/// Rejected run parameters (sizes, bandwidths, ladders, config keys).
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Two grid-valued objects that do not live on the same TimeGrid / dimension.
class GridMismatch : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// gamma <= tol_gamma; only the zero path (a null set) triggers it.
class DegenerateGamma : public std::domain_error {
public:
  explicit DegenerateGamma(double gamma)
      : std::domain_error("degenerate gamma: " + std::to_string(gamma)), gamma_(gamma) {}
  double gamma() const noexcept { return gamma_; }

private:
  double gamma_;
};

class InsufficientLocalSamples : public std::runtime_error {
public:
  InsufficientLocalSamples(double r, double effective)
      : std::runtime_error("too few samples near r=" + std::to_string(r) +
                           " (effective " + std::to_string(effective) + ")"),
        effective_(effective) {}
  double effective() const noexcept { return effective_; }

private:
  double effective_;
};

class EmptySlab : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value produced by a user-supplied callable.
class NumericError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Corrupt or mismatched ensemble file.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatch : public FormatError {
public:
  using FormatError::FormatError;
};

}  // namespace wsurf
