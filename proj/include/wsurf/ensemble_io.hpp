#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <system_error>
#include <type_traits>

#include "wsurf/errors.hpp"
#include "wsurf/path_engine.hpp"

namespace wsurf {

// Ensemble file layout, all integers and doubles little-endian:
//
//   offset  size  field
//   0       4     magic "WSPE"
//   4       4     u32 format version (1)
//   8       4     u32 dimension n
//   12      4     u32 steps N
//   16      8     u64 path count M
//   24      8     u64 master seed
//   32      8     u64 batch size
//   40      ...   M * n * (N+1) f64 node values, path-major; within a path
//                 coordinate-major (all nodes of x¹, then x², ...)

struct EnsembleHeader {
  std::uint32_t dim = 0;
  std::uint32_t steps = 0;
  std::uint64_t paths = 0;
  std::uint64_t seed = 0;
  std::uint64_t batch_size = 0;

  friend bool operator==(const EnsembleHeader&, const EnsembleHeader&) = default;
};

namespace detail {

inline constexpr std::array<char, 4> kMagic{'W', 'S', 'P', 'E'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 40;

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T)))
    throw FormatError("ensemble file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline EnsembleHeader read_header(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kMagic) throw FormatError("bad ensemble magic");
  if (get_le<std::uint32_t>(is) != kVersion) throw FormatError("unsupported ensemble version");
  EnsembleHeader h;
  h.dim = get_le<std::uint32_t>(is);
  h.steps = get_le<std::uint32_t>(is);
  h.paths = get_le<std::uint64_t>(is);
  h.seed = get_le<std::uint64_t>(is);
  h.batch_size = get_le<std::uint64_t>(is);
  if (h.dim == 0 || h.steps < 2 || h.paths == 0 || h.batch_size == 0)
    throw FormatError("corrupt ensemble header");
  return h;
}

}  // namespace detail

inline void persist_ensemble(const PathEnsemble& ens, const std::filesystem::path& file) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + file.string() + " for writing");
  os.write(detail::kMagic.data(), 4);
  detail::put_le<std::uint32_t>(os, detail::kVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ens.spec.dim));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ens.spec.grid.steps()));
  detail::put_le<std::uint64_t>(os, ens.paths.size());
  detail::put_le<std::uint64_t>(os, ens.spec.rng.master_seed);
  detail::put_le<std::uint64_t>(os, ens.spec.batch_size);
  for (const auto& p : ens.paths)
    for (double v : p.raw()) detail::put_le<double>(os, v);
  if (!os) throw std::runtime_error("write failed: " + file.string());
}

inline EnsembleHeader describe_ensemble(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw FormatError("cannot open " + file.string());
  return detail::read_header(is);
}

/// Expected shape for load_ensemble; unset fields are not checked.
struct ExpectedShape {
  std::optional<std::size_t> dim;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> paths;
};

inline PathEnsemble load_ensemble(const std::filesystem::path& file, const ExpectedShape& expect = {}) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw FormatError("cannot open " + file.string());
  const EnsembleHeader h = detail::read_header(is);
  auto check = [](const char* what, std::optional<std::size_t> want, std::uint64_t got) {
    if (want && *want != got)
      throw ShapeMismatch(std::string("ensemble ") + what + " mismatch: file has " +
                          std::to_string(got) + ", expected " + std::to_string(*want));
  };
  check("dimension n", expect.dim, h.dim);
  check("steps N", expect.steps, h.steps);
  check("path count M", expect.paths, h.paths);

  const auto payload = static_cast<std::uintmax_t>(h.paths) * h.dim * (h.steps + 1ULL) * 8ULL;
  std::error_code ec;
  const auto size = std::filesystem::file_size(file, ec);
  if (ec || size != detail::kHeaderBytes + payload)
    throw FormatError("ensemble payload size does not match header");

  PathEnsemble ens;
  ens.spec.dim = h.dim;
  ens.spec.grid = TimeGrid(h.steps);
  ens.spec.paths = h.paths;
  ens.spec.batch_size = h.batch_size;
  ens.spec.rng.master_seed = h.seed;
  ens.paths.assign(h.paths, BrownianPath(h.dim, TimeGrid(h.steps)));
  for (auto& p : ens.paths)
    for (double& v : p.raw()) v = detail::get_le<double>(is);
  return ens;
}

}  // namespace wsurf
