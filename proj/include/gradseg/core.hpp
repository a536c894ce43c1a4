#pragma once

// Core types shared by every module: dense 3D grids, voxel boxes, errors,
// and a portable deterministic RNG.
//
// Grid convention used throughout the library:
//   shape = (nx, ny, nz), voxel (i, j, k) maps to linear index
//   i + nx * (j + ny * k)  -- x fastest, matching on-disk NIfTI order.
// Spacing is mm per voxel. The affine is a 3x4 voxel->mm matrix; it is
// carried through I/O but only spacing enters any computation.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gradseg {

// ---------------------------------------------------------------------------
// Errors

enum class errc {
  io,
  wrong_magic,
  unsupported_datatype,
  corrupt_header,
  data_truncated,
  value_overflow,
  geometry_mismatch,
  zero_variance,
  zero_range,
  degenerate_volume,
  unknown_component,
  empty_cohort,
  all_zero_differences,
  degenerate_input,
  too_few_patients,
  duplicate_id,
  empty_dataset,
  invalid_argument,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::io: return "Io";
    case errc::wrong_magic: return "WrongMagic";
    case errc::unsupported_datatype: return "UnsupportedDatatype";
    case errc::corrupt_header: return "CorruptHeader";
    case errc::data_truncated: return "DataTruncated";
    case errc::value_overflow: return "ValueOverflow";
    case errc::geometry_mismatch: return "GeometryMismatch";
    case errc::zero_variance: return "ZeroVariance";
    case errc::zero_range: return "ZeroRange";
    case errc::degenerate_volume: return "DegenerateVolume";
    case errc::unknown_component: return "UnknownComponent";
    case errc::empty_cohort: return "EmptyCohort";
    case errc::all_zero_differences: return "AllZeroDifferences";
    case errc::degenerate_input: return "DegenerateInput";
    case errc::too_few_patients: return "TooFewPatients";
    case errc::duplicate_id: return "DuplicateId";
    case errc::empty_dataset: return "EmptyDataset";
    case errc::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw error(code, msg); }

// ---------------------------------------------------------------------------
// Grids

using Shape3 = std::array<std::size_t, 3>;
using Spacing3 = std::array<double, 3>;
using Affine34 = std::array<std::array<double, 4>, 3>;

inline Affine34 diagonal_affine(const Spacing3& spacing) {
  Affine34 a{};
  a[0][0] = spacing[0];
  a[1][1] = spacing[1];
  a[2][2] = spacing[2];
  return a;
}

namespace detail {
inline std::size_t checked_size(const Shape3& shape) {
  return shape[0] * shape[1] * shape[2];
}
}  // namespace detail

/// Dense 3D scalar grid (images, gradient maps). Values are doubles internally.
struct Volume3 {
  Shape3 shape{};
  Spacing3 spacing{1.0, 1.0, 1.0};
  Affine34 affine{};
  std::vector<double> data;

  std::size_t size() const { return detail::checked_size(shape); }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + shape[0] * (j + shape[1] * k);
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) { return data[index(i, j, k)]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return data[index(i, j, k)]; }
};

/// Integer label grid over the same geometry. 0 background, 1 GTVp, 2 GTVn.
struct LabelMask3 {
  Shape3 shape{};
  Spacing3 spacing{1.0, 1.0, 1.0};
  Affine34 affine{};
  std::vector<std::uint8_t> data;

  std::size_t size() const { return detail::checked_size(shape); }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + shape[0] * (j + shape[1] * k);
  }
  std::uint8_t& at(std::size_t i, std::size_t j, std::size_t k) { return data[index(i, j, k)]; }
  std::uint8_t at(std::size_t i, std::size_t j, std::size_t k) const { return data[index(i, j, k)]; }
};

inline Volume3 make_volume(const Shape3& shape, const Spacing3& spacing = {1.0, 1.0, 1.0}) {
  Volume3 v;
  v.shape = shape;
  v.spacing = spacing;
  v.affine = diagonal_affine(spacing);
  v.data.assign(detail::checked_size(shape), 0.0);
  return v;
}

inline LabelMask3 make_mask(const Shape3& shape, const Spacing3& spacing = {1.0, 1.0, 1.0}) {
  LabelMask3 m;
  m.shape = shape;
  m.spacing = spacing;
  m.affine = diagonal_affine(spacing);
  m.data.assign(detail::checked_size(shape), 0);
  return m;
}

template <class A, class B>
inline bool same_geometry(const A& a, const B& b) {
  return a.shape == b.shape && a.spacing == b.spacing;
}

template <class A, class B>
inline void require_same_geometry(const A& a, const B& b, const std::string& what) {
  if (!same_geometry(a, b)) fail(errc::geometry_mismatch, what + ": shape/spacing differ");
}

/// Closed integer voxel interval per axis (inclusive on both ends).
struct BoundingBox3 {
  std::array<std::int64_t, 3> lo{};
  std::array<std::int64_t, 3> hi{};
  std::uint8_t source_label = 0;

  bool contains(const BoundingBox3& inner) const {
    for (int a = 0; a < 3; ++a)
      if (inner.lo[a] < lo[a] || inner.hi[a] > hi[a]) return false;
    return true;
  }
  bool contains_voxel(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return i >= lo[0] && i <= hi[0] && j >= lo[1] && j <= hi[1] && k >= lo[2] && k <= hi[2];
  }
  std::int64_t extent(int axis) const { return hi[axis] - lo[axis] + 1; }
  bool in_bounds(const Shape3& shape) const {
    for (int a = 0; a < 3; ++a)
      if (lo[a] < 0 || hi[a] < lo[a] || hi[a] >= static_cast<std::int64_t>(shape[a])) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// mt19937_64 core with hand-rolled bounded/uniform/normal draws. The standard
// distributions are implementation-defined, which would break byte-identical
// artifacts across toolchains; these draws are pinned.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Seed for an independent stream keyed by (master seed, textual key).
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view key) {
  std::uint64_t x = master ^ fnv1a64(key);
  splitmix64(x);
  return splitmix64(x);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t u64() { return eng_(); }

  /// Unbiased draw in [0, n) by rejection.
  std::uint64_t bounded(std::uint64_t n) {
    if (n == 0) fail(errc::invalid_argument, "bounded(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (n - 1);
    std::uint64_t x, r;
    do {
      x = u64();
      r = x % n;
    } while (x - r > limit);
    return r;
  }

  /// Uniform integer in [lo, hi], both inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) fail(errc::invalid_argument, "uniform_int: hi < lo");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(bounded(span));
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; spare value cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gradseg
