#pragma once

// Geometry-aware volume arithmetic: resampling between voxel spacings,
// intensity normalization, and physical tumor volume in cc.
//
// Resampling maps output-voxel centers into source voxel coordinates with the
// two grids sharing the center of voxel (0,0,0); out-of-range sample positions
// clamp to the boundary. Order 3 uses the Catmull-Rom kernel, which passes
// through the samples, so a no-op spacing change reproduces the input.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "gradseg/core.hpp"

namespace gradseg::volume {

struct ResampleSpec {
  Spacing3 target_spacing{1.0, 1.0, 1.0};
  int interpolation_order = 3;  // 0 nearest, 1 trilinear, 3 tricubic
};

namespace detail {

inline void validate_spec(const ResampleSpec& spec) {
  for (int a = 0; a < 3; ++a)
    if (!(spec.target_spacing[a] > 0.0))
      fail(errc::invalid_argument, "target spacing must be positive");
  if (spec.interpolation_order != 0 && spec.interpolation_order != 1 && spec.interpolation_order != 3)
    fail(errc::invalid_argument,
         "interpolation order must be 0, 1 or 3 (got " + std::to_string(spec.interpolation_order) + ")");
}

inline Shape3 output_shape(const Shape3& in, const Spacing3& src, const Spacing3& dst) {
  Shape3 out{};
  for (int a = 0; a < 3; ++a) {
    if (in[a] == 0) fail(errc::degenerate_volume, "extent 0 along axis " + std::to_string(a));
    const double q = static_cast<double>(in[a]) * src[a] / dst[a];
    const double r = std::nearbyint(q);
    // ceil, with protection against 123*1.2/1.2 = 122.999... style noise
    out[a] = static_cast<std::size_t>(std::abs(q - r) < 1e-9 ? r : std::ceil(q));
    if (out[a] == 0) out[a] = 1;
  }
  return out;
}

inline std::size_t clampi(std::int64_t i, std::size_t n) {
  if (i < 0) return 0;
  if (i >= static_cast<std::int64_t>(n)) return n - 1;
  return static_cast<std::size_t>(i);
}

// Catmull-Rom weights for samples at offsets -1, 0, 1, 2 around the cell.
inline std::array<double, 4> catmull_rom_weights(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {-0.5 * t + t2 - 0.5 * t3,
          1.0 - 2.5 * t2 + 1.5 * t3,
          0.5 * t + 2.0 * t2 - 1.5 * t3,
          -0.5 * t2 + 0.5 * t3};
}

template <class Fetch>
inline double sample_at(const Shape3& shape, double x, double y, double z, int order, Fetch at) {
  const double pos[3] = {x, y, z};
  double clamped[3];
  for (int a = 0; a < 3; ++a)
    clamped[a] = std::clamp(pos[a], 0.0, static_cast<double>(shape[a] - 1));

  if (order == 0) {
    std::size_t idx[3];
    for (int a = 0; a < 3; ++a)
      idx[a] = clampi(static_cast<std::int64_t>(std::floor(clamped[a] + 0.5)), shape[a]);
    return at(idx[0], idx[1], idx[2]);
  }

  std::int64_t base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor(clamped[a]);
    base[a] = static_cast<std::int64_t>(f);
    frac[a] = clamped[a] - f;
  }

  if (order == 1) {
    double acc = 0.0;
    for (int dk = 0; dk < 2; ++dk)
      for (int dj = 0; dj < 2; ++dj)
        for (int di = 0; di < 2; ++di) {
          const double w = (di ? frac[0] : 1.0 - frac[0]) * (dj ? frac[1] : 1.0 - frac[1]) *
                           (dk ? frac[2] : 1.0 - frac[2]);
          if (w == 0.0) continue;
          acc += w * at(clampi(base[0] + di, shape[0]), clampi(base[1] + dj, shape[1]),
                        clampi(base[2] + dk, shape[2]));
        }
    return acc;
  }

  const auto wx = catmull_rom_weights(frac[0]);
  const auto wy = catmull_rom_weights(frac[1]);
  const auto wz = catmull_rom_weights(frac[2]);
  double acc = 0.0;
  for (int dk = 0; dk < 4; ++dk) {
    const std::size_t k = clampi(base[2] - 1 + dk, shape[2]);
    for (int dj = 0; dj < 4; ++dj) {
      const std::size_t j = clampi(base[1] - 1 + dj, shape[1]);
      const double wyz = wy[dj] * wz[dk];
      for (int di = 0; di < 4; ++di) {
        const std::size_t i = clampi(base[0] - 1 + di, shape[0]);
        acc += wx[di] * wyz * at(i, j, k);
      }
    }
  }
  return acc;
}

inline Affine34 scaled_affine(const Affine34& affine, const Spacing3& src, const Spacing3& dst) {
  Affine34 out = affine;
  for (int c = 0; c < 3; ++c) {
    const double s = dst[c] / src[c];
    for (int r = 0; r < 3; ++r) out[r][c] *= s;
  }
  return out;
}

}  // namespace detail

inline Volume3 resample(const Volume3& v, const ResampleSpec& spec) {
  detail::validate_spec(spec);
  const Shape3 out_shape = detail::output_shape(v.shape, v.spacing, spec.target_spacing);

  Volume3 out;
  out.shape = out_shape;
  out.spacing = spec.target_spacing;
  out.affine = detail::scaled_affine(v.affine, v.spacing, spec.target_spacing);
  out.data.resize(out.size());

  double ratio[3];
  for (int a = 0; a < 3; ++a) ratio[a] = spec.target_spacing[a] / v.spacing[a];

  const auto at = [&](std::size_t i, std::size_t j, std::size_t k) { return v.at(i, j, k); };
  std::size_t n = 0;
  for (std::size_t k = 0; k < out_shape[2]; ++k)
    for (std::size_t j = 0; j < out_shape[1]; ++j)
      for (std::size_t i = 0; i < out_shape[0]; ++i, ++n)
        out.data[n] = detail::sample_at(v.shape, i * ratio[0], j * ratio[1], k * ratio[2],
                                        spec.interpolation_order, at);
  return out;
}

/// First-order resampling of a label mask: each foreground label is resampled
/// as its own binary indicator, and a voxel takes the label whose indicator is
/// maximal and > 0.5 (ties toward the lower label id; all <= 0.5 -> background).
inline LabelMask3 resample_mask(const LabelMask3& m, const ResampleSpec& spec) {
  detail::validate_spec(spec);
  const Shape3 out_shape = detail::output_shape(m.shape, m.spacing, spec.target_spacing);

  LabelMask3 out;
  out.shape = out_shape;
  out.spacing = spec.target_spacing;
  out.affine = detail::scaled_affine(m.affine, m.spacing, spec.target_spacing);
  out.data.assign(out.size(), 0);

  std::vector<std::uint8_t> labels;
  for (std::uint8_t v : m.data)
    if (v != 0 && std::find(labels.begin(), labels.end(), v) == labels.end()) labels.push_back(v);
  std::sort(labels.begin(), labels.end());
  if (labels.empty()) return out;

  double ratio[3];
  for (int a = 0; a < 3; ++a) ratio[a] = spec.target_spacing[a] / m.spacing[a];

  std::size_t n = 0;
  for (std::size_t k = 0; k < out_shape[2]; ++k)
    for (std::size_t j = 0; j < out_shape[1]; ++j)
      for (std::size_t i = 0; i < out_shape[0]; ++i, ++n) {
        double best = 0.5;  // indicators at or below 0.5 stay background
        std::uint8_t chosen = 0;
        for (std::uint8_t label : labels) {
          const auto indicator = [&](std::size_t a, std::size_t b, std::size_t c) {
            return m.at(a, b, c) == label ? 1.0 : 0.0;
          };
          const double w =
              detail::sample_at(m.shape, i * ratio[0], j * ratio[1], k * ratio[2], 1, indicator);
          if (w > best) {  // strict: equal maxima keep the lower label id
            best = w;
            chosen = label;
          }
        }
        out.data[n] = chosen;
      }
  return out;
}

struct ZscoreResult {
  Volume3 volume;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

/// Standardize to mean 0 / population std 1 over all voxels.
inline ZscoreResult zscore_normalize(const Volume3& v) {
  if (v.size() < 2) fail(errc::degenerate_volume, "z-score needs at least 2 voxels");
  double mean = 0.0;
  for (double x : v.data) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v.data) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  const double sd = std::sqrt(var);
  if (sd == 0.0) fail(errc::zero_variance, "constant volume");

  ZscoreResult r;
  r.mean = mean;
  r.stddev = sd;
  r.volume = v;
  for (double& x : r.volume.data) x = (x - mean) / sd;
  return r;
}

/// Rescale to [0, 1] over the volume's full intensity range.
inline Volume3 minmax_normalize(const Volume3& v) {
  const auto [mn, mx] = std::minmax_element(v.data.begin(), v.data.end());
  if (v.data.empty() || *mn == *mx) fail(errc::zero_range, "volume has no intensity range");
  Volume3 out = v;
  const double lo = *mn, span = *mx - *mn;
  for (double& x : out.data) x = (x - lo) / span;
  return out;
}

/// Physical volume of one label in cubic centimeters.
inline double volume_cc(const LabelMask3& m, std::uint8_t label) {
  if (label != 1 && label != 2)
    fail(errc::invalid_argument, "label must be 1 (GTVp) or 2 (GTVn), got " + std::to_string(label));
  std::size_t count = 0;
  for (std::uint8_t v : m.data) count += (v == label);
  const double voxel_mm3 = m.spacing[0] * m.spacing[1] * m.spacing[2];
  return static_cast<double>(count) * voxel_mm3 / 1000.0;
}

}  // namespace gradseg::volume
