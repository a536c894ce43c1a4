#pragma once

// Gaussian gradient-magnitude maps restricted to prior-derived ROI boxes, and
// assembly of the two-channel (image + gradient map) sample.
//
// Kernel contract (sigma in voxel units, truncation at 4*sigma):
//   - derivative weights are antisymmetric and applied in paired form
//     sum_i d[i] * (v[x-i] - v[x+i]), so a constant input yields exact zeros;
//   - weights are scaled so the response to a unit ramp is 1;
//   - smoothing weights are normalized to sum 1;
//   - boundaries reflect (half-sample symmetric).
//
// The two smoothing passes orthogonal to each derivative are evaluated as one
// joint 2D pass with a transpose-symmetric summation order, and the three
// squared responses are sorted before summing. Permuting the axes of the
// input therefore permutes the output bit-for-bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gradseg/core.hpp"
#include "gradseg/roi.hpp"
#include "gradseg/volume.hpp"

namespace gradseg::gradmap {

struct GradMapConfig {
  double sigma = 1.0;       // voxels
  double clip_scale = 1.0;  // gradient values divided by this before clipping to [0,1]
};

namespace detail {

inline std::size_t reflect_index(std::int64_t i, std::int64_t n) {
  while (i < 0 || i >= n) {
    if (i < 0)
      i = -i - 1;
    else
      i = 2 * n - 1 - i;
  }
  return static_cast<std::size_t>(i);
}

struct Kernels {
  int radius = 0;
  std::vector<double> smooth;      // offsets -r..r, sums to 1
  std::vector<double> deriv_pair;  // d[i] for i = 1..r, used in paired form
};

inline Kernels make_kernels(double sigma) {
  if (!(sigma > 0.0)) fail(errc::invalid_argument, "sigma must be positive");
  Kernels k;
  k.radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

  k.smooth.resize(2 * static_cast<std::size_t>(k.radius) + 1);
  double sum = 0.0;
  for (int o = -k.radius; o <= k.radius; ++o) sum += std::exp(-static_cast<double>(o) * o * inv2s2);
  for (int o = -k.radius; o <= k.radius; ++o)
    k.smooth[static_cast<std::size_t>(o + k.radius)] =
        std::exp(-static_cast<double>(o) * o * inv2s2) / sum;

  // Ramp response of the paired form sum_i d[i]*((x-i)-(x+i)) = sum_i d[i]*(-2i).
  k.deriv_pair.resize(static_cast<std::size_t>(k.radius));
  double ramp = 0.0;
  for (int i = 1; i <= k.radius; ++i)
    ramp += 2.0 * static_cast<double>(i) * i * std::exp(-static_cast<double>(i) * i * inv2s2);
  for (int i = 1; i <= k.radius; ++i)
    k.deriv_pair[static_cast<std::size_t>(i - 1)] =
        -(static_cast<double>(i) * std::exp(-static_cast<double>(i) * i * inv2s2)) / ramp;
  return k;
}

inline std::array<std::size_t, 3> strides_of(const Shape3& shape) {
  return {1, shape[0], shape[0] * shape[1]};
}

inline std::vector<double> derivative_pass(const std::vector<double>& src, const Shape3& shape,
                                           int axis, const Kernels& kk) {
  const auto strides = strides_of(shape);
  const std::int64_t n = static_cast<std::int64_t>(shape[static_cast<std::size_t>(axis)]);
  const std::size_t stride = strides[static_cast<std::size_t>(axis)];
  const int oa = axis == 0 ? 1 : 0;
  const int ob = axis == 2 ? 1 : 2;

  std::vector<double> out(src.size());
  for (std::size_t b = 0; b < shape[static_cast<std::size_t>(ob)]; ++b)
    for (std::size_t a = 0; a < shape[static_cast<std::size_t>(oa)]; ++a) {
      const std::size_t base = a * strides[static_cast<std::size_t>(oa)] + b * strides[static_cast<std::size_t>(ob)];
      for (std::int64_t x = 0; x < n; ++x) {
        double acc = 0.0;
        for (int i = 1; i <= kk.radius; ++i) {
          const double vm = src[base + reflect_index(x - i, n) * stride];
          const double vp = src[base + reflect_index(x + i, n) * stride];
          acc += kk.deriv_pair[static_cast<std::size_t>(i - 1)] * (vm - vp);
        }
        out[base + static_cast<std::size_t>(x) * stride] = acc;
      }
    }
  return out;
}

// Joint smoothing over two axes. Terms are grouped as the diagonal (i == j)
// followed by symmetrized pairs s[i]*s[j]*(u(..i,..j) + u(..j,..i)); swapping
// the two axes reproduces the identical floating-point sum.
inline std::vector<double> smooth_pair_pass(const std::vector<double>& src, const Shape3& shape,
                                            int axis_b, int axis_c, const Kernels& kk) {
  const auto strides = strides_of(shape);
  const std::int64_t nb = static_cast<std::int64_t>(shape[static_cast<std::size_t>(axis_b)]);
  const std::int64_t nc = static_cast<std::int64_t>(shape[static_cast<std::size_t>(axis_c)]);
  const std::size_t sb = strides[static_cast<std::size_t>(axis_b)];
  const std::size_t sc = strides[static_cast<std::size_t>(axis_c)];
  int axis_a = 0;
  while (axis_a == axis_b || axis_a == axis_c) ++axis_a;
  const std::size_t na = shape[static_cast<std::size_t>(axis_a)];
  const std::size_t sa = strides[static_cast<std::size_t>(axis_a)];
  const int r = kk.radius;

  std::vector<double> out(src.size());
  std::vector<std::size_t> rb(static_cast<std::size_t>(2 * r + 1));
  std::vector<std::size_t> rc(static_cast<std::size_t>(2 * r + 1));

  for (std::int64_t c = 0; c < nc; ++c) {
    for (int o = -r; o <= r; ++o) rc[static_cast<std::size_t>(o + r)] = reflect_index(c - o, nc) * sc;
    for (std::int64_t b = 0; b < nb; ++b) {
      for (int o = -r; o <= r; ++o) rb[static_cast<std::size_t>(o + r)] = reflect_index(b - o, nb) * sb;
      for (std::size_t a = 0; a < na; ++a) {
        const std::size_t base = a * sa;
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const double w = kk.smooth[static_cast<std::size_t>(i + r)];
          acc += w * w * src[base + rb[static_cast<std::size_t>(i + r)] + rc[static_cast<std::size_t>(i + r)]];
        }
        for (int i = -r; i <= r; ++i)
          for (int j = i + 1; j <= r; ++j) {
            const double w = kk.smooth[static_cast<std::size_t>(i + r)] * kk.smooth[static_cast<std::size_t>(j + r)];
            acc += w * (src[base + rb[static_cast<std::size_t>(i + r)] + rc[static_cast<std::size_t>(j + r)]] +
                        src[base + rb[static_cast<std::size_t>(j + r)] + rc[static_cast<std::size_t>(i + r)]]);
          }
        out[base + static_cast<std::size_t>(b) * sb + static_cast<std::size_t>(c) * sc] = acc;
      }
    }
  }
  return out;
}

inline double sorted_square_sum(double a, double b, double c) {
  double s0 = a * a, s1 = b * b, s2 = c * c;
  if (s0 > s1) std::swap(s0, s1);
  if (s1 > s2) std::swap(s1, s2);
  if (s0 > s1) std::swap(s0, s1);
  return (s0 + s1) + s2;
}

}  // namespace detail

/// Gaussian gradient magnitude, derivatives in voxel units (spacing ignored).
inline Volume3 gradient_magnitude(const Volume3& v, double sigma) {
  const auto kk = detail::make_kernels(sigma);
  std::array<std::vector<double>, 3> g;
  for (int axis = 0; axis < 3; ++axis) {
    g[static_cast<std::size_t>(axis)] = detail::derivative_pass(v.data, v.shape, axis, kk);
    const int b = axis == 0 ? 1 : 0;
    const int c = axis == 2 ? 1 : 2;
    g[static_cast<std::size_t>(axis)] =
        detail::smooth_pair_pass(g[static_cast<std::size_t>(axis)], v.shape, b, c, kk);
  }
  Volume3 out = v;
  for (std::size_t n = 0; n < out.data.size(); ++n)
    out.data[n] = std::sqrt(detail::sorted_square_sum(g[0][n], g[1][n], g[2][n]));
  return out;
}

namespace detail {

inline Volume3 extract_box(const Volume3& v, const BoundingBox3& b) {
  Volume3 sub;
  sub.shape = {static_cast<std::size_t>(b.extent(0)), static_cast<std::size_t>(b.extent(1)),
               static_cast<std::size_t>(b.extent(2))};
  sub.spacing = v.spacing;
  sub.affine = v.affine;
  sub.data.resize(sub.size());
  std::size_t n = 0;
  for (std::int64_t k = b.lo[2]; k <= b.hi[2]; ++k)
    for (std::int64_t j = b.lo[1]; j <= b.hi[1]; ++j)
      for (std::int64_t i = b.lo[0]; i <= b.hi[0]; ++i, ++n)
        sub.data[n] = v.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                           static_cast<std::size_t>(k));
  return sub;
}

}  // namespace detail

/// Restricted gradient map: min-max normalize the image, compute the gradient
/// magnitude over each box (padded by the kernel radius, then cropped back),
/// divide by clip_scale, clip to [0,1], and max-merge into an all-zero volume.
/// Voxels outside the box union stay exactly zero.
inline Volume3 build_gradient_map(const Volume3& mid_img, const roi::RoiSet& rois,
                                  const GradMapConfig& cfg = {}) {
  if (!(cfg.clip_scale > 0.0)) fail(errc::invalid_argument, "clip_scale must be positive");
  Volume3 out = mid_img;
  std::fill(out.data.begin(), out.data.end(), 0.0);
  if (rois.boxes.empty()) return out;  // empty prior: all-zero map, warning on the RoiSet
  if (rois.shape != mid_img.shape)
    fail(errc::geometry_mismatch, "RoiSet grid does not match the image");

  // A constant image has no intensity range and no edges either way.
  const auto [mn, mx] = std::minmax_element(mid_img.data.begin(), mid_img.data.end());
  if (*mn == *mx) return out;
  const Volume3 normalized = volume::minmax_normalize(mid_img);

  const int pad = detail::make_kernels(cfg.sigma).radius;
  for (const auto& box : rois.boxes) {
    if (!box.in_bounds(mid_img.shape)) fail(errc::invalid_argument, "ROI box out of bounds");
    BoundingBox3 padded = box;
    for (int a = 0; a < 3; ++a) {
      padded.lo[a] = std::max<std::int64_t>(0, box.lo[a] - pad);
      padded.hi[a] = std::min<std::int64_t>(static_cast<std::int64_t>(mid_img.shape[a]) - 1,
                                            box.hi[a] + pad);
    }
    const Volume3 sub = detail::extract_box(normalized, padded);
    const Volume3 grad = gradient_magnitude(sub, cfg.sigma);
    for (std::int64_t k = box.lo[2]; k <= box.hi[2]; ++k)
      for (std::int64_t j = box.lo[1]; j <= box.hi[1]; ++j)
        for (std::int64_t i = box.lo[0]; i <= box.hi[0]; ++i) {
          const double raw = grad.at(static_cast<std::size_t>(i - padded.lo[0]),
                                     static_cast<std::size_t>(j - padded.lo[1]),
                                     static_cast<std::size_t>(k - padded.lo[2]));
          const double val = std::clamp(raw / cfg.clip_scale, 0.0, 1.0);
          auto& cell = out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                              static_cast<std::size_t>(k));
          cell = std::max(cell, val);
        }
  }
  return out;
}

enum class Phase { preRT, midRT };

inline const char* phase_name(Phase p) { return p == Phase::preRT ? "preRT" : "midRT"; }

/// Network input pair for one case and phase: z-scored image plus the
/// prior-restricted gradient map of the same image.
struct TwoChannelSample {
  std::string case_id;
  Phase phase = Phase::midRT;
  Volume3 channel0;  // z-scored image
  Volume3 channel1;  // gradient map, [0,1], zero outside the ROI union
  roi::RoiSet rois;
  double norm_mean = 0.0;
  double norm_std = 1.0;
};

inline TwoChannelSample assemble_sample(const Volume3& img, const LabelMask3& prior,
                                        const std::string& case_id, Phase phase, std::uint64_t seed,
                                        roi::Margins margins = {}, const GradMapConfig& cfg = {}) {
  require_same_geometry(img, prior, "assemble_sample");
  TwoChannelSample s;
  s.case_id = case_id;
  s.phase = phase;
  s.rois = roi::boxes_from_prior(prior, seed, margins);
  auto z = volume::zscore_normalize(img);
  s.channel0 = std::move(z.volume);
  s.norm_mean = z.mean;
  s.norm_std = z.stddev;
  s.channel1 = build_gradient_map(img, s.rois, cfg);
  return s;
}

}  // namespace gradseg::gradmap
