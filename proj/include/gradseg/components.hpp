#pragma once

// 3D connected-component labeling of tumor masks, one label at a time.
// BFS flood fill in raster-scan order, so component ids are dense 1..K and
// ordered by each component's minimum linear index -- the labeling is
// deterministic regardless of mask content.

#include <cstdint>
#include <vector>

#include "gradseg/core.hpp"

namespace gradseg::components {

struct ComponentInfo {
  std::size_t voxel_count = 0;
  std::uint8_t source_label = 0;
  BoundingBox3 bbox;  // tight, inclusive
};

struct ComponentSet {
  Shape3 shape{};
  std::vector<std::int32_t> labeled;  // 0 background, 1..count component ids
  int count = 0;
  std::vector<ComponentInfo> info;  // info[id-1]
};

namespace detail {

inline std::vector<std::array<int, 3>> neighbor_offsets(int connectivity) {
  if (connectivity != 6 && connectivity != 18 && connectivity != 26)
    fail(errc::invalid_argument, "connectivity must be 6, 18 or 26");
  std::vector<std::array<int, 3>> offs;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nonzero = (dx != 0) + (dy != 0) + (dz != 0);
        if (nonzero == 0) continue;
        if (connectivity == 6 && nonzero > 1) continue;
        if (connectivity == 18 && nonzero > 2) continue;
        offs.push_back({dx, dy, dz});
      }
  return offs;
}

}  // namespace detail

inline ComponentSet label_components(const LabelMask3& m, std::uint8_t label, int connectivity = 26) {
  if (label != 1 && label != 2)
    fail(errc::invalid_argument, "label must be 1 (GTVp) or 2 (GTVn), got " + std::to_string(label));
  const auto offsets = detail::neighbor_offsets(connectivity);

  ComponentSet cs;
  cs.shape = m.shape;
  cs.labeled.assign(m.size(), 0);

  const std::int64_t nx = static_cast<std::int64_t>(m.shape[0]);
  const std::int64_t ny = static_cast<std::int64_t>(m.shape[1]);
  const std::int64_t nz = static_cast<std::int64_t>(m.shape[2]);

  std::vector<std::size_t> queue;
  for (std::size_t seed = 0; seed < m.data.size(); ++seed) {
    if (m.data[seed] != label || cs.labeled[seed] != 0) continue;

    const std::int32_t id = ++cs.count;
    ComponentInfo info;
    info.source_label = label;
    const std::int64_t si = static_cast<std::int64_t>(seed) % nx;
    const std::int64_t sj = (static_cast<std::int64_t>(seed) / nx) % ny;
    const std::int64_t sk = static_cast<std::int64_t>(seed) / (nx * ny);
    info.bbox.lo = {si, sj, sk};
    info.bbox.hi = {si, sj, sk};
    info.bbox.source_label = label;

    queue.clear();
    queue.push_back(seed);
    cs.labeled[seed] = id;
    while (!queue.empty()) {
      const std::size_t cur = queue.back();
      queue.pop_back();
      ++info.voxel_count;
      const std::int64_t ci = static_cast<std::int64_t>(cur) % nx;
      const std::int64_t cj = (static_cast<std::int64_t>(cur) / nx) % ny;
      const std::int64_t ck = static_cast<std::int64_t>(cur) / (nx * ny);
      for (int a = 0; a < 3; ++a) {
        const std::int64_t c = a == 0 ? ci : (a == 1 ? cj : ck);
        info.bbox.lo[a] = std::min(info.bbox.lo[a], c);
        info.bbox.hi[a] = std::max(info.bbox.hi[a], c);
      }
      for (const auto& off : offsets) {
        const std::int64_t i = ci + off[0], j = cj + off[1], k = ck + off[2];
        if (i < 0 || i >= nx || j < 0 || j >= ny || k < 0 || k >= nz) continue;
        const std::size_t n = static_cast<std::size_t>(i + nx * (j + ny * k));
        if (m.data[n] != label || cs.labeled[n] != 0) continue;
        cs.labeled[n] = id;
        queue.push_back(n);
      }
    }
    cs.info.push_back(info);
  }
  return cs;
}

inline BoundingBox3 tight_bbox(const ComponentSet& cs, int id) {
  if (id < 1 || id > cs.count)
    fail(errc::unknown_component,
         "component id " + std::to_string(id) + " not in 1.." + std::to_string(cs.count));
  return cs.info[static_cast<std::size_t>(id - 1)].bbox;
}

}  // namespace gradseg::components
