#pragma once

// Prior-derived regions of interest: tight component boxes expanded outward by
// random per-face margins and clamped to the grid.
//
// Each of the six faces moves outward by an independent uniform integer in
// [lo_margin, hi_margin], so the perturbed box always contains the tight box.
// Box order is deterministic (source label ascending, then component id), and
// boxes_from_prior is a pure function of (prior, seed, margins).

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradseg/components.hpp"
#include "gradseg/core.hpp"

namespace gradseg::roi {

struct Margins {
  int lo = 2;
  int hi = 6;
};

struct RoiSet {
  std::vector<BoundingBox3> boxes;
  Shape3 shape{};
  std::uint64_t seed = 0;
  bool empty_prior_warning = false;
};

inline BoundingBox3 perturb_box(const BoundingBox3& b, const Shape3& shape, Rng& rng,
                                Margins margins = {}) {
  if (margins.lo < 0 || margins.hi < margins.lo)
    fail(errc::invalid_argument, "margins must satisfy 0 <= lo <= hi");
  BoundingBox3 out = b;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t grow_lo = rng.uniform_int(margins.lo, margins.hi);
    const std::int64_t grow_hi = rng.uniform_int(margins.lo, margins.hi);
    out.lo[a] = std::max<std::int64_t>(0, b.lo[a] - grow_lo);
    out.hi[a] = std::min<std::int64_t>(static_cast<std::int64_t>(shape[a]) - 1, b.hi[a] + grow_hi);
  }
  return out;
}

inline RoiSet boxes_from_prior(const LabelMask3& prior, std::uint64_t seed, Margins margins = {},
                               int connectivity = 26) {
  RoiSet set;
  set.shape = prior.shape;
  set.seed = seed;
  Rng rng(seed);
  for (std::uint8_t label : {std::uint8_t{1}, std::uint8_t{2}}) {
    const auto cs = components::label_components(prior, label, connectivity);
    for (int id = 1; id <= cs.count; ++id) {
      const auto tight = components::tight_bbox(cs, id);
      set.boxes.push_back(perturb_box(tight, prior.shape, rng, margins));
    }
  }
  set.empty_prior_warning = set.boxes.empty();
  return set;
}

/// Binary mask of the union of all boxes.
inline LabelMask3 rasterize(const RoiSet& rois, const Spacing3& spacing = {1.0, 1.0, 1.0}) {
  LabelMask3 out = make_mask(rois.shape, spacing);
  for (const auto& b : rois.boxes) {
    if (!b.in_bounds(rois.shape)) fail(errc::invalid_argument, "box out of grid bounds");
    for (std::int64_t k = b.lo[2]; k <= b.hi[2]; ++k)
      for (std::int64_t j = b.lo[1]; j <= b.hi[1]; ++j)
        for (std::int64_t i = b.lo[0]; i <= b.hi[0]; ++i)
          out.data[static_cast<std::size_t>(i) +
                   rois.shape[0] * (static_cast<std::size_t>(j) + rois.shape[1] * static_cast<std::size_t>(k))] = 1;
  }
  return out;
}

inline nlohmann::ordered_json to_json(const RoiSet& set) {
  nlohmann::ordered_json j;
  j["seed"] = set.seed;
  j["shape"] = {set.shape[0], set.shape[1], set.shape[2]};
  j["empty_prior_warning"] = set.empty_prior_warning;
  j["boxes"] = nlohmann::ordered_json::array();
  for (const auto& b : set.boxes) {
    nlohmann::ordered_json jb;
    jb["lo"] = {b.lo[0], b.lo[1], b.lo[2]};
    jb["hi"] = {b.hi[0], b.hi[1], b.hi[2]};
    jb["label"] = b.source_label;
    j["boxes"].push_back(jb);
  }
  return j;
}

inline RoiSet from_json(const nlohmann::json& j) {
  RoiSet set;
  set.seed = j.at("seed").get<std::uint64_t>();
  const auto& shp = j.at("shape");
  for (int a = 0; a < 3; ++a) set.shape[a] = shp.at(a).get<std::size_t>();
  set.empty_prior_warning = j.value("empty_prior_warning", false);
  for (const auto& jb : j.at("boxes")) {
    BoundingBox3 b;
    for (int a = 0; a < 3; ++a) {
      b.lo[a] = jb.at("lo").at(a).get<std::int64_t>();
      b.hi[a] = jb.at("hi").at(a).get<std::int64_t>();
    }
    b.source_label = jb.at("label").get<std::uint8_t>();
    set.boxes.push_back(b);
  }
  return set;
}

}  // namespace gradseg::roi
