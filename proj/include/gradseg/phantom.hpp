#pragma once

// Synthetic longitudinal cohorts with exact ground truth: ellipsoidal tumors
// on a noisy background, a mid-RT twin with shrunken tumors, and a "DR pre-RT"
// prior produced by shifting each tumor by an integer-voxel registration
// jitter. Every file the dataset scanner expects is written, plus per-patient
// manifests with analytic volumes and a cohort-level volumes.json.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradseg/cohort.hpp"
#include "gradseg/core.hpp"
#include "gradseg/nifti.hpp"
#include "gradseg/parallel.hpp"
#include "gradseg/volume.hpp"

namespace gradseg::phantom {

struct TumorSpec {
  std::uint8_t label = 1;
  std::array<double, 3> center_mm{};
  std::array<double, 3> semi_axes_mm{};  // pre-RT extent
  double shrinkage = 1.0;                // mid semi-axes = shrinkage * pre
  double contrast = 60.0;                // intensity above background
  std::array<int, 3> jitter_vox{};       // registration error of the DR prior
};

struct PhantomSpec {
  Shape3 shape{64, 64, 64};
  Spacing3 spacing{1.0, 1.0, 1.0};
  double background = 100.0;
  double noise_sigma = 2.0;
  std::vector<TumorSpec> tumors;
};

namespace detail {

inline double ellipsoid_cc(const std::array<double, 3>& semi) {
  return 4.0 / 3.0 * 3.14159265358979323846 * semi[0] * semi[1] * semi[2] / 1000.0;
}

enum class Variant { pre, mid, prior };

inline std::array<double, 3> variant_center(const TumorSpec& t, const Spacing3& spacing, Variant v) {
  auto c = t.center_mm;
  if (v == Variant::prior)
    for (int a = 0; a < 3; ++a) c[a] += t.jitter_vox[a] * spacing[a];
  return c;
}

inline std::array<double, 3> variant_axes(const TumorSpec& t, Variant v) {
  auto ax = t.semi_axes_mm;
  if (v == Variant::mid)
    for (int a = 0; a < 3; ++a) ax[a] *= t.shrinkage;
  return ax;
}

inline bool inside(const std::array<double, 3>& p, const std::array<double, 3>& c,
                   const std::array<double, 3>& ax) {
  double q = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (!(ax[a] > 0.0)) return false;  // collapsed tumor
    const double d = (p[a] - c[a]) / ax[a];
    q += d * d;
  }
  return q <= 1.0;
}

inline LabelMask3 render_mask(const PhantomSpec& spec, Variant v) {
  LabelMask3 m = make_mask(spec.shape, spec.spacing);
  for (const auto& t : spec.tumors) {
    const auto c = variant_center(t, spec.spacing, v);
    const auto ax = variant_axes(t, v);
    for (std::size_t k = 0; k < spec.shape[2]; ++k)
      for (std::size_t j = 0; j < spec.shape[1]; ++j)
        for (std::size_t i = 0; i < spec.shape[0]; ++i) {
          const std::array<double, 3> p = {i * spec.spacing[0], j * spec.spacing[1],
                                           k * spec.spacing[2]};
          if (inside(p, c, ax)) m.at(i, j, k) = t.label;
        }
  }
  return m;
}

inline Volume3 render_image(const PhantomSpec& spec, Variant v, std::uint64_t noise_seed) {
  Volume3 img = make_volume(spec.shape, spec.spacing);
  for (double& x : img.data) x = spec.background;
  for (const auto& t : spec.tumors) {
    const auto c = variant_center(t, spec.spacing, v);
    const auto ax = variant_axes(t, v);
    for (std::size_t k = 0; k < spec.shape[2]; ++k)
      for (std::size_t j = 0; j < spec.shape[1]; ++j)
        for (std::size_t i = 0; i < spec.shape[0]; ++i) {
          const std::array<double, 3> p = {i * spec.spacing[0], j * spec.spacing[1],
                                           k * spec.spacing[2]};
          if (inside(p, c, ax)) img.at(i, j, k) += t.contrast;
        }
  }
  Rng rng(noise_seed);
  for (double& x : img.data) x += spec.noise_sigma * rng.normal();
  return img;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(errc::io, "cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace detail

/// Write one patient (six NIfTI files plus manifest.json) under `dir`.
inline cohort::PatientCase generate_case(const PhantomSpec& spec, const std::string& id,
                                         const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);

  const auto pre_img = detail::render_image(spec, detail::Variant::pre, derive_seed(seed, "noise/pre"));
  const auto mid_img = detail::render_image(spec, detail::Variant::mid, derive_seed(seed, "noise/mid"));
  const auto dr_img = detail::render_image(spec, detail::Variant::prior, derive_seed(seed, "noise/dr"));
  const auto pre_gt = detail::render_mask(spec, detail::Variant::pre);
  const auto mid_gt = detail::render_mask(spec, detail::Variant::mid);
  const auto dr_gt = detail::render_mask(spec, detail::Variant::prior);

  cohort::PatientCase c;
  c.id = id;
  c.mid_img = dir / "mid_img.nii.gz";
  c.mid_gt = dir / "mid_gt.nii.gz";
  c.pre_img_dr = dir / "pre_img_dr.nii.gz";
  c.pre_gt_dr = dir / "pre_gt_dr.nii.gz";
  c.pre_img = dir / "pre_img.nii.gz";
  c.pre_gt = dir / "pre_gt.nii.gz";

  nifti::write_volume(pre_img, c.pre_img);
  nifti::write_volume(mid_img, c.mid_img);
  nifti::write_volume(dr_img, c.pre_img_dr);
  nifti::write_mask(pre_gt, c.pre_gt);
  nifti::write_mask(mid_gt, c.mid_gt);
  nifti::write_mask(dr_gt, c.pre_gt_dr);

  nlohmann::ordered_json manifest;
  manifest["id"] = id;
  manifest["seed"] = seed;
  manifest["shape"] = {spec.shape[0], spec.shape[1], spec.shape[2]};
  manifest["spacing_mm"] = {spec.spacing[0], spec.spacing[1], spec.spacing[2]};
  manifest["background"] = spec.background;
  manifest["noise_sigma"] = spec.noise_sigma;
  manifest["tumors"] = nlohmann::ordered_json::array();
  for (const auto& t : spec.tumors) {
    nlohmann::ordered_json jt;
    jt["label"] = t.label;
    jt["center_mm"] = {t.center_mm[0], t.center_mm[1], t.center_mm[2]};
    jt["semi_axes_pre_mm"] = {t.semi_axes_mm[0], t.semi_axes_mm[1], t.semi_axes_mm[2]};
    jt["shrinkage"] = t.shrinkage;
    jt["contrast"] = t.contrast;
    jt["jitter_vox"] = {t.jitter_vox[0], t.jitter_vox[1], t.jitter_vox[2]};
    jt["pre_cc_analytic"] = detail::ellipsoid_cc(t.semi_axes_mm);
    jt["mid_cc_analytic"] = detail::ellipsoid_cc(detail::variant_axes(t, detail::Variant::mid));
    manifest["tumors"].push_back(jt);
  }
  for (std::uint8_t label : {std::uint8_t{1}, std::uint8_t{2}}) {
    const std::string key = label == 1 ? "GTVp" : "GTVn";
    manifest["volumes_cc"][key] = {{"pre", volume::volume_cc(pre_gt, label)},
                                   {"mid", volume::volume_cc(mid_gt, label)},
                                   {"prior", volume::volume_cc(dr_gt, label)}};
  }
  detail::write_json_file(dir / "manifest.json", manifest);
  return c;
}

// ---------------------------------------------------------------------------
// Cohort generation

struct CohortConfig {
  int n_patients = 10;
  std::uint64_t seed = 0;
  Shape3 shape{64, 64, 64};
  Spacing3 spacing{1.0, 1.0, 1.0};
  double background = 100.0;
  double noise_sigma = 2.0;
  double contrast = 60.0;
  double gtvp_probability = 1.0;              // chance a patient has a GTVp at all
  std::array<double, 2> gtvp_semi_axis_mm{9.0, 12.0};
  std::array<int, 2> gtvn_count{1, 2};
  std::array<double, 2> gtvn_semi_axis_mm{4.0, 7.0};
  std::array<double, 2> shrinkage{0.3, 1.0};
  int max_jitter_vox = 2;
};

namespace detail {

inline std::array<double, 3> place_center(const Shape3& shape, const Spacing3& spacing,
                                          const std::array<double, 3>& semi, Rng& rng,
                                          const std::vector<TumorSpec>& placed) {
  const double pad_mm = 2.0;
  std::array<double, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = semi[a] + pad_mm;
    hi[a] = (static_cast<double>(shape[a]) - 1.0) * spacing[a] - semi[a] - pad_mm;
    if (hi[a] <= lo[a])
      fail(errc::invalid_argument, "tumor semi-axes too large for the phantom grid");
  }
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::array<double, 3> c;
    for (int a = 0; a < 3; ++a) c[a] = rng.uniform(lo[a], hi[a]);
    bool clear = true;
    for (const auto& other : placed) {
      bool separated = false;
      for (int a = 0; a < 3; ++a)
        if (std::abs(c[a] - other.center_mm[a]) > semi[a] + other.semi_axes_mm[a] + 1.0)
          separated = true;
      if (!separated) {
        clear = false;
        break;
      }
    }
    if (clear) return c;
  }
  // dense grid: fall back to the last draw, overlap is tolerated
  std::array<double, 3> c;
  for (int a = 0; a < 3; ++a) c[a] = rng.uniform(lo[a], hi[a]);
  return c;
}

inline TumorSpec draw_tumor(const CohortConfig& cfg, std::uint8_t label, Rng& rng,
                            const std::vector<TumorSpec>& placed) {
  const auto& range = label == 1 ? cfg.gtvp_semi_axis_mm : cfg.gtvn_semi_axis_mm;
  TumorSpec t;
  t.label = label;
  for (int a = 0; a < 3; ++a) t.semi_axes_mm[a] = rng.uniform(range[0], range[1]);
  t.shrinkage = rng.uniform(cfg.shrinkage[0], cfg.shrinkage[1]);
  t.contrast = cfg.contrast;
  for (int a = 0; a < 3; ++a)
    t.jitter_vox[a] = static_cast<int>(rng.uniform_int(-cfg.max_jitter_vox, cfg.max_jitter_vox));
  t.center_mm = place_center(cfg.shape, cfg.spacing, t.semi_axes_mm, rng, placed);
  return t;
}

}  // namespace detail

struct CohortResult {
  std::filesystem::path root;
  std::filesystem::path manifest_path;
  std::vector<cohort::PatientCase> cases;
};

inline PhantomSpec draw_patient_spec(const CohortConfig& cfg, const std::string& id) {
  PhantomSpec spec;
  spec.shape = cfg.shape;
  spec.spacing = cfg.spacing;
  spec.background = cfg.background;
  spec.noise_sigma = cfg.noise_sigma;
  Rng rng(derive_seed(cfg.seed, id + "/spec"));
  if (rng.uniform() < cfg.gtvp_probability)
    spec.tumors.push_back(detail::draw_tumor(cfg, 1, rng, spec.tumors));
  const int n_gtvn = static_cast<int>(rng.uniform_int(cfg.gtvn_count[0], cfg.gtvn_count[1]));
  for (int i = 0; i < n_gtvn; ++i)
    spec.tumors.push_back(detail::draw_tumor(cfg, 2, rng, spec.tumors));
  return spec;
}

inline std::string patient_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "P%03d", index + 1);
  return buf;
}

/// Generate the full tree in the scanner's default layout. Per-patient work
/// depends only on (seed, id), so callers may generate patients in parallel
/// and still get an identical tree.
inline CohortResult generate_cohort(const CohortConfig& cfg, const std::filesystem::path& root,
                                    int jobs = 1) {
  if (cfg.n_patients < 1) fail(errc::invalid_argument, "n_patients must be >= 1");
  std::filesystem::create_directories(root);

  CohortResult result;
  result.root = root;
  result.cases.resize(static_cast<std::size_t>(cfg.n_patients));
  parallel_for(static_cast<std::size_t>(cfg.n_patients), jobs, [&](std::size_t i) {
    const std::string id = patient_id(static_cast<int>(i));
    const auto spec = draw_patient_spec(cfg, id);
    result.cases[i] = generate_case(spec, id, root / id, derive_seed(cfg.seed, id));
  });

  nlohmann::ordered_json volumes = nlohmann::ordered_json::array();
  for (int i = 0; i < cfg.n_patients; ++i) {
    const std::string id = patient_id(i);
    std::ifstream mf(root / id / "manifest.json");
    nlohmann::json pm = nlohmann::json::parse(mf);
    for (const std::string key : {"GTVp", "GTVn"}) {
      nlohmann::ordered_json row;
      row["id"] = id;
      row["label"] = key;
      row["pre_cc"] = pm["volumes_cc"][key]["pre"];
      row["mid_cc"] = pm["volumes_cc"][key]["mid"];
      volumes.push_back(row);
    }
  }
  detail::write_json_file(root / "volumes.json", volumes);

  nlohmann::ordered_json manifest;
  manifest["seed"] = cfg.seed;
  manifest["n_patients"] = cfg.n_patients;
  manifest["shape"] = {cfg.shape[0], cfg.shape[1], cfg.shape[2]};
  manifest["spacing_mm"] = {cfg.spacing[0], cfg.spacing[1], cfg.spacing[2]};
  manifest["background"] = cfg.background;
  manifest["noise_sigma"] = cfg.noise_sigma;
  manifest["contrast"] = cfg.contrast;
  manifest["gtvp_probability"] = cfg.gtvp_probability;
  manifest["gtvp_semi_axis_mm"] = {cfg.gtvp_semi_axis_mm[0], cfg.gtvp_semi_axis_mm[1]};
  manifest["gtvn_count"] = {cfg.gtvn_count[0], cfg.gtvn_count[1]};
  manifest["gtvn_semi_axis_mm"] = {cfg.gtvn_semi_axis_mm[0], cfg.gtvn_semi_axis_mm[1]};
  manifest["shrinkage"] = {cfg.shrinkage[0], cfg.shrinkage[1]};
  manifest["max_jitter_vox"] = cfg.max_jitter_vox;
  manifest["patients"] = nlohmann::ordered_json::array();
  for (const auto& c : result.cases) manifest["patients"].push_back(c.id);
  result.manifest_path = root / "manifest.json";
  detail::write_json_file(result.manifest_path, manifest);
  return result;
}

}  // namespace gradseg::phantom
