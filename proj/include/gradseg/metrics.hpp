#pragma once

// Segmentation evaluation: per-case DSC, cohort-pooled DSC_agg, HD95 and MSD
// in physical mm with anisotropic spacing.
//
// Conventions, pinned so results are reproducible bit-for-bit:
//   - DSC with both masks empty is 1.0; exactly one empty is 0.0.
//   - Surfaces are foreground voxels with a 6-connected background (or
//     out-of-grid) neighbor; distances are voxel-center to voxel-center.
//   - HD95/MSD are taken over the pooled bidirectional multiset
//     d(P->G) u d(G->P); undefined when either surface is empty.
//   - Percentiles interpolate linearly between closest ranks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradseg/core.hpp"
#include "gradseg/volume.hpp"

namespace gradseg::metrics {

inline constexpr std::uint8_t kLabelGTVp = 1;
inline constexpr std::uint8_t kLabelGTVn = 2;

inline const char* label_name(std::uint8_t label) { return label == 1 ? "GTVp" : "GTVn"; }

struct VoxelTally {
  std::uint64_t intersection = 0;
  std::uint64_t pred = 0;
  std::uint64_t gt = 0;
};

inline VoxelTally tally(const LabelMask3& pred, const LabelMask3& gt, std::uint8_t label) {
  require_same_geometry(pred, gt, "tally");
  VoxelTally t;
  for (std::size_t n = 0; n < pred.data.size(); ++n) {
    const bool p = pred.data[n] == label;
    const bool g = gt.data[n] == label;
    t.pred += p;
    t.gt += g;
    t.intersection += (p && g);
  }
  return t;
}

inline double dsc_from_tally(const VoxelTally& t) {
  const std::uint64_t denom = t.pred + t.gt;
  if (denom == 0) return 1.0;  // both empty: agreement on absence
  return 2.0 * static_cast<double>(t.intersection) / static_cast<double>(denom);
}

inline double dsc(const LabelMask3& pred, const LabelMask3& gt, std::uint8_t label) {
  return dsc_from_tally(tally(pred, gt, label));
}

/// Aggregated Dice: pooled intersections over pooled mask sizes.
inline double dsc_agg(const std::vector<VoxelTally>& tallies) {
  if (tallies.empty()) fail(errc::empty_cohort, "dsc_agg over zero cases");
  std::uint64_t inter = 0, denom = 0;
  for (const auto& t : tallies) {
    inter += t.intersection;
    denom += t.pred + t.gt;
  }
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(denom);
}

/// Foreground voxels with at least one 6-connected background or out-of-grid
/// neighbor.
inline std::vector<std::array<std::size_t, 3>> surface_voxels(const LabelMask3& m,
                                                              std::uint8_t label) {
  std::vector<std::array<std::size_t, 3>> out;
  const std::int64_t nx = static_cast<std::int64_t>(m.shape[0]);
  const std::int64_t ny = static_cast<std::int64_t>(m.shape[1]);
  const std::int64_t nz = static_cast<std::int64_t>(m.shape[2]);
  static constexpr int offs[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                     {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
  for (std::int64_t k = 0; k < nz; ++k)
    for (std::int64_t j = 0; j < ny; ++j)
      for (std::int64_t i = 0; i < nx; ++i) {
        if (m.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                 static_cast<std::size_t>(k)) != label)
          continue;
        bool boundary = false;
        for (const auto& o : offs) {
          const std::int64_t a = i + o[0], b = j + o[1], c = k + o[2];
          if (a < 0 || a >= nx || b < 0 || b >= ny || c < 0 || c >= nz ||
              m.at(static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                   static_cast<std::size_t>(c)) != label) {
            boundary = true;
            break;
          }
        }
        if (boundary)
          out.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                         static_cast<std::size_t>(k)});
      }
  return out;
}

namespace detail {

struct MmPoint {
  double x, y, z;
};

inline std::vector<MmPoint> to_mm(const std::vector<std::array<std::size_t, 3>>& voxels,
                                  const Spacing3& spacing) {
  std::vector<MmPoint> pts(voxels.size());
  for (std::size_t n = 0; n < voxels.size(); ++n)
    pts[n] = {static_cast<double>(voxels[n][0]) * spacing[0],
              static_cast<double>(voxels[n][1]) * spacing[1],
              static_cast<double>(voxels[n][2]) * spacing[2]};
  return pts;
}

// Nearest-neighbor distances from each source point to the target set.
// Targets are sorted by x so the scan can stop once (dx)^2 exceeds the best
// squared distance found so far.
inline void directed_distances(const std::vector<MmPoint>& sources, std::vector<MmPoint> targets,
                               std::vector<double>& out) {
  std::sort(targets.begin(), targets.end(),
            [](const MmPoint& a, const MmPoint& b) { return a.x < b.x; });
  for (const auto& s : sources) {
    const auto it = std::lower_bound(targets.begin(), targets.end(), s.x,
                                     [](const MmPoint& p, double x) { return p.x < x; });
    double best = std::numeric_limits<double>::infinity();
    const std::int64_t start = it - targets.begin();
    const std::int64_t m = static_cast<std::int64_t>(targets.size());
    std::int64_t left = start - 1, right = start;
    while (left >= 0 || right < m) {
      const double dl = left >= 0 ? s.x - targets[static_cast<std::size_t>(left)].x
                                  : std::numeric_limits<double>::infinity();
      const double dr = right < m ? targets[static_cast<std::size_t>(right)].x - s.x
                                  : std::numeric_limits<double>::infinity();
      const std::int64_t pick = dl <= dr ? left : right;
      const double dx = std::min(dl, dr);
      if (dx * dx > best) break;
      const auto& t = targets[static_cast<std::size_t>(pick)];
      const double d2 = (s.x - t.x) * (s.x - t.x) + (s.y - t.y) * (s.y - t.y) +
                        (s.z - t.z) * (s.z - t.z);
      best = std::min(best, d2);
      if (pick == left)
        --left;
      else
        ++right;
    }
    out.push_back(std::sqrt(best));
  }
}

}  // namespace detail

/// Pooled bidirectional surface distances in mm; empty when either surface is
/// empty (the distance metrics are then undefined).
inline std::vector<double> pooled_surface_distances(const LabelMask3& pred, const LabelMask3& gt,
                                                    std::uint8_t label) {
  require_same_geometry(pred, gt, "surface distances");
  const auto sp = surface_voxels(pred, label);
  const auto sg = surface_voxels(gt, label);
  if (sp.empty() || sg.empty()) return {};
  const auto pp = detail::to_mm(sp, pred.spacing);
  const auto pg = detail::to_mm(sg, gt.spacing);
  std::vector<double> pooled;
  pooled.reserve(pp.size() + pg.size());
  detail::directed_distances(pp, pg, pooled);
  detail::directed_distances(pg, pp, pooled);
  return pooled;
}

/// Linear interpolation between closest ranks; values need not be pre-sorted.
inline double percentile_linear(std::vector<double> values, double q) {
  if (values.empty()) fail(errc::invalid_argument, "percentile of empty set");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q / 100.0;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

inline std::optional<double> hd95(const LabelMask3& pred, const LabelMask3& gt, std::uint8_t label) {
  const auto pooled = pooled_surface_distances(pred, gt, label);
  if (pooled.empty()) return std::nullopt;
  return percentile_linear(pooled, 95.0);
}

inline std::optional<double> msd(const LabelMask3& pred, const LabelMask3& gt, std::uint8_t label) {
  const auto pooled = pooled_surface_distances(pred, gt, label);
  if (pooled.empty()) return std::nullopt;
  double sum = 0.0;
  for (double d : pooled) sum += d;
  return sum / static_cast<double>(pooled.size());
}

// ---------------------------------------------------------------------------
// Cohort reports

struct LabelMetrics {
  double dsc = 0.0;
  std::optional<double> hd95_mm;
  std::optional<double> msd_mm;
  double pred_volume_cc = 0.0;
  double gt_volume_cc = 0.0;
  std::uint64_t intersection_voxels = 0;
  std::uint64_t pred_voxels = 0;
  std::uint64_t gt_voxels = 0;
};

struct CaseMetrics {
  std::string id;
  LabelMetrics gtvp;
  LabelMetrics gtvn;

  const LabelMetrics& for_label(std::uint8_t label) const { return label == 1 ? gtvp : gtvn; }
};

struct FailedCase {
  std::string id;
  std::string message;
};

struct LabelAggregates {
  double dsc_agg = 1.0;
  double mean_dsc = 0.0;
  std::optional<double> mean_hd95_mm;
  std::optional<double> mean_msd_mm;
  int n_cases = 0;
  int n_distance_excluded = 0;  // cases where hd95/msd are undefined
  std::uint64_t pooled_intersection = 0;
  std::uint64_t pooled_pred = 0;
  std::uint64_t pooled_gt = 0;
};

struct CohortReport {
  std::vector<CaseMetrics> cases;
  std::vector<FailedCase> failures;
  LabelAggregates gtvp;
  LabelAggregates gtvn;
  double mean_dsc_agg = 1.0;
};

inline LabelMetrics evaluate_label(const LabelMask3& pred, const LabelMask3& gt,
                                   std::uint8_t label) {
  LabelMetrics lm;
  const auto t = tally(pred, gt, label);
  lm.intersection_voxels = t.intersection;
  lm.pred_voxels = t.pred;
  lm.gt_voxels = t.gt;
  lm.dsc = dsc_from_tally(t);
  lm.hd95_mm = hd95(pred, gt, label);
  lm.msd_mm = msd(pred, gt, label);
  lm.pred_volume_cc = volume::volume_cc(pred, label);
  lm.gt_volume_cc = volume::volume_cc(gt, label);
  return lm;
}

inline CaseMetrics evaluate_case(const std::string& id, const LabelMask3& pred,
                                 const LabelMask3& gt) {
  require_same_geometry(pred, gt, "case " + id);
  CaseMetrics cm;
  cm.id = id;
  cm.gtvp = evaluate_label(pred, gt, kLabelGTVp);
  cm.gtvn = evaluate_label(pred, gt, kLabelGTVn);
  return cm;
}

namespace detail {

inline LabelAggregates aggregate_label(const std::vector<CaseMetrics>& cases, std::uint8_t label) {
  LabelAggregates agg;
  agg.n_cases = static_cast<int>(cases.size());
  double dsc_sum = 0.0, hd_sum = 0.0, msd_sum = 0.0;
  int defined = 0;
  for (const auto& c : cases) {
    const auto& lm = c.for_label(label);
    agg.pooled_intersection += lm.intersection_voxels;
    agg.pooled_pred += lm.pred_voxels;
    agg.pooled_gt += lm.gt_voxels;
    dsc_sum += lm.dsc;
    if (lm.hd95_mm && lm.msd_mm) {
      hd_sum += *lm.hd95_mm;
      msd_sum += *lm.msd_mm;
      ++defined;
    }
  }
  const std::uint64_t denom = agg.pooled_pred + agg.pooled_gt;
  agg.dsc_agg =
      denom == 0 ? 1.0 : 2.0 * static_cast<double>(agg.pooled_intersection) / static_cast<double>(denom);
  agg.mean_dsc = cases.empty() ? 0.0 : dsc_sum / static_cast<double>(cases.size());
  agg.n_distance_excluded = static_cast<int>(cases.size()) - defined;
  if (defined > 0) {
    agg.mean_hd95_mm = hd_sum / defined;
    agg.mean_msd_mm = msd_sum / defined;
  }
  return agg;
}

}  // namespace detail

/// Build aggregates from per-case results. Cases are ordered by id so the
/// report is deterministic regardless of evaluation order.
inline CohortReport assemble_report(std::vector<CaseMetrics> cases, std::vector<FailedCase> failures) {
  if (cases.empty() && failures.empty()) fail(errc::empty_cohort, "no cases to report");
  std::sort(cases.begin(), cases.end(),
            [](const CaseMetrics& a, const CaseMetrics& b) { return a.id < b.id; });
  std::sort(failures.begin(), failures.end(),
            [](const FailedCase& a, const FailedCase& b) { return a.id < b.id; });
  CohortReport r;
  r.cases = std::move(cases);
  r.failures = std::move(failures);
  r.gtvp = detail::aggregate_label(r.cases, kLabelGTVp);
  r.gtvn = detail::aggregate_label(r.cases, kLabelGTVn);
  r.mean_dsc_agg = (r.gtvp.dsc_agg + r.gtvn.dsc_agg) / 2.0;
  return r;
}

struct EvalInput {
  std::string id;
  LabelMask3 pred;
  LabelMask3 gt;
};

/// Evaluate a cohort; a failing case is recorded and does not abort the rest.
inline CohortReport evaluate_cohort(const std::vector<EvalInput>& inputs) {
  std::vector<CaseMetrics> cases;
  std::vector<FailedCase> failures;
  for (const auto& in : inputs) {
    try {
      cases.push_back(evaluate_case(in.id, in.pred, in.gt));
    } catch (const error& e) {
      failures.push_back({in.id, e.what()});
    }
  }
  return assemble_report(std::move(cases), std::move(failures));
}

// --- serialization ----------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json opt_to_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

inline std::optional<double> opt_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline nlohmann::ordered_json label_metrics_to_json(const LabelMetrics& lm) {
  nlohmann::ordered_json j;
  j["dsc"] = lm.dsc;
  j["hd95_mm"] = opt_to_json(lm.hd95_mm);
  j["msd_mm"] = opt_to_json(lm.msd_mm);
  j["pred_volume_cc"] = lm.pred_volume_cc;
  j["gt_volume_cc"] = lm.gt_volume_cc;
  j["intersection_voxels"] = lm.intersection_voxels;
  j["pred_voxels"] = lm.pred_voxels;
  j["gt_voxels"] = lm.gt_voxels;
  return j;
}

inline LabelMetrics label_metrics_from_json(const nlohmann::json& j) {
  LabelMetrics lm;
  lm.dsc = j.at("dsc").get<double>();
  lm.hd95_mm = opt_from_json(j.at("hd95_mm"));
  lm.msd_mm = opt_from_json(j.at("msd_mm"));
  lm.pred_volume_cc = j.at("pred_volume_cc").get<double>();
  lm.gt_volume_cc = j.at("gt_volume_cc").get<double>();
  lm.intersection_voxels = j.at("intersection_voxels").get<std::uint64_t>();
  lm.pred_voxels = j.at("pred_voxels").get<std::uint64_t>();
  lm.gt_voxels = j.at("gt_voxels").get<std::uint64_t>();
  return lm;
}

inline nlohmann::ordered_json aggregates_to_json(const LabelAggregates& a) {
  nlohmann::ordered_json j;
  j["dsc_agg"] = a.dsc_agg;
  j["mean_dsc"] = a.mean_dsc;
  j["mean_hd95_mm"] = opt_to_json(a.mean_hd95_mm);
  j["mean_msd_mm"] = opt_to_json(a.mean_msd_mm);
  j["n_cases"] = a.n_cases;
  j["n_distance_excluded"] = a.n_distance_excluded;
  j["pooled_intersection"] = a.pooled_intersection;
  j["pooled_pred"] = a.pooled_pred;
  j["pooled_gt"] = a.pooled_gt;
  return j;
}

inline LabelAggregates aggregates_from_json(const nlohmann::json& j) {
  LabelAggregates a;
  a.dsc_agg = j.at("dsc_agg").get<double>();
  a.mean_dsc = j.at("mean_dsc").get<double>();
  a.mean_hd95_mm = opt_from_json(j.at("mean_hd95_mm"));
  a.mean_msd_mm = opt_from_json(j.at("mean_msd_mm"));
  a.n_cases = j.at("n_cases").get<int>();
  a.n_distance_excluded = j.at("n_distance_excluded").get<int>();
  a.pooled_intersection = j.at("pooled_intersection").get<std::uint64_t>();
  a.pooled_pred = j.at("pooled_pred").get<std::uint64_t>();
  a.pooled_gt = j.at("pooled_gt").get<std::uint64_t>();
  return a;
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const CohortReport& r) {
  nlohmann::ordered_json j;
  j["cases"] = nlohmann::ordered_json::array();
  for (const auto& c : r.cases) {
    nlohmann::ordered_json jc;
    jc["id"] = c.id;
    jc["GTVp"] = detail::label_metrics_to_json(c.gtvp);
    jc["GTVn"] = detail::label_metrics_to_json(c.gtvn);
    j["cases"].push_back(jc);
  }
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : r.failures) j["failures"].push_back({{"id", f.id}, {"message", f.message}});
  j["aggregates"]["GTVp"] = detail::aggregates_to_json(r.gtvp);
  j["aggregates"]["GTVn"] = detail::aggregates_to_json(r.gtvn);
  j["aggregates"]["mean_dsc_agg"] = r.mean_dsc_agg;
  return j;
}

inline CohortReport report_from_json(const nlohmann::json& j) {
  CohortReport r;
  for (const auto& jc : j.at("cases")) {
    CaseMetrics c;
    c.id = jc.at("id").get<std::string>();
    c.gtvp = detail::label_metrics_from_json(jc.at("GTVp"));
    c.gtvn = detail::label_metrics_from_json(jc.at("GTVn"));
    r.cases.push_back(std::move(c));
  }
  for (const auto& jf : j.at("failures"))
    r.failures.push_back({jf.at("id").get<std::string>(), jf.at("message").get<std::string>()});
  r.gtvp = detail::aggregates_from_json(j.at("aggregates").at("GTVp"));
  r.gtvn = detail::aggregates_from_json(j.at("aggregates").at("GTVn"));
  r.mean_dsc_agg = j.at("aggregates").at("mean_dsc_agg").get<double>();
  return r;
}

/// One CSV row per case per label; undefined distances are empty fields.
inline std::string report_to_csv(const CohortReport& r) {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  auto fmt_opt = [&](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  std::string out =
      "id,label,dsc,hd95_mm,msd_mm,pred_volume_cc,gt_volume_cc,"
      "intersection_voxels,pred_voxels,gt_voxels\n";
  for (const auto& c : r.cases)
    for (std::uint8_t label : {kLabelGTVp, kLabelGTVn}) {
      const auto& lm = c.for_label(label);
      out += c.id;
      out += ',';
      out += label_name(label);
      out += ',';
      out += fmt(lm.dsc) + ',' + fmt_opt(lm.hd95_mm) + ',' + fmt_opt(lm.msd_mm) + ',' +
             fmt(lm.pred_volume_cc) + ',' + fmt(lm.gt_volume_cc) + ',' +
             std::to_string(lm.intersection_voxels) + ',' + std::to_string(lm.pred_voxels) + ',' +
             std::to_string(lm.gt_voxels) + '\n';
    }
  return out;
}

}  // namespace gradseg::metrics
