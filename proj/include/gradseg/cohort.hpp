#pragma once

// Dataset layout and longitudinal patient records, the one-case-to-two-samples
// training expansion, and deterministic k-fold splitting at patient
// granularity (both phases of a validation patient stay out of training).
//
// A layout spec maps each file role to a relative-path pattern containing one
// `{id}` placeholder ('*' matches within a path segment). Roles:
//   mid_img, mid_gt      mid-RT image and ground truth
//   pre_img_dr, pre_gt_dr    pre-RT image/mask deformably registered onto the
//                            mid-RT grid (consumed as the prior)
//   pre_img, pre_gt      native pre-RT image/mask (the doubled sample)

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradseg/core.hpp"
#include "gradseg/gradmap.hpp"

namespace gradseg::cohort {

inline const std::vector<std::string>& role_names() {
  static const std::vector<std::string> roles = {"mid_img", "mid_gt",     "pre_img_dr",
                                                 "pre_gt_dr", "pre_img",  "pre_gt"};
  return roles;
}

struct PatientCase {
  std::string id;
  std::filesystem::path mid_img;
  std::filesystem::path mid_gt;
  std::filesystem::path pre_img_dr;
  std::filesystem::path pre_gt_dr;
  std::filesystem::path pre_img;
  std::filesystem::path pre_gt;
  std::vector<std::string> missing_roles;

  bool complete() const { return missing_roles.empty(); }

  std::filesystem::path& role(const std::string& name) {
    if (name == "mid_img") return mid_img;
    if (name == "mid_gt") return mid_gt;
    if (name == "pre_img_dr") return pre_img_dr;
    if (name == "pre_gt_dr") return pre_gt_dr;
    if (name == "pre_img") return pre_img;
    if (name == "pre_gt") return pre_gt;
    fail(errc::invalid_argument, "unknown role " + name);
  }
};

struct LayoutSpec {
  std::map<std::string, std::string> patterns;

  static LayoutSpec defaults() {
    LayoutSpec s;
    for (const auto& role : role_names()) s.patterns[role] = "{id}/" + role + ".nii.gz";
    return s;
  }

  static LayoutSpec from_json(const nlohmann::json& j) {
    LayoutSpec s = defaults();
    for (const auto& role : role_names())
      if (j.contains(role)) s.patterns[role] = j.at(role).get<std::string>();
    return s;
  }
};

namespace detail {

// Pattern -> regex over '/'-separated relative paths. `{id}` captures one
// path-segment token; '*' matches within a segment.
inline std::regex pattern_regex(const std::string& pattern) {
  std::string rx;
  bool saw_id = false;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern.compare(i, 4, "{id}") == 0) {
      if (saw_id) fail(errc::invalid_argument, "pattern has more than one {id}: " + pattern);
      rx += "([A-Za-z0-9_\\-]+)";
      saw_id = true;
      i += 3;
    } else if (pattern[i] == '*') {
      rx += "[^/]*";
    } else if (std::string("\\^$.|?+()[]{}").find(pattern[i]) != std::string::npos) {
      rx += '\\';
      rx += pattern[i];
    } else {
      rx += pattern[i];
    }
  }
  if (!saw_id) fail(errc::invalid_argument, "pattern lacks an {id} placeholder: " + pattern);
  return std::regex(rx);
}

inline std::vector<std::string> relative_files(const std::filesystem::path& root) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    files.push_back(entry.path().lexically_relative(root).generic_string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace detail

/// Discover patients under `root`. Patient ids come from matching every
/// role's pattern; a role matched by two distinct files for one id is a
/// DuplicateId error, a role with no match is recorded in missing_roles.
inline std::vector<PatientCase> scan_dataset(const std::filesystem::path& root,
                                             const LayoutSpec& layout = LayoutSpec::defaults()) {
  if (!std::filesystem::is_directory(root)) fail(errc::io, "dataset root not found: " + root.string());
  const auto files = detail::relative_files(root);

  // (role, id) -> matched relative paths
  std::map<std::string, std::map<std::string, std::vector<std::string>>> matches;
  for (const auto& role : role_names()) {
    const auto rx = detail::pattern_regex(layout.patterns.at(role));
    for (const auto& file : files) {
      std::smatch m;
      if (std::regex_match(file, m, rx)) matches[role][m[1].str()].push_back(file);
    }
  }

  std::vector<std::string> ids;
  for (const auto& role : role_names())
    for (const auto& [id, paths] : matches[role]) {
      if (paths.size() > 1)
        fail(errc::duplicate_id, "id '" + id + "' matches role " + role + " at " + paths[0] +
                                     " and " + paths[1]);
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    }
  if (ids.empty()) fail(errc::empty_dataset, "no patients found under " + root.string());
  std::sort(ids.begin(), ids.end());

  std::vector<PatientCase> cases;
  for (const auto& id : ids) {
    PatientCase c;
    c.id = id;
    for (const auto& role : role_names()) {
      const auto it = matches[role].find(id);
      if (it == matches[role].end())
        c.missing_roles.push_back(role);
      else
        c.role(role) = root / it->second.front();
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

// ---------------------------------------------------------------------------
// Training expansion (one patient -> two samples)

struct SampleDescriptor {
  std::string patient;
  gradmap::Phase phase = gradmap::Phase::midRT;
  std::filesystem::path image;
  std::filesystem::path prior;  // mask whose components define the ROI boxes
};

/// Two training samples per patient: the mid-RT image with the registered
/// pre-RT mask as prior, and the native pre-RT image with its own ground
/// truth as prior.
inline std::vector<SampleDescriptor> expand_training(std::span<const PatientCase> patients) {
  std::vector<SampleDescriptor> out;
  out.reserve(patients.size() * 2);
  for (const auto& p : patients) {
    if (!p.complete())
      fail(errc::invalid_argument, "patient " + p.id + " is missing roles; cannot expand");
    out.push_back({p.id, gradmap::Phase::midRT, p.mid_img, p.pre_gt_dr});
    out.push_back({p.id, gradmap::Phase::preRT, p.pre_img, p.pre_gt});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fold plans

struct TrainingRef {
  std::string patient;
  gradmap::Phase phase = gradmap::Phase::midRT;
};

struct Fold {
  std::vector<std::string> validation;  // patient ids, scored on mid-RT
  std::vector<TrainingRef> training;    // both phases of every other patient
};

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

/// Seeded shuffle, then contiguous near-equal blocks (sizes differ by at most
/// one, larger folds first).
inline FoldPlan split_folds(std::vector<std::string> ids, int k, std::uint64_t seed) {
  if (k < 2) fail(errc::invalid_argument, "k must be >= 2");
  if (ids.size() < static_cast<std::size_t>(k))
    fail(errc::too_few_patients,
         std::to_string(ids.size()) + " patients cannot fill " + std::to_string(k) + " folds");
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < static_cast<std::size_t>(k))
    fail(errc::too_few_patients, "fewer unique patients than folds");

  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng.bounded(i))]);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  const std::size_t base = ids.size() / static_cast<std::size_t>(k);
  const std::size_t extra = ids.size() % static_cast<std::size_t>(k);
  std::size_t cursor = 0;
  for (int f = 0; f < k; ++f) {
    Fold fold;
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) fold.validation.push_back(ids[cursor++]);
    std::sort(fold.validation.begin(), fold.validation.end());
    plan.folds.push_back(std::move(fold));
  }
  for (int f = 0; f < k; ++f) {
    auto& fold = plan.folds[static_cast<std::size_t>(f)];
    for (int g = 0; g < k; ++g) {
      if (g == f) continue;
      for (const auto& id : plan.folds[static_cast<std::size_t>(g)].validation) {
        fold.training.push_back({id, gradmap::Phase::midRT});
        fold.training.push_back({id, gradmap::Phase::preRT});
      }
    }
    std::sort(fold.training.begin(), fold.training.end(), [](const TrainingRef& a, const TrainingRef& b) {
      if (a.patient != b.patient) return a.patient < b.patient;
      return static_cast<int>(a.phase) < static_cast<int>(b.phase);
    });
  }
  return plan;
}

inline nlohmann::ordered_json folds_to_json(const FoldPlan& plan) {
  nlohmann::ordered_json j;
  j["seed"] = plan.seed;
  j["k"] = plan.k;
  j["folds"] = nlohmann::ordered_json::array();
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    nlohmann::ordered_json jf;
    jf["fold"] = f;
    jf["validation"] = plan.folds[f].validation;
    jf["training"] = nlohmann::ordered_json::array();
    for (const auto& t : plan.folds[f].training)
      jf["training"].push_back({{"patient", t.patient}, {"phase", gradmap::phase_name(t.phase)}});
    j["folds"].push_back(jf);
  }
  return j;
}

inline FoldPlan folds_from_json(const nlohmann::json& j) {
  FoldPlan plan;
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.k = j.at("k").get<int>();
  for (const auto& jf : j.at("folds")) {
    Fold fold;
    for (const auto& v : jf.at("validation")) fold.validation.push_back(v.get<std::string>());
    for (const auto& t : jf.at("training")) {
      TrainingRef ref;
      ref.patient = t.at("patient").get<std::string>();
      const auto phase = t.at("phase").get<std::string>();
      if (phase != "preRT" && phase != "midRT")
        fail(errc::invalid_argument, "unknown phase " + phase);
      ref.phase = phase == "preRT" ? gradmap::Phase::preRT : gradmap::Phase::midRT;
      fold.training.push_back(ref);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

}  // namespace gradseg::cohort
