// gradseg: prior-guided gradient-map preprocessing and segmentation
// evaluation for longitudinal 3D tumor volumes.
//
// Subcommands: phantom, preprocess, folds, evaluate, analyze.
// Every command is a pure function of (inputs, flags, seed): re-running with
// identical arguments produces byte-identical artifacts, also under --jobs N.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gradseg/cohort.hpp"
#include "gradseg/core.hpp"
#include "gradseg/gradmap.hpp"
#include "gradseg/metrics.hpp"
#include "gradseg/nifti.hpp"
#include "gradseg/parallel.hpp"
#include "gradseg/phantom.hpp"
#include "gradseg/roi.hpp"
#include "gradseg/stats.hpp"
#include "gradseg/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kDefaultSeed = 17;

int exit_code_for(const gradseg::error& e) {
  switch (e.code()) {
    case gradseg::errc::invalid_argument:
    case gradseg::errc::too_few_patients:
      return 2;
    default:
      return 1;
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("GRADSEG_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    return std::stoull(v);
  } catch (...) {
    throw gradseg::error(gradseg::errc::invalid_argument,
                         "GRADSEG_SEED is not an unsigned integer: " + std::string(v));
  }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.parent_path() / (".tmp." + path.filename().string());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) gradseg::fail(gradseg::errc::io, "cannot write " + tmp.string());
    f << text;
  }
  fs::rename(tmp, path);
}

void write_json_atomic(const fs::path& path, const ordered_json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

json load_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) gradseg::fail(gradseg::errc::io, "cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw gradseg::error(gradseg::errc::invalid_argument, path.string() + ": " + e.what());
  }
}

template <class WriteFn>
void write_nifti_atomic(const fs::path& path, WriteFn&& fn) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.parent_path() / (".tmp." + path.filename().string());
  fn(tmp);
  fs::rename(tmp, path);
}

// Pipeline configuration: library defaults, overridden by --config JSON,
// overridden by flags. The hash of the effective values is embedded in every
// run manifest.
struct RunConfig {
  std::uint64_t seed = kDefaultSeed;
  int margin_lo = 2;
  int margin_hi = 6;
  double sigma = 1.0;
  double clip_scale = 1.0;
  std::array<double, 3> target_spacing{1.2, 0.5, 0.5};
  int k = 5;
  std::string layout_path;

  ordered_json to_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["margins"] = {margin_lo, margin_hi};
    j["sigma"] = sigma;
    j["clip_scale"] = clip_scale;
    j["target_spacing"] = {target_spacing[0], target_spacing[1], target_spacing[2]};
    j["k"] = k;
    j["layout"] = layout_path;
    return j;
  }

  std::string hash() const {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(gradseg::fnv1a64(to_json().dump())));
    return buf;
  }
};

struct ConfigCli {
  std::string config_path;
  std::vector<std::uint64_t> seed_flag;
  std::vector<int> margins_flag;
  std::vector<double> sigma_flag;
  std::vector<double> clip_flag;
  std::vector<int> k_flag;
  std::vector<std::string> layout_flag;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (flags win over config values)");
    cmd->add_option("--seed", seed_flag, "master seed (fallback: config, GRADSEG_SEED, default)")
        ->expected(1);
    cmd->add_option("--margins", margins_flag, "per-face box expansion range LO,HI in voxels")
        ->delimiter(',')
        ->expected(2);
    cmd->add_option("--sigma", sigma_flag, "Gaussian sigma in voxels")->expected(1);
    cmd->add_option("--clip-scale", clip_flag, "gradient values divided by this before clipping")
        ->expected(1);
    cmd->add_option("--k", k_flag, "number of folds")->expected(1);
    cmd->add_option("--layout", layout_flag, "dataset layout spec (JSON role->pattern)")->expected(1);
  }

  RunConfig resolve() const {
    RunConfig rc;
    bool config_has_seed = false;
    if (!config_path.empty()) {
      const json j = load_json(config_path);
      if (j.contains("seed")) {
        rc.seed = j.at("seed").get<std::uint64_t>();
        config_has_seed = true;
      }
      if (j.contains("margins")) {
        rc.margin_lo = j.at("margins").at(0).get<int>();
        rc.margin_hi = j.at("margins").at(1).get<int>();
      }
      if (j.contains("sigma")) rc.sigma = j.at("sigma").get<double>();
      if (j.contains("clip_scale")) rc.clip_scale = j.at("clip_scale").get<double>();
      if (j.contains("target_spacing"))
        for (int a = 0; a < 3; ++a) rc.target_spacing[a] = j.at("target_spacing").at(a).get<double>();
      if (j.contains("k")) rc.k = j.at("k").get<int>();
      if (j.contains("layout")) rc.layout_path = j.at("layout").get<std::string>();
    }
    if (!seed_flag.empty())
      rc.seed = seed_flag[0];
    else if (!config_has_seed) {
      if (const auto env = env_seed()) rc.seed = *env;
    }
    if (!margins_flag.empty()) {
      rc.margin_lo = margins_flag[0];
      rc.margin_hi = margins_flag[1];
    }
    if (!sigma_flag.empty()) rc.sigma = sigma_flag[0];
    if (!clip_flag.empty()) rc.clip_scale = clip_flag[0];
    if (!k_flag.empty()) rc.k = k_flag[0];
    if (!layout_flag.empty()) rc.layout_path = layout_flag[0];
    if (rc.margin_lo < 0 || rc.margin_hi < rc.margin_lo)
      gradseg::fail(gradseg::errc::invalid_argument, "margins must satisfy 0 <= lo <= hi");
    if (!(rc.sigma > 0.0)) gradseg::fail(gradseg::errc::invalid_argument, "sigma must be positive");
    if (!(rc.clip_scale > 0.0))
      gradseg::fail(gradseg::errc::invalid_argument, "clip-scale must be positive");
    return rc;
  }
};

gradseg::cohort::LayoutSpec load_layout(const std::string& path) {
  if (path.empty()) return gradseg::cohort::LayoutSpec::defaults();
  return gradseg::cohort::LayoutSpec::from_json(load_json(path));
}

// --- phantom ----------------------------------------------------------------

struct PhantomArgs {
  int n = 10;
  std::string out;
  std::vector<std::uint64_t> seed_flag;
  std::vector<std::size_t> grid{64, 64, 64};
  std::vector<double> spacing{1.0, 1.0, 1.0};
  std::vector<double> shrink{0.3, 1.0};
  int jitter = 2;
  double gtvp_prob = 1.0;
  std::vector<double> gtvp_axes{9.0, 12.0};
  std::vector<int> gtvn_count{1, 2};
  std::vector<double> gtvn_axes{4.0, 7.0};
  double noise = 2.0;
  double contrast = 60.0;
  double background = 100.0;
  int jobs = 1;
};

int run_phantom(const PhantomArgs& a) {
  gradseg::phantom::CohortConfig cfg;
  cfg.n_patients = a.n;
  cfg.seed = !a.seed_flag.empty() ? a.seed_flag[0] : env_seed().value_or(kDefaultSeed);
  cfg.shape = {a.grid[0], a.grid[1], a.grid[2]};
  cfg.spacing = {a.spacing[0], a.spacing[1], a.spacing[2]};
  cfg.shrinkage = {a.shrink[0], a.shrink[1]};
  cfg.max_jitter_vox = a.jitter;
  cfg.gtvp_probability = a.gtvp_prob;
  cfg.gtvp_semi_axis_mm = {a.gtvp_axes[0], a.gtvp_axes[1]};
  cfg.gtvn_count = {a.gtvn_count[0], a.gtvn_count[1]};
  cfg.gtvn_semi_axis_mm = {a.gtvn_axes[0], a.gtvn_axes[1]};
  cfg.noise_sigma = a.noise;
  cfg.contrast = a.contrast;
  cfg.background = a.background;
  const auto result = gradseg::phantom::generate_cohort(cfg, a.out, a.jobs);
  std::cout << result.manifest_path.string() << "\n";
  return 0;
}

// --- preprocess ---------------------------------------------------------------

struct PreprocessArgs {
  std::string data;
  std::string out;
  ConfigCli config;
  std::string folds_path;
  int fold = -1;
  bool resample = false;
  std::vector<double> resample_spacing;
  int jobs = 1;
};

int run_preprocess(const PreprocessArgs& a) {
  const RunConfig rc = a.config.resolve();
  const auto layout = load_layout(rc.layout_path);
  const auto cases = gradseg::cohort::scan_dataset(a.data, layout);

  std::map<std::string, const gradseg::cohort::PatientCase*> by_id;
  std::vector<gradseg::cohort::PatientCase> complete;
  for (const auto& c : cases)
    if (c.complete()) complete.push_back(c);
  for (const auto& c : complete) by_id[c.id] = &c;

  std::vector<gradseg::cohort::SampleDescriptor> samples;
  if (!a.folds_path.empty()) {
    if (a.fold < 0)
      gradseg::fail(gradseg::errc::invalid_argument, "--folds requires --fold N");
    const auto plan = gradseg::cohort::folds_from_json(load_json(a.folds_path));
    if (a.fold >= static_cast<int>(plan.folds.size()))
      gradseg::fail(gradseg::errc::invalid_argument,
                    "--fold " + std::to_string(a.fold) + " out of range (k=" +
                        std::to_string(plan.folds.size()) + ")");
    for (const auto& ref : plan.folds[static_cast<std::size_t>(a.fold)].training) {
      const auto it = by_id.find(ref.patient);
      if (it == by_id.end())
        gradseg::fail(gradseg::errc::invalid_argument,
                      "fold patient " + ref.patient + " not found in dataset");
      const auto& pc = *it->second;
      if (ref.phase == gradseg::gradmap::Phase::midRT)
        samples.push_back({pc.id, ref.phase, pc.mid_img, pc.pre_gt_dr});
      else
        samples.push_back({pc.id, ref.phase, pc.pre_img, pc.pre_gt});
    }
  } else {
    samples = gradseg::cohort::expand_training(complete);
  }

  gradseg::gradmap::GradMapConfig gm_cfg;
  gm_cfg.sigma = rc.sigma;
  gm_cfg.clip_scale = rc.clip_scale;
  const gradseg::roi::Margins margins{rc.margin_lo, rc.margin_hi};

  std::optional<gradseg::volume::ResampleSpec> resample_spec;
  if (a.resample || !a.resample_spacing.empty()) {
    gradseg::volume::ResampleSpec rs;
    rs.target_spacing = a.resample_spacing.empty()
                            ? rc.target_spacing
                            : gradseg::Spacing3{a.resample_spacing[0], a.resample_spacing[1],
                                                a.resample_spacing[2]};
    resample_spec = rs;
  }

  fs::create_directories(a.out);
  struct SampleOutcome {
    ordered_json entry;
    std::string failure;  // empty on success
  };
  std::vector<SampleOutcome> outcomes(samples.size());

  gradseg::parallel_for(samples.size(), a.jobs, [&](std::size_t i) {
    const auto& s = samples[i];
    const std::string phase = gradseg::gradmap::phase_name(s.phase);
    const std::string stem = s.patient + "_" + phase;
    try {
      auto img = gradseg::nifti::read_volume(s.image).volume;
      auto prior = gradseg::nifti::read_mask(s.prior).mask;
      if (resample_spec) {
        img = gradseg::volume::resample(img, *resample_spec);
        prior = gradseg::volume::resample_mask(prior, *resample_spec);
      }
      const std::uint64_t sample_seed = gradseg::derive_seed(rc.seed, s.patient + "/" + phase);
      const auto sample = gradseg::gradmap::assemble_sample(img, prior, s.patient, s.phase,
                                                            sample_seed, margins, gm_cfg);
      const fs::path ch0 = fs::path(a.out) / (stem + "_ch0.nii.gz");
      const fs::path ch1 = fs::path(a.out) / (stem + "_ch1.nii.gz");
      const fs::path roi_path = fs::path(a.out) / (stem + "_roi.json");
      write_nifti_atomic(ch0, [&](const fs::path& p) { gradseg::nifti::write_volume(sample.channel0, p); });
      write_nifti_atomic(ch1, [&](const fs::path& p) { gradseg::nifti::write_volume(sample.channel1, p); });
      write_json_atomic(roi_path, gradseg::roi::to_json(sample.rois));

      ordered_json e;
      e["id"] = s.patient;
      e["phase"] = phase;
      e["channel0"] = ch0.filename().string();
      e["channel1"] = ch1.filename().string();
      e["roi"] = roi_path.filename().string();
      e["seed"] = sample_seed;
      e["empty_prior_warning"] = sample.rois.empty_prior_warning;
      e["zscore_mean"] = sample.norm_mean;
      e["zscore_std"] = sample.norm_std;
      outcomes[i].entry = std::move(e);
    } catch (const std::exception& ex) {
      outcomes[i].failure = ex.what();
      outcomes[i].entry = ordered_json{{"id", s.patient}, {"phase", phase}, {"message", ex.what()}};
    }
  });

  ordered_json manifest;
  manifest["seed"] = rc.seed;
  manifest["config"] = rc.to_json();
  manifest["config_hash"] = rc.hash();
  if (resample_spec)
    manifest["resample_spacing"] = {resample_spec->target_spacing[0], resample_spec->target_spacing[1],
                                    resample_spec->target_spacing[2]};
  manifest["samples"] = ordered_json::array();
  manifest["failures"] = ordered_json::array();
  std::size_t n_warn = 0, n_fail = 0;
  for (const auto& o : outcomes) {
    if (!o.failure.empty()) {
      manifest["failures"].push_back(o.entry);
      ++n_fail;
    } else {
      if (o.entry["empty_prior_warning"].get<bool>()) ++n_warn;
      manifest["samples"].push_back(o.entry);
    }
  }
  write_json_atomic(fs::path(a.out) / "manifest.json", manifest);
  std::cout << "preprocessed " << manifest["samples"].size() << " samples (" << n_warn
            << " empty-prior warnings, " << n_fail << " failures) -> " << a.out << "\n";
  return n_fail == 0 ? 0 : 1;
}

// --- folds -------------------------------------------------------------------

struct FoldsArgs {
  std::string data;
  std::string ids_path;
  std::string out;
  ConfigCli config;
};

int run_folds(const FoldsArgs& a) {
  const RunConfig rc = a.config.resolve();
  std::vector<std::string> ids;
  if (!a.ids_path.empty()) {
    std::ifstream f(a.ids_path);
    if (!f) gradseg::fail(gradseg::errc::io, "cannot open " + a.ids_path);
    std::string line;
    while (std::getline(f, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) ids.push_back(line);
    }
  } else if (!a.data.empty()) {
    for (const auto& c : gradseg::cohort::scan_dataset(a.data, load_layout(rc.layout_path)))
      ids.push_back(c.id);
  } else {
    gradseg::fail(gradseg::errc::invalid_argument, "need --data or --ids");
  }
  const auto plan = gradseg::cohort::split_folds(ids, rc.k, rc.seed);
  write_json_atomic(a.out, gradseg::cohort::folds_to_json(plan));
  std::cout << "wrote " << plan.folds.size() << "-fold plan for " << ids.size() << " patients -> "
            << a.out << "\n";
  return 0;
}

// --- evaluate ------------------------------------------------------------------

struct EvaluateArgs {
  std::string pred_dir;
  std::string gt_dir;
  std::string data;
  std::string pred_role = "pre_gt_dr";
  std::string gt_role = "mid_gt";
  std::string out;
  std::string csv;
  ConfigCli config;
  int jobs = 1;
};

std::map<std::string, fs::path> index_mask_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) gradseg::fail(gradseg::errc::io, "not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    std::string id;
    if (name.size() > 7 && name.compare(name.size() - 7, 7, ".nii.gz") == 0)
      id = name.substr(0, name.size() - 7);
    else if (name.size() > 4 && name.compare(name.size() - 4, 4, ".nii") == 0)
      id = name.substr(0, name.size() - 4);
    else
      continue;
    if (out.count(id))
      gradseg::fail(gradseg::errc::duplicate_id, "id '" + id + "' appears twice under " + dir.string());
    out[id] = entry.path();
  }
  return out;
}

int run_evaluate(const EvaluateArgs& a) {
  const RunConfig rc = a.config.resolve();

  struct Pair {
    std::string id;
    fs::path pred, gt;
  };
  std::vector<Pair> pairs;
  std::vector<gradseg::metrics::FailedCase> failures;

  if (!a.data.empty()) {
    const auto cases = gradseg::cohort::scan_dataset(a.data, load_layout(rc.layout_path));
    for (auto c : cases) {
      const bool has_pred =
          std::find(c.missing_roles.begin(), c.missing_roles.end(), a.pred_role) == c.missing_roles.end();
      const bool has_gt =
          std::find(c.missing_roles.begin(), c.missing_roles.end(), a.gt_role) == c.missing_roles.end();
      if (!has_pred || !has_gt) {
        failures.push_back({c.id, "missing role " + std::string(!has_pred ? a.pred_role : a.gt_role)});
        continue;
      }
      pairs.push_back({c.id, c.role(a.pred_role), c.role(a.gt_role)});
    }
  } else {
    if (a.pred_dir.empty() || a.gt_dir.empty())
      gradseg::fail(gradseg::errc::invalid_argument, "need --pred and --gt, or --data with roles");
    const auto preds = index_mask_dir(a.pred_dir);
    const auto gts = index_mask_dir(a.gt_dir);
    for (const auto& [id, path] : preds) {
      const auto it = gts.find(id);
      if (it == gts.end()) {
        failures.push_back({id, "no ground-truth file for this id"});
        continue;
      }
      pairs.push_back({id, path, it->second});
    }
    if (pairs.empty() && failures.empty())
      gradseg::fail(gradseg::errc::empty_dataset, "no prediction files under " + a.pred_dir);
  }

  std::vector<std::optional<gradseg::metrics::CaseMetrics>> results(pairs.size());
  std::vector<std::optional<gradseg::metrics::FailedCase>> case_failures(pairs.size());
  gradseg::parallel_for(pairs.size(), a.jobs, [&](std::size_t i) {
    try {
      const auto pred = gradseg::nifti::read_mask(pairs[i].pred).mask;
      const auto gt = gradseg::nifti::read_mask(pairs[i].gt).mask;
      results[i] = gradseg::metrics::evaluate_case(pairs[i].id, pred, gt);
    } catch (const std::exception& ex) {
      case_failures[i] = gradseg::metrics::FailedCase{pairs[i].id, ex.what()};
    }
  });

  std::vector<gradseg::metrics::CaseMetrics> cases;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (results[i]) cases.push_back(std::move(*results[i]));
    if (case_failures[i]) failures.push_back(*case_failures[i]);
  }
  const auto report = gradseg::metrics::assemble_report(std::move(cases), std::move(failures));
  write_json_atomic(a.out, gradseg::metrics::report_to_json(report));
  if (!a.csv.empty()) write_text_atomic(a.csv, gradseg::metrics::report_to_csv(report));
  std::cout << "evaluated " << report.cases.size() << " cases (" << report.failures.size()
            << " failed); DSC_agg GTVp " << report.gtvp.dsc_agg << ", GTVn " << report.gtvn.dsc_agg
            << ", mean " << report.mean_dsc_agg << " -> " << a.out << "\n";
  return report.failures.empty() ? 0 : 1;
}

// --- analyze -------------------------------------------------------------------

struct AnalyzeArgs {
  std::string report_a;
  std::string report_b;
  std::string report;
  std::string volumes;
  std::vector<double> bins;
  std::string out;
};

ordered_json wilcoxon_json(const gradseg::metrics::CohortReport& ra,
                           const gradseg::metrics::CohortReport& rb, std::uint8_t label) {
  std::map<std::string, double> da, db;
  for (const auto& c : ra.cases) da[c.id] = c.for_label(label).dsc;
  for (const auto& c : rb.cases) db[c.id] = c.for_label(label).dsc;
  std::vector<double> va, vb;
  for (const auto& [id, v] : da) {
    const auto it = db.find(id);
    if (it != db.end()) {
      va.push_back(v);
      vb.push_back(it->second);
    }
  }
  ordered_json j;
  j["n_pairs"] = va.size();
  if (va.empty()) {
    j["error"] = "no common cases between the two reports";
    return j;
  }
  try {
    const auto w = gradseg::stats::wilcoxon_signed_rank(va, vb);
    j["w_plus"] = w.w_plus;
    j["p_two_sided"] = w.p_two_sided;
    j["n_effective"] = w.n_effective;
    j["exact"] = w.exact;
  } catch (const gradseg::error& e) {
    j["error"] = e.what();  // e.g. AllZeroDifferences when comparing a report to itself
  }
  return j;
}

int run_analyze(const AnalyzeArgs& a) {
  ordered_json out;
  const bool compare_mode = !a.report_a.empty() || !a.report_b.empty();
  const bool bin_mode = !a.report.empty();
  if (compare_mode == bin_mode)
    gradseg::fail(gradseg::errc::invalid_argument,
                  "use either --report-a/--report-b or --report/--volumes/--bins");

  if (compare_mode) {
    if (a.report_a.empty() || a.report_b.empty())
      gradseg::fail(gradseg::errc::invalid_argument, "need both --report-a and --report-b");
    const auto ra = gradseg::metrics::report_from_json(load_json(a.report_a));
    const auto rb = gradseg::metrics::report_from_json(load_json(a.report_b));
    out["comparison"]["GTVp"] = wilcoxon_json(ra, rb, 1);
    out["comparison"]["GTVn"] = wilcoxon_json(ra, rb, 2);
  } else {
    if (a.volumes.empty() || a.bins.size() < 2)
      gradseg::fail(gradseg::errc::invalid_argument,
                    "--report needs --volumes and --bins E0,E1[,E2...]");
    const auto report = gradseg::metrics::report_from_json(load_json(a.report));
    std::map<std::pair<std::string, std::uint8_t>, double> dsc_by_case;
    for (const auto& c : report.cases) {
      dsc_by_case[{c.id, 1}] = c.gtvp.dsc;
      dsc_by_case[{c.id, 2}] = c.gtvn.dsc;
    }
    std::array<std::vector<gradseg::stats::VolumeChangeRecord>, 2> records;
    for (const auto& row : load_json(a.volumes)) {
      gradseg::stats::VolumeChangeRecord rec;
      rec.id = row.at("id").get<std::string>();
      const auto label_str = row.at("label").get<std::string>();
      rec.label = label_str == "GTVp" ? 1 : 2;
      rec.pre_cc = row.at("pre_cc").get<double>();
      rec.mid_cc = row.at("mid_cc").get<double>();
      const auto it = dsc_by_case.find({rec.id, rec.label});
      if (it == dsc_by_case.end()) continue;  // volume rows without a scored case are skipped
      rec.dsc = it->second;
      records[rec.label - 1].push_back(rec);
    }
    for (std::uint8_t label : {std::uint8_t{1}, std::uint8_t{2}}) {
      const auto analysis = gradseg::stats::bin_volume_records(records[label - 1], a.bins);
      ordered_json jl;
      jl["edges"] = a.bins;
      jl["bins"] = ordered_json::array();
      for (const auto& bin : analysis.bins) {
        ordered_json jb;
        jb["lo"] = bin.lo;
        jb["hi"] = bin.hi;
        jb["n"] = bin.records.size();
        jb["rho"] = bin.rho ? ordered_json(*bin.rho) : ordered_json(nullptr);
        ordered_json ids = ordered_json::array();
        for (const auto& rec : bin.records) ids.push_back(rec.id);
        jb["ids"] = ids;
        jl["bins"].push_back(jb);
      }
      jl["underflow"] = analysis.underflow.size();
      jl["overflow"] = analysis.overflow.size();
      ordered_json zv = ordered_json::array();
      for (const auto& rec : analysis.zero_volume) zv.push_back(rec.id);
      jl["zero_volume"] = zv;
      out["binned"][gradseg::metrics::label_name(label)] = jl;
    }
  }
  write_json_atomic(a.out, out);
  std::cout << "analysis -> " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prior-guided gradient-map preprocessing and segmentation evaluation"};
  app.require_subcommand(1);

  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom", "generate a synthetic longitudinal cohort");
  phantom->add_option("--n", pa.n, "number of patients")->check(CLI::PositiveNumber);
  phantom->add_option("--out", pa.out, "output dataset root")->required();
  phantom->add_option("--seed", pa.seed_flag, "cohort seed")->expected(1);
  phantom->add_option("--grid", pa.grid, "grid extents NX,NY,NZ")->delimiter(',')->expected(3);
  phantom->add_option("--spacing", pa.spacing, "voxel spacing mm SX,SY,SZ")->delimiter(',')->expected(3);
  phantom->add_option("--shrink", pa.shrink, "tumor shrinkage range LO,HI")->delimiter(',')->expected(2);
  phantom->add_option("--jitter", pa.jitter, "max registration jitter of the prior, voxels");
  phantom->add_option("--gtvp-prob", pa.gtvp_prob, "probability a patient has a GTVp");
  phantom->add_option("--gtvp-axes", pa.gtvp_axes, "GTVp semi-axis range mm LO,HI")->delimiter(',')->expected(2);
  phantom->add_option("--gtvn-count", pa.gtvn_count, "GTVn count range LO,HI")->delimiter(',')->expected(2);
  phantom->add_option("--gtvn-axes", pa.gtvn_axes, "GTVn semi-axis range mm LO,HI")->delimiter(',')->expected(2);
  phantom->add_option("--noise", pa.noise, "additive Gaussian noise sigma");
  phantom->add_option("--contrast", pa.contrast, "tumor intensity above background");
  phantom->add_option("--background", pa.background, "background intensity");
  phantom->add_option("--jobs", pa.jobs, "parallel patients");

  PreprocessArgs pp;
  auto* preprocess = app.add_subcommand("preprocess", "build two-channel samples and ROI sets");
  preprocess->add_option("--data", pp.data, "dataset root")->required();
  preprocess->add_option("--out", pp.out, "output directory")->required();
  preprocess->add_option("--folds", pp.folds_path, "folds.json (restricts to one fold's training set)");
  preprocess->add_option("--fold", pp.fold, "fold index to preprocess");
  preprocess->add_flag("--resample", pp.resample, "resample to the configured target spacing first");
  preprocess->add_option("--resample-spacing", pp.resample_spacing, "target spacing mm SX,SY,SZ")
      ->delimiter(',')
      ->expected(3);
  preprocess->add_option("--jobs", pp.jobs, "parallel samples");
  pp.config.attach(preprocess);

  FoldsArgs fa;
  auto* folds = app.add_subcommand("folds", "deterministic k-fold split at patient level");
  folds->add_option("--data", fa.data, "dataset root (ids discovered by scanning)");
  folds->add_option("--ids", fa.ids_path, "text file with one patient id per line");
  folds->add_option("--out", fa.out, "output folds.json")->required();
  fa.config.attach(folds);

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against ground truth");
  evaluate->add_option("--pred", ea.pred_dir, "directory of {id}.nii[.gz] prediction masks");
  evaluate->add_option("--gt", ea.gt_dir, "directory of {id}.nii[.gz] ground-truth masks");
  evaluate->add_option("--data", ea.data, "dataset root (evaluate one role against another)");
  evaluate->add_option("--pred-role", ea.pred_role, "role used as prediction (with --data)");
  evaluate->add_option("--gt-role", ea.gt_role, "role used as ground truth (with --data)");
  evaluate->add_option("--out", ea.out, "output report JSON")->required();
  evaluate->add_option("--csv", ea.csv, "also write per-case CSV");
  evaluate->add_option("--jobs", ea.jobs, "parallel cases");
  ea.config.attach(evaluate);

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "paired comparison or volume-change correlation");
  analyze->add_option("--report-a", aa.report_a, "report JSON, method A");
  analyze->add_option("--report-b", aa.report_b, "report JSON, method B");
  analyze->add_option("--report", aa.report, "report JSON for volume-change binning");
  analyze->add_option("--volumes", aa.volumes, "volumes.json with per-case pre/mid cc");
  analyze->add_option("--bins", aa.bins, "mid-RT volume bin edges in cc, ascending")->delimiter(',');
  analyze->add_option("--out", aa.out, "output stats JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(phantom)) return run_phantom(pa);
    if (app.got_subcommand(preprocess)) return run_preprocess(pp);
    if (app.got_subcommand(folds)) return run_folds(fa);
    if (app.got_subcommand(evaluate)) return run_evaluate(ea);
    if (app.got_subcommand(analyze)) return run_analyze(aa);
  } catch (const gradseg::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
