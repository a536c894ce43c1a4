#pragma once

// Nonparametric statistics: Wilcoxon signed-rank for paired method comparison
// and Spearman rank correlation, plus volume-change binning.
//
// Wilcoxon drops zero differences (classic handling) and mid-ranks ties.
// With n_effective <= 25 the two-sided p comes from the exact null
// distribution of W+ (all 2^n sign assignments, computed by subset-sum
// convolution over the observed ranks); above that, a normal approximation
// with tie correction and continuity correction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradseg/core.hpp"

namespace gradseg::stats {

inline constexpr int kExactEnumerationLimit = 25;

namespace detail {

/// Mid-ranks (1-based); tied values share the average of their rank range.
inline std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

struct WilcoxonResult {
  double w_plus = 0.0;       // sum of ranks of positive differences
  double p_two_sided = 1.0;
  int n_effective = 0;       // pairs remaining after zero differences are dropped
  bool exact = false;
};

inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    fail(errc::invalid_argument, "paired samples must be equal-length and nonempty");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      fail(errc::invalid_argument, "paired samples must be finite");
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) fail(errc::all_zero_differences, "all paired differences are zero");

  const std::size_t n = diffs.size();
  std::vector<double> abs_diffs(n);
  for (std::size_t i = 0; i < n; ++i) abs_diffs[i] = std::abs(diffs[i]);
  const auto ranks = detail::midranks(abs_diffs);

  WilcoxonResult r;
  r.n_effective = static_cast<int>(n);
  for (std::size_t i = 0; i < n; ++i)
    if (diffs[i] > 0.0) r.w_plus += ranks[i];

  if (n <= kExactEnumerationLimit) {
    // Exact: distribution of W+ over all sign assignments. Mid-ranks are
    // multiples of 1/2, so doubling makes every achievable sum an integer.
    std::vector<std::int64_t> scaled(n);
    std::int64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = static_cast<std::int64_t>(std::llround(ranks[i] * 2.0));
      total += scaled[i];
    }
    std::vector<std::uint64_t> ways(static_cast<std::size_t>(total) + 1, 0);
    ways[0] = 1;
    for (std::size_t i = 0; i < n; ++i)
      for (std::int64_t s = total; s >= scaled[i]; --s)
        ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - scaled[i])];

    const std::int64_t obs = static_cast<std::int64_t>(std::llround(r.w_plus * 2.0));
    std::uint64_t le = 0, ge = 0;
    for (std::int64_t s = 0; s <= total; ++s) {
      if (s <= obs) le += ways[static_cast<std::size_t>(s)];
      if (s >= obs) ge += ways[static_cast<std::size_t>(s)];
    }
    const double denom = std::ldexp(1.0, static_cast<int>(n));  // 2^n assignments
    const double p_le = static_cast<double>(le) / denom;
    const double p_ge = static_cast<double>(ge) / denom;
    r.p_two_sided = std::min(1.0, 2.0 * std::min(p_le, p_ge));
    r.exact = true;
    return r;
  }

  // Normal approximation with tie and continuity corrections.
  const double dn = static_cast<double>(n);
  const double mean = dn * (dn + 1.0) / 4.0;
  double tie_term = 0.0;
  {
    std::vector<double> sorted(abs_diffs);
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
  const double d = r.w_plus - mean;
  const double cc = d > 0.0 ? -0.5 : (d < 0.0 ? 0.5 : 0.0);
  const double z = (d + cc) / std::sqrt(var);
  r.p_two_sided = std::min(1.0, 2.0 * detail::normal_sf(std::abs(z)));
  r.exact = false;
  return r;
}

/// Spearman's rho: Pearson correlation of mid-ranks.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    fail(errc::degenerate_input, "spearman needs two equal-length samples of size >= 2");
  const auto rx = detail::midranks(x);
  const auto ry = detail::midranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) fail(errc::degenerate_input, "constant sample has no rank variance");
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Volume-change binning

struct VolumeChangeRecord {
  std::string id;
  std::uint8_t label = 1;
  double pre_cc = 0.0;
  double mid_cc = 0.0;
  double dsc = 0.0;

  double delta_cc() const { return pre_cc - mid_cc; }
};

struct VolumeBin {
  double lo = 0.0;  // inclusive
  double hi = 0.0;  // exclusive
  std::vector<VolumeChangeRecord> records;
  std::optional<double> rho;  // spearman(delta_cc, dsc), when computable
};

struct BinnedAnalysis {
  std::vector<VolumeBin> bins;
  std::vector<VolumeChangeRecord> underflow;
  std::vector<VolumeChangeRecord> overflow;
  std::vector<VolumeChangeRecord> zero_volume;  // mid_cc == 0, kept out of the bins
};

/// Partition records by mid-RT volume into half-open bins [e_i, e_{i+1}).
/// Records with zero mid volume are flagged separately; every record lands in
/// exactly one group.
inline BinnedAnalysis bin_volume_records(std::span<const VolumeChangeRecord> records,
                                         std::span<const double> edges) {
  if (edges.size() < 2) fail(errc::invalid_argument, "need at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1]))
      fail(errc::invalid_argument, "bin edges must be strictly ascending");

  BinnedAnalysis out;
  out.bins.resize(edges.size() - 1);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    out.bins[i].lo = edges[i];
    out.bins[i].hi = edges[i + 1];
  }
  for (const auto& rec : records) {
    if (rec.mid_cc == 0.0) {
      out.zero_volume.push_back(rec);
      continue;
    }
    if (rec.mid_cc < edges.front()) {
      out.underflow.push_back(rec);
      continue;
    }
    if (rec.mid_cc >= edges.back()) {
      out.overflow.push_back(rec);
      continue;
    }
    const auto it = std::upper_bound(edges.begin(), edges.end(), rec.mid_cc);
    out.bins[static_cast<std::size_t>(it - edges.begin()) - 1].records.push_back(rec);
  }
  for (auto& bin : out.bins) {
    if (bin.records.size() < 2) continue;
    std::vector<double> delta, dsc;
    for (const auto& rec : bin.records) {
      delta.push_back(rec.delta_cc());
      dsc.push_back(rec.dsc);
    }
    try {
      bin.rho = spearman(delta, dsc);
    } catch (const error&) {
      // constant group: correlation undefined, leave empty
    }
  }
  return out;
}

}  // namespace gradseg::stats
