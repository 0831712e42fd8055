#pragma once

// Statistics of excitation/emission dipole angles across an emitter cohort.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qepol/error.hpp"
#include "qepol/geometry.hpp"
#include "qepol/rng.hpp"

namespace qepol {

struct DipoleRecord {
  std::string emitter_id;
  AxialAngle exc_axis{};
  double exc_axis_err = 0.0;
  AxialAngle em_axis{};
  double em_axis_err = 0.0;
  double exc_vis = 1.0;
  double em_vis = 1.0;
  double g2_0 = 0.0;
  double lifetime_ns = 0.0;
};

struct LinearSummary {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation (n - 1)
  std::size_t n = 0;
};

inline LinearSummary summarize(std::span<const double> v) {
  LinearSummary s;
  s.n = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

/// Optimal split of 1D data into two groups by within-group sum of squares.
///
/// Label 1 is the upper group (the one seeded at +15 deg for emission offsets),
/// label 2 the lower one. In 1D the optimal two-means partition is contiguous in
/// sorted order, so scanning every cut between distinct values finds the global
/// optimum that Lloyd iterations may miss. Equal values always share a group, and a
/// total spread below 1e-9 counts as a single cluster.
struct TwoMeans {
  std::vector<int> labels;  ///< per input value, 1 or 2
  double mean1 = 0.0, mean2 = 0.0;
  std::size_t size1 = 0, size2 = 0;
  double sse = 0.0;
  bool single_cluster = false;  ///< all values equal: everything in cluster 1
};

inline TwoMeans two_means_1d(std::span<const double> values) {
  detail::require(!values.empty(), "two-means needs at least one value");
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> prefix(n + 1, 0.0), prefix2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + values[order[i]];
    prefix2[i + 1] = prefix2[i] + values[order[i]] * values[order[i]];
  }
  auto sse = [&](std::size_t a, std::size_t b) {  // [a, b)
    const double m = static_cast<double>(b - a);
    const double s = prefix[b] - prefix[a];
    return std::max(0.0, prefix2[b] - prefix2[a] - s * s / m);
  };

  TwoMeans out;
  out.labels.assign(n, 1);
  std::size_t best_cut = 0;
  double best = std::numeric_limits<double>::infinity();
  // spreads at rounding level (e.g. offsets from different but equivalent axes) are one cluster
  const double lo = values[order.front()], hi = values[order.back()];
  const bool spread = hi - lo > 1e-9 * std::max({1.0, std::fabs(lo), std::fabs(hi)});
  for (std::size_t cut = 1; spread && cut < n; ++cut) {
    if (values[order[cut]] == values[order[cut - 1]]) continue;
    const double s = sse(0, cut) + sse(cut, n);
    if (s < best) {
      best = s;
      best_cut = cut;
    }
  }
  if (best_cut == 0) {
    out.single_cluster = true;
    out.mean1 = prefix[n] / static_cast<double>(n);
    out.size1 = n;
    out.sse = sse(0, n);
    return out;
  }
  for (std::size_t i = 0; i < best_cut; ++i) out.labels[order[i]] = 2;
  out.size2 = best_cut;
  out.size1 = n - best_cut;
  out.mean2 = prefix[best_cut] / static_cast<double>(best_cut);
  out.mean1 = (prefix[n] - prefix[best_cut]) / static_cast<double>(out.size1);
  out.sse = best;
  return out;
}

/// Total-least-squares slope of y against x. NaN when undefined.
inline double orthogonal_regression_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (syy - sxx + std::sqrt((syy - sxx) * (syy - sxx) + 4.0 * sxy * sxy)) / (2.0 * sxy);
}

struct RecordOffsets {
  std::string emitter_id;
  double exc_offset = 0.0;  ///< signed offset from the nearest crystal axis
  double em_offset = 0.0;
  AxialAngle exc_nearest_axis{};
  AxialAngle em_nearest_axis{};
  double misalignment = 0.0;         ///< axis_distance(exc, em), [0, 90]
  double misalignment_signed = 0.0;  ///< exc - em folded into [-90, 90)
  int cluster = 1;
};

struct ClusterSummary {
  std::size_t size = 0;
  LinearSummary em_offset;
  LinearSummary exc_offset;
  double slope = std::numeric_limits<double>::quiet_NaN();  ///< em vs exc, orthogonal regression
  bool degenerate = false;
};

struct AngleReport {
  std::vector<RecordOffsets> records;
  LinearSummary exc_offset;
  LinearSummary em_offset;
  LinearSummary misalignment;
  LinearSummary misalignment_signed;
  AxialSummary exc_axes;
  AxialSummary em_axes;
  TwoMeans split;
  ClusterSummary cluster1;
  ClusterSummary cluster2;
  double cluster_spacing = std::numeric_limits<double>::quiet_NaN();  ///< mean1 - mean2 of emission offsets
  bool degenerate = false;
};

inline AngleReport angle_statistics(std::span<const DipoleRecord> records, const CrystalAxes& crystal) {
  detail::require(records.size() >= 2, "angle statistics need at least 2 records");
  AngleReport rep;
  std::vector<double> exc_off, em_off, mis, mis_s, exc_raw, em_raw;
  for (const auto& r : records) {
    RecordOffsets o;
    o.emitter_id = r.emitter_id;
    const auto ne = nearest_crystal_axis(r.exc_axis, crystal);
    const auto nm = nearest_crystal_axis(r.em_axis, crystal);
    o.exc_offset = ne.signed_offset;
    o.em_offset = nm.signed_offset;
    o.exc_nearest_axis = ne.axis;
    o.em_nearest_axis = nm.axis;
    o.misalignment = axis_distance(r.exc_axis, r.em_axis);
    o.misalignment_signed = signed_axis_difference(r.exc_axis, r.em_axis);
    exc_off.push_back(o.exc_offset);
    em_off.push_back(o.em_offset);
    mis.push_back(o.misalignment);
    mis_s.push_back(o.misalignment_signed);
    exc_raw.push_back(r.exc_axis.degrees());
    em_raw.push_back(r.em_axis.degrees());
    rep.records.push_back(o);
  }
  rep.exc_offset = summarize(exc_off);
  rep.em_offset = summarize(em_off);
  rep.misalignment = summarize(mis);
  rep.misalignment_signed = summarize(mis_s);
  rep.exc_axes = axial_summary(exc_raw);
  rep.em_axes = axial_summary(em_raw);

  rep.split = two_means_1d(em_off);
  for (std::size_t i = 0; i < records.size(); ++i) rep.records[i].cluster = rep.split.labels[i];

  auto summarize_cluster = [&](int label) {
    ClusterSummary c;
    std::vector<double> eo, xo, x, y;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (rep.split.labels[i] != label) continue;
      eo.push_back(em_off[i]);
      xo.push_back(exc_off[i]);
      // emission unwrapped next to excitation so each cluster is a straight line
      x.push_back(records[i].exc_axis.degrees());
      y.push_back(records[i].exc_axis.degrees() + signed_axis_difference(records[i].em_axis, records[i].exc_axis));
    }
    c.size = eo.size();
    c.em_offset = summarize(eo);
    c.exc_offset = summarize(xo);
    c.slope = orthogonal_regression_slope(x, y);
    c.degenerate = c.size < 2 || !std::isfinite(c.slope);
    return c;
  };
  rep.cluster1 = summarize_cluster(1);
  rep.cluster2 = summarize_cluster(2);
  if (!rep.split.single_cluster) rep.cluster_spacing = rep.split.mean1 - rep.split.mean2;
  rep.degenerate = rep.split.single_cluster || rep.cluster1.degenerate || rep.cluster2.degenerate;
  return rep;
}

/// Generator for synthetic cohorts. Each emitter sits on a randomly chosen crystal
/// axis: excitation scatters around it, emission around em_shift to either side
/// of it. Both follow the axis, so each emission group has slope one against excitation.
struct CohortSpec {
  std::size_t n = 23;
  double exc_fwhm_deg = 8.0;
  double em_fwhm_deg = 4.0;
  double em_shift_deg = 18.9;
  double axis_err_deg = 1.0;  ///< reported per-record axis uncertainty
  double exc_vis = 0.95;
  double em_vis = 0.9801;
  double g2_0 = 0.017;
  double lifetime_ns = 3.96;
};

inline std::vector<DipoleRecord> synthetic_cohort(const CohortSpec& spec, const CrystalAxes& crystal, std::uint64_t seed) {
  detail::require(spec.n >= 2, "cohort needs at least 2 emitters");
  detail::require(spec.exc_fwhm_deg >= 0.0 && spec.em_fwhm_deg >= 0.0, "cohort widths must be >= 0");
  constexpr double fwhm_per_sigma = 2.354820045030949;
  Rng rng(seed);
  std::vector<DipoleRecord> out;
  for (std::size_t i = 0; i < spec.n; ++i) {
    DipoleRecord r;
    r.emitter_id = "E" + std::to_string(i + 1);
    const auto axis = static_cast<int>(std::min(2.0, std::floor(3.0 * rng.uniform())));
    const double base = crystal.theta0.degrees() + 60.0 * axis;
    const double exc = base + rng.normal(0.0, spec.exc_fwhm_deg / fwhm_per_sigma);
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double em = base + side * spec.em_shift_deg + rng.normal(0.0, spec.em_fwhm_deg / fwhm_per_sigma);
    r.exc_axis = AxialAngle(exc);
    r.em_axis = AxialAngle(em);
    r.exc_axis_err = r.em_axis_err = spec.axis_err_deg;
    r.exc_vis = spec.exc_vis;
    r.em_vis = spec.em_vis;
    r.g2_0 = spec.g2_0;
    r.lifetime_ns = spec.lifetime_ns;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace qepol
