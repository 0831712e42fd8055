#pragma once

// Polarization extraction from analyzer sweeps and the time-binned
// analysis of polarization-resolved decay maps.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "qepol/error.hpp"
#include "qepol/fitting.hpp"
#include "qepol/geometry.hpp"
#include "qepol/sweep.hpp"

namespace qepol {

struct PolarizationOptions {
  double background = 0.0;  ///< known flat background per point; not fitted
  FitOptions fit{};
};

struct PolarizationResult {
  AxialAngle axis{};
  double axis_err = 0.0;
  double visibility = 0.0;
  double visibility_err = 0.0;
  double amplitude = 0.0;
  double amplitude_err = 0.0;
  double background = 0.0;
  bool axis_defined = true;
  bool converged = false;
  double reduced_chi2 = 0.0;
  int n_iterations = 0;
};

namespace detail {

/// Raw angular span including one typical step, so 0:10:170 counts as 180.
inline double sweep_span(std::vector<double> a) {
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  if (a.size() < 2) return 0.0;
  std::vector<double> steps;
  for (std::size_t i = 1; i < a.size(); ++i) steps.push_back(a[i] - a[i - 1]);
  std::nth_element(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2), steps.end());
  return a.back() - a.front() + steps[steps.size() / 2];
}

}  // namespace detail

/// Multi-start cosine-squared fit of a sweep; the axis is folded into [0, 180).
inline PolarizationResult analyze_polarization_sweep(const PolarSweep& sweep, const PolarizationOptions& opt = {}) {
  sweep.validate();
  detail::require(sweep.size() >= 8, "polarization analysis needs at least 8 points");
  detail::require(detail::sweep_span(sweep.angles_deg) >= 180.0 - 1e-9, "sweep must span at least 180 degrees");

  const CosineFit f = fit_cosine_squared(sweep.angles_deg, sweep.intensities, sweep.errors, opt.background, opt.fit);
  PolarizationResult r;
  r.axis = f.params.axis;
  r.axis_err = f.axis_err;
  r.visibility = f.params.visibility;
  r.visibility_err = f.visibility_err;
  r.amplitude = f.params.amplitude;
  r.amplitude_err = f.amplitude_err;
  r.background = opt.background;
  r.axis_defined = f.axis_defined;
  r.converged = f.fit.converged;
  r.reduced_chi2 = f.fit.reduced_chi2;
  r.n_iterations = f.fit.n_iterations;
  return r;
}

struct DynamicsBin {
  double t_center_ns = 0.0;  ///< count-weighted mean time after excitation
  double t_lo_ns = 0.0;
  double t_hi_ns = 0.0;
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
  double counts = 0.0;
  PolarizationResult fit;
};

struct PolarizationDynamics {
  double t_zero_ps = 0.0;
  double t_cut_ps = 120.0;
  std::vector<DynamicsBin> bins;
};

struct DynamicsOptions {
  double min_counts_per_bin = 2000.0;
  double t_cut_ps = 120.0;  ///< rows starting earlier than t_zero + t_cut are dropped
  PolarizationOptions polarization{};
};

/// Row index where the decay peaks; used as excitation reference when the map has none.
inline std::size_t peak_row(const DecayMap& map) {
  std::size_t best = 0;
  double best_v = -1.0;
  for (std::size_t r = 0; r < map.n_rows; ++r) {
    const double v = map.row_total(r);
    if (v > best_v) {
      best_v = v;
      best = r;
    }
  }
  return best;
}

/// First row kept after the early-time cut.
inline std::size_t first_kept_row(const DecayMap& map, double t_zero_ps, double t_cut_ps) {
  std::size_t r = 0;
  while (r < map.n_rows && map.row_lo(r) < t_zero_ps + t_cut_ps) ++r;
  return r;
}

inline double resolve_t_zero(const DecayMap& map) {
  return map.t_zero_ps ? *map.t_zero_ps : map.row_lo(peak_row(map));
}

/// Adaptive time binning of a decay map followed by a cosine-squared fit per bin.
///
/// Raw rows after the cut are merged front to back until a bin holds at least
/// min_counts_per_bin counts; a short remainder is folded into the last bin.
inline PolarizationDynamics extract_polarization_dynamics(const DecayMap& map, const DynamicsOptions& opt = {}) {
  map.validate();
  detail::require(opt.min_counts_per_bin > 0.0, "min_counts_per_bin must be > 0");
  PolarizationDynamics out;
  out.t_zero_ps = resolve_t_zero(map);
  out.t_cut_ps = opt.t_cut_ps;
  const std::size_t first = first_kept_row(map, out.t_zero_ps, opt.t_cut_ps);

  double kept = 0.0;
  for (std::size_t r = first; r < map.n_rows; ++r) kept += map.row_total(r);
  if (kept < opt.min_counts_per_bin)
    throw InvalidArgument("decay map holds fewer counts after the cut than min_counts_per_bin");

  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t begin = first;
  double acc = 0.0;
  for (std::size_t r = first; r < map.n_rows; ++r) {
    acc += map.row_total(r);
    if (acc >= opt.min_counts_per_bin) {
      ranges.emplace_back(begin, r + 1);
      begin = r + 1;
      acc = 0.0;
    }
  }
  if (begin < map.n_rows) ranges.back().second = map.n_rows;

  for (const auto& [b, e] : ranges) {
    DynamicsBin bin;
    bin.row_begin = b;
    bin.row_end = e;
    double wt = 0.0;
    for (std::size_t r = b; r < e; ++r) {
      const double c = map.row_total(r);
      bin.counts += c;
      wt += c * (map.row_lo(r) + 0.5 * map.bin_ps);
    }
    bin.t_center_ns = (wt / bin.counts - out.t_zero_ps) * 1e-3;
    bin.t_lo_ns = (map.row_lo(b) - out.t_zero_ps) * 1e-3;
    bin.t_hi_ns = (map.row_lo(e) - out.t_zero_ps) * 1e-3;
    bin.fit = analyze_polarization_sweep(sweep_from_rows(map, b, e), opt.polarization);
    out.bins.push_back(bin);
  }
  return out;
}

/// Time-integrated analyzer sweep over exactly the rows that the dynamics analysis keeps.
inline PolarSweep integrated_sweep(const DecayMap& map, double t_cut_ps = 120.0) {
  map.validate();
  return sweep_from_rows(map, first_kept_row(map, resolve_t_zero(map), t_cut_ps), map.n_rows);
}

/// Exponential relaxation fitted jointly to V(t) and theta(t):
///   V(t) = vis_ss - vis_delta exp(-t/relax),  theta(t) = axis_ss + axis_delta exp(-t/relax)
struct RelaxationFit {
  double vis_ss = 0.0, vis_ss_err = 0.0;
  double vis_delta = 0.0, vis_delta_err = 0.0;
  double relax_ns = 0.0, relax_ns_err = 0.0;
  double axis_ss = 0.0, axis_ss_err = 0.0;  ///< degrees
  double axis_delta = 0.0, axis_delta_err = 0.0;
  FitResult fit;
};

inline RelaxationFit fit_relaxation(const PolarizationDynamics& dyn, const FitOptions& opt = {}) {
  std::vector<const DynamicsBin*> usable;
  for (const auto& b : dyn.bins)
    if (b.fit.converged && b.fit.axis_defined && b.fit.visibility_err > 0.0 && b.fit.axis_err > 0.0)
      usable.push_back(&b);
  detail::require(usable.size() >= 6, "relaxation fit needs at least 6 usable time bins");

  // unwrap axes around the late-time value
  const AxialAngle ref = usable.back()->fit.axis;
  const std::size_t n = usable.size();
  std::vector<double> t(n), v(n), sv(n), th(n), sth(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = usable[i]->t_center_ns;
    v[i] = usable[i]->fit.visibility;
    sv[i] = usable[i]->fit.visibility_err;
    th[i] = ref.degrees() + signed_axis_difference(usable[i]->fit.axis, ref);
    sth[i] = usable[i]->fit.axis_err;
  }

  ResidualFn res = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(2 * n));
    const double tau = std::max(p[2], 1e-6);
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(-t[i] / tau);
      r[static_cast<Eigen::Index>(2 * i)] = (v[i] - (p[0] - p[1] * e)) / sv[i];
      r[static_cast<Eigen::Index>(2 * i + 1)] = (th[i] - (p[3] + p[4] * e)) / sth[i];
    }
    return r;
  };

  // late quarter gives the steady state, the earliest bin the initial offset
  double vl = 0.0, tl = 0.0, wl = 0.0;
  for (std::size_t i = n - std::max<std::size_t>(n / 4, 1); i < n; ++i) {
    const double w = 1.0 / (sv[i] * sv[i]);
    vl += w * v[i];
    tl += w * th[i];
    wl += w;
  }
  vl /= wl;
  tl /= wl;
  Eigen::VectorXd init(5);
  init << vl, 0.0, 1.0, tl, 0.0;
  FitOptions o = opt;
  if (o.lower.empty()) o.lower = {-1.0, -2.0, 1e-3, -1e9, -1e9};
  FitResult best;
  bool have = false;
  for (double tau0 : {0.3, 1.0, 3.0}) {
    const double e = std::exp(-t[0] / tau0);
    init[1] = (vl - v[0]) / e;
    init[2] = tau0;
    init[4] = (th[0] - tl) / e;
    FitResult r = levenberg_marquardt(res, init, o);
    if (!have || r.chi2 < best.chi2) {
      best = r;
      have = true;
    }
  }

  RelaxationFit out;
  out.vis_ss = best.params[0];
  out.vis_delta = best.params[1];
  out.relax_ns = best.params[2];
  out.axis_ss = wrap_degrees_180(best.params[3]);
  out.axis_delta = best.params[4];
  out.vis_ss_err = best.error(0);
  out.vis_delta_err = best.error(1);
  out.relax_ns_err = best.error(2);
  out.axis_ss_err = best.error(3);
  out.axis_delta_err = best.error(4);
  out.fit = std::move(best);
  return out;
}

}  // namespace qepol
