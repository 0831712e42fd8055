#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "qepol/error.hpp"
#include "qepol/fitting.hpp"
#include "qepol/timetag.hpp"

namespace qepol {

/// Counts against time after the sync edge. Bin i covers [i * bin_ps, (i + 1) * bin_ps).
struct DecayCurve {
  double bin_ps = 1.0;
  std::vector<double> counts;

  double center_ns(std::size_t i) const { return (static_cast<double>(i) + 0.5) * bin_ps * 1e-3; }
  double total() const {
    double s = 0.0;
    for (double c : counts) s += c;
    return s;
  }
};

/// TCSPC histogram of (timestamp mod sync period) over all channels.
inline DecayCurve build_decay_histogram(const TimeTagStream& stream, std::uint64_t sync_period_ps, std::uint64_t bin_ps) {
  detail::require(sync_period_ps > 0, "sync period must be > 0");
  detail::require(bin_ps > 0 && bin_ps <= sync_period_ps, "bin must lie in (0, sync period]");
  DecayCurve c;
  c.bin_ps = static_cast<double>(bin_ps);
  c.counts.assign((sync_period_ps + bin_ps - 1) / bin_ps, 0.0);
  for (const auto& r : stream.records) c.counts[(r.timestamp_ps % sync_period_ps) / bin_ps] += 1.0;
  return c;
}

/// Fit of the IRF-convolved exponential to a decay curve with known IRF width.
inline LifetimeFit fit_lifetime(const DecayCurve& curve, double irf_sigma_ns, const FitOptions& opt = {}) {
  std::vector<double> t(curve.counts.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = curve.center_ns(i);
  return fit_exp_irf(t, curve.counts, curve.bin_ps * 1e-3, irf_sigma_ns, opt);
}

}  // namespace qepol
