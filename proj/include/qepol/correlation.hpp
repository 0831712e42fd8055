#pragma once

// Cross-channel coincidence histograms and the pulsed g2(0) estimator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "qepol/error.hpp"
#include "qepol/fitting.hpp"
#include "qepol/timetag.hpp"

namespace qepol {

/// Histogram of t1 - t0 over [-half_range, half_range), bins of width bin_ps.
/// Bin i covers [-half_range + i * bin_ps, -half_range + (i + 1) * bin_ps).
struct G2Histogram {
  std::int64_t bin_ps = 0;
  std::int64_t half_range_ps = 0;
  std::vector<std::uint64_t> counts;

  double delay_lo_ps(std::size_t i) const { return static_cast<double>(-half_range_ps + static_cast<std::int64_t>(i) * bin_ps); }
  double delay_center_ps(std::size_t i) const { return delay_lo_ps(i) + 0.5 * static_cast<double>(bin_ps); }

  std::size_t bin_of(std::int64_t delay_ps) const {
    return static_cast<std::size_t>((delay_ps + half_range_ps) / bin_ps);
  }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

inline G2Histogram make_g2_histogram(std::int64_t max_delay_ps, std::int64_t bin_ps) {
  detail::require(bin_ps >= 1, "bin_ps must be >= 1");
  detail::require(max_delay_ps >= bin_ps, "max_delay must be at least one bin");
  G2Histogram h;
  h.bin_ps = bin_ps;
  const std::int64_t half_bins = (max_delay_ps + bin_ps - 1) / bin_ps;
  h.half_range_ps = half_bins * bin_ps;
  h.counts.assign(static_cast<std::size_t>(2 * half_bins), 0);
  return h;
}

/// Start-multistop correlation of channel 1 against channel 0.
///
/// Every (channel-0, channel-1) pair with |t1 - t0| inside the histogram range
/// is counted once. Runs in O(n + pairs) with a sliding window over channel 1.
inline G2Histogram correlate_g2(const TimeTagStream& stream, std::int64_t max_delay_ps, std::int64_t bin_ps) {
  const auto t0 = stream.channel_times(0);
  const auto t1 = stream.channel_times(1);
  detail::require(!t0.empty() && !t1.empty(), "g2 correlation needs tags on both channel 0 and channel 1");
  detail::require(t0.size() + t1.size() == stream.records.size(), "g2 correlation expects channels 0 and 1 only");
  detail::require(std::is_sorted(t0.begin(), t0.end()) && std::is_sorted(t1.begin(), t1.end()),
                  "time tags must be sorted");

  G2Histogram h = make_g2_histogram(max_delay_ps, bin_ps);
  const std::int64_t r = h.half_range_ps;
  std::size_t lo = 0;
  for (const std::uint64_t a_u : t0) {
    const auto a = static_cast<std::int64_t>(a_u);
    while (lo < t1.size() && static_cast<std::int64_t>(t1[lo]) < a - r) ++lo;
    for (std::size_t j = lo; j < t1.size(); ++j) {
      const std::int64_t d = static_cast<std::int64_t>(t1[j]) - a;
      if (d >= r) break;
      ++h.counts[h.bin_of(d)];
    }
  }
  return h;
}

struct G2Options {
  double window_fraction = 1.0;  ///< each peak window spans window_fraction * period
  bool comb_cross_check = true;
  double tau_guess_ns = 4.0;
};

struct G2ZeroEstimate {
  double g2_0 = 0.0;  ///< centre-window area / mean side-window area
  double g2_0_err = 0.0;
  double center_counts = 0.0;
  double side_mean = 0.0;
  int n_side_peaks = 0;

  // comb-fit cross-check
  bool has_fit = false;
  double fit_g2_0 = 0.0;           ///< comb parameter: background-corrected centre/side peak ratio
  double fit_g2_0_err = 0.0;
  double fit_window_ratio = 0.0;   ///< same window ratio, evaluated on the fitted curve
  double fit_window_ratio_err = 0.0;
  bool fit_converged = false;
  bool consistent = false;         ///< area ratio and fitted-curve ratio agree within 3 combined sigma
  G2PulsedParams fit_params;
};

namespace detail {

/// Sum of `values` over bins whose centre lies in [centre - half, centre + half).
template <class F>
double window_sum(const G2Histogram& h, double centre_ps, double half_ps, F&& value) {
  double s = 0.0;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double c = h.delay_center_ps(i);
    if (c >= centre_ps - half_ps && c < centre_ps + half_ps) s += value(i);
  }
  return s;
}

}  // namespace detail

inline G2ZeroEstimate estimate_g2_zero(const G2Histogram& h, double period_ns, const G2Options& opt = {}) {
  detail::require(period_ns > 0.0, "period must be > 0");
  detail::require(opt.window_fraction > 0.0 && opt.window_fraction <= 1.0, "window_fraction must lie in (0, 1]");
  const double period = period_ns * 1e3;
  const double half = 0.5 * opt.window_fraction * period;
  const double range = static_cast<double>(h.half_range_ps);

  auto counts_at = [&](std::size_t i) { return static_cast<double>(h.counts[i]); };
  G2ZeroEstimate out;
  out.center_counts = detail::window_sum(h, 0.0, half, counts_at);
  std::vector<double> side;
  for (int k = 1;; ++k) {
    const double c = k * period;
    if (c + half > range) break;
    side.push_back(detail::window_sum(h, c, half, counts_at));
    side.push_back(detail::window_sum(h, -c, half, counts_at));
  }
  out.n_side_peaks = static_cast<int>(side.size());
  detail::require(side.size() >= 5, "g2 estimate needs at least 5 side peaks inside the histogram range");
  double side_sum = 0.0;
  for (double s : side) side_sum += s;
  out.side_mean = side_sum / static_cast<double>(side.size());
  if (out.side_mean <= 0.0) throw NumericalError("g2 side windows are empty");

  out.g2_0 = out.center_counts / out.side_mean;
  // Poisson errors on the centre and on the pooled side counts
  const double rel_c = std::max(out.center_counts, 1.0) / (out.side_mean * out.side_mean);
  const double rel_s = out.g2_0 * out.g2_0 / side_sum;
  out.g2_0_err = std::sqrt(rel_c + rel_s);

  if (!opt.comb_cross_check) return out;

  std::vector<double> d_ns(h.counts.size()), y(h.counts.size());
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    d_ns[i] = h.delay_center_ps(i) * 1e-3;
    y[i] = counts_at(i);
  }
  const double bin_ns = static_cast<double>(h.bin_ps) * 1e-3;
  const G2CombFit fit = fit_g2_pulsed(d_ns, y, bin_ns, period_ns, opt.tau_guess_ns);
  out.has_fit = true;
  out.fit_params = fit.params;
  out.fit_g2_0 = fit.params.g2_0;
  out.fit_g2_0_err = fit.g2_0_err;
  out.fit_converged = fit.fit.converged;

  // window ratio of the fitted curve, with its error propagated through the covariance
  auto curve_ratio = [&](const Eigen::Vector4d& p) {
    const G2PulsedParams g{p[0], p[1], period_ns, std::max(p[2], 1e-6), p[3]};
    auto model_at = [&](std::size_t i) { return bin_ns * eval_g2_pulsed(g, d_ns[i]); };
    const double c = detail::window_sum(h, 0.0, half, model_at);
    double s = 0.0;
    int n = 0;
    for (int k = 1;; ++k) {
      const double ck = k * period;
      if (ck + half > range) break;
      s += detail::window_sum(h, ck, half, model_at) + detail::window_sum(h, -ck, half, model_at);
      n += 2;
    }
    return c / (s / n);
  };
  const Eigen::Vector4d p = fit.fit.params;
  out.fit_window_ratio = curve_ratio(p);
  Eigen::Vector4d grad;
  for (int j = 0; j < 4; ++j) {
    const double step = 1e-6 * std::max(1.0, std::fabs(p[j]));
    Eigen::Vector4d a = p, b = p;
    a[j] += step;
    b[j] -= step;
    grad[j] = (curve_ratio(a) - curve_ratio(b)) / (2.0 * step);
  }
  const Eigen::MatrixXd& cov = fit.fit.covariance;
  const double var = cov.allFinite() ? (grad.transpose() * cov * grad)(0, 0) : std::numeric_limits<double>::infinity();
  out.fit_window_ratio_err = std::sqrt(std::max(var, 0.0));
  const double comb_sigma = std::hypot(out.g2_0_err, out.fit_window_ratio_err);
  out.consistent = std::fabs(out.g2_0 - out.fit_window_ratio) <= 3.0 * comb_sigma;
  return out;
}

}  // namespace qepol
