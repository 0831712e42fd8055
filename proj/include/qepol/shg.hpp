#pragma once

// Crystal-axis extraction from six-fold SHG polarimetry and the pump-power law.

#include <cmath>
#include <span>

#include "qepol/error.hpp"
#include "qepol/fitting.hpp"
#include "qepol/geometry.hpp"
#include "qepol/sweep.hpp"

namespace qepol {

struct ShgResult {
  CrystalAxes crystal;  ///< theta0 in [0, 60)
  double theta0_err = 0.0;
  double amplitude = 0.0;
  double amplitude_err = 0.0;
  double background = 0.0;
  bool converged = false;
  double reduced_chi2 = 0.0;
};

inline ShgResult analyze_shg_sweep(const PolarSweep& sweep, ShgGeometry geometry = ShgGeometry::parallel) {
  sweep.validate();
  detail::require(sweep.size() >= 8, "SHG analysis needs at least 8 points");
  const SixfoldFit f = fit_sixfold(sweep.angles_deg, sweep.intensities, sweep.errors, geometry);
  ShgResult r;
  r.crystal.theta0 = AxialAngle(f.params.theta0_deg);
  r.theta0_err = f.theta0_err;
  r.amplitude = f.params.amplitude;
  r.amplitude_err = f.amplitude_err;
  r.background = f.params.background;
  r.converged = f.fit.converged;
  r.reduced_chi2 = f.fit.reduced_chi2;
  return r;
}

struct PowerLaw {
  double exponent = 0.0;
  double exponent_err = 0.0;
  double prefactor = 0.0;
};

/// Weighted straight-line fit of log(amplitude) against log(power).
inline PowerLaw fit_power_law(std::span<const double> power, std::span<const double> amplitude,
                              std::span<const double> amplitude_err) {
  const std::size_t n = power.size();
  detail::require(n >= 2 && amplitude.size() == n && amplitude_err.size() == n, "power law needs matching series");
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    detail::require(power[i] > 0.0 && amplitude[i] > 0.0, "power law inputs must be > 0");
    const double x = std::log(power[i]), y = std::log(amplitude[i]);
    const double sy_rel = amplitude_err[i] > 0.0 ? amplitude_err[i] / amplitude[i] : 1.0;
    const double w = 1.0 / (sy_rel * sy_rel);
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
  }
  const double det = sw * sxx - sx * sx;
  detail::require(det > 0.0, "power law needs at least two distinct powers");
  PowerLaw p;
  p.exponent = (sw * sxy - sx * sy) / det;
  p.exponent_err = std::sqrt(sw / det);
  p.prefactor = std::exp((sy - p.exponent * sx) / sw);
  return p;
}

}  // namespace qepol
