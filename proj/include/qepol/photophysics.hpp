#pragma once

// Parametric emitter model: excitation response, decay, time-dependent
// emission polarization and the Huang-Rhys emission spectrum.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "qepol/error.hpp"
#include "qepol/geometry.hpp"
#include "qepol/rng.hpp"

namespace qepol {

/// Photophysical parameters of one emitter.
///
/// Emission polarization relaxes after excitation as
///   V(t)     = vis_ss - vis_delta * exp(-t / relax_ns)
///   theta(t) = em_axis_ss + em_axis_delta * exp(-t / relax_ns)
/// with a single relaxation constant shared by both.
struct EmitterModel {
  double lifetime_ns = 3.96;
  AxialAngle exc_axis{};
  AxialAngle em_axis_ss{};
  double em_axis_delta = 0.0;  ///< degrees
  double vis_ss = 1.0;
  double vis_delta = 0.0;
  double relax_ns = 1.0;
  double exc_prob_max = 0.1;   ///< excitation probability per pulse at full overlap
  double exc_visibility = 1.0;
};

inline void validate(const EmitterModel& m) {
  detail::require(std::isfinite(m.lifetime_ns) && m.lifetime_ns > 0.0, "lifetime_ns must be > 0");
  detail::require(std::isfinite(m.relax_ns) && m.relax_ns > 0.0, "relax_ns must be > 0");
  detail::require(std::isfinite(m.em_axis_delta), "em_axis_delta must be finite");
  detail::require(m.vis_ss >= 0.0 && m.vis_ss <= 1.0, "vis_ss must lie in [0, 1]");
  // V(t) is monotone between V(0) and V_ss, so checking both ends covers every t
  const double v0 = m.vis_ss - m.vis_delta;
  detail::require(std::isfinite(m.vis_delta) && v0 >= 0.0 && v0 <= 1.0,
                  "vis_ss - vis_delta must lie in [0, 1]");
  detail::require(m.exc_prob_max >= 0.0 && m.exc_prob_max <= 1.0, "exc_prob_max must lie in [0, 1]");
  detail::require(m.exc_visibility >= 0.0 && m.exc_visibility <= 1.0, "exc_visibility must lie in [0, 1]");
}

struct EmissionState {
  AxialAngle axis{};
  double visibility = 1.0;
};

/// Per-pulse excitation probability for a linearly polarized laser.
inline double excitation_probability(const EmitterModel& m, AxialAngle laser_axis, double power_scale) {
  detail::require(power_scale >= 0.0, "power_scale must be >= 0");
  const double overlap = 0.5 * (1.0 + m.exc_visibility * std::cos(2.0 * (laser_axis.radians() - m.exc_axis.radians())));
  return std::clamp(m.exc_prob_max * power_scale * overlap, 0.0, 1.0);
}

inline EmissionState emission_state_at(const EmitterModel& m, double t_ns) {
  detail::require(t_ns >= 0.0, "emission time must be >= 0");
  const double decay = std::exp(-t_ns / m.relax_ns);
  return {AxialAngle(m.em_axis_ss.degrees() + m.em_axis_delta * decay),
          std::clamp(m.vis_ss - m.vis_delta * decay, 0.0, 1.0)};
}

/// Inverse CDF of the excited-state decay: t = -tau ln(1 - u).
inline double decay_delay_from_uniform(double lifetime_ns, double u) { return -lifetime_ns * std::log1p(-u); }

inline double sample_decay_delay(const EmitterModel& m, Rng& rng) {
  return decay_delay_from_uniform(m.lifetime_ns, rng.uniform());
}

/// Probability that an emitted photon passes a linear analyzer.
inline double detection_probability(const EmissionState& s, AxialAngle polarizer) {
  return 0.5 * (1.0 + s.visibility * std::cos(2.0 * (polarizer.radians() - s.axis.radians())));
}

/// Average analyzer transmission over the emission-time distribution exp(-t/tau)/tau.
///
/// Composite Simpson on u = 1 - exp(-t/tau), which maps the decay onto [0, 1)
/// with uniform density. `panels` must be even.
inline double mean_detection_probability(const EmitterModel& m, AxialAngle polarizer, int panels = 2000) {
  double acc = 0.0;
  const double h = 1.0 / panels;
  for (int i = 0; i <= panels; ++i) {
    const double u = std::min(i * h, 1.0 - 1e-15);
    const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * detection_probability(emission_state_at(m, decay_delay_from_uniform(m.lifetime_ns, u)), polarizer);
  }
  return acc * h / 3.0;
}

inline constexpr double kHcEvNm = 1239.841984;  // h c in eV nm

struct HuangRhysSpectrum {
  double zpl_nm = 573.0;
  double huang_rhys_S = 1.0;
  double phonon_energy_meV = 160.0;
  int max_phonon_n = 10;
  double fwhm_nm = 5.0;  ///< Lorentzian broadening of every replica
};

/// Poisson replica weights w_n = exp(-S) S^n / n! for n = 0..max_phonon_n.
inline std::vector<double> huang_rhys_weights(const HuangRhysSpectrum& s) {
  detail::require(s.huang_rhys_S >= 0.0 && s.max_phonon_n >= 0, "Huang-Rhys S and max_phonon_n must be >= 0");
  std::vector<double> w(static_cast<std::size_t>(s.max_phonon_n) + 1);
  double term = std::exp(-s.huang_rhys_S);
  for (int n = 0; n <= s.max_phonon_n; ++n) {
    if (n > 0) term *= s.huang_rhys_S / n;
    w[static_cast<std::size_t>(n)] = term;
  }
  return w;
}

/// Replica centre wavelengths E_n = E_zpl - n hbar omega. Replicas at non-positive energy are dropped.
inline std::vector<double> huang_rhys_replica_nm(const HuangRhysSpectrum& s) {
  const double e_zpl = kHcEvNm / s.zpl_nm;
  std::vector<double> out;
  for (int n = 0; n <= s.max_phonon_n; ++n) {
    const double e = e_zpl - n * s.phonon_energy_meV * 1e-3;
    if (e <= 0.0) break;
    out.push_back(kHcEvNm / e);
  }
  return out;
}

/// Emission spectral density (per nm) on the given wavelength grid.
///
/// Each replica is a Lorentzian in wavelength scaled by its Poisson weight. Lorentzian
/// tails outside any finite window carry percent-level area, so the series is rescaled
/// until its trapezoid integral over the grid equals the summed replica weights.
inline std::vector<double> huang_rhys_lineshape(const HuangRhysSpectrum& s, std::span<const double> grid_nm) {
  detail::require(s.zpl_nm > 0.0 && s.phonon_energy_meV > 0.0 && s.fwhm_nm > 0.0,
                  "zpl_nm, phonon_energy_meV and fwhm_nm must be > 0");
  detail::require(grid_nm.size() >= 2, "wavelength grid needs at least two points");
  for (std::size_t i = 1; i < grid_nm.size(); ++i)
    detail::require(grid_nm[i] > grid_nm[i - 1], "wavelength grid must be strictly increasing");
  detail::require(grid_nm.front() <= s.zpl_nm && grid_nm.back() >= s.zpl_nm, "wavelength grid must cover the ZPL");

  const auto weights = huang_rhys_weights(s);
  const auto centres = huang_rhys_replica_nm(s);
  const double hw = 0.5 * s.fwhm_nm;
  std::vector<double> out(grid_nm.size(), 0.0);
  for (std::size_t n = 0; n < centres.size(); ++n) {
    for (std::size_t i = 0; i < grid_nm.size(); ++i) {
      const double d = grid_nm[i] - centres[n];
      out[i] += weights[n] * hw / (std::numbers::pi * (d * d + hw * hw));
    }
  }
  double area = 0.0, weight = 0.0;
  for (std::size_t i = 1; i < grid_nm.size(); ++i) area += 0.5 * (grid_nm[i] - grid_nm[i - 1]) * (out[i] + out[i - 1]);
  for (std::size_t n = 0; n < centres.size(); ++n) weight += weights[n];
  if (area > 0.0)
    for (double& v : out) v *= weight / area;
  return out;
}

}  // namespace qepol
