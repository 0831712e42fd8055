#pragma once

// Analytic wavefunction fixtures standing in for ab-initio orbitals, and
// defect-like presets calibrated to reproduce observed dipole-angle behaviour.

#include <cmath>
#include <numbers>
#include <string_view>

#include "qepol/tdm.hpp"

namespace qepol::fixtures {

/// Cubic grid with n points per axis and spacing h, centred on the origin.
inline WavefunctionGrid cubic_grid(std::size_t n, double h, double energy = 0.0) {
  return WavefunctionGrid({n, n, n}, {h, h, h}, energy);
}

template <class F>
void fill(WavefunctionGrid& g, F&& f) {
  for (std::size_t ix = 0; ix < g.dims[0]; ++ix)
    for (std::size_t iy = 0; iy < g.dims[1]; ++iy)
      for (std::size_t iz = 0; iz < g.dims[2]; ++iz)
        g.at(ix, iy, iz) = f(g.coord(0, ix), g.coord(1, iy), g.coord(2, iz));
}

/// exp(-alpha r^2), normalized on the grid.
inline WavefunctionGrid gaussian_s(WavefunctionGrid g, double alpha) {
  fill(g, [alpha](double x, double y, double z) { return cplx(std::exp(-alpha * (x * x + y * y + z * z))); });
  normalize(g);
  return g;
}

/// (d . r) exp(-alpha r^2) for a unit direction d, normalized on the grid.
inline WavefunctionGrid gaussian_p(WavefunctionGrid g, double alpha, Vec3 d) {
  const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  fill(g, [&](double x, double y, double z) {
    return cplx((d[0] * x + d[1] * y + d[2] * z) / n * std::exp(-alpha * (x * x + y * y + z * z)));
  });
  normalize(g);
  return g;
}

/// |<p_d| d/dd |s>| for same-exponent normalized Gaussians: sqrt(alpha).
inline double gaussian_sp_gradient(double alpha) { return std::sqrt(alpha); }

/// Hydrogen 1s, E = -1/2.
inline WavefunctionGrid hydrogen_1s(WavefunctionGrid g) {
  g.energy = -0.5;
  fill(g, [](double x, double y, double z) { return cplx(std::exp(-std::sqrt(x * x + y * y + z * z))); });
  normalize(g);
  return g;
}

/// Hydrogen 2p along z, E = -1/8.
inline WavefunctionGrid hydrogen_2pz(WavefunctionGrid g) {
  g.energy = -0.125;
  fill(g, [](double x, double y, double z) { return cplx(z * std::exp(-0.5 * std::sqrt(x * x + y * y + z * z))); });
  normalize(g);
  return g;
}

/// <1s| z |2p_z> in units of a0.
inline double hydrogen_1s_2pz_dipole() { return 128.0 * std::numbers::sqrt2 / 243.0; }

/// Unit in-plane direction at `deg` from the x axis.
inline Vec3 in_plane(double deg) { return {std::cos(deg * kDegToRad), std::sin(deg * kDegToRad), 0.0}; }

enum class DefectPreset {
  vacancy_like,  ///< strongly strain-coupled: > 4 deg axis shift at 1 % strain
  c2c2_like,     ///< weakly strain-coupled: < 0.5 deg at 1 % strain
};

/// A defect-like transition: s -> p with the polarization axis placed at a
/// chosen offset from the crystal axis, plus the admixture orbitals and
/// mixing constants used by apply_perturbation.
struct DefectFixture {
  TransitionPair pair;
  CrystalAxes crystal;
  WavefunctionGrid field_admix;   ///< tilted p orbital: mostly out of plane, partly in plane
  WavefunctionGrid strain_admix;  ///< in-plane p orbital perpendicular to the dipole
  double field_mixing = 0.0;      ///< per V/Angstrom
  double strain_mixing = 0.0;     ///< per unit strain
};

/// Emission energy of a 573 nm zero-phonon line, in Hartree.
inline constexpr double kZpl573Hartree = 1239.841984 / 573.0 / 27.211386245988;

// Calibration constants. At 0.7 V/Angstrom the admixture amplitude is 0.6 along an
// orbital tilted 20 deg out of the z axis, which yields a ~23 % visibility drop
// and ~11.6 deg in-plane rotation. Strain couplings give atan(8 * 0.01) = 4.6 deg
// and atan(0.5 * 0.01) = 0.29 deg at 1 % strain.
inline constexpr double kFieldAdmixTiltDeg = 20.0;
inline constexpr double kFieldMixingPerVPerA = 0.6 / 0.7;
inline constexpr double kStrainMixingVacancy = 8.0;
inline constexpr double kStrainMixingC2C2 = 0.5;

inline DefectFixture make_defect_fixture(DefectPreset preset, const CrystalAxes& crystal, double axis_offset_deg,
                                         std::size_t n = 61, double h = 0.2, double alpha = 1.0) {
  DefectFixture f;
  f.crystal = crystal;
  // polarization axis = dipole axis + 90
  const double dipole_deg = crystal.theta0.degrees() + axis_offset_deg - 90.0;
  const auto grid = cubic_grid(n, h);
  f.pair.initial = gaussian_s(grid, alpha);
  f.pair.initial.energy = 0.0;
  f.pair.final = gaussian_p(grid, alpha, in_plane(dipole_deg));
  f.pair.final.energy = -kZpl573Hartree;
  const Vec3 perp = in_plane(dipole_deg + 90.0);
  const double tilt = kFieldAdmixTiltDeg * kDegToRad;
  f.field_admix = gaussian_p(grid, alpha, {std::sin(tilt) * perp[0], std::sin(tilt) * perp[1], std::cos(tilt)});
  f.strain_admix = gaussian_p(grid, alpha, perp);
  f.field_mixing = kFieldMixingPerVPerA;
  f.strain_mixing = preset == DefectPreset::vacancy_like ? kStrainMixingVacancy : kStrainMixingC2C2;
  return f;
}

inline DefectPreset parse_defect_preset(std::string_view s) {
  if (s == "vacancy") return DefectPreset::vacancy_like;
  if (s == "c2c2") return DefectPreset::c2c2_like;
  throw InvalidArgument("unknown defect preset '" + std::string(s) + "' (expected vacancy or c2c2)");
}

}  // namespace qepol::fixtures
