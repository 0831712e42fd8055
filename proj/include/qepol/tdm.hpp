#pragma once

// Transition dipole moments from gridded wavefunctions.
//
// Atomic units throughout (hbar = m_e = e = a0 = 1). In these units
//   mu = i / (E_f - E_i) <psi_f| p |psi_i>,   p = -i grad.
// Grids are uniform and centred on the origin: x_k = (k - (n - 1) / 2) h.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "qepol/error.hpp"
#include "qepol/geometry.hpp"

namespace qepol {

using cplx = std::complex<double>;
using CVec3 = std::array<cplx, 3>;
using Vec3 = std::array<double, 3>;

inline constexpr double kDebyePerAu = 2.541746473;  // e a0 in Debye

struct WavefunctionGrid {
  std::array<std::size_t, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  std::vector<cplx> values;  ///< row-major, z fastest
  double energy = 0.0;       ///< Hartree

  WavefunctionGrid() = default;
  WavefunctionGrid(std::array<std::size_t, 3> d, Vec3 h, double e = 0.0)
      : dims(d), spacing(h), values(d[0] * d[1] * d[2]), energy(e) {}

  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const { return (ix * dims[1] + iy) * dims[2] + iz; }
  cplx& at(std::size_t ix, std::size_t iy, std::size_t iz) { return values[index(ix, iy, iz)]; }
  const cplx& at(std::size_t ix, std::size_t iy, std::size_t iz) const { return values[index(ix, iy, iz)]; }
  double coord(int axis, std::size_t k) const {
    const auto a = static_cast<std::size_t>(axis);
    return (static_cast<double>(k) - 0.5 * static_cast<double>(dims[a] - 1)) * spacing[a];
  }
  double cell_volume() const { return spacing[0] * spacing[1] * spacing[2]; }

  bool same_geometry(const WavefunctionGrid& o) const { return dims == o.dims && spacing == o.spacing; }
};

inline void validate(const WavefunctionGrid& g) {
  detail::require(g.dims[0] >= 5 && g.dims[1] >= 5 && g.dims[2] >= 5, "wavefunction grid needs at least 5 points per axis");
  detail::require(g.spacing[0] > 0.0 && g.spacing[1] > 0.0 && g.spacing[2] > 0.0, "grid spacing must be > 0");
  detail::require(g.values.size() == g.size(), "wavefunction value count does not match the grid dimensions");
}

/// <a|b> by the trapezoidal rule (edge amplitudes are negligible, so this is a plain sum).
inline cplx inner_product(const WavefunctionGrid& a, const WavefunctionGrid& b) {
  detail::require(a.same_geometry(b), "wavefunction grids differ");
  cplx acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a.values[i]) * b.values[i];
  return acc * a.cell_volume();
}

inline double norm(const WavefunctionGrid& g) { return std::sqrt(inner_product(g, g).real()); }

inline void normalize(WavefunctionGrid& g) {
  const double n = norm(g);
  if (!(n > 0.0)) throw NumericalError("cannot normalize a zero wavefunction");
  for (auto& v : g.values) v /= n;
}

/// d psi / d x_axis by 4th-order central differences with zero padding outside the grid.
inline std::vector<cplx> derivative(const WavefunctionGrid& g, int axis) {
  const auto a = static_cast<std::size_t>(axis);
  std::array<std::size_t, 3> stride{g.dims[1] * g.dims[2], g.dims[2], 1};
  const std::size_t n = g.dims[a];
  const std::size_t s = stride[a];
  const double inv = 1.0 / (12.0 * g.spacing[a]);
  std::vector<cplx> out(g.size());
  for (std::size_t ix = 0; ix < g.dims[0]; ++ix)
    for (std::size_t iy = 0; iy < g.dims[1]; ++iy)
      for (std::size_t iz = 0; iz < g.dims[2]; ++iz) {
        const std::size_t idx = g.index(ix, iy, iz);
        const std::size_t k = a == 0 ? ix : (a == 1 ? iy : iz);
        auto v = [&](long off) -> cplx {
          const long kk = static_cast<long>(k) + off;
          if (kk < 0 || kk >= static_cast<long>(n)) return {};
          return g.values[static_cast<std::size_t>(static_cast<long>(idx) + off * static_cast<long>(s))];
        };
        out[idx] = (-v(2) + 8.0 * v(1) - 8.0 * v(-1) + v(-2)) * inv;
      }
  return out;
}

/// <psi_f| -i grad |psi_i>.
inline CVec3 momentum_matrix_element(const WavefunctionGrid& psi_f, const WavefunctionGrid& psi_i) {
  validate(psi_f);
  validate(psi_i);
  detail::require(psi_f.same_geometry(psi_i), "initial and final wavefunctions must share one grid");
  CVec3 p{};
  for (int a = 0; a < 3; ++a) {
    const auto d = derivative(psi_i, a);
    cplx acc{};
    for (std::size_t k = 0; k < psi_f.size(); ++k) acc += std::conj(psi_f.values[k]) * d[k];
    p[static_cast<std::size_t>(a)] = cplx(0.0, -1.0) * acc * psi_f.cell_volume();
  }
  return p;
}

/// <psi_f| r |psi_i>, the length-form counterpart used for cross-checks.
inline CVec3 position_matrix_element(const WavefunctionGrid& psi_f, const WavefunctionGrid& psi_i) {
  detail::require(psi_f.same_geometry(psi_i), "initial and final wavefunctions must share one grid");
  CVec3 r{};
  for (std::size_t ix = 0; ix < psi_f.dims[0]; ++ix)
    for (std::size_t iy = 0; iy < psi_f.dims[1]; ++iy)
      for (std::size_t iz = 0; iz < psi_f.dims[2]; ++iz) {
        const std::size_t k = psi_f.index(ix, iy, iz);
        const cplx w = std::conj(psi_f.values[k]) * psi_i.values[k];
        r[0] += w * psi_f.coord(0, ix);
        r[1] += w * psi_f.coord(1, iy);
        r[2] += w * psi_f.coord(2, iz);
      }
  for (auto& c : r) c *= psi_f.cell_volume();
  return r;
}

/// In-plane (xy) polarization implied by a dipole vector.
struct DipoleProjection {
  AxialAngle dipole_axis{};   ///< in-plane direction of maximal emission
  AxialAngle axis{};          ///< polarization axis = dipole axis + 90
  double visibility = 0.0;    ///< |mu_parallel|^2 / |mu|^2
  double offset = 0.0;        ///< signed offset of `axis` from the nearest crystal axis
  AxialAngle nearest_crystal_axis{};
  bool axis_defined = true;   ///< false for a purely out-of-plane or circular in-plane dipole
};

/// Projects a (possibly complex) dipole onto the xy plane.
///
/// Convention: a dipole lying exactly along a crystal axis has its polarization
/// axis 90 deg away, i.e. on the bisector between two axes, and reports +30.
inline DipoleProjection dipole_to_polarization(const CVec3& mu, const CrystalAxes& crystal = {}) {
  const double px = std::norm(mu[0]), py = std::norm(mu[1]), pz = std::norm(mu[2]);
  const double total = px + py + pz;
  if (!(total > 0.0)) throw InvalidArgument("dipole vector is zero");
  const double cross = (std::conj(mu[0]) * mu[1]).real();
  DipoleProjection d;
  d.visibility = (px + py) / total;
  const double contrast = std::hypot(px - py, 2.0 * cross);
  d.axis_defined = (px + py) > 1e-12 * total && contrast > 1e-9 * (px + py);
  const double dip = d.axis_defined ? 0.5 * std::atan2(2.0 * cross, px - py) * kRadToDeg : 0.0;
  d.dipole_axis = AxialAngle(dip);
  d.axis = AxialAngle(dip + 90.0);
  const auto near = nearest_crystal_axis(d.axis, crystal);
  d.offset = near.signed_offset;
  d.nearest_crystal_axis = near.axis;
  return d;
}

struct DipoleResult {
  CVec3 mu{};            ///< atomic units (e a0)
  CVec3 momentum{};      ///< <f|p|i>
  DipoleProjection polarization;

  double magnitude() const { return std::sqrt(std::norm(mu[0]) + std::norm(mu[1]) + std::norm(mu[2])); }
  double magnitude_debye() const { return magnitude() * kDebyePerAu; }
};

inline DipoleResult transition_dipole(const WavefunctionGrid& psi_f, const WavefunctionGrid& psi_i, double e_f,
                                      double e_i, const CrystalAxes& crystal = {}) {
  if (std::fabs(e_f - e_i) < 1e-8) throw InvalidArgument("degenerate transition: |E_f - E_i| < 1e-8 Hartree");
  DipoleResult r;
  r.momentum = momentum_matrix_element(psi_f, psi_i);
  const cplx scale = cplx(0.0, 1.0) / (e_f - e_i);
  for (std::size_t a = 0; a < 3; ++a) r.mu[a] = scale * r.momentum[a];
  r.polarization = dipole_to_polarization(r.mu, crystal);
  return r;
}

inline DipoleResult transition_dipole(const WavefunctionGrid& psi_f, const WavefunctionGrid& psi_i,
                                      const CrystalAxes& crystal = {}) {
  return transition_dipole(psi_f, psi_i, psi_f.energy, psi_i.energy, crystal);
}

// ---------------------------------------------------------------------------
// resampling

namespace detail {

inline double catmull_rom(double t, int k) {
  // weights for samples at offsets -1, 0, 1, 2
  switch (k) {
    case 0: return 0.5 * (-t + 2.0 * t * t - t * t * t);
    case 1: return 0.5 * (2.0 - 5.0 * t * t + 3.0 * t * t * t);
    case 2: return 0.5 * (t + 4.0 * t * t - 3.0 * t * t * t);
    default: return 0.5 * (-t * t + t * t * t);
  }
}

}  // namespace detail

/// Bicubic (Catmull-Rom) value of plane iz at in-plane coordinates (x, y); zero outside the grid.
inline cplx sample_plane(const WavefunctionGrid& g, double x, double y, std::size_t iz) {
  const double fx = x / g.spacing[0] + 0.5 * static_cast<double>(g.dims[0] - 1);
  const double fy = y / g.spacing[1] + 0.5 * static_cast<double>(g.dims[1] - 1);
  const double bx = std::floor(fx), by = std::floor(fy);
  const double tx = fx - bx, ty = fy - by;
  cplx acc{};
  for (int i = 0; i < 4; ++i) {
    const long ix = static_cast<long>(bx) + i - 1;
    if (ix < 0 || ix >= static_cast<long>(g.dims[0])) continue;
    const double wx = detail::catmull_rom(tx, i);
    for (int j = 0; j < 4; ++j) {
      const long iy = static_cast<long>(by) + j - 1;
      if (iy < 0 || iy >= static_cast<long>(g.dims[1])) continue;
      acc += wx * detail::catmull_rom(ty, j) * g.at(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy), iz);
    }
  }
  return acc;
}

/// psi'(r) = psi(T^-1 r) for an in-plane linear map given by its inverse (a b; c d).
inline WavefunctionGrid transform_in_plane(const WavefunctionGrid& g, double a, double b, double c, double d) {
  WavefunctionGrid out(g.dims, g.spacing, g.energy);
  for (std::size_t ix = 0; ix < g.dims[0]; ++ix)
    for (std::size_t iy = 0; iy < g.dims[1]; ++iy) {
      const double x = g.coord(0, ix), y = g.coord(1, iy);
      const double sx = a * x + b * y, sy = c * x + d * y;
      for (std::size_t iz = 0; iz < g.dims[2]; ++iz) out.at(ix, iy, iz) = sample_plane(g, sx, sy, iz);
    }
  return out;
}

/// Rotation about z by `degrees` with bicubic resampling.
inline WavefunctionGrid rotate_z(const WavefunctionGrid& g, double degrees) {
  const double t = degrees * kDegToRad, c = std::cos(t), s = std::sin(t);
  return transform_in_plane(g, c, s, -s, c);
}

/// Exact rotation about z by +90 degrees (index permutation). Needs a square xy grid.
inline WavefunctionGrid rotate_z_90(const WavefunctionGrid& g) {
  detail::require(g.dims[0] == g.dims[1] && g.spacing[0] == g.spacing[1], "exact 90 degree rotation needs a square xy grid");
  WavefunctionGrid out(g.dims, g.spacing, g.energy);
  const std::size_t n = g.dims[0];
  // psi'(x, y) = psi(y, -x)
  for (std::size_t ix = 0; ix < n; ++ix)
    for (std::size_t iy = 0; iy < n; ++iy)
      for (std::size_t iz = 0; iz < g.dims[2]; ++iz) out.at(ix, iy, iz) = g.at(iy, n - 1 - ix, iz);
  return out;
}

// ---------------------------------------------------------------------------
// perturbations

enum class PerturbationKind { biaxial_strain, out_of_plane_field };

struct Perturbation {
  PerturbationKind kind = PerturbationKind::biaxial_strain;
  double magnitude = 0.0;           ///< strain fraction (|m| <= 0.01) or field in V/Angstrom (|E| <= 0.7)
  double mixing_coefficient = 0.0;  ///< admixture per unit magnitude; a fixture calibration, not physics
};

inline void validate(const Perturbation& p) {
  if (p.kind == PerturbationKind::biaxial_strain)
    detail::require(std::fabs(p.magnitude) <= 0.01 + 1e-12, "biaxial strain must satisfy |m| <= 0.01");
  else
    detail::require(std::fabs(p.magnitude) <= 0.7 + 1e-12, "out-of-plane field must satisfy |E| <= 0.7 V/Angstrom");
  detail::require(std::isfinite(p.mixing_coefficient), "mixing coefficient must be finite");
}

struct TransitionPair {
  WavefunctionGrid initial;
  WavefunctionGrid final;
};

/// First-order perturbation of a transition pair.
///
/// Strain rescales both states in plane, x,y <- (1 + m)(x, y), and admixes
/// `admix` into the final state with coefficient mixing * m. The field admixes
/// `admix` into the final state with coefficient mixing * E. Both states are
/// renormalized afterwards.
inline TransitionPair apply_perturbation(const TransitionPair& pair, const Perturbation& pert,
                                         const WavefunctionGrid& admix) {
  validate(pert);
  if (pert.magnitude == 0.0) return pair;
  detail::require(pair.initial.same_geometry(pair.final) && pair.final.same_geometry(admix),
                  "perturbation inputs must share one grid");
  TransitionPair out = pair;
  if (pert.kind == PerturbationKind::biaxial_strain) {
    const double inv = 1.0 / (1.0 + pert.magnitude);
    out.initial = transform_in_plane(pair.initial, inv, 0.0, 0.0, inv);
    out.final = transform_in_plane(pair.final, inv, 0.0, 0.0, inv);
  }
  const double c = pert.mixing_coefficient * pert.magnitude;
  for (std::size_t k = 0; k < out.final.size(); ++k) out.final.values[k] += c * admix.values[k];
  normalize(out.initial);
  normalize(out.final);
  return out;
}

}  // namespace qepol
