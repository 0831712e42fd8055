#pragma once

// Axial-angle arithmetic, crystal-axis sets and the Malus-law intensity model.
//
// Public interfaces are in degrees. A polarization axis is axial: theta and
// theta + 180 describe the same axis, so every axis lives in [0, 180).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <array>

#include "qepol/error.hpp"

namespace qepol {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

/// Wraps an arbitrary finite angle into [0, 180).
inline double wrap_degrees_180(double degrees) {
  if (!std::isfinite(degrees)) throw InvalidArgument("angle must be finite, got " + std::to_string(degrees));
  double r = std::fmod(degrees, 180.0);
  if (r < 0.0) r += 180.0;
  // fmod of a tiny negative input can round up to exactly 180
  if (r >= 180.0) r = 0.0;
  return r;
}

/// An undirected (axial) angle in degrees, always held in [0, 180).
class AxialAngle {
 public:
  constexpr AxialAngle() = default;
  explicit AxialAngle(double degrees) : deg_(wrap_degrees_180(degrees)) {}

  double degrees() const noexcept { return deg_; }
  double radians() const noexcept { return deg_ * kDegToRad; }

  friend bool operator==(AxialAngle a, AxialAngle b) noexcept { return a.deg_ == b.deg_; }

 private:
  double deg_ = 0.0;
};

inline AxialAngle wrap_axis(double degrees) { return AxialAngle(degrees); }

/// Signed axial difference a - b folded into [-90, 90).
inline double signed_axis_difference(AxialAngle a, AxialAngle b) {
  double d = a.degrees() - b.degrees();  // (-180, 180)
  if (d >= 90.0) d -= 180.0;
  if (d < -90.0) d += 180.0;
  return d;
}

/// Unsigned axial distance in [0, 90].
inline double axis_distance(AxialAngle a, AxialAngle b) {
  const double d = std::fabs(a.degrees() - b.degrees());
  return d > 90.0 ? 180.0 - d : d;
}

/// The three equivalent in-plane axes of a hexagonal lattice, 60 degrees apart.
struct CrystalAxes {
  AxialAngle theta0{};
  double period = 60.0;

  std::array<AxialAngle, 3> axes() const {
    return {theta0, AxialAngle(theta0.degrees() + period), AxialAngle(theta0.degrees() + 2.0 * period)};
  }
};

struct NearestAxis {
  AxialAngle axis;
  double signed_offset = 0.0;  ///< angle - axis, in [-30, 30]; an exact tie reports +30
};

inline NearestAxis nearest_crystal_axis(AxialAngle angle, const CrystalAxes& crystal) {
  detail::require(crystal.period > 0.0 && std::fabs(crystal.period * 3.0 - 180.0) < 1e-9,
                  "crystal axes must have a 60 degree period");
  const double half = crystal.period / 2.0;
  double r = std::fmod(angle.degrees() - crystal.theta0.degrees(), crystal.period);
  if (r < 0.0) r += crystal.period;
  if (r <= half) return {AxialAngle(angle.degrees() - r), r};
  return {AxialAngle(angle.degrees() - r + crystal.period), r - crystal.period};
}

/// Parameters of I(theta) = B + (A/2) (1 + V cos 2(theta - theta0)).
struct MalusParams {
  double amplitude = 0.0;   ///< A, counts/s
  double visibility = 0.0;  ///< V in [0, 1]
  AxialAngle axis{};        ///< theta0
  double background = 0.0;  ///< B, counts/s
};

inline void validate(const MalusParams& p) {
  detail::require(p.amplitude >= 0.0, "Malus amplitude must be >= 0");
  detail::require(p.visibility >= 0.0 && p.visibility <= 1.0, "visibility must lie in [0, 1]");
  detail::require(p.background >= 0.0, "background must be >= 0");
}

inline double malus_intensity(const MalusParams& p, AxialAngle polarizer) {
  const double c = std::cos(2.0 * (polarizer.radians() - p.axis.radians()));
  return p.background + 0.5 * p.amplitude * (1.0 + p.visibility * c);
}

/// Mean and spread of axial data via the doubled-angle embedding.
struct AxialSummary {
  AxialAngle mean;
  double std_deg = 0.0;          ///< circular standard deviation, mapped back to axial degrees
  double resultant_length = 0.0; ///< R of the doubled angles, 1 = perfectly concentrated
};

inline AxialSummary axial_summary(std::span<const double> degrees) {
  detail::require(!degrees.empty(), "axial_summary needs at least one angle");
  double s = 0.0, c = 0.0;
  for (double d : degrees) {
    s += std::sin(2.0 * d * kDegToRad);
    c += std::cos(2.0 * d * kDegToRad);
  }
  const double n = static_cast<double>(degrees.size());
  const double r = std::hypot(s, c) / n;
  AxialSummary out;
  out.mean = AxialAngle(0.5 * std::atan2(s, c) * kRadToDeg);
  out.resultant_length = r;
  out.std_deg = r > 0.0 ? 0.5 * std::sqrt(std::max(0.0, -2.0 * std::log(std::min(r, 1.0)))) * kRadToDeg : 90.0;
  return out;
}

}  // namespace qepol
