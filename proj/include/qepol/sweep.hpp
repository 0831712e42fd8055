#pragma once

// Measurement containers shared by the simulator and the analyzers.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "qepol/error.hpp"

namespace qepol {

/// Integrated intensity against analyzer (or laser) angle. Raw angles in [0, 360) are accepted.
struct PolarSweep {
  std::vector<double> angles_deg;
  std::vector<double> intensities;
  std::vector<double> errors;
  double acquisition_s = 1.0;

  std::size_t size() const { return angles_deg.size(); }

  void validate() const {
    detail::require(angles_deg.size() == intensities.size() && angles_deg.size() == errors.size(),
                    "sweep series must have equal length");
    for (std::size_t i = 0; i < size(); ++i) {
      detail::require(std::isfinite(angles_deg[i]) && std::isfinite(intensities[i]) && std::isfinite(errors[i]),
                      "sweep values must be finite");
      detail::require(intensities[i] >= 0.0, "sweep intensities must be >= 0");
      detail::require(errors[i] >= 0.0, "sweep errors must be >= 0");
    }
  }
};

/// Counts binned by (time after sync, analyzer angle).
///
/// Row r covers [t0_ps + r * bin_ps, t0_ps + (r + 1) * bin_ps); column j is angles_deg[j].
struct DecayMap {
  double t0_ps = 0.0;
  double bin_ps = 1.0;
  std::vector<double> angles_deg;
  std::size_t n_rows = 0;
  std::vector<double> counts;  ///< row-major [row][angle]
  /// Excitation reference inside the sync period. Unset means "use the row of peak counts".
  std::optional<double> t_zero_ps;

  DecayMap() = default;
  DecayMap(double t0, double bin, std::vector<double> angles, std::size_t rows)
      : t0_ps(t0), bin_ps(bin), angles_deg(std::move(angles)), n_rows(rows), counts(rows * angles_deg.size(), 0.0) {}

  std::size_t n_angles() const { return angles_deg.size(); }
  double& at(std::size_t row, std::size_t col) { return counts[row * n_angles() + col]; }
  double at(std::size_t row, std::size_t col) const { return counts[row * n_angles() + col]; }
  double row_lo(std::size_t row) const { return t0_ps + static_cast<double>(row) * bin_ps; }

  double row_total(std::size_t row) const {
    double s = 0.0;
    for (std::size_t j = 0; j < n_angles(); ++j) s += at(row, j);
    return s;
  }

  double total() const {
    double s = 0.0;
    for (double c : counts) s += c;
    return s;
  }

  void validate() const {
    detail::require(bin_ps > 0.0 && std::isfinite(t0_ps), "decay map needs a positive bin width");
    detail::require(!angles_deg.empty() && n_rows > 0, "decay map must be non-empty");
    detail::require(counts.size() == n_rows * n_angles(), "decay map count matrix has the wrong size");
    for (double c : counts) detail::require(std::isfinite(c) && c >= 0.0, "decay map counts must be >= 0");
  }
};

/// Sum of rows [row_begin, row_end) as an analyzer sweep with Poisson errors.
inline PolarSweep sweep_from_rows(const DecayMap& map, std::size_t row_begin, std::size_t row_end) {
  PolarSweep s;
  s.angles_deg = map.angles_deg;
  s.intensities.assign(map.n_angles(), 0.0);
  for (std::size_t r = row_begin; r < row_end; ++r)
    for (std::size_t j = 0; j < map.n_angles(); ++j) s.intensities[j] += map.at(r, j);
  s.errors.resize(map.n_angles());
  for (std::size_t j = 0; j < map.n_angles(); ++j) s.errors[j] = std::sqrt(s.intensities[j]);
  return s;
}

/// Scanned photoluminescence image, row-major [y][x].
struct PLMap {
  std::size_t width = 0;
  std::size_t height = 0;
  double pixel_size_nm = 100.0;
  double dwell_ms = 5.0;
  std::vector<double> values;

  double& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

}  // namespace qepol
