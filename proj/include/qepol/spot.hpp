#pragma once

// Drift-tolerant integration of a diffraction-limited PL spot.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "qepol/error.hpp"
#include "qepol/lm.hpp"
#include "qepol/sweep.hpp"

namespace qepol {

struct SpotResult {
  double flux = 0.0;  ///< fitted Gaussian volume (counts), or the fallback ROI sum
  double flux_err = 0.0;
  double centroid_x_px = 0.0;  ///< continuous pixel coordinates; pixel i spans [i, i + 1)
  double centroid_y_px = 0.0;
  double sigma_px = 0.0;
  double background = 0.0;  ///< per pixel
  bool fallback = false;    ///< true when the Gaussian fit failed and the ROI sum was used
  FitResult fit;

  double centroid_x_nm(const PLMap& m) const { return centroid_x_px * m.pixel_size_nm; }
  double centroid_y_nm(const PLMap& m) const { return centroid_y_px * m.pixel_size_nm; }
};

/// Pixel-integrated 2D Gaussian plus flat background, fitted inside a circular ROI.
inline SpotResult integrate_spot(const PLMap& map, double center_x_px, double center_y_px, double roi_radius_px) {
  detail::require(roi_radius_px >= 2.0, "ROI radius must be at least 2 px");
  detail::require(map.values.size() == map.width * map.height, "PL map has the wrong number of values");
  detail::require(center_x_px - roi_radius_px >= 0.0 && center_y_px - roi_radius_px >= 0.0 &&
                      center_x_px + roi_radius_px <= static_cast<double>(map.width) &&
                      center_y_px + roi_radius_px <= static_cast<double>(map.height),
                  "ROI must lie inside the map");

  struct Px {
    double x, y, v;
    bool edge;
  };
  std::vector<Px> roi;
  for (std::size_t iy = 0; iy < map.height; ++iy)
    for (std::size_t ix = 0; ix < map.width; ++ix) {
      const double cx = static_cast<double>(ix) + 0.5, cy = static_cast<double>(iy) + 0.5;
      const double r = std::hypot(cx - center_x_px, cy - center_y_px);
      if (r <= roi_radius_px) roi.push_back({static_cast<double>(ix), static_cast<double>(iy), map.at(ix, iy), r > roi_radius_px - 1.0});
    }
  detail::require(roi.size() >= 10, "ROI holds too few pixels");

  // background from the ROI rim, moments from the rest
  std::vector<double> rim;
  for (const auto& p : roi)
    if (p.edge) rim.push_back(p.v);
  std::nth_element(rim.begin(), rim.begin() + static_cast<std::ptrdiff_t>(rim.size() / 2), rim.end());
  const double bg0 = rim.empty() ? 0.0 : rim[rim.size() / 2];
  double sum = 0.0, mx = 0.0, my = 0.0;
  for (const auto& p : roi) {
    const double w = std::max(p.v - bg0, 0.0);
    sum += w;
    mx += w * (p.x + 0.5);
    my += w * (p.y + 0.5);
  }
  const double roi_sum = [&] {
    double s = 0.0;
    for (const auto& p : roi) s += p.v - bg0;
    return s;
  }();
  mx = sum > 0.0 ? mx / sum : center_x_px;
  my = sum > 0.0 ? my / sum : center_y_px;
  double m2 = 0.0;
  for (const auto& p : roi) {
    const double w = std::max(p.v - bg0, 0.0);
    m2 += w * ((p.x + 0.5 - mx) * (p.x + 0.5 - mx) + (p.y + 0.5 - my) * (p.y + 0.5 - my));
  }
  const double s0 = sum > 0.0 ? std::clamp(std::sqrt(m2 / (2.0 * sum)), 0.5, roi_radius_px) : 1.5;

  auto phi = [](double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); };
  // params: volume, x0, y0, sigma, background
  ResidualFn res = [&](const Eigen::VectorXd& q) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(roi.size()));
    const double s = std::max(q[3], 1e-3);
    for (std::size_t i = 0; i < roi.size(); ++i) {
      const auto& p = roi[i];
      const double fx = phi((p.x + 1.0 - q[1]) / s) - phi((p.x - q[1]) / s);
      const double fy = phi((p.y + 1.0 - q[2]) / s) - phi((p.y - q[2]) / s);
      r[static_cast<Eigen::Index>(i)] = (p.v - q[0] * fx * fy - q[4]) / std::sqrt(std::max(p.v, 1.0));
    }
    return r;
  };
  Eigen::VectorXd init(5);
  init << std::max(roi_sum, 1.0), mx, my, s0, bg0;

  SpotResult out;
  FitResult f;
  bool ok = false;
  try {
    f = levenberg_marquardt(res, init);
    const double x0 = f.params[1], y0 = f.params[2];
    // a volume within its own error is no detection, whatever the optimizer says
    ok = f.converged && f.params[0] > f.error(0) && f.params[3] > 0.0 && f.params[3] < roi_radius_px &&
         std::hypot(x0 - center_x_px, y0 - center_y_px) < roi_radius_px && std::isfinite(f.error(0));
  } catch (const NumericalError&) {
    ok = false;
  }

  if (ok) {
    out.flux = f.params[0];
    out.flux_err = f.error(0);
    out.centroid_x_px = f.params[1];
    out.centroid_y_px = f.params[2];
    out.sigma_px = f.params[3];
    out.background = f.params[4];
  } else {
    out.fallback = true;
    out.flux = roi_sum;
    double var = 0.0;
    for (const auto& p : roi) var += std::max(p.v, 1.0);
    out.flux_err = std::sqrt(var);
    out.centroid_x_px = mx;
    out.centroid_y_px = my;
    out.sigma_px = s0;
    out.background = bg0;
  }
  out.fit = std::move(f);
  return out;
}

}  // namespace qepol
