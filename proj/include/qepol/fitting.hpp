#pragma once

// Model functions and their least-squares fits: cosine-squared (Malus),
// IRF-convolved exponential decay, six-fold SHG and the pulsed g2 comb.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qepol/error.hpp"
#include "qepol/geometry.hpp"
#include "qepol/lm.hpp"

namespace qepol {

/// Poisson weight sigma^2 = max(y, 1) for count data.
inline double poisson_sigma(double counts) { return std::sqrt(std::max(counts, 1.0)); }

/// Signed square root of the Poisson deviance of count c under mean m. The sum of
/// squares is -2 log L up to a constant, so least squares on these is the Poisson
/// maximum-likelihood fit; unlike 1/sqrt(c) weighting it stays unbiased in sparse bins.
inline double poisson_deviance_residual(double c, double m) {
  m = std::max(m, 1e-300);
  const double d = c > 0.0 ? 2.0 * (m - c + c * std::log(c / m)) : 2.0 * m;
  return c >= m ? std::sqrt(std::max(d, 0.0)) : -std::sqrt(std::max(d, 0.0));
}

// ---------------------------------------------------------------------------
// cosine-squared

inline double eval_cosine_squared(const MalusParams& p, double theta_deg) {
  return malus_intensity(p, AxialAngle(theta_deg));
}

/// d I / d (A, V, theta0[deg], B).
inline std::array<double, 4> cosine_squared_gradient(const MalusParams& p, double theta_deg) {
  const double x = 2.0 * (theta_deg - p.axis.degrees()) * kDegToRad;
  const double c = std::cos(x), s = std::sin(x);
  return {0.5 * (1.0 + p.visibility * c), 0.5 * p.amplitude * c, p.amplitude * p.visibility * s * kDegToRad, 1.0};
}

struct CosineFit {
  MalusParams params;
  double amplitude_err = 0.0;
  double visibility_err = 0.0;
  double axis_err = 0.0;        ///< degrees; 90 when the axis is undefined
  bool axis_defined = true;     ///< false when V is consistent with zero
  FitResult fit;
};

/// Weighted cosine-squared fit with a fixed, known background.
///
/// Amplitude and background are not separately identifiable from a sinusoid,
/// so the background is an input (0 for background-free data). Runs LM from
/// the axis starts {0, 45, 90, 135} and keeps the lowest chi^2; a negative
/// visibility is folded into the equivalent axis + 90.
inline CosineFit fit_cosine_squared(std::span<const double> angles_deg, std::span<const double> y,
                                    std::span<const double> sigma, double background = 0.0,
                                    const FitOptions& opt = {}) {
  const std::size_t n = angles_deg.size();
  detail::require(y.size() == n && sigma.size() == n, "fit inputs must have equal length");
  detail::require(n >= 3, "cosine-squared fit needs at least 3 points");

  std::vector<double> inv_sigma(n);
  for (std::size_t i = 0; i < n; ++i) inv_sigma[i] = 1.0 / std::max(sigma[i], 1.0);

  // params: A, V, theta0 (unwrapped degrees)
  auto model_at = [&](const Eigen::VectorXd& p, double th) {
    return background + 0.5 * p[0] * (1.0 + p[1] * std::cos(2.0 * (th - p[2]) * kDegToRad));
  };
  ResidualFn res = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) r[static_cast<Eigen::Index>(i)] = (y[i] - model_at(p, angles_deg[i])) * inv_sigma[i];
    return r;
  };
  JacobianFn jac = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = 2.0 * (angles_deg[i] - p[2]) * kDegToRad;
      const double c = std::cos(x), s = std::sin(x);
      const auto row = static_cast<Eigen::Index>(i);
      j(row, 0) = -0.5 * (1.0 + p[1] * c) * inv_sigma[i];
      j(row, 1) = -0.5 * p[0] * c * inv_sigma[i];
      j(row, 2) = -p[0] * p[1] * s * kDegToRad * inv_sigma[i];
    }
    return j;
  };

  double mean = 0.0, ymax = 0.0, ymin = std::numeric_limits<double>::infinity();
  for (double v : y) {
    mean += v;
    ymax = std::max(ymax, v);
    ymin = std::min(ymin, v);
  }
  mean /= static_cast<double>(n);
  const double a0 = std::max(2.0 * (mean - background), 1e-9);
  const double v0 = (ymax + ymin - 2.0 * background) > 0.0 ? std::clamp((ymax - ymin) / (ymax + ymin - 2.0 * background), 0.05, 1.0) : 0.5;

  FitResult best;
  bool have = false;
  for (double start : {0.0, 45.0, 90.0, 135.0}) {
    Eigen::Vector3d init(a0, v0, start);
    FitResult r = levenberg_marquardt(res, jac, init, opt);
    if (!have || (r.converged && !best.converged) || (r.converged == best.converged && r.chi2 < best.chi2)) {
      best = r;
      have = true;
    }
  }

  CosineFit out;
  double a = best.params[0], v = best.params[1], th = best.params[2];
  if (v < 0.0) {
    v = -v;
    th += 90.0;
  }
  out.params = MalusParams{a, v, AxialAngle(th), background};
  out.amplitude_err = best.error(0);
  out.visibility_err = best.error(1);
  out.axis_err = best.error(2);
  out.axis_defined = std::isfinite(out.axis_err) && v > 2.0 * out.visibility_err && out.axis_err < 45.0;
  if (!out.axis_defined) out.axis_err = 90.0;
  out.fit = std::move(best);
  return out;
}

// ---------------------------------------------------------------------------
// IRF-convolved exponential

struct ExpIrfParams {
  double amplitude = 1.0;  ///< total counts under the decay (area)
  double tau_ns = 1.0;
  double t0_ns = 0.0;
  double irf_sigma_ns = 0.0;
  double background = 0.0;  ///< per unit time
};

/// Exponentially modified Gaussian density plus background.
inline double eval_exp_irf(const ExpIrfParams& p, double t_ns) {
  detail::require(p.tau_ns > 0.0, "tau must be > 0");
  detail::require(p.irf_sigma_ns >= 0.0, "IRF sigma must be >= 0");
  const double u = t_ns - p.t0_ns;
  if (p.irf_sigma_ns == 0.0) return (u >= 0.0 ? p.amplitude / p.tau_ns * std::exp(-u / p.tau_ns) : 0.0) + p.background;

  const double s = p.irf_sigma_ns, tau = p.tau_ns;
  const double z = (s / tau - u / s) / std::numbers::sqrt2;
  double core;
  if (z < 25.0) {
    core = std::exp(s * s / (2.0 * tau * tau) - u / tau) * std::erfc(z);
  } else {
    // exp(a) erfc(z) = exp(-u^2 / 2 s^2) erfcx(z), asymptotic erfcx for large z
    const double iz2 = 1.0 / (z * z);
    const double erfcx = (1.0 - 0.5 * iz2 * (1.0 - 1.5 * iz2 * (1.0 - 2.5 * iz2))) / (z * std::sqrt(std::numbers::pi));
    core = std::exp(-u * u / (2.0 * s * s)) * erfcx;
  }
  return p.amplitude / (2.0 * tau) * core + p.background;
}

struct LifetimeFit {
  ExpIrfParams params;
  double tau_err = 0.0;
  double t0_err = 0.0;
  double amplitude_err = 0.0;
  FitResult fit;
};

/// Poisson maximum-likelihood fit of binned decay counts with a fixed Gaussian IRF width.
/// `bin_ns` converts the density to counts per bin.
inline LifetimeFit fit_exp_irf(std::span<const double> t_ns, std::span<const double> counts, double bin_ns,
                               double irf_sigma_ns, const FitOptions& opt = {}) {
  const std::size_t n = t_ns.size();
  detail::require(counts.size() == n && n >= 5, "lifetime fit needs at least 5 bins");
  detail::require(bin_ns > 0.0 && irf_sigma_ns >= 0.0, "bin width must be > 0 and IRF sigma >= 0");

  // params: A, tau, t0, B
  auto unpack = [&](const Eigen::VectorXd& p) {
    return ExpIrfParams{p[0], std::max(p[1], 1e-9), p[2], irf_sigma_ns, p[3]};
  };
  ResidualFn res = [&](const Eigen::VectorXd& p) {
    const ExpIrfParams e = unpack(p);
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      r[static_cast<Eigen::Index>(i)] = poisson_deviance_residual(counts[i], bin_ns * eval_exp_irf(e, t_ns[i]));
    return r;
  };

  // initial guess: peak location, background from the quietest decile, 1/e crossing for tau
  const auto peak_it = std::max_element(counts.begin(), counts.end());
  const std::size_t ipk = static_cast<std::size_t>(peak_it - counts.begin());
  std::vector<double> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end());
  const double bg = sorted[sorted.size() / 10];
  double total = 0.0;
  for (double c : counts) total += c;
  double tau0 = bin_ns;
  for (std::size_t i = ipk; i < n; ++i) {
    if (counts[i] - bg <= (*peak_it - bg) / std::numbers::e) {
      tau0 = std::max(t_ns[i] - t_ns[ipk], bin_ns);
      break;
    }
  }
  Eigen::Vector4d init(std::max(total - bg * static_cast<double>(n), 1.0), tau0, t_ns[ipk], bg / bin_ns);
  FitOptions o = opt;
  if (o.lower.empty()) o.lower = {0.0, 1e-6, -std::numeric_limits<double>::infinity(), 0.0};
  FitResult r = levenberg_marquardt(res, init, o);

  LifetimeFit out;
  out.params = unpack(r.params);
  out.amplitude_err = r.error(0);
  out.tau_err = r.error(1);
  out.t0_err = r.error(2);
  out.fit = std::move(r);
  return out;
}

// ---------------------------------------------------------------------------
// six-fold SHG

enum class ShgGeometry { parallel, perpendicular };

struct SixfoldParams {
  double amplitude = 1.0;
  double theta0_deg = 0.0;
  double background = 0.0;
};

inline double eval_sixfold(const SixfoldParams& p, double theta_deg, ShgGeometry g = ShgGeometry::parallel) {
  detail::require(p.amplitude >= 0.0, "six-fold amplitude must be >= 0");
  const double c = std::cos(3.0 * (theta_deg - p.theta0_deg) * kDegToRad);
  return p.amplitude * (g == ShgGeometry::parallel ? c * c : 1.0 - c * c) + p.background;
}

/// d I / d (A, theta0[deg], B) for the parallel geometry.
inline std::array<double, 3> sixfold_gradient(const SixfoldParams& p, double theta_deg) {
  const double x = 3.0 * (theta_deg - p.theta0_deg) * kDegToRad;
  const double c = std::cos(x);
  return {c * c, 3.0 * p.amplitude * std::sin(2.0 * x) * kDegToRad, 1.0};
}

struct SixfoldFit {
  SixfoldParams params;  ///< theta0 folded into [0, 60)
  double amplitude_err = 0.0;
  double theta0_err = 0.0;
  double background_err = 0.0;
  FitResult fit;
};

inline SixfoldFit fit_sixfold(std::span<const double> angles_deg, std::span<const double> y,
                              std::span<const double> sigma, ShgGeometry geometry = ShgGeometry::parallel,
                              const FitOptions& opt = {}) {
  const std::size_t n = angles_deg.size();
  detail::require(y.size() == n && sigma.size() == n && n >= 4, "six-fold fit needs at least 4 points");
  std::vector<double> inv_sigma(n);
  for (std::size_t i = 0; i < n; ++i) inv_sigma[i] = 1.0 / std::max(sigma[i], 1.0);
  // perpendicular = parallel shifted by 30 degrees
  const double shift = geometry == ShgGeometry::parallel ? 0.0 : 30.0;

  ResidualFn res = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double c = std::cos(3.0 * (angles_deg[i] - p[1] - shift) * kDegToRad);
      r[static_cast<Eigen::Index>(i)] = (y[i] - p[0] * c * c - p[2]) * inv_sigma[i];
    }
    return r;
  };
  JacobianFn jac = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = sixfold_gradient({p[0], p[1] + shift, p[2]}, angles_deg[i]);
      for (int k = 0; k < 3; ++k) j(static_cast<Eigen::Index>(i), k) = -g[static_cast<std::size_t>(k)] * inv_sigma[i];
    }
    return j;
  };

  const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  FitResult best;
  bool have = false;
  for (double start : {0.0, 10.0, 20.0, 30.0, 40.0, 50.0}) {
    Eigen::Vector3d init(std::max(*mx - *mn, 1e-9), start, *mn);
    FitResult r = levenberg_marquardt(res, jac, init, opt);
    if (!have || (r.converged && !best.converged) || (r.converged == best.converged && r.chi2 < best.chi2)) {
      best = r;
      have = true;
    }
  }
  double a = best.params[0], th = best.params[1], b = best.params[2];
  if (a < 0.0) {
    b += a;
    a = -a;
    th += 30.0;
  }
  th = std::fmod(th, 60.0);
  if (th < 0.0) th += 60.0;
  if (th >= 60.0) th = 0.0;

  SixfoldFit out;
  out.params = {a, th, b};
  out.amplitude_err = best.error(0);
  out.theta0_err = best.error(1);
  out.background_err = best.error(2);
  out.fit = std::move(best);
  return out;
}

// ---------------------------------------------------------------------------
// pulsed g2 comb

struct G2PulsedParams {
  double peak_area = 1.0;  ///< coincidences in one side peak
  double g2_0 = 0.0;       ///< centre peak area relative to a side peak
  double period_ns = 50.0;
  double tau_ns = 4.0;     ///< decay constant of each two-sided peak
  double background = 0.0; ///< flat coincidences per ns
};

/// Coincidence density (per ns) at `delay_ns`: flat background plus
/// two-sided exponential peaks at every multiple of the period.
inline double eval_g2_pulsed(const G2PulsedParams& p, double delay_ns, int n_peaks = -1) {
  detail::require(p.period_ns > 0.0 && p.tau_ns > 0.0, "period and tau must be > 0");
  const int kc = static_cast<int>(std::lround(delay_ns / p.period_ns));
  // peaks further than ~40 tau contribute below double precision
  const int reach = n_peaks >= 0 ? n_peaks : static_cast<int>(std::ceil(40.0 * p.tau_ns / p.period_ns)) + 1;
  double acc = p.background;
  for (int k = kc - reach; k <= kc + reach; ++k) {
    const double a = k == 0 ? p.g2_0 * p.peak_area : p.peak_area;
    acc += a * std::exp(-std::fabs(delay_ns - k * p.period_ns) / p.tau_ns) / (2.0 * p.tau_ns);
  }
  return acc;
}

struct G2CombFit {
  G2PulsedParams params;
  double g2_0_err = 0.0;
  FitResult fit;
};

/// Poisson maximum-likelihood comb fit of a coincidence histogram; the period is held fixed.
inline G2CombFit fit_g2_pulsed(std::span<const double> delay_ns, std::span<const double> counts, double bin_ns,
                               double period_ns, double tau_guess_ns, const FitOptions& opt = {}) {
  const std::size_t n = delay_ns.size();
  detail::require(counts.size() == n && n >= 5, "g2 fit needs at least 5 bins");

  // params: peak_area, g2_0, tau, background
  ResidualFn res = [&](const Eigen::VectorXd& p) {
    const G2PulsedParams g{p[0], p[1], period_ns, std::max(p[2], 1e-6), p[3]};
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      r[static_cast<Eigen::Index>(i)] = poisson_deviance_residual(counts[i], bin_ns * eval_g2_pulsed(g, delay_ns[i]));
    return r;
  };

  double total = 0.0;
  std::vector<double> sorted(counts.begin(), counts.end());
  for (double c : counts) total += c;
  std::sort(sorted.begin(), sorted.end());
  const double bg = sorted[sorted.size() / 10] / bin_ns;
  const double span = delay_ns.back() - delay_ns.front() + bin_ns;
  const double n_peaks = std::max(1.0, std::floor(span / period_ns));
  const double area0 = std::max((total - bg * span) / n_peaks, 1.0);

  Eigen::Vector4d init(area0, 0.5, tau_guess_ns, bg);
  FitOptions o = opt;
  if (o.lower.empty()) o.lower = {0.0, 0.0, 1e-3, 0.0};
  FitResult r = levenberg_marquardt(res, init, o);
  G2CombFit out;
  out.params = {r.params[0], r.params[1], period_ns, r.params[2], r.params[3]};
  out.g2_0_err = r.error(1);
  out.fit = std::move(r);
  return out;
}

}  // namespace qepol
