#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "qepol/fitting.hpp"
#include "qepol/lifetime.hpp"
#include "qepol/simulator.hpp"

using namespace qepol;

namespace {

std::vector<double> steps(double step, double end = 360.0) {
  std::vector<double> a;
  for (double x = 0.0; x < end - 1e-9; x += step) a.push_back(x);
  return a;
}

struct Series {
  std::vector<double> x, y, s;
};

Series malus_series(const MalusParams& p, const std::vector<double>& angles, std::uint64_t seed = 0) {
  Series d;
  std::mt19937_64 gen(seed);
  for (double a : angles) {
    double v = malus_intensity(p, AxialAngle(a));
    if (seed) v = static_cast<double>(std::poisson_distribution<long>(v)(gen));
    d.x.push_back(a);
    d.y.push_back(v);
    d.s.push_back(poisson_sigma(v));
  }
  return d;
}

// Brute-force axis scan: for each trial axis the model is linear in (A, A V).
double grid_scan_axis(const Series& d, double background) {
  double best = 1e300, best_axis = 0.0;
  for (int k = 0; k < 1800; ++k) {
    const double th = 0.1 * k;
    double s11 = 0, s12 = 0, s22 = 0, b1 = 0, b2 = 0;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
      const double w = 1.0 / (d.s[i] * d.s[i]);
      const double f1 = 0.5, f2 = 0.5 * std::cos(2.0 * (d.x[i] - th) * kDegToRad);
      const double t = d.y[i] - background;
      s11 += w * f1 * f1;
      s12 += w * f1 * f2;
      s22 += w * f2 * f2;
      b1 += w * f1 * t;
      b2 += w * f2 * t;
    }
    const double det = s11 * s22 - s12 * s12;
    const double a = (b1 * s22 - b2 * s12) / det, c = (s11 * b2 - s12 * b1) / det;
    if (c < 0) continue;
    double chi2 = 0;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
      const double m = background + 0.5 * a + 0.5 * c * std::cos(2.0 * (d.x[i] - th) * kDegToRad);
      chi2 += std::pow((d.y[i] - m) / d.s[i], 2);
    }
    if (chi2 < best) {
      best = chi2;
      best_axis = th;
    }
  }
  return best_axis;
}

}  // namespace

TEST(CosineSquared, MatchesMalusIntensity) {
  const MalusParams p{100, 0.9801, AxialAngle(30), 5};
  for (double a : {0.0, 30.0, 77.0, 170.0}) EXPECT_DOUBLE_EQ(eval_cosine_squared(p, a), malus_intensity(p, AxialAngle(a)));
  EXPECT_NEAR(eval_cosine_squared(p, 30.0), 104.005, 1e-12);
}

TEST(CosineSquared, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 200; ++trial) {
    const MalusParams p{1000 * u(gen), u(gen), AxialAngle(180 * u(gen)), 50 * u(gen)};
    const double th = 360 * u(gen);
    const auto g = cosine_squared_gradient(p, th);
    const std::array<double, 4> h{1e-4, 1e-6, 1e-5, 1e-4};
    for (int k = 0; k < 4; ++k) {
      auto shift = [&](double d) {
        double a = p.amplitude, v = p.visibility, ax = p.axis.degrees(), b = p.background;
        (k == 0 ? a : k == 1 ? v : k == 2 ? ax : b) += d;
        // evaluate with the raw (unwrapped) axis so the difference quotient is smooth
        return b + 0.5 * a * (1.0 + v * std::cos(2.0 * (th - ax) * kDegToRad));
      };
      const double fd = (shift(h[k]) - shift(-h[k])) / (2 * h[k]);
      const double scale = std::max(std::fabs(fd), 1e-3 * (1.0 + p.amplitude));
      ASSERT_LT(std::fabs(g[k] - fd) / scale, 1e-5) << "param " << k;
    }
  }
}

TEST(CosineSquared, ZeroVisibilityHasNoAxisGradient) {
  const MalusParams p{100, 0.0, AxialAngle(20), 0};
  for (double a : {0.0, 13.0, 90.0}) EXPECT_EQ(cosine_squared_gradient(p, a)[2], 0.0);
}

TEST(FitCosineSquared, NoiselessIsExact) {
  const MalusParams p{5000, 0.9801, AxialAngle(37.3), 0};
  const auto d = malus_series(p, {0, 36, 72, 108, 144});
  const auto f = fit_cosine_squared(d.x, d.y, d.s);
  EXPECT_TRUE(f.fit.converged);
  EXPECT_NEAR(f.params.visibility, 0.9801, 1e-8);
  EXPECT_NEAR(axis_distance(f.params.axis, p.axis), 0.0, 1e-6);
  EXPECT_NEAR(f.params.amplitude, 5000, 1e-5);
}

TEST(FitCosineSquared, AgreesWithGridScanOracle) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const MalusParams p{2000, 0.3 + 0.7 * u(gen), AxialAngle(180 * u(gen)), 0};
    const auto d = malus_series(p, steps(15.0), 100 + trial);
    const auto f = fit_cosine_squared(d.x, d.y, d.s);
    ASSERT_TRUE(f.fit.converged);
    ASSERT_LT(axis_distance(f.params.axis, AxialAngle(grid_scan_axis(d, 0.0))), 0.1);
  }
}

TEST(FitCosineSquared, StartsThatAreFarOffStillConverge) {
  // every axis 40 deg from one of the internal starts, across the full range
  for (double axis : {40.0, 85.0, 130.0, 175.0}) {
    const auto d = malus_series({3000, 0.9, AxialAngle(axis), 0}, steps(10.0));
    const auto f = fit_cosine_squared(d.x, d.y, d.s);
    EXPECT_NEAR(axis_distance(f.params.axis, AxialAngle(axis)), 0.0, 1e-6);
    EXPECT_NEAR(f.params.visibility, 0.9, 1e-8);
  }
}

TEST(FitCosineSquared, PermutationAndScaleInvariance) {
  const auto d = malus_series({4000, 0.8, AxialAngle(123.0), 0}, steps(10.0), 9);
  const auto base = fit_cosine_squared(d.x, d.y, d.s);

  std::vector<std::size_t> idx(d.x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), std::mt19937_64(2));
  Series p;
  for (auto i : idx) {
    p.x.push_back(d.x[i]);
    p.y.push_back(d.y[i]);
    p.s.push_back(d.s[i]);
  }
  const auto perm = fit_cosine_squared(p.x, p.y, p.s);
  EXPECT_NEAR(perm.params.visibility, base.params.visibility, 1e-6);
  EXPECT_NEAR(signed_axis_difference(perm.params.axis, base.params.axis), 0.0, 1e-6);
  EXPECT_NEAR(perm.params.amplitude, base.params.amplitude, 1e-6 * base.params.amplitude);

  Series s = d;
  for (std::size_t i = 0; i < s.y.size(); ++i) {
    s.y[i] *= 3.5;
    s.s[i] *= 3.5;
  }
  const auto scaled = fit_cosine_squared(s.x, s.y, s.s);
  EXPECT_NEAR(scaled.params.visibility, base.params.visibility, 1e-6);
  EXPECT_NEAR(signed_axis_difference(scaled.params.axis, base.params.axis), 0.0, 1e-6);
  EXPECT_NEAR(scaled.params.amplitude / base.params.amplitude, 3.5, 1e-6);
}

TEST(FitCosineSquared, ShiftedStartsAgree) {
  // rotating the data moves the truth relative to the fixed starts; results must follow exactly
  const auto d = malus_series({4000, 0.7, AxialAngle(61.0), 0}, steps(15.0), 12);
  const auto base = fit_cosine_squared(d.x, d.y, d.s);
  for (int k = 1; k < 8; ++k) {
    const double shift = 22.5 * k;
    std::vector<double> x;
    for (double a : d.x) x.push_back(a + shift);
    const auto f = fit_cosine_squared(x, d.y, d.s);
    EXPECT_NEAR(signed_axis_difference(f.params.axis, AxialAngle(base.params.axis.degrees() + shift)), 0.0, 1e-6);
    EXPECT_NEAR(f.params.visibility, base.params.visibility, 1e-6);
  }
}

TEST(FitCosineSquared, FlatDataHasUndefinedAxis) {
  std::vector<double> x = steps(10.0), y(x.size(), 1000.0), s(x.size(), std::sqrt(1000.0));
  const auto f = fit_cosine_squared(x, y, s);
  EXPECT_FALSE(f.axis_defined);
  EXPECT_EQ(f.axis_err, 90.0);
  EXPECT_NEAR(f.params.visibility, 0.0, 1e-6);
}

TEST(FitCosineSquared, KnownBackgroundIsHonoured) {
  const MalusParams p{1000, 0.9, AxialAngle(20), 200};
  const auto d = malus_series(p, steps(10.0));
  const auto f = fit_cosine_squared(d.x, d.y, d.s, 200.0);
  EXPECT_NEAR(f.params.visibility, 0.9, 1e-8);
  EXPECT_NEAR(f.params.amplitude, 1000, 1e-5);
}

TEST(ExpIrf, ZeroWidthLimit) {
  const ExpIrfParams p{500, 3.96, 2.0, 0.0, 0.5};
  EXPECT_DOUBLE_EQ(eval_exp_irf(p, 1.0), 0.5);
  for (double t : {2.0, 3.0, 10.0}) EXPECT_NEAR(eval_exp_irf(p, t), 500 / 3.96 * std::exp(-(t - 2.0) / 3.96) + 0.5, 1e-12);
  // small but finite sigma approaches the same curve away from t0
  const ExpIrfParams q{500, 3.96, 2.0, 1e-4, 0.5};
  EXPECT_NEAR(eval_exp_irf(q, 5.0), eval_exp_irf(p, 5.0), 1e-4);
}

TEST(ExpIrf, Rejections) {
  EXPECT_THROW(eval_exp_irf({1, 0.0, 0, 0, 0}, 1.0), InvalidArgument);
  EXPECT_THROW(eval_exp_irf({1, 1.0, 0, -0.1, 0}, 1.0), InvalidArgument);
}

TEST(ExpIrf, MatchesNumericalConvolution) {
  // direct quadrature of exp(-u/tau)/tau * N(t - t0 - u; sigma) over u >= 0
  for (double sigma : {0.03, 0.3, 1.0})
    for (double t : {-0.5, -0.05, 0.0, 0.02, 0.1, 1.0, 5.0}) {
      const double tau = 3.96;
      const double h = sigma / 400.0;
      double acc = 0.0;
      for (int i = 0; i < 400 * 2000; ++i) {
        const double u = (i + 0.5) * h;
        if (u > 60.0) break;
        const double z = (t - u) / sigma;
        acc += h * std::exp(-u / tau) / tau * std::exp(-0.5 * z * z) / (sigma * std::sqrt(2 * std::numbers::pi));
      }
      EXPECT_NEAR(eval_exp_irf({1.0, tau, 0.0, sigma, 0.0}, t), acc, 1e-6 + 1e-5 * acc) << sigma << " " << t;
    }
}

TEST(ExpIrf, FarLeftTailUsesStableBranch) {
  // z >= 25 branch: compare against the direct formula where it still evaluates finitely
  const ExpIrfParams p{1.0, 3.96, 0.0, 0.03, 0.0};
  const double t = -1.05;  // z ~ 25.
  const double s = 0.03, tau = 3.96;
  const double direct =
      1.0 / (2 * tau) * std::exp(s * s / (2 * tau * tau) - t / tau) * std::erfc((s / tau - t / s) / std::sqrt(2.0));
  EXPECT_NEAR(eval_exp_irf(p, t) / direct, 1.0, 1e-6);
  EXPECT_TRUE(std::isfinite(eval_exp_irf(p, -30.0)));
  EXPECT_GE(eval_exp_irf(p, -30.0), 0.0);
}

TEST(ExpIrf, PeakShiftsRightAndAreaIsInvariant) {
  double prev_peak = -1.0;
  for (double sigma : {0.0, 0.05, 0.2, 0.5}) {
    const ExpIrfParams p{1000.0, 3.96, 1.0, sigma, 0.0};
    double area = 0.0, peak_t = 0.0, peak_v = -1.0;
    const double h = 1e-3;
    for (int i = 0; i < 80000; ++i) {
      const double t = -10.0 + i * h;
      const double v = eval_exp_irf(p, t);
      area += v * h;
      if (v > peak_v) {
        peak_v = v;
        peak_t = t;
      }
    }
    EXPECT_NEAR(area, 1000.0 * (1 - std::exp(-69.0 / 3.96)), 1.0) << sigma;
    EXPECT_GT(peak_t, prev_peak);
    prev_peak = peak_t;
  }
}

TEST(FitExpIrf, RecoversSimulatedLifetime) {
  EmitterModel m;
  InstrumentConfig inst;
  inst.irf_fwhm_ps = 30.0 / kFwhmToSigma;  // sigma = 30 ps
  inst.dead_time_ns = 0.0;
  const auto s = simulate_timetags(m, inst, m.exc_axis, std::nullopt, 2'000'000, 17);
  const auto curve = build_decay_histogram(s, s.sync_period_ps, 100);
  const auto f = fit_lifetime(curve, 0.030);
  EXPECT_TRUE(f.fit.converged) << f.fit.message;
  EXPECT_NEAR(f.params.tau_ns, 3.96, 0.07);
  EXPECT_NEAR(f.params.t0_ns, inst.pulse_offset_ps * 1e-3, 0.02);
  EXPECT_LT(f.tau_err, 0.07);
}

TEST(FitExpIrf, ArrayOfLifetimesWithinThreeSigma) {
  InstrumentConfig inst;
  inst.dead_time_ns = 0.0;
  for (int k = 0; k < 20; ++k) {
    EmitterModel m;
    m.lifetime_ns = 3.5 + 0.05 * k;
    const auto s = simulate_timetags(m, inst, m.exc_axis, std::nullopt, 300'000, 1000 + k);
    const auto f = fit_lifetime(build_decay_histogram(s, s.sync_period_ps, 100), inst.irf_fwhm_ps * kFwhmToSigma * 1e-3);
    ASSERT_TRUE(f.fit.converged);
    EXPECT_LT(std::fabs(f.params.tau_ns - m.lifetime_ns), 3.0 * f.tau_err) << m.lifetime_ns;
  }
}

TEST(DecayHistogram, SingleTagAndTotal) {
  TimeTagStream s;
  s.sync_period_ps = 50'000;
  s.records = {{0, 0, 5'200}, {1, 0, 55'200}, {0, 0, 149'999}};
  const auto c = build_decay_histogram(s, 50'000, 100);
  EXPECT_EQ(c.counts[52], 2.0);
  EXPECT_EQ(c.counts[499], 1.0);
  EXPECT_EQ(c.total(), 3.0);
  EXPECT_NEAR(c.center_ns(52), 5.25, 1e-12);
}

TEST(Sixfold, Examples) {
  const SixfoldParams p{100, 43.52, 7};
  EXPECT_NEAR(eval_sixfold(p, 43.52), 107.0, 1e-12);
  EXPECT_NEAR(eval_sixfold(p, 73.52), 7.0, 1e-12);
  EXPECT_NEAR(eval_sixfold(p, 43.52 + 60.0), 107.0, 1e-9);
  EXPECT_NEAR(eval_sixfold(p, 43.52, ShgGeometry::perpendicular), 7.0, 1e-12);
  EXPECT_THROW(eval_sixfold({-1, 0, 0}, 0.0), InvalidArgument);
}

TEST(Sixfold, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const SixfoldParams p{500 * u(gen) + 1, 60 * u(gen), 20 * u(gen)};
    const double th = 360 * u(gen);
    const auto g = sixfold_gradient(p, th);
    const std::array<double, 3> h{1e-4, 1e-5, 1e-4};
    for (int k = 0; k < 3; ++k) {
      SixfoldParams a = p, b = p;
      (k == 0 ? a.amplitude : k == 1 ? a.theta0_deg : a.background) += h[k];
      (k == 0 ? b.amplitude : k == 1 ? b.theta0_deg : b.background) -= h[k];
      const double fd = (eval_sixfold(a, th) - eval_sixfold(b, th)) / (2 * h[k]);
      ASSERT_LT(std::fabs(g[k] - fd) / std::max(std::fabs(fd), 1e-3 * p.amplitude), 1e-5);
    }
  }
}

TEST(FitSixfold, ReportsAxisModuloSixty) {
  for (double truth : {43.52, 103.52, 163.52, 0.5, 59.5}) {
    std::vector<double> x = steps(5.0), y, s;
    for (double a : x) {
      y.push_back(eval_sixfold({800, truth, 10}, a));
      s.push_back(poisson_sigma(y.back()));
    }
    const auto f = fit_sixfold(x, y, s);
    EXPECT_GE(f.params.theta0_deg, 0.0);
    EXPECT_LT(f.params.theta0_deg, 60.0);
    double d = std::fmod(f.params.theta0_deg - truth, 60.0);
    if (d < -30) d += 60;
    if (d > 30) d -= 60;
    EXPECT_NEAR(d, 0.0, 1e-6) << truth;
    EXPECT_NEAR(f.params.amplitude, 800, 1e-4);
  }
}

TEST(FitSixfold, PerpendicularGeometry) {
  std::vector<double> x = steps(5.0), y, s;
  for (double a : x) {
    y.push_back(eval_sixfold({800, 43.52, 10}, a, ShgGeometry::perpendicular));
    s.push_back(poisson_sigma(y.back()));
  }
  const auto f = fit_sixfold(x, y, s, ShgGeometry::perpendicular);
  EXPECT_NEAR(f.params.theta0_deg, 43.52, 1e-6);
}

TEST(G2Pulsed, IdealAntibunchingIsEmptyAtZero) {
  const G2PulsedParams p{1000, 0.0, 50, 3.96, 0.0};
  EXPECT_LT(eval_g2_pulsed(p, 0.0), 1e-5 * p.peak_area);
  EXPECT_NEAR(eval_g2_pulsed(p, 50.0), 1000 / (2 * 3.96), 0.01);
}

TEST(G2Pulsed, PoissonianPeaksAreEqual) {
  const G2PulsedParams p{1000, 1.0, 50, 3.96, 2.0};
  const double v0 = eval_g2_pulsed(p, 0.0);
  for (int k = -5; k <= 5; ++k) EXPECT_NEAR(eval_g2_pulsed(p, 50.0 * k), v0, 1e-9);
  EXPECT_NEAR(eval_g2_pulsed(p, 12.3), eval_g2_pulsed(p, 62.3), 1e-9);
}

TEST(FitG2Pulsed, RecoversNoiselessComb) {
  const G2PulsedParams truth{2000, 0.2, 50, 3.96, 3.0};
  std::vector<double> d, c;
  for (int i = 0; i < 1000; ++i) {
    d.push_back(-250.0 + 0.5 * i + 0.25);
    c.push_back(0.5 * eval_g2_pulsed(truth, d.back()));
  }
  const auto f = fit_g2_pulsed(d, c, 0.5, 50.0, 3.0);
  EXPECT_TRUE(f.fit.converged) << f.fit.message;
  EXPECT_NEAR(f.params.g2_0, 0.2, 1e-6);
  EXPECT_NEAR(f.params.tau_ns, 3.96, 1e-6);
  EXPECT_NEAR(f.params.background, 3.0, 1e-6);
}

TEST(PoissonDeviance, Properties) {
  EXPECT_EQ(poisson_deviance_residual(5.0, 5.0), 0.0);
  EXPECT_GT(poisson_deviance_residual(7.0, 5.0), 0.0);
  EXPECT_LT(poisson_deviance_residual(3.0, 5.0), 0.0);
  EXPECT_NEAR(poisson_deviance_residual(0.0, 2.0), -2.0, 1e-12);
  // large-count limit approaches the Pearson residual
  EXPECT_NEAR(poisson_deviance_residual(10100.0, 10000.0), 1.0, 5e-3);
  EXPECT_TRUE(std::isfinite(poisson_deviance_residual(3.0, 0.0)));
}
