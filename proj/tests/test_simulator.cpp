#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "qepol/polarization.hpp"
#include "qepol/shg.hpp"
#include "qepol/simulator.hpp"
#include "qepol/spot.hpp"

using namespace qepol;

namespace {

InstrumentConfig ideal_instrument() {
  InstrumentConfig c;
  c.dead_time_ns = 0.0;
  c.dark_rate_cps = 0.0;
  return c;
}

std::vector<double> angle_steps(double step, double end = 360.0) {
  std::vector<double> a;
  for (double x = 0.0; x < end - 1e-9; x += step) a.push_back(x);
  return a;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST(SimulateTimetags, RateBookkeeping) {
  EmitterModel m;
  const auto inst = ideal_instrument();
  const std::uint64_t n = 2'000'000;
  const auto s = simulate_timetags(m, inst, m.exc_axis, std::nullopt, n, 3);
  const double p = m.exc_prob_max * inst.detection_efficiency;
  const double sigma = std::sqrt(n * p * (1 - p));
  EXPECT_NEAR(static_cast<double>(s.records.size()), n * p, 3 * sigma);
  // 50:50 routing
  const double n0 = static_cast<double>(s.count_channel(0));
  EXPECT_NEAR(n0, 0.5 * s.records.size(), 3 * std::sqrt(0.25 * s.records.size()));
  EXPECT_EQ(s.sync_period_ps, 50'000u);
  EXPECT_EQ(s.duration_ps, n * 50'000u);
  EXPECT_TRUE(s.is_sorted());
}

TEST(SimulateTimetags, DarkCountsOnly) {
  EmitterModel m;
  m.exc_prob_max = 0.0;
  auto inst = ideal_instrument();
  inst.dark_rate_cps = 2000.0;
  const std::uint64_t n = 20'000'000;  // 1 s
  const auto s = simulate_timetags(m, inst, m.exc_axis, std::nullopt, n, 4);
  for (std::uint16_t ch : {0, 1}) {
    const double c = static_cast<double>(s.count_channel(ch));
    EXPECT_NEAR(c, 2000.0, 3 * std::sqrt(2000.0));
  }
  for (const auto& r : s.records) ASSERT_EQ(r.flags, kTagDark);
}

TEST(SimulateTimetags, DarkCountsHalvedByPolarizer) {
  EmitterModel m;
  m.exc_prob_max = 0.0;
  auto inst = ideal_instrument();
  inst.dark_rate_cps = 4000.0;
  inst.polarizer_in_path = true;
  const auto s = simulate_timetags(m, inst, m.exc_axis, AxialAngle(0.0), 20'000'000, 5);
  EXPECT_NEAR(static_cast<double>(s.records.size()), 4000.0, 3 * std::sqrt(4000.0));
}

TEST(SimulateTimetags, RateConservationWithPolarizerAndDarks) {
  EmitterModel m;
  m.exc_axis = AxialAngle(30.0);
  m.em_axis_ss = AxialAngle(50.0);
  m.em_axis_delta = 8.0;
  m.vis_ss = 0.9;
  m.vis_delta = 0.3;
  m.relax_ns = 1.5;
  auto inst = ideal_instrument();
  inst.dark_rate_cps = 1e4;
  inst.polarizer_in_path = true;
  const std::uint64_t n = 4'000'000;
  const AxialAngle pol(80.0);
  const auto s = simulate_timetags(m, inst, AxialAngle(40.0), pol, n, 6);
  const double p = excitation_probability(m, AxialAngle(40.0), 1.0) * inst.detection_efficiency *
                   mean_detection_probability(m, pol);
  const double dark = 2 * 0.5 * inst.dark_rate_cps * n * 50e-9;  // n pulses of 50 ns
  const double expected = n * p + dark;
  const double sigma = std::sqrt(n * p * (1 - p) + dark);
  EXPECT_NEAR(static_cast<double>(s.records.size()), expected, 3 * sigma);
}

TEST(SimulateTimetags, AtMostOnePhotonPerPulse) {
  EmitterModel m;
  m.exc_prob_max = 1.0;
  auto inst = ideal_instrument();
  inst.detection_efficiency = 1.0;
  const auto run = simulate_detections(m, inst, m.exc_axis, std::nullopt, 3000, 7, {}, true);
  ASSERT_EQ(run.truth.size(), 3000u);
  // brute-force scan of every pair
  std::size_t same = 0;
  for (std::size_t i = 0; i < run.truth.size(); ++i)
    for (std::size_t j = i + 1; j < run.truth.size(); ++j) same += run.truth[i].pulse == run.truth[j].pulse;
  EXPECT_EQ(same, 0u);
}

TEST(SimulateTimetags, JitterMatchesIrf) {
  EmitterModel m;
  m.exc_prob_max = 1.0;
  auto inst = ideal_instrument();
  inst.detection_efficiency = 1.0;
  const auto run = simulate_detections(m, inst, m.exc_axis, std::nullopt, 20000, 8, {}, true);
  std::vector<double> d;
  for (const auto& t : run.truth) d.push_back(static_cast<double>(t.tag.timestamp_ps) - t.emission_ps);
  std::sort(d.begin(), d.end());
  // 1 ps quantization adds a uniform term of variance 1/12
  const double sigma = std::sqrt(std::pow(inst.irf_fwhm_ps * kFwhmToSigma, 2) + 1.0 / 12.0);
  double dmax = 0.0;
  const double n = static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double f = normal_cdf(d[i] / sigma);
    dmax = std::max({dmax, std::fabs(f - i / n), std::fabs(f - (i + 1) / n)});
  }
  EXPECT_LT(dmax, 1.63 / std::sqrt(n));  // 1 % level
}

TEST(SimulateTimetags, DeadTimeGapPerChannel) {
  EmitterModel m;
  m.exc_prob_max = 0.9;
  InstrumentConfig inst;
  inst.dark_rate_cps = 1e5;
  inst.detection_efficiency = 1.0;
  const auto s = simulate_timetags(m, inst, m.exc_axis, std::nullopt, 200'000, 9);
  std::map<int, std::uint64_t> last;
  for (const auto& r : s.records) {
    if (last.count(r.channel)) {
      ASSERT_GE(r.timestamp_ps - last[r.channel], 77'000u);
    }
    last[r.channel] = r.timestamp_ps;
  }
}

TEST(ApplyDeadTime, NonParalyzable) {
  const std::vector<TimeTagRecord> in{{0, 0, 0}, {0, 0, 50}, {0, 0, 90}, {1, 0, 95}, {0, 0, 150}, {0, 0, 200}};
  const auto out = apply_dead_time(in, 100.0);
  // 50 and 90 fall inside the window opened at 0; 150 is accepted, 200 is inside its window
  const std::vector<TimeTagRecord> want{{0, 0, 0}, {1, 0, 95}, {0, 0, 150}};
  EXPECT_EQ(out, want);
}

TEST(SimulateTimetags, DeterministicAndThreadInvariant) {
  EmitterModel m;
  InstrumentConfig inst;
  inst.dark_rate_cps = 500.0;
  SimulationOptions one;
  one.block_pulses = 10'000;
  SimulationOptions many = one;
  many.threads = 4;
  const auto a = simulate_timetags(m, inst, m.exc_axis, std::nullopt, 105'000, 42, one);
  const auto b = simulate_timetags(m, inst, m.exc_axis, std::nullopt, 105'000, 42, one);
  const auto c = simulate_timetags(m, inst, m.exc_axis, std::nullopt, 105'000, 42, many);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  const auto d = simulate_timetags(m, inst, m.exc_axis, std::nullopt, 105'000, 43, one);
  EXPECT_NE(a, d);
}

TEST(SimulateTimetags, Errors) {
  EmitterModel m;
  InstrumentConfig inst;
  EXPECT_THROW(simulate_timetags(m, inst, m.exc_axis, std::nullopt, 0, 1), InvalidArgument);
  EXPECT_THROW(simulate_timetags(m, inst, m.exc_axis, std::nullopt, std::uint64_t{1} << 62, 1), InvalidArgument);
  inst.polarizer_in_path = true;
  EXPECT_THROW(simulate_timetags(m, inst, m.exc_axis, std::nullopt, 10, 1), InvalidArgument);
  inst.polarizer_in_path = false;
  inst.splitter_ratio = 1.5;
  EXPECT_THROW(simulate_timetags(m, inst, m.exc_axis, std::nullopt, 10, 1), InvalidArgument);
}

TEST(SimulatePolarizationSweep, EmissionFullVisibilityHasZeroMinimum) {
  EmitterModel m;
  m.em_axis_ss = AxialAngle(20.0);
  SweepOptions o;
  o.poisson_noise = false;
  const auto a = angle_steps(10.0);
  const auto s = simulate_polarization_sweep(m, ideal_instrument(), SweepMode::emission, a, 5.0, 1, o);
  const double mx = *std::max_element(s.intensities.begin(), s.intensities.end());
  const double mn = *std::min_element(s.intensities.begin(), s.intensities.end());
  EXPECT_LT(mn / mx, 1e-12);
}

TEST(SimulatePolarizationSweep, ExcitationVisibilityRoundTrip) {
  EmitterModel m;
  m.exc_axis = AxialAngle(63.0);
  m.exc_visibility = 0.9667;
  m.exc_prob_max = 0.01;
  const auto a = angle_steps(10.0);
  const auto s = simulate_polarization_sweep(m, ideal_instrument(), SweepMode::excitation, a, 5.0, 2);
  const auto r = analyze_polarization_sweep(s);
  EXPECT_NEAR(r.visibility, 0.967, 0.01);
  EXPECT_NEAR(axis_distance(r.axis, m.exc_axis), 0.0, 1.0);
}

TEST(SimulatePolarizationSweep, IsotropicEmitterIsFlat) {
  EmitterModel m;
  m.vis_ss = 0.0;
  m.exc_prob_max = 0.001;
  const auto a = angle_steps(10.0);
  const auto s = simulate_polarization_sweep(m, ideal_instrument(), SweepMode::emission, a, 5.0, 3);
  double mean = 0.0;
  for (double v : s.intensities) mean += v;
  mean /= s.size();
  double chi2 = 0.0;
  for (double v : s.intensities) chi2 += (v - mean) * (v - mean) / mean;
  // 35 degrees of freedom, far tail cut
  EXPECT_LT(chi2, 70.0);
}

TEST(SimulatePolarizationSweep, Errors) {
  EmitterModel m;
  const std::vector<double> few{0, 10, 20};
  EXPECT_THROW(simulate_polarization_sweep(m, ideal_instrument(), SweepMode::emission, few, 1.0, 1), InvalidArgument);
  EXPECT_THROW(simulate_polarization_sweep(m, ideal_instrument(), SweepMode::emission, {}, 1.0, 1), InvalidArgument);
}

TEST(SimulateDecayMap, ColumnSumsMatchPerAngleStreams) {
  EmitterModel m;
  m.exc_prob_max = 0.5;
  const auto inst = ideal_instrument();
  const std::vector<double> a{0, 45, 90, 135};
  const auto map = simulate_decay_map(m, inst, a, 20'000, 100.0, 77);
  auto with_pol = inst;
  with_pol.polarizer_in_path = true;
  for (std::size_t j = 0; j < a.size(); ++j) {
    double col = 0.0;
    for (std::size_t r = 0; r < map.n_rows; ++r) col += map.at(r, j);
    const auto s = simulate_timetags(m, with_pol, m.exc_axis, AxialAngle(a[j]), 20'000, derive_stream_seed(77, j));
    EXPECT_EQ(col, static_cast<double>(s.records.size()));
  }
  EXPECT_EQ(map.n_rows, 500u);
  ASSERT_TRUE(map.t_zero_ps.has_value());
  EXPECT_EQ(*map.t_zero_ps, inst.pulse_offset_ps);
}

TEST(SimulateDecayMap, StaticDipoleRowsShareAxis) {
  EmitterModel m;
  m.em_axis_ss = AxialAngle(70.0);
  m.vis_ss = 0.9;
  m.exc_prob_max = 1.0;
  auto inst = ideal_instrument();
  inst.detection_efficiency = 1.0;
  const auto a = angle_steps(15.0);
  const auto map = simulate_decay_map(m, inst, a, 20'000, 1000.0, 11);
  const std::size_t first = first_kept_row(map, *map.t_zero_ps, 120.0);
  for (std::size_t r = first; r < first + 8; ++r) {
    const auto fit = analyze_polarization_sweep(sweep_from_rows(map, r, r + 1));
    EXPECT_NEAR(axis_distance(fit.axis, m.em_axis_ss), 0.0, 1.0) << "row " << r;
  }
}

TEST(SimulateDecayMap, ZeroSignalAndErrors) {
  EmitterModel m;
  m.exc_prob_max = 0.0;
  const std::vector<double> a{0, 90};
  const auto map = simulate_decay_map(m, ideal_instrument(), a, 1000, 100.0, 1);
  EXPECT_EQ(map.total(), 0.0);
  EXPECT_THROW(simulate_decay_map(m, ideal_instrument(), a, 1000, 60'000.0, 1), InvalidArgument);
  EXPECT_THROW(simulate_decay_map(m, ideal_instrument(), a, 1000, 0.5, 1), InvalidArgument);
}

TEST(SimulatePLMap, NoiselessPeakAtEmitterPixel) {
  PLMapConfig cfg;
  cfg.poisson_noise = false;
  const std::vector<PLEmitter> e{{1625.0, 875.0, 1e5}};
  const auto map = simulate_pl_map(e, ideal_instrument(), cfg, 1);
  const auto it = std::max_element(map.values.begin(), map.values.end());
  const std::size_t idx = static_cast<std::size_t>(it - map.values.begin());
  EXPECT_EQ(idx % map.width, 32u);
  EXPECT_EQ(idx / map.width, 17u);
}

TEST(SimulatePLMap, DriftShiftsFittedCentroid) {
  PLMapConfig cfg;
  cfg.drift_x_nm_per_frame = 50.0;
  const std::vector<PLEmitter> e{{1600.0, 1600.0, 2e6}};
  cfg.frame = 0;
  const auto m0 = simulate_pl_map(e, ideal_instrument(), cfg, 21);
  cfg.frame = 1;
  const auto m1 = simulate_pl_map(e, ideal_instrument(), cfg, 22);
  const auto s0 = integrate_spot(m0, 32.0, 32.0, 12.0);
  const auto s1 = integrate_spot(m1, 32.0, 32.0, 12.0);
  EXPECT_FALSE(s0.fallback);
  EXPECT_NEAR(s1.centroid_x_nm(m1) - s0.centroid_x_nm(m0), 50.0, 10.0);
  EXPECT_NEAR(s1.centroid_y_nm(m1) - s0.centroid_y_nm(m0), 0.0, 10.0);
}

TEST(SimulatePLMap, MergedSpotFluxIsAdditive) {
  PLMapConfig cfg;
  const PLEmitter a{1450.0, 1600.0, 2e5}, b{1750.0, 1600.0, 1.5e5};
  const auto ma = simulate_pl_map(std::vector{a}, ideal_instrument(), cfg, 31);
  const auto mb = simulate_pl_map(std::vector{b}, ideal_instrument(), cfg, 32);
  const auto mab = simulate_pl_map(std::vector{a, b}, ideal_instrument(), cfg, 33);
  const auto sa = integrate_spot(ma, 29.0, 32.0, 14.0);
  const auto sb = integrate_spot(mb, 35.0, 32.0, 14.0);
  const auto sab = integrate_spot(mab, 32.0, 32.0, 14.0);
  const double sigma = std::sqrt(sa.flux_err * sa.flux_err + sb.flux_err * sb.flux_err + sab.flux_err * sab.flux_err);
  EXPECT_NEAR(sab.flux, sa.flux + sb.flux, 3 * sigma);
}

TEST(SimulatePLMap, RejectsEmitterOutsideField) {
  PLMapConfig cfg;
  const std::vector<PLEmitter> e{{-5.0, 100.0, 1e5}};
  EXPECT_THROW(simulate_pl_map(e, ideal_instrument(), cfg, 1), InvalidArgument);
}

TEST(SimulateShgSweep, MaximumAtAxisAndQuadraticPower) {
  const CrystalAxes c{AxialAngle(43.52)};
  ShgConfig cfg;
  cfg.poisson_noise = false;
  cfg.background = 3.0;
  const std::vector<double> a{43.52, 73.52, 103.52};
  const auto s1 = simulate_shg_sweep(c, 2.0, a, cfg, 1);
  const auto s2 = simulate_shg_sweep(c, 4.0, a, cfg, 1);
  EXPECT_NEAR(s1.intensities[0], 10.0 * 4.0 + 3.0, 1e-9);
  EXPECT_NEAR(s1.intensities[1], 3.0, 1e-9);
  EXPECT_NEAR(s1.intensities[2], s1.intensities[0], 1e-9);
  EXPECT_NEAR((s2.intensities[0] - 3.0) / (s1.intensities[0] - 3.0), 4.0, 1e-12);
  EXPECT_THROW(simulate_shg_sweep(c, 0.0, a, cfg, 1), InvalidArgument);
}

TEST(SimulateShgSweep, SixPetals) {
  const CrystalAxes c{AxialAngle(10.0)};
  ShgConfig cfg;
  cfg.poisson_noise = false;
  std::vector<double> a;
  for (int i = 0; i < 3600; ++i) a.push_back(0.1 * i);
  const auto s = simulate_shg_sweep(c, 1.0, a, cfg, 1);
  int maxima = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double l = s.intensities[(i + a.size() - 1) % a.size()], r = s.intensities[(i + 1) % a.size()];
    maxima += s.intensities[i] > l && s.intensities[i] >= r;
  }
  EXPECT_EQ(maxima, 6);
}
