#pragma once

// Monte Carlo generation of detector time tags, polarization sweeps, decay
// maps, PL maps and SHG sweeps.
//
// Pulses are simulated in fixed-size blocks. Block b draws from its own Rng
// seeded with derive_stream_seed(seed, b), so the output does not depend on
// how blocks are spread over threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "qepol/error.hpp"
#include "qepol/fitting.hpp"
#include "qepol/geometry.hpp"
#include "qepol/photophysics.hpp"
#include "qepol/rng.hpp"
#include "qepol/sweep.hpp"
#include "qepol/timetag.hpp"

namespace qepol {

inline constexpr double kFwhmToSigma = 0.42466090014400953;  // 1 / (2 sqrt(2 ln 2))

struct InstrumentConfig {
  double rep_rate_MHz = 20.0;
  double irf_fwhm_ps = 70.0;
  double dark_rate_cps = 0.0;  ///< per channel
  double dead_time_ns = 77.0;
  double splitter_ratio = 0.5;  ///< fraction routed to channel 0
  double detection_efficiency = 0.35;
  bool polarizer_in_path = false;
  double pulse_offset_ps = 2000.0;  ///< laser arrival after the sync edge
  double resolution_ps = 1.0;       ///< tagger quantization

  std::uint64_t sync_period_ps() const { return static_cast<std::uint64_t>(std::llround(1e6 / rep_rate_MHz)); }
};

inline void validate(const InstrumentConfig& c) {
  detail::require(std::isfinite(c.rep_rate_MHz) && c.rep_rate_MHz > 0.0 && c.rep_rate_MHz <= 1e5,
                  "rep_rate_MHz must lie in (0, 1e5]");
  detail::require(c.irf_fwhm_ps >= 0.0 && std::isfinite(c.irf_fwhm_ps), "irf_fwhm_ps must be >= 0");
  detail::require(c.dark_rate_cps >= 0.0 && std::isfinite(c.dark_rate_cps), "dark_rate_cps must be >= 0");
  detail::require(c.dead_time_ns >= 0.0 && std::isfinite(c.dead_time_ns), "dead_time_ns must be >= 0");
  detail::require(c.splitter_ratio >= 0.0 && c.splitter_ratio <= 1.0, "splitter_ratio must lie in [0, 1]");
  detail::require(c.detection_efficiency >= 0.0 && c.detection_efficiency <= 1.0,
                  "detection_efficiency must lie in [0, 1]");
  detail::require(c.pulse_offset_ps >= 0.0 && c.pulse_offset_ps < static_cast<double>(c.sync_period_ps()),
                  "pulse_offset_ps must lie inside the sync period");
  detail::require(c.resolution_ps >= 1.0 && std::isfinite(c.resolution_ps), "resolution_ps must be >= 1");
}

struct SimulationOptions {
  double power_scale = 1.0;
  unsigned threads = 1;
  std::uint64_t block_pulses = 1u << 16;
};

/// An emitter photon with its true emission time, for IRF and bookkeeping checks.
struct PhotonTruth {
  std::uint64_t pulse = 0;
  double emission_ps = 0.0;  ///< pulse arrival + decay delay, before jitter and quantization
  TimeTagRecord tag;
};

namespace detail {

struct BlockOutput {
  std::vector<TimeTagRecord> tags;
  std::vector<PhotonTruth> truth;
};

inline BlockOutput simulate_block(const EmitterModel& m, const InstrumentConfig& inst, double p_exc,
                                  std::optional<AxialAngle> polarizer, std::uint64_t first_pulse,
                                  std::uint64_t end_pulse, std::uint64_t seed, std::uint64_t block, bool keep_truth) {
  Rng rng(derive_stream_seed(seed, block));
  BlockOutput out;
  const double period = static_cast<double>(inst.sync_period_ps());
  const double sigma = inst.irf_fwhm_ps * kFwhmToSigma;
  const double res = inst.resolution_ps;
  auto quantize = [res](double t) {
    const double q = std::round(std::max(t, 0.0) / res) * res;
    return static_cast<std::uint64_t>(q);
  };

  for (std::uint64_t k = first_pulse; k < end_pulse; ++k) {
    if (!rng.bernoulli(p_exc)) continue;
    const double delay_ns = sample_decay_delay(m, rng);
    if (polarizer && !rng.bernoulli(detection_probability(emission_state_at(m, delay_ns), *polarizer))) continue;
    if (!rng.bernoulli(inst.detection_efficiency)) continue;
    const std::uint16_t ch = rng.bernoulli(inst.splitter_ratio) ? 0 : 1;
    const double emission = static_cast<double>(k) * period + inst.pulse_offset_ps + delay_ns * 1e3;
    const double jitter = sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0;
    const TimeTagRecord tag{ch, kTagNone, quantize(emission + jitter)};
    out.tags.push_back(tag);
    if (keep_truth) out.truth.push_back({k, emission, tag});
  }

  // dark counts: independent Poisson processes over this block's time window
  const double rate = inst.dark_rate_cps * (polarizer ? 0.5 : 1.0) * 1e-12;  // per ps
  if (rate > 0.0) {
    const double t_begin = static_cast<double>(first_pulse) * period;
    const double t_end = static_cast<double>(end_pulse) * period;
    for (std::uint16_t ch = 0; ch < 2; ++ch) {
      double t = t_begin + rng.exponential(1.0 / rate);
      while (t < t_end) {
        out.tags.push_back({ch, kTagDark, quantize(t)});
        t += rng.exponential(1.0 / rate);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Non-paralyzable dead time, applied per channel on a time-ordered record list.
inline std::vector<TimeTagRecord> apply_dead_time(std::span<const TimeTagRecord> sorted, double dead_time_ps) {
  if (dead_time_ps <= 0.0) return {sorted.begin(), sorted.end()};
  std::vector<TimeTagRecord> out;
  out.reserve(sorted.size());
  std::vector<std::optional<std::uint64_t>> last(1);
  for (const auto& r : sorted) {
    if (r.channel >= last.size()) last.resize(r.channel + 1u);
    auto& l = last[r.channel];
    if (l && static_cast<double>(r.timestamp_ps - *l) < dead_time_ps) continue;
    l = r.timestamp_ps;
    out.push_back(r);
  }
  return out;
}

struct SimulationRun {
  TimeTagStream stream;
  std::vector<PhotonTruth> truth;  ///< emitter photons before dead time; only filled on request
};

inline SimulationRun simulate_detections(const EmitterModel& m, const InstrumentConfig& inst, AxialAngle laser_axis,
                                         std::optional<AxialAngle> det_polarizer, std::uint64_t n_pulses,
                                         std::uint64_t seed, const SimulationOptions& opt = {},
                                         bool keep_truth = false) {
  validate(m);
  validate(inst);
  detail::require(n_pulses >= 1, "n_pulses must be >= 1");
  detail::require(opt.block_pulses >= 1, "block_pulses must be >= 1");
  detail::require(!inst.polarizer_in_path || det_polarizer.has_value(),
                  "instrument has a polarizer in the path but no polarizer angle was given");
  const std::uint64_t period = inst.sync_period_ps();
  // leave room for the pulse offset and a long decay tail
  const std::uint64_t limit = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()) / 2;
  if (n_pulses > limit / period) throw InvalidArgument("n_pulses * sync period overflows the 64-bit timestamp range");

  const double p_exc = excitation_probability(m, laser_axis, opt.power_scale);
  const std::uint64_t n_blocks = (n_pulses + opt.block_pulses - 1) / opt.block_pulses;
  std::vector<detail::BlockOutput> blocks(n_blocks);
  auto run_block = [&](std::uint64_t b) {
    const std::uint64_t first = b * opt.block_pulses;
    const std::uint64_t end = std::min(n_pulses, first + opt.block_pulses);
    blocks[b] = detail::simulate_block(m, inst, p_exc, det_polarizer, first, end, seed, b, keep_truth);
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(n_blocks)));
  if (threads == 1) {
    for (std::uint64_t b = 0; b < n_blocks; ++b) run_block(b);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::uint64_t b = t; b < n_blocks; b += threads) run_block(b);
      });
    for (auto& th : pool) th.join();
  }

  SimulationRun run;
  std::size_t total = 0;
  for (const auto& b : blocks) total += b.tags.size();
  run.stream.records.reserve(total);
  for (auto& b : blocks) {
    run.stream.records.insert(run.stream.records.end(), b.tags.begin(), b.tags.end());
    if (keep_truth) run.truth.insert(run.truth.end(), b.truth.begin(), b.truth.end());
    b = {};
  }
  std::sort(run.stream.records.begin(), run.stream.records.end(), tag_order);
  run.stream.records = apply_dead_time(run.stream.records, inst.dead_time_ns * 1e3);
  run.stream.sync_period_ps = period;
  run.stream.duration_ps = n_pulses * period;
  return run;
}

inline TimeTagStream simulate_timetags(const EmitterModel& m, const InstrumentConfig& inst, AxialAngle laser_axis,
                                       std::optional<AxialAngle> det_polarizer, std::uint64_t n_pulses,
                                       std::uint64_t seed, const SimulationOptions& opt = {}) {
  return simulate_detections(m, inst, laser_axis, det_polarizer, n_pulses, seed, opt).stream;
}

/// Emitter photons per second reaching channel `ch` (0 or 1), before dead time.
inline double signal_rate_cps(const EmitterModel& m, const InstrumentConfig& inst, AxialAngle laser_axis,
                              std::uint16_t ch, double power_scale = 1.0) {
  detail::require(ch <= 1, "channel must be 0 or 1");
  const double split = ch == 0 ? inst.splitter_ratio : 1.0 - inst.splitter_ratio;
  return inst.rep_rate_MHz * 1e6 * excitation_probability(m, laser_axis, power_scale) * inst.detection_efficiency *
         split;
}

/// Leakage of the two neighbouring peaks into a full-period centre window, exp(-P / 2 tau).
inline double g2_window_leakage(double period_ns, double lifetime_ns) { return std::exp(-period_ns / (2.0 * lifetime_ns)); }

/// Expected window-ratio g2(0) with signal fraction rho^2 = S0 S1 / ((S0 + B)(S1 + B)):
/// background coincidences fill the centre to 1 - rho^2, neighbouring peaks leak rho^2 eps.
inline double expected_g2_zero(double rho2, double leakage) { return 1.0 - rho2 + rho2 * leakage; }

/// Per-channel dark rate (no polarizer) that puts the expected g2(0) at `target_g2`.
inline double dark_rate_for_g2(const EmitterModel& m, const InstrumentConfig& inst, AxialAngle laser_axis,
                               double target_g2, double power_scale = 1.0) {
  const double eps = g2_window_leakage(1e-3 * static_cast<double>(inst.sync_period_ps()), m.lifetime_ns);
  detail::require(target_g2 >= eps && target_g2 < 1.0, "target g2 must lie in [leakage, 1)");
  const double rho2 = (1.0 - target_g2) / (1.0 - eps);
  const double s0 = signal_rate_cps(m, inst, laser_axis, 0, power_scale);
  const double s1 = signal_rate_cps(m, inst, laser_axis, 1, power_scale);
  detail::require(s0 > 0.0 && s1 > 0.0, "both channels need signal");
  // (s0 + b)(s1 + b) = s0 s1 / rho2
  const double sum = s0 + s1, c = s0 * s1 * (1.0 - 1.0 / rho2);
  return 0.5 * (-sum + std::sqrt(sum * sum - 4.0 * c));
}

// ---------------------------------------------------------------------------
// rate-level sweeps

enum class SweepMode { excitation, emission };

struct SweepOptions {
  double power_scale = 1.0;
  bool poisson_noise = true;  ///< false returns expected counts
};

/// Expected detected count rate (both channels) at one sweep angle.
/// Dead-time losses are not modelled at this level.
inline double expected_sweep_rate(const EmitterModel& m, const InstrumentConfig& inst, SweepMode mode, double angle_deg,
                                  double power_scale = 1.0) {
  const double pulses_per_s = inst.rep_rate_MHz * 1e6;
  if (mode == SweepMode::excitation) {
    const double p = excitation_probability(m, AxialAngle(angle_deg), power_scale);
    return pulses_per_s * p * inst.detection_efficiency + 2.0 * inst.dark_rate_cps;
  }
  // emission: laser held on the excitation axis, analyzer rotated
  const double p = excitation_probability(m, m.exc_axis, power_scale);
  return pulses_per_s * p * inst.detection_efficiency * mean_detection_probability(m, AxialAngle(angle_deg)) +
         inst.dark_rate_cps;
}

inline PolarSweep simulate_polarization_sweep(const EmitterModel& m, const InstrumentConfig& inst, SweepMode mode,
                                              std::span<const double> angles_deg, double acquisition_s,
                                              std::uint64_t seed, const SweepOptions& opt = {}) {
  validate(m);
  validate(inst);
  detail::require(!angles_deg.empty(), "angle list must not be empty");
  {
    std::vector<double> distinct(angles_deg.begin(), angles_deg.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    detail::require(distinct.size() >= 8, "a polarization sweep needs at least 8 distinct angles");
  }
  detail::require(acquisition_s > 0.0, "acquisition time must be > 0");
  Rng rng(derive_stream_seed(seed, 0));
  PolarSweep s;
  s.acquisition_s = acquisition_s;
  for (double a : angles_deg) {
    const double mean = expected_sweep_rate(m, inst, mode, a, opt.power_scale) * acquisition_s;
    const double c = opt.poisson_noise ? static_cast<double>(rng.poisson(mean)) : mean;
    s.angles_deg.push_back(a);
    s.intensities.push_back(c);
    s.errors.push_back(std::sqrt(c));
  }
  return s;
}

// ---------------------------------------------------------------------------
// decay maps

/// Histogram of (timestamp mod sync period) against analyzer angle.
/// Angle j is simulated with its own stream seed derived from (seed, j).
inline DecayMap simulate_decay_map(const EmitterModel& m, const InstrumentConfig& inst,
                                   std::span<const double> angles_deg, std::uint64_t n_pulses_per_angle,
                                   double time_bin_ps, std::uint64_t seed, const SimulationOptions& opt = {}) {
  validate(inst);
  detail::require(time_bin_ps >= 1.0, "time_bin_ps must be >= 1");
  const double period = static_cast<double>(inst.sync_period_ps());
  detail::require(time_bin_ps <= period, "time bin must not exceed the pulse period");
  detail::require(!angles_deg.empty(), "angle list must not be empty");

  const auto rows = static_cast<std::size_t>(std::ceil(period / time_bin_ps));
  DecayMap map(0.0, time_bin_ps, {angles_deg.begin(), angles_deg.end()}, rows);
  map.t_zero_ps = inst.pulse_offset_ps;
  InstrumentConfig with_pol = inst;
  with_pol.polarizer_in_path = true;
  const std::uint64_t p = inst.sync_period_ps();
  for (std::size_t j = 0; j < angles_deg.size(); ++j) {
    const auto stream = simulate_timetags(m, with_pol, m.exc_axis, AxialAngle(angles_deg[j]), n_pulses_per_angle,
                                          derive_stream_seed(seed, j), opt);
    for (const auto& r : stream.records) {
      const auto row = static_cast<std::size_t>(static_cast<double>(r.timestamp_ps % p) / time_bin_ps);
      map.at(std::min(row, rows - 1), j) += 1.0;
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// PL maps

struct PLEmitter {
  double x_nm = 0.0;
  double y_nm = 0.0;
  double rate_cps = 1e5;  ///< detected count rate of the whole spot
};

struct PLMapConfig {
  std::size_t width = 64;
  std::size_t height = 64;
  double pixel_size_nm = 50.0;
  double dwell_ms = 5.0;
  double psf_fwhm_nm = 400.0;
  double drift_x_nm_per_frame = 0.0;
  double drift_y_nm_per_frame = 0.0;
  int frame = 0;
  double background_cps = 0.0;
  bool poisson_noise = true;
};

/// Renders Gaussian PSF spots integrated over each pixel, plus background and
/// detector darks, optionally shifted by frame * drift.
inline PLMap simulate_pl_map(std::span<const PLEmitter> emitters, const InstrumentConfig& inst,
                             const PLMapConfig& cfg, std::uint64_t seed) {
  detail::require(cfg.width > 0 && cfg.height > 0 && cfg.pixel_size_nm > 0.0 && cfg.dwell_ms > 0.0,
                  "PL map needs a positive size, pixel size and dwell");
  detail::require(cfg.psf_fwhm_nm > 0.0, "psf_fwhm_nm must be > 0");
  const double fw = static_cast<double>(cfg.width) * cfg.pixel_size_nm;
  const double fh = static_cast<double>(cfg.height) * cfg.pixel_size_nm;
  for (const auto& e : emitters)
    detail::require(e.x_nm >= 0.0 && e.x_nm <= fw && e.y_nm >= 0.0 && e.y_nm <= fh && e.rate_cps >= 0.0,
                    "emitter positions must lie inside the field");

  PLMap map;
  map.width = cfg.width;
  map.height = cfg.height;
  map.pixel_size_nm = cfg.pixel_size_nm;
  map.dwell_ms = cfg.dwell_ms;
  map.values.assign(cfg.width * cfg.height, 0.0);

  const double sigma = cfg.psf_fwhm_nm * kFwhmToSigma;
  const double dwell_s = cfg.dwell_ms * 1e-3;
  const double dx = cfg.frame * cfg.drift_x_nm_per_frame, dy = cfg.frame * cfg.drift_y_nm_per_frame;
  auto cdf = [sigma](double x) { return 0.5 * std::erfc(-x / (sigma * std::numbers::sqrt2)); };

  const double bg = (cfg.background_cps + 2.0 * inst.dark_rate_cps) * dwell_s;
  Rng rng(derive_stream_seed(seed, 0));
  for (std::size_t iy = 0; iy < cfg.height; ++iy) {
    for (std::size_t ix = 0; ix < cfg.width; ++ix) {
      const double x0 = static_cast<double>(ix) * cfg.pixel_size_nm, y0 = static_cast<double>(iy) * cfg.pixel_size_nm;
      double mean = bg;
      for (const auto& e : emitters) {
        const double cx = e.x_nm + dx, cy = e.y_nm + dy;
        const double fx = cdf(x0 + cfg.pixel_size_nm - cx) - cdf(x0 - cx);
        const double fy = cdf(y0 + cfg.pixel_size_nm - cy) - cdf(y0 - cy);
        mean += e.rate_cps * dwell_s * fx * fy;
      }
      map.at(ix, iy) = cfg.poisson_noise ? static_cast<double>(rng.poisson(mean)) : mean;
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// SHG

struct ShgConfig {
  ShgGeometry geometry = ShgGeometry::parallel;
  double counts_per_mW2 = 10.0;  ///< signal at peak per (pump power)^2
  double background = 0.0;       ///< counts per angle
  bool poisson_noise = true;
};

/// I(theta) = A P^2 cos^2(3(theta - theta0)) + B, with sin^2 in the perpendicular geometry.
inline PolarSweep simulate_shg_sweep(const CrystalAxes& crystal, double pump_power_mW,
                                     std::span<const double> angles_deg, const ShgConfig& cfg, std::uint64_t seed) {
  detail::require(pump_power_mW > 0.0, "pump power must be > 0");
  detail::require(!angles_deg.empty(), "angle list must not be empty");
  detail::require(cfg.counts_per_mW2 >= 0.0 && cfg.background >= 0.0, "SHG amplitude and background must be >= 0");
  Rng rng(derive_stream_seed(seed, 0));
  const SixfoldParams p{cfg.counts_per_mW2 * pump_power_mW * pump_power_mW, crystal.theta0.degrees(), cfg.background};
  PolarSweep s;
  for (double a : angles_deg) {
    const double mean = eval_sixfold(p, a, cfg.geometry);
    const double c = cfg.poisson_noise ? static_cast<double>(rng.poisson(mean)) : mean;
    s.angles_deg.push_back(a);
    s.intensities.push_back(c);
    s.errors.push_back(std::sqrt(c));
  }
  return s;
}

}  // namespace qepol
