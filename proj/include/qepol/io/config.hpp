#pragma once

// RunConfig JSON documents. Every block is optional on input; unknown keys are
// rejected; the echoed form lists every field explicitly.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "qepol/io/binary.hpp"
#include "qepol/photophysics.hpp"
#include "qepol/simulator.hpp"

namespace qepol::io {

using Json = nlohmann::ordered_json;

enum class ExperimentMode { timetags, excitation_sweep, emission_sweep, decay_map };

inline std::string to_string(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::timetags: return "timetags";
    case ExperimentMode::excitation_sweep: return "excitation_sweep";
    case ExperimentMode::emission_sweep: return "emission_sweep";
    case ExperimentMode::decay_map: return "decay_map";
  }
  return "?";
}

inline ExperimentMode parse_mode(const std::string& s) {
  for (auto m : {ExperimentMode::timetags, ExperimentMode::excitation_sweep, ExperimentMode::emission_sweep,
                 ExperimentMode::decay_map})
    if (to_string(m) == s) return m;
  throw InvalidArgument("unknown experiment mode '" + s +
                        "' (expected timetags, excitation_sweep, emission_sweep or decay_map)");
}

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::timetags;
  std::vector<double> angles_deg;      ///< sweep / decay-map angles; empty means 0:10:350
  std::uint64_t n_pulses = 1'000'000;  ///< per angle for decay maps
  std::uint64_t seed = 1;
  std::optional<double> laser_axis_deg;     ///< unset: the emitter's excitation axis
  std::optional<double> det_polarizer_deg;  ///< timetags only
  double acquisition_s = 5.0;
  double time_bin_ps = 50.0;
  double power_scale = 1.0;
  unsigned threads = 1;

  std::vector<double> resolved_angles() const {
    if (!angles_deg.empty()) return angles_deg;
    std::vector<double> a;
    for (int i = 0; i < 36; ++i) a.push_back(10.0 * i);
    return a;
  }
};

struct RunConfig {
  EmitterModel emitter;
  InstrumentConfig instrument;
  ExperimentConfig experiment;
};

namespace detail {

inline void reject_unknown(const Json& block, const std::string& name, std::initializer_list<const char*> known) {
  if (!block.is_object()) throw InvalidArgument("config block '" + name + "' must be an object");
  const std::set<std::string> k(known.begin(), known.end());
  for (const auto& [key, _] : block.items())
    if (!k.count(key)) throw InvalidArgument("unknown key '" + name + "." + key + "'");
}

template <class T>
void get_if(const Json& j, const char* key, T& out, const std::string& block) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument("config key '" + block + "." + key + "' has the wrong type");
  }
}

inline void get_angle(const Json& j, const char* key, AxialAngle& out, const std::string& block) {
  double d = out.degrees();
  get_if(j, key, d, block);
  out = AxialAngle(d);
}

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace detail

inline Json to_json(const EmitterModel& m) {
  return Json{{"lifetime_ns", m.lifetime_ns},
              {"exc_axis_deg", m.exc_axis.degrees()},
              {"em_axis_ss_deg", m.em_axis_ss.degrees()},
              {"em_axis_delta_deg", m.em_axis_delta},
              {"vis_ss", m.vis_ss},
              {"vis_delta", m.vis_delta},
              {"relax_ns", m.relax_ns},
              {"exc_prob_max", m.exc_prob_max},
              {"exc_visibility", m.exc_visibility}};
}

inline EmitterModel emitter_from_json(const Json& j) {
  const std::string b = "emitter";
  detail::reject_unknown(j, b,
                         {"lifetime_ns", "exc_axis_deg", "em_axis_ss_deg", "em_axis_delta_deg", "vis_ss", "vis_delta",
                          "relax_ns", "exc_prob_max", "exc_visibility"});
  EmitterModel m;
  detail::get_if(j, "lifetime_ns", m.lifetime_ns, b);
  detail::get_angle(j, "exc_axis_deg", m.exc_axis, b);
  detail::get_angle(j, "em_axis_ss_deg", m.em_axis_ss, b);
  detail::get_if(j, "em_axis_delta_deg", m.em_axis_delta, b);
  detail::get_if(j, "vis_ss", m.vis_ss, b);
  detail::get_if(j, "vis_delta", m.vis_delta, b);
  detail::get_if(j, "relax_ns", m.relax_ns, b);
  detail::get_if(j, "exc_prob_max", m.exc_prob_max, b);
  detail::get_if(j, "exc_visibility", m.exc_visibility, b);
  validate(m);
  return m;
}

inline Json to_json(const InstrumentConfig& c) {
  return Json{{"rep_rate_MHz", c.rep_rate_MHz},
              {"irf_fwhm_ps", c.irf_fwhm_ps},
              {"dark_rate_cps", c.dark_rate_cps},
              {"dead_time_ns", c.dead_time_ns},
              {"splitter_ratio", c.splitter_ratio},
              {"detection_efficiency", c.detection_efficiency},
              {"polarizer_in_path", c.polarizer_in_path},
              {"pulse_offset_ps", c.pulse_offset_ps},
              {"resolution_ps", c.resolution_ps}};
}

inline InstrumentConfig instrument_from_json(const Json& j) {
  const std::string b = "instrument";
  detail::reject_unknown(j, b,
                         {"rep_rate_MHz", "irf_fwhm_ps", "dark_rate_cps", "dead_time_ns", "splitter_ratio",
                          "detection_efficiency", "polarizer_in_path", "pulse_offset_ps", "resolution_ps"});
  InstrumentConfig c;
  detail::get_if(j, "rep_rate_MHz", c.rep_rate_MHz, b);
  detail::get_if(j, "irf_fwhm_ps", c.irf_fwhm_ps, b);
  detail::get_if(j, "dark_rate_cps", c.dark_rate_cps, b);
  detail::get_if(j, "dead_time_ns", c.dead_time_ns, b);
  detail::get_if(j, "splitter_ratio", c.splitter_ratio, b);
  detail::get_if(j, "detection_efficiency", c.detection_efficiency, b);
  detail::get_if(j, "polarizer_in_path", c.polarizer_in_path, b);
  detail::get_if(j, "pulse_offset_ps", c.pulse_offset_ps, b);
  detail::get_if(j, "resolution_ps", c.resolution_ps, b);
  validate(c);
  return c;
}

inline Json to_json(const ExperimentConfig& e) {
  return Json{{"mode", to_string(e.mode)},
              {"angles_deg", e.resolved_angles()},
              {"n_pulses", e.n_pulses},
              {"seed", e.seed},
              {"laser_axis_deg", detail::optional_number(e.laser_axis_deg)},
              {"det_polarizer_deg", detail::optional_number(e.det_polarizer_deg)},
              {"acquisition_s", e.acquisition_s},
              {"time_bin_ps", e.time_bin_ps},
              {"power_scale", e.power_scale},
              {"threads", e.threads}};
}

inline ExperimentConfig experiment_from_json(const Json& j) {
  const std::string b = "experiment";
  detail::reject_unknown(j, b,
                         {"mode", "angles_deg", "n_pulses", "seed", "laser_axis_deg", "det_polarizer_deg",
                          "acquisition_s", "time_bin_ps", "power_scale", "threads"});
  ExperimentConfig e;
  std::string mode = to_string(e.mode);
  detail::get_if(j, "mode", mode, b);
  e.mode = parse_mode(mode);
  detail::get_if(j, "angles_deg", e.angles_deg, b);
  detail::get_if(j, "n_pulses", e.n_pulses, b);
  detail::get_if(j, "seed", e.seed, b);
  for (auto [key, slot] : {std::pair{"laser_axis_deg", &e.laser_axis_deg}, {"det_polarizer_deg", &e.det_polarizer_deg}}) {
    if (j.contains(key) && !j.at(key).is_null()) {
      double v = 0.0;
      detail::get_if(j, key, v, b);
      *slot = v;
    }
  }
  detail::get_if(j, "acquisition_s", e.acquisition_s, b);
  detail::get_if(j, "time_bin_ps", e.time_bin_ps, b);
  detail::get_if(j, "power_scale", e.power_scale, b);
  detail::get_if(j, "threads", e.threads, b);
  qepol::detail::require(e.n_pulses >= 1, "experiment.n_pulses must be >= 1");
  qepol::detail::require(e.acquisition_s > 0.0, "experiment.acquisition_s must be > 0");
  qepol::detail::require(e.time_bin_ps >= 1.0, "experiment.time_bin_ps must be >= 1");
  qepol::detail::require(e.power_scale >= 0.0, "experiment.power_scale must be >= 0");
  for (double a : e.angles_deg) qepol::detail::require(std::isfinite(a), "experiment.angles_deg must be finite");
  return e;
}

inline Json to_json(const RunConfig& c) {
  return Json{{"emitter", to_json(c.emitter)},
              {"instrument", to_json(c.instrument)},
              {"experiment", to_json(c.experiment)}};
}

inline RunConfig run_config_from_json(const Json& j) {
  detail::reject_unknown(j, "config", {"emitter", "instrument", "experiment"});
  RunConfig c;
  if (j.contains("emitter")) c.emitter = emitter_from_json(j.at("emitter"));
  if (j.contains("instrument")) c.instrument = instrument_from_json(j.at("instrument"));
  if (j.contains("experiment")) c.experiment = experiment_from_json(j.at("experiment"));
  return c;
}

inline Json parse_json_text(std::string_view text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(what + ": " + e.what(), e.byte);
  }
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return run_config_from_json(
      parse_json_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string()));
}

/// Two-space indented JSON with a trailing newline.
inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline void write_json(const Json& j, const std::filesystem::path& path) { write_file_atomic(path, dump(j)); }

}  // namespace qepol::io
