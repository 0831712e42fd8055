#pragma once

// JSON report documents written by the command-line tools.
//
//   { "schema": "qepol-report/1", "command": ..., "seed": ..., "config": {...},
//     "inputs": {...}, "result": {...} }
//
// Non-finite numbers are written as null.

#include <string>

#include "qepol/angle_stats.hpp"
#include "qepol/correlation.hpp"
#include "qepol/io/config.hpp"
#include "qepol/lifetime.hpp"
#include "qepol/polarization.hpp"
#include "qepol/shg.hpp"
#include "qepol/tdm.hpp"

namespace qepol::io {

inline constexpr const char* kReportSchema = "qepol-report/1";

inline Json make_report(const std::string& command, std::optional<std::uint64_t> seed, Json config, Json inputs,
                        Json result) {
  return Json{{"schema", kReportSchema},
              {"command", command},
              {"seed", seed ? Json(*seed) : Json(nullptr)},
              {"config", std::move(config)},
              {"inputs", std::move(inputs)},
              {"result", std::move(result)}};
}

inline Json to_json(const FitResult& f) {
  return Json{{"converged", f.converged},
              {"n_iterations", f.n_iterations},
              {"chi2", f.chi2},
              {"reduced_chi2", f.reduced_chi2},
              {"message", f.message}};
}

inline Json to_json(const G2ZeroEstimate& g) {
  Json j{{"g2_0", g.g2_0},
         {"g2_0_err", g.g2_0_err},
         {"center_counts", g.center_counts},
         {"side_mean", g.side_mean},
         {"n_side_peaks", g.n_side_peaks}};
  if (g.has_fit)
    j["comb_fit"] = Json{{"converged", g.fit_converged},
                         {"g2_0_background_corrected", g.fit_g2_0},
                         {"g2_0_background_corrected_err", g.fit_g2_0_err},
                         {"window_ratio", g.fit_window_ratio},
                         {"window_ratio_err", g.fit_window_ratio_err},
                         {"consistent", g.consistent},
                         {"peak_area", g.fit_params.peak_area},
                         {"tau_ns", g.fit_params.tau_ns},
                         {"period_ns", g.fit_params.period_ns},
                         {"background_per_ns", g.fit_params.background}};
  else
    j["comb_fit"] = nullptr;
  return j;
}

inline Json to_json(const LifetimeFit& f) {
  return Json{{"tau_ns", f.params.tau_ns},
              {"tau_err", f.tau_err},
              {"t0_ns", f.params.t0_ns},
              {"t0_err", f.t0_err},
              {"amplitude", f.params.amplitude},
              {"amplitude_err", f.amplitude_err},
              {"background_per_ns", f.params.background},
              {"irf_sigma_ns", f.params.irf_sigma_ns},
              {"fit", to_json(f.fit)}};
}

inline Json to_json(const PolarizationResult& r) {
  return Json{{"axis_deg", r.axis.degrees()},
              {"axis_err", r.axis_err},
              {"visibility", r.visibility},
              {"visibility_err", r.visibility_err},
              {"amplitude", r.amplitude},
              {"amplitude_err", r.amplitude_err},
              {"background", r.background},
              {"axis_defined", r.axis_defined},
              {"converged", r.converged},
              {"reduced_chi2", r.reduced_chi2},
              {"n_iterations", r.n_iterations}};
}

inline Json to_json(const PolarizationDynamics& d) {
  Json bins = Json::array();
  for (const auto& b : d.bins) {
    Json j = to_json(b.fit);
    j["t_center_ns"] = b.t_center_ns;
    j["t_lo_ns"] = b.t_lo_ns;
    j["t_hi_ns"] = b.t_hi_ns;
    j["counts"] = b.counts;
    bins.push_back(std::move(j));
  }
  return Json{{"t_zero_ps", d.t_zero_ps}, {"t_cut_ps", d.t_cut_ps}, {"bins", std::move(bins)}};
}

inline Json to_json(const RelaxationFit& r) {
  return Json{{"vis_ss", r.vis_ss},         {"vis_ss_err", r.vis_ss_err},       {"vis_delta", r.vis_delta},
              {"vis_delta_err", r.vis_delta_err}, {"relax_ns", r.relax_ns},   {"relax_ns_err", r.relax_ns_err},
              {"axis_ss_deg", r.axis_ss},   {"axis_ss_err", r.axis_ss_err},     {"axis_delta_deg", r.axis_delta},
              {"axis_delta_err", r.axis_delta_err}, {"fit", to_json(r.fit)}};
}

inline Json to_json(const ShgResult& r) {
  return Json{{"theta0_deg", r.crystal.theta0.degrees()},
              {"theta0_err", r.theta0_err},
              {"crystal_axes_deg", {r.crystal.axes()[0].degrees(), r.crystal.axes()[1].degrees(),
                                    r.crystal.axes()[2].degrees()}},
              {"amplitude", r.amplitude},
              {"amplitude_err", r.amplitude_err},
              {"background", r.background},
              {"converged", r.converged},
              {"reduced_chi2", r.reduced_chi2}};
}

inline Json to_json(const PowerLaw& p) {
  return Json{{"exponent", p.exponent}, {"exponent_err", p.exponent_err}, {"prefactor", p.prefactor}};
}

inline Json to_json(const LinearSummary& s) { return Json{{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

inline Json to_json(const AxialSummary& s) {
  return Json{{"mean_deg", s.mean.degrees()}, {"std_deg", s.std_deg}, {"resultant_length", s.resultant_length}};
}

inline Json to_json(const ClusterSummary& c) {
  return Json{{"size", c.size},
              {"em_offset", to_json(c.em_offset)},
              {"exc_offset", to_json(c.exc_offset)},
              {"slope", c.slope},
              {"degenerate", c.degenerate}};
}

inline Json to_json(const AngleReport& r) {
  Json recs = Json::array();
  for (const auto& o : r.records)
    recs.push_back(Json{{"emitter_id", o.emitter_id},
                        {"exc_offset_deg", o.exc_offset},
                        {"em_offset_deg", o.em_offset},
                        {"exc_nearest_axis_deg", o.exc_nearest_axis.degrees()},
                        {"em_nearest_axis_deg", o.em_nearest_axis.degrees()},
                        {"misalignment_deg", o.misalignment},
                        {"misalignment_signed_deg", o.misalignment_signed},
                        {"cluster", o.cluster}});
  return Json{{"n_records", r.records.size()},
              {"exc_offset", to_json(r.exc_offset)},
              {"em_offset", to_json(r.em_offset)},
              {"misalignment", to_json(r.misalignment)},
              {"misalignment_signed", to_json(r.misalignment_signed)},
              {"exc_axes", to_json(r.exc_axes)},
              {"em_axes", to_json(r.em_axes)},
              {"cluster1", to_json(r.cluster1)},
              {"cluster2", to_json(r.cluster2)},
              {"cluster_spacing_deg", r.cluster_spacing},
              {"single_cluster", r.split.single_cluster},
              {"degenerate", r.degenerate},
              {"records", std::move(recs)}};
}

inline Json to_json(const CVec3& v) {
  Json a = Json::array();
  for (const auto& c : v) a.push_back(Json::array({c.real(), c.imag()}));
  return a;
}

inline Json to_json(const DipoleProjection& d) {
  return Json{{"dipole_axis_deg", d.dipole_axis.degrees()},
              {"axis_deg", d.axis.degrees()},
              {"visibility", d.visibility},
              {"offset_deg", d.offset},
              {"nearest_crystal_axis_deg", d.nearest_crystal_axis.degrees()},
              {"axis_defined", d.axis_defined}};
}

inline Json to_json(const DipoleResult& r) {
  return Json{{"mu_au", to_json(r.mu)},
              {"momentum_au", to_json(r.momentum)},
              {"magnitude_au", r.magnitude()},
              {"magnitude_debye", r.magnitude_debye()},
              {"polarization", to_json(r.polarization)}};
}

}  // namespace qepol::io
