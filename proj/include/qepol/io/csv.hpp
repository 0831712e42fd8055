#pragma once

// CSV curves: one header row, comma separators, '.' decimal point, '\n' line
// ends, numbers in shortest round-trip form.

#include <charconv>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "qepol/angle_stats.hpp"
#include "qepol/io/binary.hpp"
#include "qepol/sweep.hpp"

namespace qepol::io {

inline std::string format_number(double v) {
  if (!std::isfinite(v)) {
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
  }
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("number formatting failed");
  return std::string(buf, end);
}

inline double parse_number(std::string_view s, std::uint64_t line = 0) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || s.empty())
    throw FormatError("line " + std::to_string(line) + ": '" + std::string(s) + "' is not a number", line);
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw FormatError("missing CSV column '" + std::string(name) + "'", 1);
  }

  std::vector<double> numbers(std::string_view name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) out.push_back(parse_number(rows[r][c], r + 2));
    return out;
  }
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

/// Error offsets in CsvTable parsing are 1-based line numbers.
inline CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  std::size_t pos = 0;
  std::uint64_t line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw FormatError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(t.header.size()),
                        line_no);
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw FormatError("CSV file has no header row", 0);
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : n_(header.size()) { row_strings(header); }

  void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }
  void row(const std::vector<double>& values) {
    std::vector<std::string> s;
    s.reserve(values.size());
    for (double v : values) s.push_back(format_number(v));
    row_strings(s);
  }
  void row_strings(const std::vector<std::string>& fields) {
    if (fields.size() != n_) throw InvalidArgument("CSV row width does not match the header");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].find_first_of(",\n\r") != std::string::npos)
        throw InvalidArgument("CSV field '" + fields[i] + "' contains a separator");
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }
  void save(const std::filesystem::path& path) const { write_file_atomic(path, out_.str()); }

 private:
  std::size_t n_;
  std::ostringstream out_;
};

// ---------------------------------------------------------------------------
// PolarSweep: angle_deg,intensity,error,acquisition_s

inline std::string sweep_to_csv(const PolarSweep& s) {
  s.validate();
  CsvWriter w({"angle_deg", "intensity", "error", "acquisition_s"});
  for (std::size_t i = 0; i < s.size(); ++i) w.row({s.angles_deg[i], s.intensities[i], s.errors[i], s.acquisition_s});
  return w.str();
}

inline PolarSweep sweep_from_csv(const CsvTable& t) {
  PolarSweep s;
  s.angles_deg = t.numbers("angle_deg");
  s.intensities = t.numbers("intensity");
  s.errors = t.numbers("error");
  const auto acq = t.numbers("acquisition_s");
  if (!acq.empty()) s.acquisition_s = acq.front();
  s.validate();
  return s;
}

inline void write_sweep_csv(const PolarSweep& s, const std::filesystem::path& path) {
  write_file_atomic(path, sweep_to_csv(s));
}
inline PolarSweep read_sweep_csv(const std::filesystem::path& path) { return sweep_from_csv(read_csv(path)); }

// ---------------------------------------------------------------------------
// DecayMap: t_lo_ps followed by one column per analyzer angle, headed by the angle value

inline std::string decay_map_to_csv(const DecayMap& m) {
  m.validate();
  std::vector<std::string> header{"t_lo_ps"};
  for (double a : m.angles_deg) header.push_back(format_number(a));
  CsvWriter w(header);
  std::vector<double> row(m.n_angles() + 1);
  for (std::size_t r = 0; r < m.n_rows; ++r) {
    row[0] = m.row_lo(r);
    for (std::size_t j = 0; j < m.n_angles(); ++j) row[j + 1] = m.at(r, j);
    w.row(row);
  }
  return w.str();
}

inline DecayMap decay_map_from_csv(const CsvTable& t) {
  if (t.header.size() < 2 || t.header[0] != "t_lo_ps")
    throw FormatError("decay map CSV must start with a t_lo_ps column", 1);
  if (t.rows.size() < 1) throw FormatError("decay map CSV has no rows", 1);
  std::vector<double> angles;
  for (std::size_t j = 1; j < t.header.size(); ++j) angles.push_back(parse_number(t.header[j], 1));
  const auto tl = t.numbers("t_lo_ps");
  const double bin = tl.size() > 1 ? tl[1] - tl[0] : 1.0;
  DecayMap m(tl[0], bin, angles, t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (r > 0 && std::abs(tl[r] - (tl[0] + static_cast<double>(r) * bin)) > 1e-6 * std::max(1.0, std::abs(tl[r])))
      throw FormatError("decay map rows must be evenly spaced", r + 2);
    for (std::size_t j = 0; j < angles.size(); ++j) m.at(r, j) = parse_number(t.rows[r][j + 1], r + 2);
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// PLMap: x_px,y_px,counts with the pixel size and dwell repeated on every row

inline std::string pl_map_to_csv(const PLMap& m) {
  CsvWriter w({"x_px", "y_px", "counts", "pixel_size_nm", "dwell_ms"});
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      w.row({static_cast<double>(x), static_cast<double>(y), m.at(x, y), m.pixel_size_nm, m.dwell_ms});
  return w.str();
}

inline PLMap pl_map_from_csv(const CsvTable& t) {
  const auto xs = t.numbers("x_px"), ys = t.numbers("y_px"), v = t.numbers("counts");
  if (xs.empty()) throw FormatError("PL map CSV has no rows", 1);
  PLMap m;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    m.width = std::max(m.width, static_cast<std::size_t>(xs[i]) + 1);
    m.height = std::max(m.height, static_cast<std::size_t>(ys[i]) + 1);
  }
  if (m.width * m.height != xs.size()) throw FormatError("PL map CSV does not cover a full grid", 1);
  m.pixel_size_nm = t.numbers("pixel_size_nm").front();
  m.dwell_ms = t.numbers("dwell_ms").front();
  m.values.assign(xs.size(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (v[i] < 0.0) throw FormatError("PL map counts must be >= 0", i + 2);
    m.at(static_cast<std::size_t>(xs[i]), static_cast<std::size_t>(ys[i])) = v[i];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Dipole records

inline const std::vector<std::string>& dipole_record_header() {
  static const std::vector<std::string> h{"emitter_id", "exc_axis_deg", "exc_axis_err", "em_axis_deg", "em_axis_err",
                                          "exc_vis",    "em_vis",       "g2_0",         "lifetime_ns"};
  return h;
}

inline std::string dipole_records_to_csv(std::span<const DipoleRecord> recs) {
  CsvWriter w(dipole_record_header());
  for (const auto& r : recs)
    w.row_strings({r.emitter_id, format_number(r.exc_axis.degrees()), format_number(r.exc_axis_err),
                   format_number(r.em_axis.degrees()), format_number(r.em_axis_err), format_number(r.exc_vis),
                   format_number(r.em_vis), format_number(r.g2_0), format_number(r.lifetime_ns)});
  return w.str();
}

inline std::vector<DipoleRecord> dipole_records_from_csv(const CsvTable& t) {
  const std::size_t id = t.column("emitter_id");
  const auto xa = t.numbers("exc_axis_deg"), xe = t.numbers("exc_axis_err"), ea = t.numbers("em_axis_deg"),
             ee = t.numbers("em_axis_err"), xv = t.numbers("exc_vis"), ev = t.numbers("em_vis"),
             g = t.numbers("g2_0"), lt = t.numbers("lifetime_ns");
  std::vector<DipoleRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    out.push_back({t.rows[i][id], AxialAngle(xa[i]), xe[i], AxialAngle(ea[i]), ee[i], xv[i], ev[i], g[i], lt[i]});
  return out;
}

}  // namespace qepol::io
