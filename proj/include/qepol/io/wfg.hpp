#pragma once

// WFG1 wavefunction grid files.
//
//   offset  size  field
//        0     4  magic "WFG1"
//        4    12  nx, ny, nz (u32)
//       16    24  hx, hy, hz (f64, bohr)
//       40     8  energy (f64, Hartree)
//       48   8*N  values, N = nx*ny*nz complex64 pairs {re f32, im f32}, row-major, z fastest
//
// All values little-endian. Grids are centred on the origin.

#include <filesystem>
#include <string>

#include "qepol/io/binary.hpp"
#include "qepol/tdm.hpp"

namespace qepol::io {

inline constexpr std::size_t kWfgHeaderBytes = 48;

inline std::vector<std::uint8_t> encode_wfg(const WavefunctionGrid& g) {
  validate(g);
  ByteWriter w;
  w.reserve(kWfgHeaderBytes + 8 * g.size());
  w.bytes("WFG1");
  for (auto d : g.dims) {
    if (d > 0xFFFFFFFFu) throw InvalidArgument("grid dimension exceeds u32");
    w.u32(static_cast<std::uint32_t>(d));
  }
  for (double h : g.spacing) w.f64(h);
  w.f64(g.energy);
  for (const auto& v : g.values) {
    w.f32(static_cast<float>(v.real()));
    w.f32(static_cast<float>(v.imag()));
  }
  return w.data();
}

inline WavefunctionGrid decode_wfg(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kWfgHeaderBytes) throw FormatError("WFG1 header needs 48 bytes", bytes.size());
  ByteReader r(bytes);
  if (r.bytes(4) != "WFG1") throw FormatError("bad magic, expected \"WFG1\"", 0);
  WavefunctionGrid g;
  for (auto& d : g.dims) d = r.u32();
  for (auto& h : g.spacing) h = r.f64();
  g.energy = r.f64();
  const std::uint64_t n = static_cast<std::uint64_t>(g.dims[0]) * g.dims[1] * g.dims[2];
  if (r.remaining() != 8 * n)
    throw FormatError("WFG1 body holds " + std::to_string(r.remaining() / 8) + " values, header expects " +
                          std::to_string(n),
                      kWfgHeaderBytes);
  g.values.resize(n);
  for (auto& v : g.values) {
    const float re = r.f32();
    const float im = r.f32();
    v = {re, im};
  }
  validate(g);
  return g;
}

inline void write_wfg(const WavefunctionGrid& g, const std::filesystem::path& path) {
  write_file_atomic(path, encode_wfg(g));
}

inline WavefunctionGrid read_wfg(const std::filesystem::path& path) { return decode_wfg(read_file(path)); }

}  // namespace qepol::io
