#pragma once

// TTAG time-tag files.
//
//   offset  size  field
//        0     4  magic "TTAG"
//        4     2  version (u16) = 1
//        6     2  zero padding
//        8     8  rep_rate_mHz (u64), 0 when the stream has no sync
//       16     8  duration_ps (u64)
//       24     8  n_records (u64)
//       32     8  reserved, zero
//       40  16*n  records {channel u16, flags u16, reserved u32, timestamp_ps u64}
//
// All integers little-endian.

#include <cstdint>
#include <filesystem>
#include <string>

#include "qepol/io/binary.hpp"
#include "qepol/timetag.hpp"

namespace qepol::io {

inline constexpr std::uint16_t kTtagVersion = 1;
inline constexpr std::size_t kTtagHeaderBytes = 40;
inline constexpr std::size_t kTtagRecordBytes = 16;
inline constexpr std::uint64_t kPsPerSecondTimesMilli = 1'000'000'000'000'000ULL;  // 1e15: ps * mHz

inline std::uint64_t period_to_mhz(std::uint64_t period_ps) {
  return period_ps == 0 ? 0 : (kPsPerSecondTimesMilli + period_ps / 2) / period_ps;
}
inline std::uint64_t mhz_to_period(std::uint64_t mhz) {
  return mhz == 0 ? 0 : (kPsPerSecondTimesMilli + mhz / 2) / mhz;
}

inline std::vector<std::uint8_t> encode_ttag(const TimeTagStream& s) {
  const std::uint64_t mhz = period_to_mhz(s.sync_period_ps);
  if (mhz_to_period(mhz) != s.sync_period_ps)
    throw InvalidArgument("sync period " + std::to_string(s.sync_period_ps) + " ps is not representable as a mHz rate");
  if (!s.is_sorted()) throw InvalidArgument("time tags must be non-decreasing");
  ByteWriter w;
  w.reserve(kTtagHeaderBytes + kTtagRecordBytes * s.records.size());
  w.bytes("TTAG");
  w.u16(kTtagVersion);
  w.zeros(2);
  w.u64(mhz);
  w.u64(s.duration_ps);
  w.u64(s.records.size());
  w.zeros(8);
  for (const auto& r : s.records) {
    w.u16(r.channel);
    w.u16(r.flags);
    w.u32(0);
    w.u64(r.timestamp_ps);
  }
  return w.data();
}

inline TimeTagStream decode_ttag(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kTtagHeaderBytes)
    throw FormatError("TTAG header needs " + std::to_string(kTtagHeaderBytes) + " bytes, file has " +
                          std::to_string(bytes.size()),
                      bytes.size());
  ByteReader r(bytes);
  if (r.bytes(4) != "TTAG") throw FormatError("bad magic, expected \"TTAG\"", 0);
  const std::uint16_t version = r.u16();
  if (version != kTtagVersion) throw FormatError("unsupported TTAG version " + std::to_string(version), 4);
  r.skip(2);
  TimeTagStream s;
  s.sync_period_ps = mhz_to_period(r.u64());
  s.duration_ps = r.u64();
  const std::uint64_t n = r.u64();
  r.skip(8);
  const std::uint64_t body = bytes.size() - kTtagHeaderBytes;
  if (body != n * kTtagRecordBytes || n > body / kTtagRecordBytes) {
    const std::uint64_t actual = body / kTtagRecordBytes;
    throw FormatError("TTAG body holds " + std::to_string(actual) + " complete records (" + std::to_string(body) +
                          " bytes), header expects " + std::to_string(n),
                      kTtagHeaderBytes + actual * kTtagRecordBytes);
  }
  s.records.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t at = r.offset();
    auto& rec = s.records[i];
    rec.channel = r.u16();
    rec.flags = r.u16();
    r.skip(4);
    rec.timestamp_ps = r.u64();
    if (i > 0 && rec.timestamp_ps < s.records[i - 1].timestamp_ps)
      throw FormatError("timestamps decrease at record " + std::to_string(i), at);
  }
  return s;
}

inline void write_ttag(const TimeTagStream& s, const std::filesystem::path& path) {
  write_file_atomic(path, encode_ttag(s));
}

inline TimeTagStream read_ttag(const std::filesystem::path& path) { return decode_ttag(read_file(path)); }

}  // namespace qepol::io
