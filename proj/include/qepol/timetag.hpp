#pragma once

#include <cstdint>
#include <tuple>
#include <vector>

namespace qepol {

enum TagFlags : std::uint16_t {
  kTagNone = 0,
  kTagDark = 1,  ///< simulator truth label: dark count, not an emitter photon
};

struct TimeTagRecord {
  std::uint16_t channel = 0;
  std::uint16_t flags = kTagNone;
  std::uint64_t timestamp_ps = 0;

  friend bool operator==(const TimeTagRecord&, const TimeTagRecord&) = default;
};

/// Total order used whenever records are merged: time, then channel, then flags.
inline bool tag_order(const TimeTagRecord& a, const TimeTagRecord& b) {
  return std::tie(a.timestamp_ps, a.channel, a.flags) < std::tie(b.timestamp_ps, b.channel, b.flags);
}

/// Detector clicks ordered by timestamp, with the excitation sync period.
struct TimeTagStream {
  std::vector<TimeTagRecord> records;
  std::uint64_t duration_ps = 0;
  std::uint64_t sync_period_ps = 0;

  friend bool operator==(const TimeTagStream&, const TimeTagStream&) = default;

  bool is_sorted() const {
    for (std::size_t i = 1; i < records.size(); ++i)
      if (records[i].timestamp_ps < records[i - 1].timestamp_ps) return false;
    return true;
  }

  std::size_t count_channel(std::uint16_t ch) const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.channel == ch;
    return n;
  }

  std::vector<std::uint64_t> channel_times(std::uint16_t ch) const {
    std::vector<std::uint64_t> out;
    for (const auto& r : records)
      if (r.channel == ch) out.push_back(r.timestamp_ps);
    return out;
  }
};

}  // namespace qepol
