#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "pamcurator/core/error.hpp"
#include "pamcurator/core/time.hpp"

namespace pam::audio {

inline constexpr int kCanonicalRateHz = 32000;
inline constexpr double kMaxSegmentSeconds = 300.0;
inline constexpr double kMinPoolSeconds = 1.0;

/// One mono audio segment of at most five minutes.
struct AudioSegment {
  std::string sample_id;
  std::vector<float> samples;
  int sample_rate_hz = kCanonicalRateHz;
  Timestamp start_time{};
  double duration_s = 0.0;

  std::size_t size() const noexcept { return samples.size(); }
};

inline AudioSegment make_segment(std::string id, std::vector<float> samples, int rate_hz, Timestamp start = {}) {
  AudioSegment seg;
  seg.sample_id = std::move(id);
  seg.samples = std::move(samples);
  seg.sample_rate_hz = rate_hz;
  seg.start_time = start;
  seg.duration_s = static_cast<double>(seg.samples.size()) / rate_hz;
  return seg;
}

/// Throws DataError when a segment breaks the type's invariants.
inline void validate(const AudioSegment& seg) {
  if (seg.sample_rate_hz < 1) throw DataError(seg.sample_id + ": non-positive sample rate");
  if (seg.duration_s > kMaxSegmentSeconds + 1.0 / seg.sample_rate_hz)
    throw DataError(seg.sample_id + ": segment longer than 300 s");
  if (std::abs(seg.duration_s * seg.sample_rate_hz - static_cast<double>(seg.samples.size())) > 1.0)
    throw DataError(seg.sample_id + ": duration does not match sample count");
  for (float v : seg.samples)
    if (!std::isfinite(v)) throw DataError(seg.sample_id + ": non-finite sample");
}

/// Splits a mono stream into consecutive segments of at most 300 s.
/// A stream that yields one segment keeps `base_id`; otherwise segments are
/// suffixed `_s000`, `_s001`, ...
inline std::vector<AudioSegment> split_segments(const std::vector<float>& mono, int rate_hz, Timestamp start,
                                                const std::string& base_id) {
  std::vector<AudioSegment> out;
  if (mono.empty()) return out;
  const auto seg_len = static_cast<std::size_t>(kMaxSegmentSeconds * rate_hz);
  const std::size_t count = (mono.size() + seg_len - 1) / seg_len;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t begin = k * seg_len;
    const std::size_t end = std::min(mono.size(), begin + seg_len);
    std::string id = base_id;
    if (count > 1) {
      char suffix[24];
      std::snprintf(suffix, sizeof suffix, "_s%03zu", k);
      id += suffix;
    }
    const auto offset = std::chrono::milliseconds{static_cast<long long>(std::llround(1000.0 * begin / rate_hz))};
    out.push_back(make_segment(std::move(id), std::vector<float>(mono.begin() + begin, mono.begin() + end), rate_hz,
                               start + offset));
  }
  return out;
}

}  // namespace pam::audio
