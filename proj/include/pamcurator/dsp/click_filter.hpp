#pragma once

#include <cmath>
#include <vector>

#include "pamcurator/audio/segment.hpp"
#include "pamcurator/core/error.hpp"

namespace pam::dsp {

inline constexpr int kDefaultClickWindow = 1024;

/// Sliding-statistics click suppressor. Each sample is multiplied by
///   g = 1 / (1 + z)^p,   z = max(0, (x - mean) / (gamma * std)),
/// with mean and std taken over a window centred on the sample (clipped at
/// the segment edges). A window with zero spread leaves its sample unchanged.
inline audio::AudioSegment click_filter(const audio::AudioSegment& seg, double gamma, double p,
                                        int window = kDefaultClickWindow) {
  if (window < 16) throw ArgumentError("click_filter: window must be >= 16 samples");
  if (!(gamma > 0.0) || !(p > 0.0)) throw ArgumentError("click_filter: gamma and p must be positive");
  audio::AudioSegment out = seg;
  const auto& x = seg.samples;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  if (n == 0) return out;

  const std::ptrdiff_t before = window / 2;
  const std::ptrdiff_t after = window - before;  // window covers [i - before, i + after)
  double sum = 0.0, sum2 = 0.0;
  std::ptrdiff_t lo = 0, hi = 0;  // current window [lo, hi)
  constexpr std::ptrdiff_t kRefresh = 4096;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t want_lo = std::max<std::ptrdiff_t>(0, i - before);
    const std::ptrdiff_t want_hi = std::min(n, i + after);
    if (i % kRefresh == 0) {
      // Re-sum from scratch periodically so rounding drift cannot accumulate.
      sum = sum2 = 0.0;
      for (std::ptrdiff_t k = want_lo; k < want_hi; ++k) {
        sum += x[static_cast<std::size_t>(k)];
        sum2 += static_cast<double>(x[static_cast<std::size_t>(k)]) * x[static_cast<std::size_t>(k)];
      }
      lo = want_lo;
      hi = want_hi;
    } else {
      while (hi < want_hi) {
        const double v = x[static_cast<std::size_t>(hi++)];
        sum += v;
        sum2 += v * v;
      }
      while (lo < want_lo) {
        const double v = x[static_cast<std::size_t>(lo++)];
        sum -= v;
        sum2 -= v * v;
      }
    }
    const double count = static_cast<double>(hi - lo);
    const double mean = sum / count;
    const double var = std::max(0.0, sum2 / count - mean * mean);
    const double sd = std::sqrt(var);
    if (!(sd > 0.0) || var <= 1e-12 * mean * mean) continue;
    const double z = std::max(0.0, (x[static_cast<std::size_t>(i)] - mean) / (gamma * sd));
    if (z == 0.0) continue;
    out.samples[static_cast<std::size_t>(i)] = static_cast<float>(x[static_cast<std::size_t>(i)] / std::pow(1.0 + z, p));
  }
  return out;
}

}  // namespace pam::dsp
