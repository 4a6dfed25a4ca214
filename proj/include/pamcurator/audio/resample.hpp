#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <utility>
#include <vector>

#include "pamcurator/audio/segment.hpp"
#include "pamcurator/core/error.hpp"

namespace pam::audio {

/// Rational polyphase windowed-sinc resampler: 64 taps per phase, Kaiser
/// window (beta = 8), cutoff at 90% of the lower Nyquist frequency.
class PolyphaseResampler {
 public:
  static constexpr int kTapsPerPhase = 64;
  static constexpr double kKaiserBeta = 8.0;
  static constexpr double kRolloff = 0.9;

  PolyphaseResampler(int source_hz, int target_hz) {
    if (source_hz <= 0 || target_hz <= 0) throw ArgumentError("sample rates must be positive");
    const int g = std::gcd(source_hz, target_hz);
    up_ = target_hz / g;
    down_ = source_hz / g;
    build();
  }

  int up() const noexcept { return up_; }
  int down() const noexcept { return down_; }

  std::size_t output_length(std::size_t n) const noexcept {
    return static_cast<std::size_t>((static_cast<std::uint64_t>(n) * up_ + down_ - 1) / down_);
  }

  std::vector<float> process(std::span<const float> x) const {
    const std::size_t out_n = output_length(x.size());
    std::vector<float> y(out_n);
    constexpr int half = kTapsPerPhase / 2;
    const auto n = static_cast<std::int64_t>(x.size());
    for (std::size_t m = 0; m < out_n; ++m) {
      const std::uint64_t p = static_cast<std::uint64_t>(m) * down_;
      const auto j0 = static_cast<std::int64_t>(p / up_);
      const auto phase = static_cast<std::size_t>(p % up_);
      const double* taps = table_.data() + phase * kTapsPerPhase;
      double acc = 0.0;
      const std::int64_t first = j0 - half + 1;
      if (first >= 0 && first + kTapsPerPhase <= n) {
        const float* xs = x.data() + first;
        for (int i = 0; i < kTapsPerPhase; ++i) acc += taps[i] * xs[i];
      } else {
        for (int i = 0; i < kTapsPerPhase; ++i) {
          const std::int64_t j = first + i;
          if (j >= 0 && j < n) acc += taps[i] * x[static_cast<std::size_t>(j)];
        }
      }
      y[m] = static_cast<float>(acc);
    }
    return y;
  }

 private:
  void build() {
    constexpr int half = kTapsPerPhase / 2;
    const double L = up_;
    const double half_width = half * L;  // in upsampled samples
    // Cutoff in cycles per upsampled sample.
    const double wc = kRolloff * 0.5 / std::max(up_, down_);
    const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
    table_.assign(static_cast<std::size_t>(up_) * kTapsPerPhase, 0.0);
    for (int r = 0; r < up_; ++r) {
      double* taps = table_.data() + static_cast<std::size_t>(r) * kTapsPerPhase;
      double sum = 0.0;
      // Tap i weights input j = j0 - half + 1 + i, at distance k = r + (half - 1 - i) * L.
      for (int i = 0; i < kTapsPerPhase; ++i) {
        const double k = r + (half - 1 - i) * L;
        const double t = k / half_width;
        const double window = std::abs(t) >= 1.0 ? 0.0 : std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - t * t)) / i0_beta;
        const double arg = 2.0 * wc * k;
        const double sinc = arg == 0.0 ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
        taps[i] = 2.0 * wc * sinc * window;
        sum += taps[i];
      }
      for (int i = 0; i < kTapsPerPhase; ++i) taps[i] /= sum;  // unity DC gain per phase
    }
  }

  int up_ = 1;
  int down_ = 1;
  std::vector<double> table_;
};

/// Resamples to `target_hz`; a segment already at the target rate is returned unchanged.
inline AudioSegment resample(const AudioSegment& seg, int target_hz) {
  if (target_hz <= 0) throw ArgumentError("resample: target rate must be positive");
  if (seg.sample_rate_hz < 1) throw ArgumentError("resample: source rate must be positive");
  if (seg.sample_rate_hz == target_hz) return seg;

  static std::mutex cache_mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const PolyphaseResampler>> cache;
  std::shared_ptr<const PolyphaseResampler> rs;
  {
    std::lock_guard lock(cache_mutex);
    auto& slot = cache[{seg.sample_rate_hz, target_hz}];
    if (!slot) slot = std::make_shared<const PolyphaseResampler>(seg.sample_rate_hz, target_hz);
    rs = slot;
  }
  return make_segment(seg.sample_id, rs->process(seg.samples), target_hz, seg.start_time);
}

}  // namespace pam::audio
