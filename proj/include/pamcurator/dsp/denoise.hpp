#pragma once

#include <algorithm>
#include <vector>

#include "pamcurator/core/error.hpp"
#include "pamcurator/dsp/spectrogram.hpp"

namespace pam::dsp {

/// Sliding median of width `kernel` (odd) along one row; the window is
/// clipped at the row ends, and an even-sized clipped window takes the mean
/// of its two middle values.
inline void sliding_median(std::span<const float> row, int kernel, std::span<float> out) {
  const auto n = static_cast<std::ptrdiff_t>(row.size());
  const std::ptrdiff_t half = kernel / 2;
  std::vector<float> win;
  win.reserve(static_cast<std::size_t>(kernel) + 1);
  std::ptrdiff_t lo = 0, hi = 0;  // window [lo, hi)
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const std::ptrdiff_t want_lo = std::max<std::ptrdiff_t>(0, t - half);
    const std::ptrdiff_t want_hi = std::min(n, t + half + 1);
    while (hi < want_hi) {
      const float v = row[static_cast<std::size_t>(hi++)];
      win.insert(std::upper_bound(win.begin(), win.end(), v), v);
    }
    while (lo < want_lo) {
      const float v = row[static_cast<std::size_t>(lo++)];
      win.erase(std::lower_bound(win.begin(), win.end(), v));
    }
    const std::size_t m = win.size();
    out[static_cast<std::size_t>(t)] = (m % 2 == 1) ? win[m / 2] : 0.5f * (win[m / 2 - 1] + win[m / 2]);
  }
}

/// Spectral then tonal noise removal, per frequency row along time:
///   1. subtract the sliding median of width `kappa`;
///   2. subtract a decaying running average of the result, background
///      b_t = alpha * b_{t-1} + (1 - alpha) * r_t, started at the first frame
///      and applied before it absorbs the current frame.
/// The first `kappa` frames are marked as burn-in.
inline Spectrogram denoise(const Spectrogram& spec, int kappa, double alpha) {
  if (kappa < 3 || kappa % 2 == 0) throw ArgumentError("denoise: kappa must be an odd integer >= 3");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("denoise: alpha must lie in (0, 1)");
  Spectrogram out = spec;
  const std::size_t frames = spec.frames();
  std::vector<float> med(frames);
  for (std::size_t f = 0; f < spec.freq_bins(); ++f) {
    const auto src = spec.values_db.row(f);
    auto dst = out.values_db.row(f);
    sliding_median(src, kappa, med);
    double background = static_cast<double>(src[0]) - med[0];
    for (std::size_t t = 0; t < frames; ++t) {
      const double residual = static_cast<double>(src[t]) - med[t];
      dst[t] = static_cast<float>(residual - background);
      background = alpha * background + (1.0 - alpha) * residual;
    }
  }
  out.burn_in_frames = std::max(spec.burn_in_frames, static_cast<std::size_t>(kappa));
  return out;
}

}  // namespace pam::dsp
