#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pamcurator/core/error.hpp"
#include "pamcurator/core/grid.hpp"
#include "pamcurator/dsp/spectrogram.hpp"

namespace pam::dsp {

/// Physical axes of a time-frequency grid.
struct GridAxes {
  double freq_resolution_hz = 1.0;
  double time_resolution_s = 1.0;
  double first_frame_center_s = 0.0;

  static GridAxes of(const Spectrogram& s) { return {s.freq_resolution_hz, s.time_resolution_s, s.first_frame_center_s}; }
  double time_s(double frame) const noexcept { return first_frame_center_s + frame * time_resolution_s; }
  double freq_hz(double bin) const noexcept { return bin * freq_resolution_hz; }
};

struct BinaryMask {
  Grid<std::uint8_t> on;  ///< rows = freq bins, cols = frames
  GridAxes axes;
  std::size_t burn_in_frames = 0;

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : on.data()) n += v != 0;
    return n;
  }
};

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur (truncated at 3 sigma, edges replicated).
inline Grid<float> gaussian_smooth(const Grid<float>& in, double sigma) {
  if (!(sigma > 0.0)) throw ArgumentError("gaussian_smooth: sigma must be positive");
  const auto k = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
  const auto rows = static_cast<std::ptrdiff_t>(in.rows());
  const auto cols = static_cast<std::ptrdiff_t>(in.cols());
  Grid<float> tmp(in.rows(), in.cols());
  Grid<float> out(in.rows(), in.cols());
  auto clamp = [](std::ptrdiff_t v, std::ptrdiff_t n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
  // Along time.
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto src = in.row(static_cast<std::size_t>(r));
    auto dst = tmp.row(static_cast<std::size_t>(r));
    for (std::ptrdiff_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      if (c >= radius && c + radius < cols) {
        const float* p = src.data() + c - radius;
        for (std::size_t i = 0; i < k.size(); ++i) acc += k[i] * p[i];
      } else {
        for (std::ptrdiff_t i = -radius; i <= radius; ++i)
          acc += k[static_cast<std::size_t>(i + radius)] * src[static_cast<std::size_t>(clamp(c + i, cols))];
      }
      dst[static_cast<std::size_t>(c)] = static_cast<float>(acc);
    }
  }
  // Along frequency, accumulated row-wise for locality.
  std::vector<double> acc(static_cast<std::size_t>(cols));
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
      const double w = k[static_cast<std::size_t>(i + radius)];
      const auto src = tmp.row(static_cast<std::size_t>(clamp(r + i, rows)));
      for (std::ptrdiff_t c = 0; c < cols; ++c) acc[static_cast<std::size_t>(c)] += w * src[static_cast<std::size_t>(c)];
    }
    auto dst = out.row(static_cast<std::size_t>(r));
    for (std::ptrdiff_t c = 0; c < cols; ++c) dst[static_cast<std::size_t>(c)] = static_cast<float>(acc[static_cast<std::size_t>(c)]);
  }
  return out;
}

/// Gaussian smoothing followed by a strict threshold: pixel on iff smoothed value > beta.
inline BinaryMask binarize(const Spectrogram& spec, double gauss_sigma, double beta) {
  if (!(gauss_sigma > 0.0)) throw ArgumentError("binarize: gauss_sigma must be positive");
  BinaryMask mask;
  mask.axes = GridAxes::of(spec);
  mask.burn_in_frames = spec.burn_in_frames;
  mask.on = Grid<std::uint8_t>(spec.freq_bins(), spec.frames());
  if (spec.values_db.empty()) return mask;
  const Grid<float> smooth = gaussian_smooth(spec.values_db, gauss_sigma);
  const auto& s = smooth.data();
  auto& m = mask.on.data();
  for (std::size_t i = 0; i < s.size(); ++i) m[i] = s[i] > beta ? 1 : 0;
  return mask;
}

}  // namespace pam::dsp
