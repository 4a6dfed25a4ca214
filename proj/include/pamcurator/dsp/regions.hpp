#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "pamcurator/dsp/binarize.hpp"
#include "pamcurator/dsp/spectrogram.hpp"

namespace pam::dsp {

enum class Connectivity { four, eight };

struct Pixel {
  int freq_bin = 0;
  int frame = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel& a, const Pixel& b) {
    return a.frame != b.frame ? a.frame <=> b.frame : a.freq_bin <=> b.freq_bin;
  }
};

struct BoundingBox {
  int f_min = 0, f_max = 0;  ///< frequency bins, inclusive
  int t_min = 0, t_max = 0;  ///< frames, inclusive

  int time_extent() const noexcept { return t_max - t_min + 1; }
  int freq_extent() const noexcept { return f_max - f_min + 1; }
};

struct RidgePoint {
  double time_s = 0.0;
  double freq_hz = 0.0;
};

/// One connected component of a binary detection map.
struct ContourRegion {
  std::vector<Pixel> pixels;  ///< sorted by (frame, freq_bin)
  BoundingBox bbox;
  std::vector<RidgePoint> ridge;  ///< one point per frame, chronological
  GridAxes axes;

  std::size_t pixel_count() const noexcept { return pixels.size(); }
  double t_min_s() const noexcept { return axes.time_s(bbox.t_min); }
  double t_max_s() const noexcept { return axes.time_s(bbox.t_max); }
  double f_min_hz() const noexcept { return axes.freq_hz(bbox.f_min); }
  double f_max_hz() const noexcept { return axes.freq_hz(bbox.f_max); }
};

struct RegionFilter {
  int min_length = 1;  ///< minimum time extent in frames
  int min_count = 1;   ///< minimum pixel count
};

namespace detail {

inline BoundingBox bbox_of(const std::vector<Pixel>& px) {
  BoundingBox b{std::numeric_limits<int>::max(), std::numeric_limits<int>::min(), std::numeric_limits<int>::max(),
                std::numeric_limits<int>::min()};
  for (const Pixel& p : px) {
    b.f_min = std::min(b.f_min, p.freq_bin);
    b.f_max = std::max(b.f_max, p.freq_bin);
    b.t_min = std::min(b.t_min, p.frame);
    b.t_max = std::max(b.t_max, p.frame);
  }
  return b;
}

}  // namespace detail

/// Per-frame ridge: the region pixel with the largest value in `values`
/// (lowest bin on ties), or the pixel centroid when `values` is null.
inline void trace_ridge(ContourRegion& region, const Grid<float>* values) {
  region.ridge.clear();
  std::size_t i = 0;
  const auto& px = region.pixels;
  while (i < px.size()) {
    const int frame = px[i].frame;
    double best_bin = px[i].freq_bin;
    float best_val = values ? (*values)(static_cast<std::size_t>(px[i].freq_bin), static_cast<std::size_t>(frame)) : 0.f;
    double sum = 0.0;
    std::size_t n = 0;
    for (; i < px.size() && px[i].frame == frame; ++i, ++n) {
      sum += px[i].freq_bin;
      if (values) {
        const float v = (*values)(static_cast<std::size_t>(px[i].freq_bin), static_cast<std::size_t>(frame));
        if (v > best_val) {
          best_val = v;
          best_bin = px[i].freq_bin;
        }
      }
    }
    const double bin = values ? best_bin : sum / static_cast<double>(n);
    region.ridge.push_back({region.axes.time_s(frame), region.axes.freq_hz(bin)});
  }
}

/// Builds a region from an arbitrary pixel list (sorted and de-duplicated here).
inline ContourRegion make_region(std::vector<Pixel> pixels, const GridAxes& axes = {}, const Grid<float>* values = nullptr) {
  std::sort(pixels.begin(), pixels.end());
  pixels.erase(std::unique(pixels.begin(), pixels.end()), pixels.end());
  ContourRegion r;
  r.pixels = std::move(pixels);
  r.axes = axes;
  if (!r.pixels.empty()) r.bbox = detail::bbox_of(r.pixels);
  trace_ridge(r, values);
  return r;
}

/// Connected components of the mask that survive both size filters
/// (time extent >= min_length and pixel count >= min_count). Frames inside
/// the mask's burn-in are ignored. Regions are ordered by (t_min, f_min).
/// With `values`, ridges follow the per-frame maximum of that grid.
inline std::vector<ContourRegion> extract_regions(const BinaryMask& mask, RegionFilter filter,
                                                  Connectivity conn = Connectivity::eight,
                                                  const Grid<float>* values = nullptr) {
  const auto rows = static_cast<int>(mask.on.rows());
  const auto cols = static_cast<int>(mask.on.cols());
  std::vector<ContourRegion> out;
  if (rows == 0 || cols == 0) return out;
  const int first_col = static_cast<int>(std::min<std::size_t>(mask.burn_in_frames, static_cast<std::size_t>(cols)));
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(rows) * cols, 0);
  auto idx = [cols](int r, int c) { return static_cast<std::size_t>(r) * cols + c; };
  auto live = [&](int r, int c) {
    return r >= 0 && r < rows && c >= first_col && c < cols && mask.on(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) &&
           !seen[idx(r, c)];
  };
  static constexpr int kNeighbours8[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};
  static constexpr int kNeighbours4[4][2] = {{-1, 0}, {0, -1}, {0, 1}, {1, 0}};
  std::vector<Pixel> stack;
  std::vector<Pixel> pixels;
  for (int c = first_col; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) {
      if (!live(r, c)) continue;
      pixels.clear();
      stack.assign(1, {r, c});
      seen[idx(r, c)] = 1;
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        pixels.push_back(p);
        auto visit = [&](int dr, int dc) {
          const int nr = p.freq_bin + dr, nc = p.frame + dc;
          if (live(nr, nc)) {
            seen[idx(nr, nc)] = 1;
            stack.push_back({nr, nc});
          }
        };
        if (conn == Connectivity::eight)
          for (const auto& d : kNeighbours8) visit(d[0], d[1]);
        else
          for (const auto& d : kNeighbours4) visit(d[0], d[1]);
      }
      const BoundingBox box = detail::bbox_of(pixels);
      if (box.time_extent() < filter.min_length || static_cast<int>(pixels.size()) < filter.min_count) continue;
      out.push_back(make_region(pixels, mask.axes, values));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const ContourRegion& a, const ContourRegion& b) {
    return a.bbox.t_min != b.bbox.t_min ? a.bbox.t_min < b.bbox.t_min : a.bbox.f_min < b.bbox.f_min;
  });
  return out;
}

}  // namespace pam::dsp
