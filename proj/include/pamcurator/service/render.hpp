#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "pamcurator/audio/resample.hpp"
#include "pamcurator/dsp/spectrogram.hpp"
#include "pamcurator/service/png.hpp"

namespace pam::service {

inline constexpr int kRenderVersion = 1;
inline constexpr double kRenderTopHz = 16000.0;

struct RenderStyle {
  std::size_t height = 256;       ///< plot rows; 0 Hz at the bottom, 16 kHz at the top
  std::size_t max_width = 1024;   ///< wider spectrograms are max-pooled over frames
  double dynamic_range_db = 80.0; ///< colours span [max - range, max]
  bool time_axis = true;          ///< labeled seconds strip under the plot

  static RenderStyle plain() {
    RenderStyle s;
    s.time_axis = false;
    return s;
  }

  static RenderStyle parse(std::string_view name) {
    if (name.empty() || name == "annotated") return {};
    if (name == "plain") return plain();
    throw ArgumentError("unknown spectrogram style '" + std::string(name) + "'");
  }
};

inline constexpr std::size_t kAxisStripRows = 12;

namespace detail {

/// Fixed five-stop colormap, dark blue through magenta and orange to pale yellow.
inline std::array<std::uint8_t, 3> colormap(double v) {
  static constexpr double stops[5][3] = {{0, 4, 40}, {80, 18, 123}, {182, 54, 121}, {251, 136, 97}, {252, 253, 191}};
  v = std::clamp(v, 0.0, 1.0) * 4.0;
  const int k = std::min(3, static_cast<int>(v));
  const double t = v - k;
  std::array<std::uint8_t, 3> c{};
  for (int i = 0; i < 3; ++i) c[i] = static_cast<std::uint8_t>(std::lround(stops[k][i] + t * (stops[k + 1][i] - stops[k][i])));
  return c;
}

/// 3x5 glyphs for digits, '.' and 's'; bit 2 of each row is the left column.
inline const std::array<std::uint8_t, 5>& glyph(char ch) {
  static const std::array<std::uint8_t, 5> digits[10] = {
      {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
      {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}};
  static const std::array<std::uint8_t, 5> dot{0, 0, 0, 0, 2}, ess{0, 3, 6, 1, 6}, blank{0, 0, 0, 0, 0};
  if (ch >= '0' && ch <= '9') return digits[ch - '0'];
  if (ch == '.') return dot;
  if (ch == 's') return ess;
  return blank;
}

inline void draw_text(RgbImage& img, std::size_t x, std::size_t y, std::string_view text, std::array<std::uint8_t, 3> c) {
  for (char ch : text) {
    const auto& g = glyph(ch);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t col = 0; col < 3; ++col)
        if (g[r] & (4 >> col)) img.set(x + col, y + r, c);
    x += 4;
  }
}

inline double tick_interval(double seconds, std::size_t width) {
  for (double step : {0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 30.0, 60.0})
    if (step / seconds * static_cast<double>(width) >= 48.0) return step;
  return 120.0;
}

}  // namespace detail

/// dB spectrogram as a PNG. The image depends only on the audio samples and
/// the style, so repeated renders are byte-identical.
inline RgbImage render_spectrogram_image(const audio::AudioSegment& seg_in, const RenderStyle& style = {}) {
  if (style.height < 8 || style.max_width < 1 || !(style.dynamic_range_db > 0.0))
    throw ArgumentError("render: invalid style");
  const audio::AudioSegment seg =
      seg_in.sample_rate_hz == audio::kCanonicalRateHz ? seg_in : audio::resample(seg_in, audio::kCanonicalRateHz);
  dsp::StftConfig cfg;
  audio::AudioSegment padded;
  const audio::AudioSegment* src = &seg;
  if (seg.samples.size() < static_cast<std::size_t>(cfg.fft_size)) {
    padded = seg;
    padded.samples.resize(static_cast<std::size_t>(cfg.fft_size), 0.0f);
    src = &padded;
  }
  const dsp::Spectrogram spec = dsp::compute_spectrogram(*src, cfg);
  const std::size_t frames = spec.frames(), bins = spec.freq_bins();
  const std::size_t W = std::min(frames, style.max_width), H = style.height;

  float vmax = -std::numeric_limits<float>::infinity();
  for (float v : spec.values_db.data()) vmax = std::max(vmax, v);
  const double vmin = vmax - style.dynamic_range_db;

  RgbImage img(W, H + (style.time_axis ? kAxisStripRows : 0), {24, 24, 24});
  for (std::size_t x = 0; x < W; ++x) {
    const std::size_t f0 = x * frames / W, f1 = std::max(f0 + 1, (x + 1) * frames / W);
    for (std::size_t y = 0; y < H; ++y) {
      // Row y covers [lo, hi) Hz, counted up from the bottom edge.
      const double lo = kRenderTopHz * static_cast<double>(H - 1 - y) / static_cast<double>(H);
      const double hi = kRenderTopHz * static_cast<double>(H - y) / static_cast<double>(H);
      auto b0 = static_cast<std::size_t>(std::ceil(lo / spec.freq_resolution_hz));
      auto b1 = static_cast<std::size_t>(std::ceil(hi / spec.freq_resolution_hz));
      if (y == 0) b1 = std::max(b1, bins);
      b1 = std::min(b1, bins);
      if (b1 <= b0) b0 = std::min(b0, bins - 1), b1 = b0 + 1;
      float m = -std::numeric_limits<float>::infinity();
      for (std::size_t t = f0; t < f1; ++t)
        for (std::size_t b = b0; b < b1; ++b) m = std::max(m, spec.values_db(b, t));
      img.set(x, y, detail::colormap((m - vmin) / style.dynamic_range_db));
    }
  }
  if (style.time_axis) {
    const double seconds = std::max(seg.duration_s, 1e-9);
    const double step = detail::tick_interval(seconds, W);
    const std::array<std::uint8_t, 3> fg{220, 220, 220};
    for (int k = 0;; ++k) {
      const double t = k * step;
      if (t > seconds) break;
      const auto x = static_cast<std::size_t>(std::lround(t / seconds * static_cast<double>(W - 1)));
      for (std::size_t r = 0; r < 3; ++r) img.set(x, H + r, fg);
      char label[32];
      if (step < 1.0)
        std::snprintf(label, sizeof label, "%.2gs", t);
      else
        std::snprintf(label, sizeof label, "%ds", static_cast<int>(std::lround(t)));
      const std::size_t text_w = 4 * std::string_view(label).size();
      const std::size_t lx = x + text_w < W ? x : (W > text_w ? W - text_w : 0);
      detail::draw_text(img, lx, H + 5, label, fg);
    }
  }
  return img;
}

inline std::vector<std::uint8_t> render_spectrogram_png(const audio::AudioSegment& seg, const RenderStyle& style = {}) {
  return encode_png(render_spectrogram_image(seg, style));
}

}  // namespace pam::service
