#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "pamcurator/audio/segment.hpp"
#include "pamcurator/core/error.hpp"

namespace pam::audio {

struct Biquad {
  double b0, b1, b2, a1, a2;  // a0 normalized to 1

  double dc_gain() const noexcept { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

/// 4th-order Butterworth high-pass as two bilinear-transform biquads.
inline std::array<Biquad, 2> butterworth_highpass4(double cutoff_hz, double rate_hz) {
  // Pole-pair Q values of a 4th-order Butterworth prototype: 1 / (2 cos(k*pi/8)), k = 1, 3.
  constexpr std::array<double, 2> q = {0.54119610014619698, 1.3065629648763766};
  const double w0 = 2.0 * M_PI * cutoff_hz / rate_hz;
  const double cw = std::cos(w0);
  const double sw = std::sin(w0);
  std::array<Biquad, 2> out{};
  for (std::size_t s = 0; s < 2; ++s) {
    const double alpha = sw / (2.0 * q[s]);
    const double a0 = 1.0 + alpha;
    out[s] = {(1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0, -2.0 * cw / a0, (1.0 - alpha) / a0};
  }
  return out;
}

namespace detail {

// Transposed direct form II, state initialized to the steady state of a
// constant input equal to x[0].
inline void filter_sections(std::vector<double>& x, const std::array<Biquad, 2>& sections) {
  if (x.empty()) return;
  double level = x.front();
  for (const Biquad& s : sections) {
    const double y_ss = s.dc_gain() * level;
    double z2 = s.b2 * level - s.a2 * y_ss;
    double z1 = s.b1 * level - s.a1 * y_ss + z2;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
    level = y_ss;
  }
}

}  // namespace detail

/// Zero-phase 4th-order Butterworth high-pass (forward-backward with odd
/// reflection padding at both ends).
inline AudioSegment highpass(const AudioSegment& seg, double cutoff_hz) {
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < seg.sample_rate_hz / 2.0))
    throw ArgumentError("highpass: cutoff must lie in (0, Nyquist)");
  AudioSegment out = seg;
  const std::size_t n = seg.samples.size();
  if (n == 0) return out;
  const auto sections = butterworth_highpass4(cutoff_hz, seg.sample_rate_hz);

  const std::size_t pad = std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::ceil(3.0 * seg.sample_rate_hz / cutoff_hz)));
  std::vector<double> buf(n + 2 * pad);
  const double first = seg.samples.front();
  const double last = seg.samples.back();
  for (std::size_t i = 0; i < pad; ++i) buf[i] = 2.0 * first - seg.samples[pad - i];
  for (std::size_t i = 0; i < n; ++i) buf[pad + i] = seg.samples[i];
  for (std::size_t i = 0; i < pad; ++i) buf[pad + n + i] = 2.0 * last - seg.samples[n - 2 - i];

  detail::filter_sections(buf, sections);
  std::reverse(buf.begin(), buf.end());
  detail::filter_sections(buf, sections);
  std::reverse(buf.begin(), buf.end());
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = static_cast<float>(buf[pad + i]);
  return out;
}

}  // namespace pam::audio
