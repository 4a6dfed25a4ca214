#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pamcurator/audio/segment.hpp"
#include "pamcurator/core/rng.hpp"

namespace pam::synth {

/// Ground-truth time-frequency box of an injected call, seconds from segment start.
struct CallBox {
  double t_start_s = 0.0;
  double t_end_s = 0.0;
  double f_low_hz = 0.0;
  double f_high_hz = 0.0;

  double area() const noexcept { return std::max(0.0, t_end_s - t_start_s) * std::max(0.0, f_high_hz - f_low_hz); }
};

inline double box_iou(const CallBox& a, const CallBox& b) {
  const double t0 = std::max(a.t_start_s, b.t_start_s), t1 = std::min(a.t_end_s, b.t_end_s);
  const double f0 = std::max(a.f_low_hz, b.f_low_hz), f1 = std::min(a.f_high_hz, b.f_high_hz);
  const double inter = std::max(0.0, t1 - t0) * std::max(0.0, f1 - f0);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

enum class CallKind { chirp, pulsed };

struct CallSpec {
  CallKind kind = CallKind::chirp;
  double onset_s = 0.0;
  double duration_s = 1.5;
  double f_start_hz = 2000.0;
  double f_end_hz = 8000.0;
  double snr_db = 20.0;          ///< call power (during the call) over noise power
  double pulse_rate_hz = 400.0;  ///< pulsed calls: click-train repetition rate

  CallBox box() const {
    return {onset_s, onset_s + duration_s, std::min(f_start_hz, f_end_hz), std::max(f_start_hz, f_end_hz)};
  }
};

inline std::vector<float> white_noise(std::size_t n, double sd, Rng& rng) {
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(rng.normal(0.0, sd));
  return x;
}

/// Adds a call to `x` (noise of standard deviation `noise_sd` assumed).
/// Chirps sweep linearly in frequency; pulsed calls amplitude-modulate the
/// same sweep with a raised-cosine pulse train, which gives the sideband
/// structure of killer-whale pulsed calls. 10 ms cosine ramps at both ends.
inline void inject_call(std::vector<float>& x, int rate_hz, const CallSpec& call, double noise_sd) {
  const double amp = noise_sd * std::sqrt(2.0 * std::pow(10.0, call.snr_db / 10.0));
  const auto begin = static_cast<std::ptrdiff_t>(std::llround(call.onset_s * rate_hz));
  const auto len = static_cast<std::ptrdiff_t>(std::llround(call.duration_s * rate_hz));
  const double sweep = (call.f_end_hz - call.f_start_hz) / call.duration_s;
  const double ramp = 0.01 * rate_hz;
  for (std::ptrdiff_t i = 0; i < len; ++i) {
    const std::ptrdiff_t idx = begin + i;
    if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(x.size())) continue;
    const double t = static_cast<double>(i) / rate_hz;
    const double phase = 2.0 * M_PI * (call.f_start_hz * t + 0.5 * sweep * t * t);
    double env = 1.0;
    if (i < ramp) env = 0.5 - 0.5 * std::cos(M_PI * i / ramp);
    if (len - i < ramp) env = std::min(env, 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(len - i) / ramp));
    if (call.kind == CallKind::pulsed) env *= std::sqrt(2.0 / 3.0) * (1.0 - std::cos(2.0 * M_PI * call.pulse_rate_hz * t));
    x[static_cast<std::size_t>(idx)] += static_cast<float>(amp * env * std::sin(phase));
  }
}

/// Noise segment with one linear chirp; the default matches the canonical
/// 2 -> 8 kHz, 1.5 s, +20 dB detection fixture.
inline audio::AudioSegment chirp_in_noise(std::uint64_t seed, double seconds = 6.0, CallSpec call = {},
                                          double noise_sd = 0.01) {
  Rng rng(seed);
  auto x = white_noise(static_cast<std::size_t>(seconds * audio::kCanonicalRateHz), noise_sd, rng);
  inject_call(x, audio::kCanonicalRateHz, call, noise_sd);
  return audio::make_segment("chirp_" + std::to_string(seed), std::move(x), audio::kCanonicalRateHz);
}

}  // namespace pam::synth
