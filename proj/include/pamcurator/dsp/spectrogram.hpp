#pragma once

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pamcurator/audio/segment.hpp"
#include "pamcurator/core/error.hpp"
#include "pamcurator/core/grid.hpp"

namespace pam::dsp {

struct StftConfig {
  int fft_size = 1024;
  int hop = 512;
  double floor_db = -120.0;
};

/// Time-frequency magnitude grid in dB. values_db rows are frequency bins
/// (fft_size/2 + 1), columns are frames. Frame t is centred at
/// `frame_time_s(t)` seconds after `origin_time`.
struct Spectrogram {
  std::string sample_id;
  Grid<float> values_db;
  double freq_resolution_hz = 0.0;
  double time_resolution_s = 0.0;
  double first_frame_center_s = 0.0;
  Timestamp origin_time{};
  std::size_t burn_in_frames = 0;  ///< leading frames excluded from region extraction

  std::size_t freq_bins() const noexcept { return values_db.rows(); }
  std::size_t frames() const noexcept { return values_db.cols(); }
  double frame_time_s(double t) const noexcept { return first_frame_center_s + t * time_resolution_s; }
  double bin_hz(double f) const noexcept { return f * freq_resolution_hz; }
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Per-thread real-to-complex plan with FFTW-aligned buffers.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftwf_alloc_real(static_cast<std::size_t>(n));
    out_ = fftwf_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftwf_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftwf_destroy_plan(plan_);
    }
    fftwf_free(in_);
    fftwf_free(out_);
  }

  int size() const noexcept { return n_; }
  float* input() noexcept { return in_; }
  const fftwf_complex* output() const noexcept { return out_; }
  void execute() noexcept { fftwf_execute(plan_); }

  static RealFft& for_thread(int n) {
    thread_local std::unique_ptr<RealFft> cached;
    if (!cached || cached->size() != n) cached = std::make_unique<RealFft>(n);
    return *cached;
  }

 private:
  int n_;
  float* in_ = nullptr;
  fftwf_complex* out_ = nullptr;
  fftwf_plan plan_ = nullptr;
};

inline std::vector<float> hann_window(int n) {
  std::vector<float> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * M_PI * i / n));
  return w;
}

}  // namespace detail

/// STFT magnitude in dB: 20 log10(max(|X| * 2 / sum(w), floor)). The
/// normalization maps a full-scale sine to 0 dB; `floor` is 10^(floor_db/20).
inline Spectrogram compute_spectrogram(const audio::AudioSegment& seg, const StftConfig& cfg = {}) {
  if (seg.sample_rate_hz != audio::kCanonicalRateHz)
    throw ArgumentError("compute_spectrogram: segment '" + seg.sample_id + "' is not at 32 kHz");
  if (cfg.fft_size < 2 || cfg.hop < 1) throw ArgumentError("compute_spectrogram: invalid STFT configuration");
  const auto n = static_cast<std::size_t>(cfg.fft_size);
  if (seg.samples.size() < n) throw DataError("compute_spectrogram: segment '" + seg.sample_id + "' shorter than one FFT window");

  const std::size_t frames = 1 + (seg.samples.size() - n) / static_cast<std::size_t>(cfg.hop);
  const std::size_t bins = n / 2 + 1;
  Spectrogram spec;
  spec.sample_id = seg.sample_id;
  spec.values_db = Grid<float>(bins, frames);
  spec.freq_resolution_hz = static_cast<double>(seg.sample_rate_hz) / cfg.fft_size;
  spec.time_resolution_s = static_cast<double>(cfg.hop) / seg.sample_rate_hz;
  spec.first_frame_center_s = 0.5 * cfg.fft_size / seg.sample_rate_hz;
  spec.origin_time = seg.start_time;

  static thread_local std::vector<float> window;
  if (window.size() != n) window = detail::hann_window(cfg.fft_size);
  double wsum = 0.0;
  for (float w : window) wsum += w;
  const double scale = 2.0 / wsum;
  const double floor_mag = std::pow(10.0, cfg.floor_db / 20.0);
  const double floor_pow = floor_mag * floor_mag;

  auto& fft = detail::RealFft::for_thread(cfg.fft_size);
  float* buf = fft.input();
  for (std::size_t t = 0; t < frames; ++t) {
    const float* src = seg.samples.data() + t * static_cast<std::size_t>(cfg.hop);
    for (std::size_t i = 0; i < n; ++i) buf[i] = src[i] * window[i];
    fft.execute();
    const fftwf_complex* X = fft.output();
    for (std::size_t f = 0; f < bins; ++f) {
      const double re = X[f][0] * scale;
      const double im = X[f][1] * scale;
      const double p = re * re + im * im;
      spec.values_db(f, t) = static_cast<float>(10.0 * std::log10(p > floor_pow ? p : floor_pow));
    }
  }
  return spec;
}

}  // namespace pam::dsp
