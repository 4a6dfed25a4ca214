#pragma once

// Shared fixtures for the unit suites: synthetic signals and an FFT oracle
// that does not go through the library's STFT path.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "pamcurator/core/rng.hpp"

namespace pam::test {

inline std::vector<float> sine(double freq_hz, double rate_hz, std::size_t n, double amp = 0.5, double phase = 0.0) {
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<float>(amp * std::sin(2.0 * M_PI * freq_hz * i / rate_hz + phase));
  return x;
}

inline std::vector<float> white_noise(std::size_t n, double sd, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(rng.normal(0.0, sd));
  return x;
}

inline double rms(const std::vector<float>& x, std::size_t begin = 0, std::size_t end = 0) {
  if (end == 0) end = x.size();
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += static_cast<double>(x[i]) * x[i];
  return std::sqrt(s / static_cast<double>(end - begin));
}

/// Magnitude spectrum of a zero-padded, Hann-windowed signal (double precision FFTW).
inline std::vector<double> magnitude_spectrum(const std::vector<float>& x, std::size_t nfft) {
  std::vector<double> in(nfft, 0.0);
  for (std::size_t i = 0; i < x.size() && i < nfft; ++i)
    in[i] = x[i] * (0.5 - 0.5 * std::cos(2.0 * M_PI * i / static_cast<double>(x.size())));
  std::vector<std::complex<double>> out(nfft / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                        FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  std::vector<double> mag(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) mag[i] = std::abs(out[i]);
  return mag;
}

/// Peak frequency with parabolic interpolation on log magnitude.
inline double peak_frequency(const std::vector<float>& x, double rate_hz, std::size_t nfft) {
  const auto mag = magnitude_spectrum(x, nfft);
  std::size_t k = 1;
  for (std::size_t i = 1; i + 1 < mag.size(); ++i)
    if (mag[i] > mag[k]) k = i;
  const double a = std::log(mag[k - 1]), b = std::log(mag[k]), c = std::log(mag[k + 1]);
  const double delta = 0.5 * (a - c) / (a - 2 * b + c);
  return (static_cast<double>(k) + delta) * rate_hz / static_cast<double>(nfft);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pamcurator_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(PAM_TEST_DATA_DIR) / name; }

}  // namespace pam::test
