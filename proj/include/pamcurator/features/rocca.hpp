#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "pamcurator/core/error.hpp"
#include "pamcurator/dsp/regions.hpp"
#include "pamcurator/features/embedding.hpp"

namespace pam::features {

/// rocca_v1 layout. Slot order is part of the on-disk format; slots past
/// kRoccaUsed are reserved and stay zero.
enum RoccaSlot : std::size_t {
  kFreqStart = 0,
  kFreqEnd,
  kFreqMin,
  kFreqMax,
  kFreqMean,
  kFreqMedian,
  kDuration,
  kFreqRange,
  kSlopeOverall,
  kSlopeMeanAbs,
  kFracPosSlope,
  kFracNegSlope,
  kFracZeroSlope,
  kInflections,
  kSteps,
  kSlopeBegin,
  kSlopeEnd,
  kFreqCoefVar,
  kFreqStd,
  kFreqQuarter1,
  kFreqQuarter3,
  kRoccaUsed,
  kRoccaSlots = 32
};

inline constexpr std::array<std::string_view, kRoccaUsed> kRoccaNames = {
    "freq_start_hz",  "freq_end_hz",      "freq_min_hz",      "freq_max_hz",     "freq_mean_hz",  "freq_median_hz",
    "duration_s",     "freq_range_hz",    "slope_overall_hz_s", "slope_mean_abs_hz_s", "frac_pos_slope", "frac_neg_slope",
    "frac_zero_slope", "inflections",     "steps",            "slope_begin_hz_s", "slope_end_hz_s", "freq_coef_var",
    "freq_std_hz",    "freq_q1_hz",       "freq_q3_hz"};

inline constexpr std::string_view kRoccaVersion = "rocca_v1";

namespace detail {

inline double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace detail

/// Contour attributes from a region's ridge (one point per frame). Steps are
/// jumps of more than two frequency bins between consecutive ridge points;
/// begin/end slopes span the first/last quarter of the ridge (at least one step).
inline FeatureVector rocca_features(const dsp::ContourRegion& region, std::string sample_id = {}) {
  const auto& ridge = region.ridge;
  if (ridge.empty()) throw ArgumentError("rocca_features: region has no ridge");
  FeatureVector out;
  out.sample_id = std::move(sample_id);
  out.kind = FeatureKind::rocca;
  out.values.assign(kRoccaSlots, 0.f);
  auto& v = out.values;
  auto set = [&](std::size_t slot, double x) { v[slot] = static_cast<float>(x); };

  const std::size_t n = ridge.size();
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = ridge[i].freq_hz;
  std::vector<double> sorted = f;
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (double x : f) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : f) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  const double duration = ridge.back().time_s - ridge.front().time_s;

  set(kFreqStart, f.front());
  set(kFreqEnd, f.back());
  set(kFreqMin, sorted.front());
  set(kFreqMax, sorted.back());
  set(kFreqMean, mean);
  set(kFreqMedian, detail::quantile_sorted(sorted, 0.5));
  set(kDuration, duration);
  set(kFreqRange, sorted.back() - sorted.front());
  set(kFreqStd, std::sqrt(var));
  set(kFreqCoefVar, mean != 0.0 ? std::sqrt(var) / mean : 0.0);
  set(kFreqQuarter1, detail::quantile_sorted(sorted, 0.25));
  set(kFreqQuarter3, detail::quantile_sorted(sorted, 0.75));

  const bool short_ridge = n < 3;
  out.meta = {{"version", kRoccaVersion}, {"short_ridge", short_ridge}, {"ridge_points", n}};
  if (short_ridge) return out;

  const double zero_tol = 1e-9 * std::max(1.0, sorted.back());
  const double step_hz = 2.0 * region.axes.freq_resolution_hz;
  std::vector<double> slope(n - 1);
  std::size_t pos = 0, neg = 0, zero = 0, steps = 0;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double df = f[i + 1] - f[i];
    const double dt = ridge[i + 1].time_s - ridge[i].time_s;
    slope[i] = dt > 0.0 ? df / dt : 0.0;
    abs_sum += std::abs(slope[i]);
    if (std::abs(df) <= zero_tol)
      ++zero;
    else if (df > 0)
      ++pos;
    else
      ++neg;
    if (std::abs(df) > step_hz) ++steps;
  }
  // Inflections: sign changes of the slope, flat steps skipped.
  int last_sign = 0;
  std::size_t inflections = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double df = f[i + 1] - f[i];
    const int sign = std::abs(df) <= zero_tol ? 0 : (df > 0 ? 1 : -1);
    if (sign == 0) continue;
    if (last_sign != 0 && sign != last_sign) ++inflections;
    last_sign = sign;
  }
  const double m = static_cast<double>(n - 1);
  set(kSlopeOverall, duration > 0.0 ? (f.back() - f.front()) / duration : 0.0);
  set(kSlopeMeanAbs, abs_sum / m);
  set(kFracPosSlope, static_cast<double>(pos) / m);
  set(kFracNegSlope, static_cast<double>(neg) / m);
  set(kFracZeroSlope, static_cast<double>(zero) / m);
  set(kInflections, static_cast<double>(inflections));
  set(kSteps, static_cast<double>(steps));
  const std::size_t q = std::max<std::size_t>(1, (n - 1) / 4);
  auto span_slope = [&](std::size_t a, std::size_t b) {
    const double dt = ridge[b].time_s - ridge[a].time_s;
    return dt > 0.0 ? (f[b] - f[a]) / dt : 0.0;
  };
  set(kSlopeBegin, span_slope(0, q));
  set(kSlopeEnd, span_slope(n - 1 - q, n - 1));
  return out;
}

}  // namespace pam::features
