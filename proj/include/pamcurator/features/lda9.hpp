#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pamcurator/core/error.hpp"
#include "pamcurator/dsp/regions.hpp"
#include "pamcurator/features/embedding.hpp"
#include "pamcurator/features/moments.hpp"

namespace pam::features {

inline constexpr int kDefaultSliceLen = 8;

/// Quadratic coefficients (c0, c1, c2) of freq_bin ~ c0 + c1 t + c2 t^2.
using QuadFit = std::array<double, 3>;

/// Least-squares quadratic through (t, y); the design is column-scaled
/// before the QR solve to keep it well conditioned.
inline QuadFit fit_quadratic(const std::vector<double>& t, const std::vector<double>& y) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd b(n);
  double tmax = 1.0;
  for (double v : t) tmax = std::max(tmax, std::abs(v));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = t[static_cast<std::size_t>(i)] / tmax;
    A(i, 0) = 1.0;
    A(i, 1) = u;
    A(i, 2) = u * u;
    b(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d c = A.colPivHouseholderQr().solve(b);
  return {c(0), c(1) / tmax, c(2) / (tmax * tmax)};
}

/// Splits each region spanning at least `slice_len` frames into consecutive
/// slices of exactly `slice_len` frames (a trailing partial slice is dropped)
/// and fits one quadratic per slice in slice-local time.
inline std::vector<QuadFit> slice_fits(const std::vector<dsp::ContourRegion>& regions, int slice_len) {
  if (slice_len < 3) throw ArgumentError("lda9: slice_len must be >= 3");
  std::vector<QuadFit> fits;
  for (const auto& r : regions) {
    if (r.pixels.empty() || r.bbox.time_extent() < slice_len) continue;
    const int slices = r.bbox.time_extent() / slice_len;
    std::vector<std::vector<double>> ts(static_cast<std::size_t>(slices)), ys(static_cast<std::size_t>(slices));
    for (const auto& p : r.pixels) {
      const int rel = p.frame - r.bbox.t_min;
      const int s = rel / slice_len;
      if (s >= slices) continue;
      ts[static_cast<std::size_t>(s)].push_back(rel - s * slice_len);
      ys[static_cast<std::size_t>(s)].push_back(p.freq_bin);
    }
    for (int s = 0; s < slices; ++s) {
      auto& t = ts[static_cast<std::size_t>(s)];
      // A quadratic needs three distinct abscissae.
      std::vector<double> distinct = t;
      std::sort(distinct.begin(), distinct.end());
      if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 3) continue;
      fits.push_back(fit_quadratic(t, ys[static_cast<std::size_t>(s)]));
    }
  }
  return fits;
}

/// Nine values: [mean, std, skew] of c0, then of c1, then of c2.
inline FeatureVector lda9_features(const std::vector<dsp::ContourRegion>& regions, int slice_len = kDefaultSliceLen,
                                   std::string sample_id = {}) {
  const auto fits = slice_fits(regions, slice_len);
  FeatureVector out;
  out.sample_id = std::move(sample_id);
  out.kind = FeatureKind::lda9;
  out.values.assign(9, 0.f);
  out.meta = {{"slice_len", slice_len}, {"slices", fits.size()}, {"empty", fits.empty()}};
  if (fits.empty()) return out;
  std::vector<double> coef(fits.size());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < fits.size(); ++i) coef[i] = fits[i][c];
    const Moments m = moments(coef);
    out.values[3 * c + 0] = static_cast<float>(m.mean);
    out.values[3 * c + 1] = static_cast<float>(m.sd);
    out.values[3 * c + 2] = static_cast<float>(m.skew);
  }
  return out;
}

}  // namespace pam::features
