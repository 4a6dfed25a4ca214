#pragma once

#include <algorithm>
#include <cmath>
#include <span>

namespace pam::features {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;    ///< population
  double skew = 0.0;  ///< 0 for fewer than two values or zero spread
};

inline Moments moments(std::span<const double> x) {
  Moments m;
  if (x.empty()) return m;
  const double n = static_cast<double>(x.size());
  for (double v : x) m.mean += v;
  m.mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : x) {
    const double d = v - m.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m.sd = std::sqrt(m2);
  if (x.size() < 2 || m.sd <= 1e-12 * std::max(1.0, std::abs(m.mean))) return m;
  m.skew = m3 / (m2 * m.sd);
  return m;
}

}  // namespace pam::features
