#pragma once

// Brute-force reference implementations for the metric suite; shared by the
// unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pamcurator/core/rng.hpp"
#include "pamcurator/metrics/metrics.hpp"

namespace pam::test {

struct SpecOracle {
  bool defined = false;
  double specificity = 0.0;
  double threshold = 0.0;
};

/// Every distinct score is tried as a cutoff; the largest one that reaches
/// the target sensitivity wins.
inline SpecOracle spec_at_sens_oracle(const std::vector<double>& s, const std::vector<int>& y, double target) {
  std::int64_t P = 0, N = 0;
  for (int v : y) (v ? P : N)++;
  SpecOracle o;
  if (P == 0 || N == 0) return o;
  std::set<double> cuts(s.begin(), s.end());
  for (auto it = cuts.rbegin(); it != cuts.rend(); ++it) {
    std::int64_t tp = 0, tn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (y[i] && s[i] >= *it) ++tp;
      if (!y[i] && s[i] < *it) ++tn;
    }
    if (static_cast<double>(tp) / static_cast<double>(P) >= target) {
      o.defined = true;
      o.threshold = *it;
      o.specificity = static_cast<double>(tn) / static_cast<double>(N);
      return o;
    }
  }
  return o;
}

/// Confusion table over the union of labels, then the kappa ratio.
template <typename L>
std::optional<double> kappa_oracle(const std::vector<L>& a, const std::vector<L>& b) {
  std::vector<L> labels(a.begin(), a.end());
  labels.insert(labels.end(), b.begin(), b.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  const std::size_t k = labels.size();
  std::vector<std::vector<std::int64_t>> table(k, std::vector<std::int64_t>(k, 0));
  auto index = [&](const L& v) { return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), v) - labels.begin()); };
  for (std::size_t i = 0; i < a.size(); ++i) ++table[index(a[i])][index(b[i])];
  const auto n = static_cast<std::int64_t>(a.size());
  std::int64_t diag = 0, chance = 0;
  for (std::size_t r = 0; r < k; ++r) {
    diag += table[r][r];
    std::int64_t row = 0, col = 0;
    for (std::size_t c = 0; c < k; ++c) {
      row += table[r][c];
      col += table[c][r];
    }
    chance += row * col;
  }
  if (n * n == chance) return std::nullopt;
  return static_cast<double>(n * diag - chance) / static_cast<double>(n * n - chance);
}

inline double mapped_top1_oracle(const std::vector<std::string>& p, const std::vector<std::string>& t,
                                 const std::map<std::string, std::string>& m) {
  std::int64_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string& mapped = m.at(p[i]);
    if (mapped != "unmapped" && !mapped.empty() && mapped == t[i]) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(p.size());
}

inline std::optional<double> positivity_oracle(const std::vector<std::optional<int>>& l) {
  std::int64_t lab = 0, pos = 0;
  for (const auto& v : l) {
    if (!v) continue;
    ++lab;
    if (*v) ++pos;
  }
  if (!lab) return std::nullopt;
  return static_cast<double>(pos) / static_cast<double>(lab);
}

// Randomized instance generators; sizes stay <= 500.

inline void random_scores(Rng& rng, std::vector<double>& s, std::vector<int>& y) {
  const std::size_t n = 2 + rng.below(499);
  const int levels = rng.bernoulli(0.5) ? 1 + static_cast<int>(rng.below(20)) : 0;  // heavy ties half the time
  s.resize(n);
  y.resize(n);
  const double pos_rate = rng.uniform(0.02, 0.9);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.bernoulli(pos_rate);
    const double raw = rng.normal(y[i] ? 0.7 : 0.0, 1.0);
    s[i] = levels ? std::round(raw * levels) / levels : raw;
  }
  // At least one of each class, at random positions.
  const std::size_t i = rng.below(n), j = (i + 1 + rng.below(n - 1)) % n;
  y[i] = 1;
  y[j] = 0;
}

}  // namespace pam::test
