#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pamcurator/core/csv.hpp"
#include "pamcurator/core/error.hpp"

namespace pam::metrics {

/// One evaluation result. An empty `value` marks an undefined metric.
struct MetricsRow {
  std::string name;
  std::optional<double> value;
  std::int64_t support = 0;
  nlohmann::json params = nlohmann::json::object();

  bool defined() const noexcept { return value.has_value(); }
};

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "name,value,support,params\n";
  for (const auto& r : rows)
    out << csv::join({r.name, r.value ? csv::number(*r.value) : "NA", std::to_string(r.support), r.params.dump()}) << '\n';
}

// ---------------------------------------------------------------- specificity at sensitivity

struct SpecAtSens {
  MetricsRow row;          ///< value = specificity
  double threshold = 0.0;  ///< predict positive iff score >= threshold
  double sensitivity = 0.0;
};

/// Walks score groups from the top; the threshold is the highest distinct
/// score whose "score >= threshold" rule reaches the target sensitivity.
inline SpecAtSens spec_at_sens(std::span<const double> scores, std::span<const int> labels, double target_sens = 0.95) {
  if (scores.size() != labels.size()) throw ArgumentError("spec_at_sens: scores and labels differ in length");
  if (!(target_sens > 0.0 && target_sens <= 1.0)) throw ArgumentError("spec_at_sens: target must lie in (0, 1]");
  SpecAtSens out;
  out.row.name = "spec_at_sens";
  out.row.support = static_cast<std::int64_t>(scores.size());
  out.row.params = {{"sensitivity_target", target_sens}};
  std::int64_t P = 0, N = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError("spec_at_sens: non-finite score");
    (labels[i] ? P : N)++;
  }
  out.row.params["positives"] = P;
  out.row.params["negatives"] = N;
  if (P == 0 || N == 0) {
    out.row.params["undefined"] = P == 0 ? "no positives" : "no negatives";
    return out;
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp)++;
    if (static_cast<double>(tp) / static_cast<double>(P) >= target_sens) {
      out.threshold = s;
      out.sensitivity = static_cast<double>(tp) / static_cast<double>(P);
      out.row.value = static_cast<double>(N - fp) / static_cast<double>(N);
      out.row.params["threshold"] = s;
      return out;
    }
  }
  return out;  // unreachable: the lowest group reaches sensitivity 1
}

inline SpecAtSens spec_at_sens(const std::vector<double>& scores, const std::vector<int>& labels, double target_sens = 0.95) {
  return spec_at_sens(std::span<const double>(scores), std::span<const int>(labels), target_sens);
}

// ---------------------------------------------------------------- Cohen's kappa

/// kappa = (p_o - p_e) / (1 - p_e), evaluated from integer counts as
/// (n*agree - sum a_k b_k) / (n^2 - sum a_k b_k) with a single division.
template <typename Label>
MetricsRow cohens_kappa(const std::vector<Label>& a, const std::vector<Label>& b) {
  if (a.size() != b.size() || a.empty()) throw ArgumentError("cohens_kappa: label lists must be non-empty and equal length");
  std::map<Label, std::pair<std::int64_t, std::int64_t>> marg;
  std::int64_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++marg[a[i]].first;
    ++marg[b[i]].second;
    agree += a[i] == b[i];
  }
  const auto n = static_cast<std::int64_t>(a.size());
  std::int64_t chance = 0;
  for (const auto& [_, c] : marg) chance += c.first * c.second;
  MetricsRow row{"cohens_kappa", std::nullopt, n, nlohmann::json::object()};
  row.params["observed_agreement"] = static_cast<double>(agree) / static_cast<double>(n);
  if (n * n == chance) {
    row.params["undefined"] = "chance agreement is 1";
    return row;
  }
  row.value = static_cast<double>(n * agree - chance) / static_cast<double>(n * n - chance);
  return row;
}

// ---------------------------------------------------------------- mapped top-1

inline constexpr std::string_view kUnmapped = "unmapped";

/// A prediction is correct iff mapping(pred) == truth. Train classes mapped
/// to "unmapped" (or "") never count as correct.
inline MetricsRow mapped_top1(const std::vector<std::string>& preds, const std::vector<std::string>& truth,
                              const std::map<std::string, std::string>& mapping) {
  if (preds.size() != truth.size()) throw ArgumentError("mapped_top1: preds and truth differ in length");
  MetricsRow row{"mapped_top1", std::nullopt, static_cast<std::int64_t>(preds.size()), nlohmann::json::object()};
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto it = mapping.find(preds[i]);
    if (it == mapping.end()) throw ArgumentError("mapped_top1: train class '" + preds[i] + "' missing from mapping");
    if (it->second.empty() || it->second == kUnmapped) continue;
    correct += it->second == truth[i];
  }
  row.params["correct"] = correct;
  if (preds.empty()) {
    row.params["undefined"] = "no samples";
    return row;
  }
  row.value = static_cast<double>(correct) / static_cast<double>(preds.size());
  return row;
}

inline std::map<std::string, std::string> identity_mapping(const std::vector<std::string>& classes) {
  std::map<std::string, std::string> m;
  for (const auto& c : classes) m[c] = c;
  return m;
}

// ---------------------------------------------------------------- PU bound

struct PuBound {
  double value = 0.0;
  std::string branch;  ///< "linear" or "sqrt"
};

/// O(V/(n e_m h)) when h >= sqrt(V/(n e_m)), else O(sqrt(V/(n e_m))); constants taken as 1.
inline PuBound pu_rate_bound(double V, double n, double e_m, double h) {
  if (!(V > 0.0) || !(n > 0.0) || !(e_m > 0.0) || !(h > 0.0))
    throw ArgumentError("pu_rate_bound: all arguments must be positive");
  if (e_m > 1.0) throw ArgumentError("pu_rate_bound: e_m must be <= 1");
  const double r = V / (n * e_m);
  const double boundary = std::sqrt(r);
  if (h >= boundary) return {r / h, "linear"};
  return {boundary, "sqrt"};
}

// ---------------------------------------------------------------- positivity

/// Positive fraction of the labeled entries (nullopt = unlabeled).
inline MetricsRow positivity_rate(std::span<const std::optional<int>> labels) {
  std::int64_t labeled = 0, positive = 0;
  for (const auto& l : labels)
    if (l) {
      ++labeled;
      positive += *l != 0;
    }
  MetricsRow row{"positivity_rate", std::nullopt, labeled, {{"positives", positive}, {"pool_size", labels.size()}}};
  if (labeled == 0) {
    row.params["undefined"] = "no labeled samples";
    return row;
  }
  row.value = static_cast<double>(positive) / static_cast<double>(labeled);
  return row;
}

/// Same, with the dataset-wide rate from ground truth attached when known.
inline MetricsRow positivity_rate(std::span<const std::optional<int>> labels, std::optional<double> dataset_rate) {
  MetricsRow row = positivity_rate(labels);
  if (dataset_rate) row.params["dataset_rate"] = *dataset_rate;
  return row;
}

}  // namespace pam::metrics
