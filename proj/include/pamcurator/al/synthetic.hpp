#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "pamcurator/al/sample.hpp"
#include "pamcurator/core/error.hpp"
#include "pamcurator/core/rng.hpp"
#include "pamcurator/core/time.hpp"
#include "pamcurator/features/embedding.hpp"

namespace pam::al {

/// Embedding-like pool with rare, heterogeneous positives.
///
/// Negatives are isotropic background plus "nuisance" clusters (vessel noise,
/// rain, flow noise); a few nuisance clusters sit close to a positive cluster
/// and act as hard negatives. Positives come from clusters of unequal weight,
/// so the rarest call types are easy to miss without exploration. Positive
/// centres share one common direction (calls against ambient noise) plus a
/// cluster-specific one.
struct SyntheticPoolSpec {
  std::size_t n = 10000;
  double positive_fraction = 0.02;
  std::size_t dim = 64;
  std::size_t positive_clusters = 4;
  std::size_t nuisance_clusters = 6;
  double positive_offset = 5.0;  ///< distance of positive centres from the origin
  double shared_direction = 0.7;  ///< cosine between each positive centre and the common direction
  double positive_spread = 1.0;
  double snr_jitter = 0.0;  ///< positive offsets scale by U(1 - j, 1 + j): quiet and loud calls
  double cluster_weight_ratio = 0.5;  ///< weight of positive cluster k is ratio^k
  double holdout_weight_ratio = -1.0;  ///< same for val/test years (call-type drift); < 0: no drift
  double nuisance_offset = 3.0;
  double nuisance_fraction = 0.3;  ///< share of negatives drawn from nuisance clusters
  double hard_negative_shift = 4.0;  ///< distance of hard-negative centres from their positive centre
  std::size_t sites = 3;
  int first_year = 2018;
  int last_year = 2022;
  std::uint64_t seed = 1;

  std::size_t positives() const { return static_cast<std::size_t>(std::llround(positive_fraction * static_cast<double>(n))); }

  void validate() const {
    if (n < 1) throw ArgumentError("synthetic pool: n must be >= 1");
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) throw ArgumentError("synthetic pool: positive_fraction in [0, 1]");
    if (dim < 2) throw ArgumentError("synthetic pool: dim must be >= 2");
    if (positive_clusters < 1 || sites < 1) throw ArgumentError("synthetic pool: need >= 1 cluster and site");
    if (last_year < first_year) throw ArgumentError("synthetic pool: last_year < first_year");
    if (!(snr_jitter >= 0.0 && snr_jitter <= 1.0)) throw ArgumentError("synthetic pool: snr_jitter in [0, 1]");
    if (!(cluster_weight_ratio > 0.0)) throw ArgumentError("synthetic pool: cluster_weight_ratio must be > 0");
  }
};

/// Missing keys keep their defaults; unknown keys are rejected.
inline SyntheticPoolSpec synthetic_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ArgumentError("synthetic pool: spec must be a JSON object");
  static const std::vector<std::string> known{"n", "positive_fraction", "dim", "positive_clusters", "nuisance_clusters",
                                              "positive_offset", "shared_direction", "positive_spread", "snr_jitter",
                                              "cluster_weight_ratio", "holdout_weight_ratio", "nuisance_offset",
                                              "nuisance_fraction", "hard_negative_shift", "sites", "first_year",
                                              "last_year", "seed"};
  for (const auto& [k, _] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ArgumentError("synthetic pool: unknown key '" + k + "'");
  SyntheticPoolSpec s;
  try {
    s.n = j.value("n", s.n);
    s.positive_fraction = j.value("positive_fraction", s.positive_fraction);
    s.dim = j.value("dim", s.dim);
    s.positive_clusters = j.value("positive_clusters", s.positive_clusters);
    s.nuisance_clusters = j.value("nuisance_clusters", s.nuisance_clusters);
    s.positive_offset = j.value("positive_offset", s.positive_offset);
    s.shared_direction = j.value("shared_direction", s.shared_direction);
    s.positive_spread = j.value("positive_spread", s.positive_spread);
    s.snr_jitter = j.value("snr_jitter", s.snr_jitter);
    s.cluster_weight_ratio = j.value("cluster_weight_ratio", s.cluster_weight_ratio);
    s.holdout_weight_ratio = j.value("holdout_weight_ratio", s.holdout_weight_ratio);
    s.nuisance_offset = j.value("nuisance_offset", s.nuisance_offset);
    s.nuisance_fraction = j.value("nuisance_fraction", s.nuisance_fraction);
    s.hard_negative_shift = j.value("hard_negative_shift", s.hard_negative_shift);
    s.sites = j.value("sites", s.sites);
    s.first_year = j.value("first_year", s.first_year);
    s.last_year = j.value("last_year", s.last_year);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("synthetic pool: ") + e.what());
  }
  s.validate();
  return s;
}

struct SyntheticPool {
  std::vector<SampleRecord> pool;
  std::vector<features::FeatureVector> features;
  std::vector<int> truth;
};

inline SyntheticPool make_synthetic_pool(const SyntheticPoolSpec& spec, const SplitPolicy& policy = {}) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 0x5907));
  const std::size_t d = spec.dim;
  auto unit = [&] {
    std::vector<double> u(d);
    double n2 = 0.0;
    for (auto& v : u) {
      v = rng.normal();
      n2 += v * v;
    }
    for (auto& v : u) v /= std::sqrt(n2);
    return u;
  };
  std::vector<std::vector<double>> pos_c, nui_c;
  const auto common = unit();
  const double cs = std::clamp(spec.shared_direction, 0.0, 1.0), sn = std::sqrt(1.0 - cs * cs);
  for (std::size_t k = 0; k < spec.positive_clusters; ++k) {
    auto u = unit();
    for (std::size_t j = 0; j < d; ++j) u[j] = spec.positive_offset * (cs * common[j] + sn * u[j]);
    pos_c.push_back(u);
  }
  auto weights = [&](double ratio) {
    std::vector<double> w(spec.positive_clusters);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::pow(ratio, static_cast<double>(k));
    return w;
  };
  const auto train_w = weights(spec.cluster_weight_ratio);
  const auto holdout_w = spec.holdout_weight_ratio < 0.0 ? train_w : weights(spec.holdout_weight_ratio);
  for (std::size_t k = 0; k < spec.nuisance_clusters; ++k) {
    std::vector<double> c;
    if (k < spec.positive_clusters / 2 + 1 && k < pos_c.size()) {
      // Hard negatives next to a positive cluster.
      const auto u = unit();
      c = pos_c[k];
      for (std::size_t j = 0; j < d; ++j) c[j] += spec.hard_negative_shift * u[j];
    } else {
      c = unit();
      for (auto& v : c) v *= spec.nuisance_offset;
    }
    nui_c.push_back(c);
  }

  SyntheticPool out;
  out.truth.assign(spec.n, 0);
  for (std::size_t i : rng.sample_indices(spec.n, spec.positives())) out.truth[i] = 1;
  const int years = spec.last_year - spec.first_year + 1;
  out.pool.reserve(spec.n);
  out.features.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    SampleRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "syn_%06zu", i);
    r.sample_id = id;
    r.feature_ref = id;
    r.site = "site_" + std::to_string(rng.below(spec.sites));
    r.device = "dev_0";
    const int year = spec.first_year + static_cast<int>(rng.below(static_cast<std::uint64_t>(years)));
    const auto day = static_cast<unsigned>(rng.below(365));
    const auto slot = static_cast<unsigned>(rng.below(288));  // 5-minute slots
    r.recorded_at = make_timestamp(year, 1, 1, slot / 12, (slot % 12) * 5) + std::chrono::hours(24 * day);
    r.split = policy.split_of(r.recorded_at);

    features::FeatureVector fv;
    fv.sample_id = id;
    fv.kind = features::FeatureKind::embedding;
    fv.values.resize(d);
    const std::vector<double>* centre = nullptr;
    double spread = 1.0, gain = 1.0;
    if (out.truth[i]) {
      gain = rng.uniform(1.0 - spec.snr_jitter, 1.0 + spec.snr_jitter);
      const auto& pos_w = r.split == Split::train ? train_w : holdout_w;
      double u = rng.uniform();
      double wsum = 0.0;
      for (double w : pos_w) wsum += w;
      u *= wsum;
      std::size_t k = 0;
      while (k + 1 < pos_w.size() && u >= pos_w[k]) u -= pos_w[k++];
      centre = &pos_c[k];
      spread = spec.positive_spread;
      fv.meta["cluster"] = k;
    } else if (!nui_c.empty() && rng.bernoulli(spec.nuisance_fraction)) {
      const std::size_t k = rng.below(nui_c.size());
      centre = &nui_c[k];
      fv.meta["nuisance"] = k;
    }
    for (std::size_t j = 0; j < d; ++j)
      fv.values[j] = static_cast<float>((centre ? gain * (*centre)[j] : 0.0) + spread * rng.normal());
    out.pool.push_back(std::move(r));
    out.features.push_back(std::move(fv));
  }
  return out;
}

}  // namespace pam::al
