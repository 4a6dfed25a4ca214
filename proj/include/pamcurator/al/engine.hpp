#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "pamcurator/al/sample.hpp"
#include "pamcurator/core/error.hpp"
#include "pamcurator/core/rng.hpp"
#include "pamcurator/features/embedding.hpp"
#include "pamcurator/learners/linear_model.hpp"
#include "pamcurator/learners/logreg.hpp"
#include "pamcurator/learners/loss_estimator.hpp"
#include "pamcurator/metrics/metrics.hpp"

namespace pam::al {

enum class Strategy { positive_only, entropy, loss_estimate, mixed, alternating, random };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::positive_only: return "positive_only";
    case Strategy::entropy: return "entropy";
    case Strategy::loss_estimate: return "loss_estimate";
    case Strategy::mixed: return "mixed";
    case Strategy::alternating: return "alternating";
    case Strategy::random: return "random";
  }
  return "entropy";
}

inline Strategy parse_strategy(std::string_view s) {
  for (Strategy k : {Strategy::positive_only, Strategy::entropy, Strategy::loss_estimate, Strategy::mixed,
                     Strategy::alternating, Strategy::random})
    if (s == to_string(k)) return k;
  throw ArgumentError("unknown strategy '" + std::string(s) + "'");
}

/// Sub-strategies whose reviewed negatives are kept as guaranteed negatives.
inline bool retains_negatives(Strategy picked_by) {
  return picked_by == Strategy::entropy || picked_by == Strategy::loss_estimate;
}

struct ALConfig {
  Strategy strategy = Strategy::entropy;
  std::size_t batch_size = 500;
  double flip_rate = 0.0;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double negative_sample_multiplier = 5.0;
  bool use_definitive_negatives = false;
  int iteration_cap = 0;               ///< 0: ceil(|unlabeled train| / batch_size)
  std::size_t initial_positives = 10;  ///< seed labels drawn when the pool carries none
  double l2_lambda = 1e-3;
  int max_epochs = 500;
  bool train_on_pseudo = false;
  double sensitivity_target = 0.95;
  SplitPolicy split;

  void validate() const {
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) throw ArgumentError("flip_rate must lie in [0, 1]");
    if (!(negative_sample_multiplier >= 0.0)) throw ArgumentError("negative_sample_multiplier must be >= 0");
    if (iteration_cap < 0) throw ArgumentError("iteration_cap must be >= 0");
    if (!(l2_lambda >= 0.0)) throw ArgumentError("l2_lambda must be >= 0");
    if (max_epochs < 1) throw ArgumentError("max_epochs must be >= 1");
    if (!(sensitivity_target > 0.0 && sensitivity_target <= 1.0)) throw ArgumentError("sensitivity_target must lie in (0, 1]");
    split.validate();
  }
};

inline nlohmann::json config_to_json(const ALConfig& c) {
  return {{"strategy", to_string(c.strategy)},
          {"batch_size", c.batch_size},
          {"flip_rate", c.flip_rate},
          {"seeds", c.seeds},
          {"negative_sample_multiplier", c.negative_sample_multiplier},
          {"use_definitive_negatives", c.use_definitive_negatives},
          {"iteration_cap", c.iteration_cap},
          {"initial_positives", c.initial_positives},
          {"l2_lambda", c.l2_lambda},
          {"max_epochs", c.max_epochs},
          {"train_on_pseudo", c.train_on_pseudo},
          {"sensitivity_target", c.sensitivity_target},
          {"val_year", c.split.val_year},
          {"test_year", c.split.test_year}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ALConfig config_from_json(const nlohmann::json& j) {
  ALConfig c;
  if (!j.is_object()) throw ArgumentError("AL config must be a JSON object");
  const nlohmann::json known = config_to_json(c);
  for (const auto& [k, _] : j.items())
    if (!known.contains(k)) throw ArgumentError("AL config: unknown key '" + k + "'");
  try {
    if (j.contains("strategy")) c.strategy = parse_strategy(j["strategy"].get<std::string>());
    c.batch_size = j.value("batch_size", c.batch_size);
    c.flip_rate = j.value("flip_rate", c.flip_rate);
    c.seeds = j.value("seeds", c.seeds);
    c.negative_sample_multiplier = j.value("negative_sample_multiplier", c.negative_sample_multiplier);
    c.use_definitive_negatives = j.value("use_definitive_negatives", c.use_definitive_negatives);
    c.iteration_cap = j.value("iteration_cap", c.iteration_cap);
    c.initial_positives = j.value("initial_positives", c.initial_positives);
    c.l2_lambda = j.value("l2_lambda", c.l2_lambda);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.train_on_pseudo = j.value("train_on_pseudo", c.train_on_pseudo);
    c.sensitivity_target = j.value("sensitivity_target", c.sensitivity_target);
    c.split.val_year = j.value("val_year", c.split.val_year);
    c.split.test_year = j.value("test_year", c.split.test_year);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("AL config: ") + e.what());
  }
  c.validate();
  return c;
}

struct HistoryRow {
  std::uint64_t seed = 0;
  int iteration = 0;
  std::string strategy_used;
  std::size_t n_labeled = 0;    ///< distinct samples annotated so far (seeds included)
  std::size_t n_pos_found = 0;  ///< positives from seed, human or oracle labels
  std::optional<double> positivity_rate;
  std::optional<double> val_spec_at_95sens;
  std::optional<double> test_spec_at_95sens;
};

struct Annotation {
  bool positive = false;
  std::optional<std::string> species, ecotype;
};

struct Batch {
  std::vector<std::size_t> indices;  ///< pool rows, in selection order
  std::vector<Strategy> picked_by;   ///< sub-strategy that chose each row
  std::string strategy_used;

  std::size_t size() const noexcept { return indices.size(); }
};

struct ALState {
  std::uint64_t seed = 0;
  int iteration = 0;
  std::vector<SampleRecord> pool;
  learners::Matrix X;  ///< row i holds the features of pool[i]
  learners::LinearModel model;
  bool trained = false;
  learners::LossEstimator loss_model;
  bool has_loss_model = false;
  std::vector<double> p_positive;  ///< current model's probability per pool row
  std::vector<HistoryRow> history;
  Rng rng;
  std::optional<std::vector<int>> truth;  ///< evaluation labels per pool row (simulation)
  std::string pending_strategy;            ///< strategy of the batch applied since the last fit
  std::vector<std::size_t> last_presumed_negatives;

  std::size_t index_of(std::string_view id) const {
    if (index_.size() != pool.size()) rebuild_index();
    const auto it = index_.find(std::string(id));
    if (it == index_.end()) throw NotFoundError("unknown sample '" + std::string(id) + "'");
    return it->second;
  }

 private:
  void rebuild_index() const {
    index_.clear();
    for (std::size_t i = 0; i < pool.size(); ++i) index_.emplace(pool[i].sample_id, i);
  }
  mutable std::unordered_map<std::string, std::size_t> index_;
};

/// Binds pool records to their feature vectors (by feature_ref).
inline ALState make_state(std::vector<SampleRecord> pool, const std::vector<features::FeatureVector>& fv,
                          std::uint64_t seed) {
  ALState s;
  s.seed = seed;
  s.rng = Rng(mix_seed(seed, 0xA1));
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < fv.size(); ++i) by_id.emplace(fv[i].sample_id, i);
  const Eigen::Index d = fv.empty() ? 0 : static_cast<Eigen::Index>(fv.front().values.size());
  s.X.resize(static_cast<Eigen::Index>(pool.size()), d);
  for (std::size_t r = 0; r < pool.size(); ++r) {
    auto& rec = pool[r];
    if (rec.feature_ref.empty()) rec.feature_ref = rec.sample_id;
    const auto it = by_id.find(rec.feature_ref);
    if (it == by_id.end()) throw DataError("no feature vector '" + rec.feature_ref + "' for sample '" + rec.sample_id + "'");
    const auto& v = fv[it->second].values;
    if (static_cast<Eigen::Index>(v.size()) != d) throw DataError("feature vector '" + rec.feature_ref + "' has inconsistent length");
    for (Eigen::Index j = 0; j < d; ++j) s.X(static_cast<Eigen::Index>(r), j) = v[static_cast<std::size_t>(j)];
  }
  if (!s.X.allFinite()) throw DataError("non-finite feature values in pool");
  s.pool = std::move(pool);
  return s;
}

namespace detail {

inline bool counts_as_found(const SampleRecord& r) {
  return r.state == LabelState::positive &&
         (r.source == LabelSource::seed || r.source == LabelSource::human || r.source == LabelSource::oracle);
}

inline std::vector<std::size_t> unlabeled_train(const ALState& s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.pool.size(); ++i)
    if (s.pool[i].split == Split::train && !s.pool[i].labeled()) out.push_back(i);
  return out;
}

/// Candidates ordered by descending score; ties keep pool order.
inline std::vector<std::size_t> rank_by(const std::vector<std::size_t>& cand, const std::vector<double>& score_of_row) {
  std::vector<double> sc(cand.size());
  for (std::size_t i = 0; i < cand.size(); ++i) sc[i] = score_of_row[cand[i]];
  std::vector<std::size_t> out;
  out.reserve(cand.size());
  for (std::size_t k : learners::rank_descending(sc)) out.push_back(cand[k]);
  return out;
}

inline std::optional<double> split_spec(const ALState& s, Split which, double target) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < s.pool.size(); ++i) {
    if (s.pool[i].split != which) continue;
    int y;
    if (s.truth) {
      y = (*s.truth)[i];
    } else if (s.pool[i].labeled()) {
      y = s.pool[i].is_positive() ? 1 : 0;
    } else {
      continue;
    }
    scores.push_back(s.p_positive[i]);
    labels.push_back(y);
  }
  if (scores.empty()) return std::nullopt;
  return metrics::spec_at_sens(scores, labels, target).row.value;
}

}  // namespace detail

/// Fits the model on positives, guaranteed negatives and a fresh random draw
/// of presumed negatives from the unlabeled training pool. Does not touch the
/// iteration counter.
inline void fit_model(ALState& s, const ALConfig& cfg) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < s.pool.size(); ++i) {
    const auto& r = s.pool[i];
    if (r.split != Split::train) continue;
    if (r.state == LabelState::positive && (cfg.train_on_pseudo || r.source != LabelSource::pseudo)) pos.push_back(i);
    else if (r.state == LabelState::pseudo_positive && cfg.train_on_pseudo) pos.push_back(i);
    else if (r.state == LabelState::negative) neg.push_back(i);
  }
  if (pos.empty()) throw DataError("retrain: no positive training samples");
  const auto unl = detail::unlabeled_train(s);
  const auto want = static_cast<std::size_t>(std::llround(cfg.negative_sample_multiplier * static_cast<double>(pos.size())));
  s.last_presumed_negatives.clear();
  for (std::size_t k : s.rng.sample_indices(unl.size(), std::min(want, unl.size()))) s.last_presumed_negatives.push_back(unl[k]);
  std::sort(s.last_presumed_negatives.begin(), s.last_presumed_negatives.end());
  if (neg.empty() && s.last_presumed_negatives.empty()) throw DataError("retrain: no negative or unlabeled training samples");

  std::vector<std::size_t> rows = pos;
  rows.insert(rows.end(), neg.begin(), neg.end());
  rows.insert(rows.end(), s.last_presumed_negatives.begin(), s.last_presumed_negatives.end());
  learners::Matrix Xt(static_cast<Eigen::Index>(rows.size()), s.X.cols());
  std::vector<int> y(rows.size(), 0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    Xt.row(static_cast<Eigen::Index>(k)) = s.X.row(static_cast<Eigen::Index>(rows[k]));
    y[k] = k < pos.size() ? 1 : 0;
  }
  learners::LogregOptions opt;
  opt.l2_lambda = cfg.l2_lambda;
  opt.max_epochs = cfg.max_epochs;
  s.model = learners::train_logreg(Xt, y, opt);
  const learners::Vector p = learners::predict_positive(s.model, s.X);
  s.p_positive.assign(p.data(), p.data() + p.size());
  s.trained = true;

  s.has_loss_model = false;
  if (cfg.strategy == Strategy::loss_estimate) {
    learners::Vector losses(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) losses(static_cast<Eigen::Index>(k)) = learners::log_loss(s.p_positive[rows[k]], y[k]);
    s.loss_model = learners::train_loss_estimator(Xt, losses);
    s.has_loss_model = true;
  }
}

/// Metrics for the current model and label state.
inline HistoryRow snapshot_row(const ALState& s, const ALConfig& cfg) {
  HistoryRow h;
  h.seed = s.seed;
  h.iteration = s.iteration;
  h.strategy_used = s.pending_strategy;
  std::vector<std::optional<int>> ann;
  ann.reserve(s.pool.size());
  for (const auto& r : s.pool) {
    if (r.reviews > 0) ++h.n_labeled;
    if (detail::counts_as_found(r)) ++h.n_pos_found;
    ann.push_back(r.reviews > 0 ? r.last_annotation : std::nullopt);
  }
  h.positivity_rate = metrics::positivity_rate(ann).value;
  if (s.trained) {
    h.val_spec_at_95sens = detail::split_spec(s, Split::val, cfg.sensitivity_target);
    h.test_spec_at_95sens = detail::split_spec(s, Split::test, cfg.sensitivity_target);
  }
  return h;
}

/// The first fit; not an iteration and no history row.
inline void initial_fit(ALState& s, const ALConfig& cfg) { fit_model(s, cfg); }

inline void retrain(ALState& s, const ALConfig& cfg) {
  fit_model(s, cfg);
  ++s.iteration;
  s.history.push_back(snapshot_row(s, cfg));
  s.pending_strategy.clear();
}

/// Concrete sub-strategy used at the current iteration.
inline Strategy resolve_strategy(Strategy s, int iteration) {
  if (s == Strategy::alternating) return iteration % 2 == 0 ? Strategy::positive_only : Strategy::entropy;
  return s;
}

/// Up to batch_size unlabeled training-split rows.
inline Batch select_batch(ALState& s, const ALConfig& cfg) {
  if (!s.trained) throw ArgumentError("select_batch: model has not been trained");
  const auto cand = detail::unlabeled_train(s);
  const std::size_t k = std::min(cfg.batch_size, cand.size());
  const Strategy strat = resolve_strategy(cfg.strategy, s.iteration);
  Batch b;
  b.strategy_used = std::string(to_string(strat));
  auto take = [&](const std::vector<std::size_t>& ranked, std::size_t limit, Strategy tag,
                  std::unordered_set<std::size_t>& seen) {
    for (std::size_t i : ranked) {
      if (b.size() >= limit) break;
      if (seen.insert(i).second) {
        b.indices.push_back(i);
        b.picked_by.push_back(tag);
      }
    }
  };
  std::vector<double> entropy(s.pool.size(), 0.0);
  if (strat == Strategy::entropy || strat == Strategy::mixed)
    for (std::size_t i : cand) entropy[i] = learners::binary_entropy(s.p_positive[i]);
  std::unordered_set<std::size_t> seen;
  switch (strat) {
    case Strategy::positive_only:
      take(detail::rank_by(cand, s.p_positive), k, Strategy::positive_only, seen);
      break;
    case Strategy::entropy:
      take(detail::rank_by(cand, entropy), k, Strategy::entropy, seen);
      break;
    case Strategy::loss_estimate: {
      std::vector<double> loss(s.pool.size(), 0.0);
      if (s.has_loss_model) {
        learners::Matrix Xc(static_cast<Eigen::Index>(cand.size()), s.X.cols());
        learners::Vector pc(static_cast<Eigen::Index>(cand.size()));
        for (std::size_t i = 0; i < cand.size(); ++i) {
          Xc.row(static_cast<Eigen::Index>(i)) = s.X.row(static_cast<Eigen::Index>(cand[i]));
          pc(static_cast<Eigen::Index>(i)) = s.p_positive[cand[i]];
        }
        const auto ls = learners::loss_scores(s.loss_model, Xc, pc);
        for (std::size_t i = 0; i < cand.size(); ++i) loss[cand[i]] = ls[i];
      } else {
        for (std::size_t i : cand) loss[i] = learners::binary_entropy(s.p_positive[i]);
      }
      take(detail::rank_by(cand, loss), k, Strategy::loss_estimate, seen);
      break;
    }
    case Strategy::mixed:
      take(detail::rank_by(cand, s.p_positive), (k + 1) / 2, Strategy::positive_only, seen);
      take(detail::rank_by(cand, entropy), k, Strategy::entropy, seen);
      break;
    case Strategy::random: {
      std::vector<std::size_t> picked;
      for (std::size_t j : s.rng.sample_indices(cand.size(), k)) picked.push_back(cand[j]);
      take(picked, k, Strategy::random, seen);
      break;
    }
    case Strategy::alternating:
      break;  // resolved above
  }
  return b;
}

/// Applies one annotation to an unlabeled row. Non-seed positives are flipped
/// to negative with probability cfg.flip_rate. Negatives are kept only when
/// the selecting sub-strategy retains them (or definitive negatives are on);
/// otherwise the row returns to unlabeled.
inline void apply_label(ALState& s, std::size_t row, const Annotation& a, Strategy picked_by, const ALConfig& cfg,
                        LabelSource source = LabelSource::oracle) {
  auto& r = s.pool.at(row);
  if (r.labeled()) throw ArgumentError("sample '" + r.sample_id + "' is already labeled");
  bool positive = a.positive;
  bool flipped = false;
  if (positive && source != LabelSource::seed && cfg.flip_rate > 0.0 && s.rng.bernoulli(cfg.flip_rate)) {
    positive = false;
    flipped = true;
  }
  ++r.reviews;
  r.last_annotation = positive ? 1 : 0;
  if (positive) {
    r.state = LabelState::positive;
    r.source = source;
    r.species = a.species;
    r.ecotype = a.ecotype;
  } else if (source == LabelSource::seed || cfg.use_definitive_negatives || retains_negatives(picked_by)) {
    r.state = LabelState::negative;
    r.source = flipped ? LabelSource::noise_flip : source;
    r.species.reset();
    r.ecotype.reset();
  } else {
    r.state = LabelState::unlabeled;
    r.source = LabelSource::none;
  }
}

inline void apply_labels(ALState& s, const Batch& batch, const std::vector<Annotation>& labels, const ALConfig& cfg,
                         LabelSource source = LabelSource::oracle) {
  if (labels.size() != batch.size() || batch.picked_by.size() != batch.size())
    throw ArgumentError("apply_labels: batch and labels differ in length");
  std::unordered_set<std::size_t> seen;
  for (std::size_t i : batch.indices) {
    if (i >= s.pool.size()) throw ArgumentError("apply_labels: row out of range");
    if (s.pool[i].labeled()) throw ArgumentError("sample '" + s.pool[i].sample_id + "' is already labeled");
    if (!seen.insert(i).second) throw ArgumentError("apply_labels: sample '" + s.pool[i].sample_id + "' repeated in batch");
  }
  for (std::size_t k = 0; k < batch.size(); ++k) apply_label(s, batch.indices[k], labels[k], batch.picked_by[k], cfg, source);
  if (!batch.strategy_used.empty()) s.pending_strategy = batch.strategy_used;
}

/// Unlabeled neighbours in time (same site, start-to-start gap <= max_gap_s)
/// of a positive become pseudo_positive. Co-deployed devices recorded at the
/// same site and instant share the positive label. Existing labels are never
/// overwritten and pseudo labels do not propagate further.
inline std::vector<SampleRecord> propagate_pseudo_labels(std::vector<SampleRecord> pool, double max_gap_s = 300.0) {
  auto source_positive = [](const SampleRecord& r) {
    return r.state == LabelState::positive && r.source != LabelSource::pseudo;
  };
  std::map<std::string, std::vector<std::size_t>> by_site;
  for (std::size_t i = 0; i < pool.size(); ++i) by_site[pool[i].site].push_back(i);
  std::vector<std::optional<std::size_t>> promote(pool.size());  // donor row
  std::vector<bool> co_deployed(pool.size(), false);
  for (auto& [site, rows] : by_site) {
    std::stable_sort(rows.begin(), rows.end(),
                     [&](std::size_t a, std::size_t b) { return pool[a].recorded_at < pool[b].recorded_at; });
    // Groups of identical timestamps.
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t i = 0; i < rows.size();) {
      std::size_t j = i;
      while (j < rows.size() && pool[rows[j]].recorded_at == pool[rows[i]].recorded_at) ++j;
      groups.emplace_back(i, j);
      i = j;
    }
    auto donor_in = [&](std::size_t g) -> std::optional<std::size_t> {
      for (std::size_t k = groups[g].first; k < groups[g].second; ++k)
        if (source_positive(pool[rows[k]])) return rows[k];
      return std::nullopt;
    };
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto donor = donor_in(g);
      if (!donor) continue;
      auto mark = [&](std::size_t h, bool same_instant) {
        for (std::size_t k = groups[h].first; k < groups[h].second; ++k) {
          const std::size_t r = rows[k];
          if (pool[r].labeled()) continue;
          if (same_instant) {
            co_deployed[r] = true;
            promote[r] = *donor;
          } else if (!promote[r]) {
            promote[r] = *donor;
          }
        }
      };
      mark(g, true);
      const Timestamp t = pool[rows[groups[g].first]].recorded_at;
      if (g > 0 && seconds_between(pool[rows[groups[g - 1].first]].recorded_at, t) <= max_gap_s) mark(g - 1, false);
      if (g + 1 < groups.size() && seconds_between(t, pool[rows[groups[g + 1].first]].recorded_at) <= max_gap_s)
        mark(g + 1, false);
    }
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!promote[i]) continue;
    auto& r = pool[i];
    const auto& d = pool[*promote[i]];
    r.state = co_deployed[i] ? LabelState::positive : LabelState::pseudo_positive;
    r.source = LabelSource::pseudo;
    r.species = d.species;
    r.ecotype = d.ecotype;
  }
  return pool;
}

}  // namespace pam::al
