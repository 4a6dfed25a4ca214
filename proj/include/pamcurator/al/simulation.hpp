#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pamcurator/al/engine.hpp"
#include "pamcurator/core/csv.hpp"
#include "pamcurator/core/io.hpp"

namespace pam::al {

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<HistoryRow> history;
  std::vector<SampleRecord> final_pool;
};

struct SimulationResult {
  ALConfig config;
  double dataset_positivity = 0.0;  ///< positive fraction of the whole pool
  std::vector<SeedRun> runs;
};

struct SimulationOptions {
  std::filesystem::path snapshot_dir;  ///< empty: no per-iteration pool snapshots
  unsigned threads = 1;                ///< seeds run concurrently; results are ordered by seed index
};

inline std::string snapshot_name(std::uint64_t seed, int iteration) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "pool_seed%llu_iter%04d.jsonl", static_cast<unsigned long long>(seed), iteration);
  return buf;
}

/// Draws `cfg.initial_positives` training positives as seed labels when the pool has none.
inline void draw_seed_labels(ALState& s, const std::vector<int>& truth, const ALConfig& cfg) {
  for (const auto& r : s.pool)
    if (r.source == LabelSource::seed) return;
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < s.pool.size(); ++i)
    if (truth[i] && s.pool[i].split == Split::train && !s.pool[i].labeled()) pos.push_back(i);
  Rng pick(mix_seed(s.seed, 0x5EED));
  for (std::size_t k : pick.sample_indices(pos.size(), std::min(cfg.initial_positives, pos.size())))
    apply_label(s, pos[k], Annotation{true, {}, {}}, Strategy::positive_only, cfg, LabelSource::seed);
}

/// One seeded trajectory: select, oracle-label, apply, retrain until the cap
/// or until the unlabeled training pool is empty.
inline SeedRun simulate_seed(const ALConfig& cfg, std::uint64_t seed, const std::vector<SampleRecord>& pool,
                             const std::vector<features::FeatureVector>& fv, const std::vector<int>& truth,
                             const SimulationOptions& opt = {}) {
  ALState s = make_state(pool, fv, seed);
  s.truth = truth;
  draw_seed_labels(s, truth, cfg);
  initial_fit(s, cfg);
  int cap = cfg.iteration_cap;
  if (cap == 0) {
    const auto unl = detail::unlabeled_train(s).size();
    cap = static_cast<int>((unl + cfg.batch_size - 1) / cfg.batch_size);
  }
  if (cap <= 0) throw ArgumentError("simulate: iteration cap must be positive");
  if (!opt.snapshot_dir.empty()) write_pool(opt.snapshot_dir / snapshot_name(seed, 0), s.pool);
  while (s.iteration < cap) {
    const Batch b = select_batch(s, cfg);
    if (b.size() == 0) break;
    std::vector<Annotation> labels(b.size());
    for (std::size_t k = 0; k < b.size(); ++k) labels[k].positive = truth[b.indices[k]] != 0;
    apply_labels(s, b, labels, cfg, LabelSource::oracle);
    retrain(s, cfg);
    if (!opt.snapshot_dir.empty()) write_pool(opt.snapshot_dir / snapshot_name(seed, s.iteration), s.pool);
  }
  return {seed, std::move(s.history), std::move(s.pool)};
}

inline SimulationResult run_simulation(const ALConfig& cfg, const std::vector<SampleRecord>& pool,
                                       const std::vector<features::FeatureVector>& fv, const std::vector<int>& truth,
                                       const SimulationOptions& opt = {}) {
  cfg.validate();
  if (truth.size() != pool.size()) throw ArgumentError("simulate: every pool sample needs an oracle label");
  if (cfg.iteration_cap < 0) throw ArgumentError("simulate: iteration cap must be positive");
  if (cfg.seeds.empty()) throw ArgumentError("simulate: no seeds");
  SimulationResult res;
  res.config = cfg;
  std::size_t pos = 0;
  for (int t : truth) pos += t != 0;
  res.dataset_positivity = pool.empty() ? 0.0 : static_cast<double>(pos) / static_cast<double>(pool.size());
  res.runs.resize(cfg.seeds.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(cfg.seeds.size())));
  if (threads == 1) {
    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) res.runs[k] = simulate_seed(cfg, cfg.seeds[k], pool, fv, truth, opt);
    return res;
  }
  std::vector<std::exception_ptr> errors(cfg.seeds.size());
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t k = w; k < cfg.seeds.size(); k += threads) {
        try {
          res.runs[k] = simulate_seed(cfg, cfg.seeds[k], pool, fv, truth, opt);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return res;
}

// ---------------------------------------------------------------- output

inline const std::vector<std::string>& history_columns() {
  static const std::vector<std::string> cols{"seed",          "iteration",        "strategy_used",      "n_labeled",
                                             "n_pos_found",   "positivity_rate",  "val_spec_at_95sens", "test_spec_at_95sens"};
  return cols;
}

inline std::string optional_number(const std::optional<double>& v) { return v ? csv::number(*v) : "NA"; }

inline void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& rows, bool header = true) {
  if (header) out << csv::join(history_columns()) << '\n';
  for (const auto& h : rows)
    out << csv::join({std::to_string(h.seed), std::to_string(h.iteration), h.strategy_used, std::to_string(h.n_labeled),
                      std::to_string(h.n_pos_found), optional_number(h.positivity_rate),
                      optional_number(h.val_spec_at_95sens), optional_number(h.test_spec_at_95sens)})
        << '\n';
}

inline std::string history_csv(const SimulationResult& res) {
  std::ostringstream out;
  out << csv::join(history_columns()) << '\n';
  for (const auto& run : res.runs) write_history_csv(out, run.history, false);
  return out.str();
}

/// Per-iteration mean and population standard deviation over seeds, plus the
/// dataset-wide positivity constant for reference lines.
inline nlohmann::json summary_json(const SimulationResult& res) {
  nlohmann::json j;
  j["config"] = config_to_json(res.config);
  j["dataset_positivity"] = res.dataset_positivity;
  std::size_t max_len = 0;
  for (const auto& r : res.runs) max_len = std::max(max_len, r.history.size());
  nlohmann::json per_iter = nlohmann::json::array();
  auto stats = [](const std::vector<double>& v) {
    nlohmann::json s = {{"n", v.size()}};
    if (v.empty()) return s;
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    s["mean"] = m;
    s["std"] = std::sqrt(ss / static_cast<double>(v.size()));
    return s;
  };
  for (std::size_t i = 0; i < max_len; ++i) {
    std::vector<double> pos, posr, val, test;
    for (const auto& r : res.runs) {
      if (i >= r.history.size()) continue;
      const auto& h = r.history[i];
      pos.push_back(static_cast<double>(h.n_pos_found));
      if (h.positivity_rate) posr.push_back(*h.positivity_rate);
      if (h.val_spec_at_95sens) val.push_back(*h.val_spec_at_95sens);
      if (h.test_spec_at_95sens) test.push_back(*h.test_spec_at_95sens);
    }
    per_iter.push_back({{"iteration", i + 1},
                        {"n_pos_found", stats(pos)},
                        {"positivity_rate", stats(posr)},
                        {"val_spec_at_95sens", stats(val)},
                        {"test_spec_at_95sens", stats(test)}});
  }
  j["per_iteration"] = per_iter;
  nlohmann::json finals = nlohmann::json::array();
  for (const auto& r : res.runs) {
    nlohmann::json f = {{"seed", r.seed}, {"iterations", r.history.size()}};
    if (!r.history.empty()) {
      const auto& h = r.history.back();
      f["n_pos_found"] = h.n_pos_found;
      f["test_spec_at_95sens"] = h.test_spec_at_95sens ? nlohmann::json(*h.test_spec_at_95sens) : nlohmann::json();
    }
    finals.push_back(f);
  }
  j["final"] = finals;
  return j;
}

}  // namespace pam::al
