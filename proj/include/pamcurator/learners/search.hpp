#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pamcurator/core/error.hpp"
#include "pamcurator/core/rng.hpp"

namespace pam::learners {

struct ParamSpec {
  enum class Kind { uniform, log_uniform, integer, odd_integer, choice, boolean };
  std::string name;
  Kind kind = Kind::uniform;
  double lo = 0.0, hi = 1.0;  ///< inclusive for the integer kinds
  std::vector<nlohmann::json> choices;

  nlohmann::json sample(Rng& rng) const {
    switch (kind) {
      case Kind::uniform: return rng.uniform(lo, hi);
      case Kind::log_uniform: return std::exp(rng.uniform(std::log(lo), std::log(hi)));
      case Kind::integer: {
        const auto a = static_cast<long long>(std::ceil(lo)), b = static_cast<long long>(std::floor(hi));
        return a + static_cast<long long>(rng.below(static_cast<std::uint64_t>(b - a + 1)));
      }
      case Kind::odd_integer: {
        long long a = static_cast<long long>(std::ceil(lo)), b = static_cast<long long>(std::floor(hi));
        if (a % 2 == 0) ++a;
        if (b % 2 == 0) --b;
        return a + 2 * static_cast<long long>(rng.below(static_cast<std::uint64_t>((b - a) / 2 + 1)));
      }
      case Kind::choice: return choices[static_cast<std::size_t>(rng.below(choices.size()))];
      case Kind::boolean: return rng.bernoulli(0.5);
    }
    return nullptr;
  }

  void validate() const {
    const bool ranged = kind != Kind::choice && kind != Kind::boolean;
    if (ranged && !(lo <= hi)) throw ArgumentError("search space: '" + name + "' has lo > hi");
    if (kind == Kind::log_uniform && !(lo > 0.0)) throw ArgumentError("search space: '" + name + "' log range must be positive");
    if (kind == Kind::integer && std::floor(hi) < std::ceil(lo)) throw ArgumentError("search space: '" + name + "' has no integers");
    if (kind == Kind::odd_integer) {
      long long a = static_cast<long long>(std::ceil(lo)), b = static_cast<long long>(std::floor(hi));
      if (a % 2 == 0) ++a;
      if (b % 2 == 0) --b;
      if (b < a) throw ArgumentError("search space: '" + name + "' has no odd integers");
    }
    if (kind == Kind::choice && choices.empty()) throw ArgumentError("search space: '" + name + "' has no choices");
  }
};

struct SearchSpace {
  std::vector<ParamSpec> params;
  int budget = 20;
  std::uint64_t seed = 0;
};

struct Trial {
  int id = 0;
  nlohmann::json params = nlohmann::json::object();
  double objective = 0.0;
  bool ok = false;
  std::string error;
};

struct SearchResult {
  std::vector<Trial> trials;  ///< in trial-id order
  int best = -1;              ///< index into trials, -1 when every trial failed

  const Trial& best_trial() const {
    if (best < 0) throw DataError("random search: every trial failed");
    return trials[static_cast<std::size_t>(best)];
  }
};

using Objective = std::function<double(const nlohmann::json&)>;

/// All configurations are drawn up front from one seeded stream, then
/// evaluated (optionally on `threads` workers). Failures (exceptions or
/// non-finite objectives) are recorded and skipped. Ties keep the earliest trial.
inline SearchResult random_search(const SearchSpace& space, const Objective& objective, unsigned threads = 1) {
  if (space.budget < 1) throw ArgumentError("random search: budget must be >= 1");
  for (const auto& p : space.params) p.validate();
  Rng rng(space.seed);
  SearchResult res;
  res.trials.resize(static_cast<std::size_t>(space.budget));
  for (int t = 0; t < space.budget; ++t) {
    auto& trial = res.trials[static_cast<std::size_t>(t)];
    trial.id = t;
    for (const auto& p : space.params) trial.params[p.name] = p.sample(rng);
  }
  auto run = [&](Trial& trial) {
    try {
      trial.objective = objective(trial.params);
      trial.ok = std::isfinite(trial.objective);
      if (!trial.ok) trial.error = "non-finite objective";
    } catch (const std::exception& e) {
      trial.ok = false;
      trial.error = e.what();
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(space.budget)));
  if (threads == 1) {
    for (auto& t : res.trials) run(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < res.trials.size();) run(res.trials[i]);
      });
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < res.trials.size(); ++i)
    if (res.trials[i].ok && (res.best < 0 || res.trials[i].objective > res.trials[static_cast<std::size_t>(res.best)].objective))
      res.best = static_cast<int>(i);
  return res;
}

namespace detail {

inline std::string csv_value(const nlohmann::json& v) {
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
    return buf;
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace detail

/// trial_id, one column per parameter (space order), objective, status.
inline void write_trial_log(std::ostream& out, const SearchSpace& space, const SearchResult& res) {
  out << "trial_id";
  for (const auto& p : space.params) out << ',' << p.name;
  out << ",objective,status\n";
  for (const auto& t : res.trials) {
    out << t.id;
    for (const auto& p : space.params) out << ',' << detail::csv_value(t.params.at(p.name));
    out << ',' << (t.ok ? detail::csv_value(t.objective) : std::string("NA")) << ',' << (t.ok ? "ok" : "failed") << '\n';
  }
}

/// Detector hyperparameters plus the lda9 slice length.
inline SearchSpace detector_search_space(int budget = 60, std::uint64_t seed = 0) {
  using K = ParamSpec::Kind;
  SearchSpace s;
  s.budget = budget;
  s.seed = seed;
  s.params = {{"gamma", K::log_uniform, 1.0, 20.0, {}},   {"p", K::uniform, 0.5, 4.0, {}},
              {"alpha", K::uniform, 0.8, 0.995, {}},      {"kappa", K::odd_integer, 3, 41, {}},
              {"beta", K::uniform, 3.0, 20.0, {}},        {"min_length", K::integer, 3, 40, {}},
              {"min_count", K::integer, 10, 300, {}},     {"use_highpass_1khz", K::boolean, 0, 1, {}},
              {"gauss_sigma", K::uniform, 0.5, 3.0, {}},  {"slice_len", K::integer, 4, 16, {}}};
  return s;
}

}  // namespace pam::learners
