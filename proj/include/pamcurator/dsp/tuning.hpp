#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "pamcurator/dsp/detector.hpp"
#include "pamcurator/learners/search.hpp"
#include "pamcurator/manifest/corpus.hpp"

namespace pam::dsp {

/// Labeled tuning set: chirp segments with their boxes, plus pure-noise segments.
struct TuningCorpus {
  std::vector<audio::AudioSegment> calls;
  std::vector<synth::CallBox> boxes;
  std::vector<audio::AudioSegment> noise;
};

/// Chirp-only corpus files (all positive) and the same number of noise files.
inline TuningCorpus make_tuning_corpus(std::size_t calls, std::size_t noise, synth::CorpusSpec spec) {
  spec.pulsed_fraction = 0.0;
  spec.count = calls + noise;
  spec.validate();
  TuningCorpus out;
  for (std::size_t i = 0; i < calls; ++i) {
    auto [seg, truth] = synth::synthesize_corpus_file(spec, i, true);
    out.calls.push_back(std::move(seg));
    out.boxes.push_back(truth.call->box());
  }
  for (std::size_t i = calls; i < calls + noise; ++i) out.noise.push_back(synth::synthesize_corpus_file(spec, i, false).first);
  return out;
}

struct TuningScore {
  double hit_rate = 0.0;     ///< calls with a region at IoU >= min_iou
  double noise_rate = 0.0;   ///< noise segments with any region
  double objective = 0.0;
};

/// Hit rate, minus a steep penalty for every point of noise rate above
/// `max_noise_rate` and a small one below it.
inline TuningScore score_detector(const TuningCorpus& c, const DetectorParams& p, double min_iou = 0.3,
                                  double max_noise_rate = 0.1) {
  TuningScore s;
  std::size_t hits = 0, noisy = 0;
  for (std::size_t i = 0; i < c.calls.size(); ++i) {
    double best = 0.0;
    for (const auto& r : detect(c.calls[i], p))
      best = std::max(best, synth::box_iou({r.t_min_s(), r.t_max_s(), r.f_min_hz(), r.f_max_hz()}, c.boxes[i]));
    hits += best >= min_iou;
  }
  for (const auto& seg : c.noise) noisy += !detect(seg, p).empty();
  s.hit_rate = c.calls.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(c.calls.size());
  s.noise_rate = c.noise.empty() ? 0.0 : static_cast<double>(noisy) / static_cast<double>(c.noise.size());
  s.objective = s.hit_rate - 0.05 * s.noise_rate - 5.0 * std::max(0.0, s.noise_rate - max_noise_rate);
  return s;
}

/// Detector part of the search space (the lda9 slice length is left out).
inline learners::SearchSpace detector_only_space(int budget, std::uint64_t seed) {
  auto space = learners::detector_search_space(budget, seed);
  space.params.erase(std::remove_if(space.params.begin(), space.params.end(), [](const auto& p) { return p.name == "slice_len"; }),
                     space.params.end());
  return space;
}

inline DetectorParams params_from_trial(const nlohmann::json& trial) {
  nlohmann::json j = trial;
  j.erase("slice_len");
  return j.get<DetectorParams>();
}

struct TuningResult {
  learners::SearchSpace space;
  learners::SearchResult search;
  DetectorParams best;
  TuningScore best_score;
  TuningScore default_score;
};

/// Random search over detector parameters on a tuning corpus. The defaults
/// are scored too, so a search that cannot beat them is visible.
inline TuningResult tune_detector(const TuningCorpus& corpus, int budget, std::uint64_t seed, unsigned threads = 1) {
  TuningResult res;
  res.space = detector_only_space(budget, seed);
  res.search = learners::random_search(
      res.space, [&](const nlohmann::json& t) { return score_detector(corpus, params_from_trial(t)).objective; }, threads);
  res.best = params_from_trial(res.search.best_trial().params);
  res.best_score = score_detector(corpus, res.best);
  res.default_score = score_detector(corpus, DetectorParams{});
  return res;
}

}  // namespace pam::dsp
