#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pamcurator/audio/wav.hpp"
#include "pamcurator/core/error.hpp"
#include "pamcurator/core/io.hpp"
#include "pamcurator/core/rng.hpp"
#include "pamcurator/core/sha256.hpp"
#include "pamcurator/core/time.hpp"
#include "pamcurator/manifest/manifest.hpp"
#include "pamcurator/manifest/synth.hpp"

namespace pam::synth {

struct CorpusSpec {
  std::size_t count = 100;
  double positive_fraction = 0.02;
  double snr_db_min = 10.0;
  double snr_db_max = 25.0;
  double pulsed_fraction = 0.5;  ///< share of positives that are pulsed calls
  double seconds = 6.0;          ///< length of every file
  double noise_sd = 0.01;
  std::uint64_t seed = 1;
  std::vector<std::string> sites = {"site_north", "site_central", "site_south"};
  int first_year = 2018;
  int last_year = 2022;

  std::size_t positive_count() const {
    return static_cast<std::size_t>(std::llround(positive_fraction * static_cast<double>(count)));
  }

  void validate() const {
    if (count < 1) throw ArgumentError("corpus: count must be >= 1");
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) throw ArgumentError("corpus: positive_fraction must lie in [0, 1]");
    if (!(snr_db_min <= snr_db_max)) throw ArgumentError("corpus: snr_db_min must not exceed snr_db_max");
    if (!(pulsed_fraction >= 0.0 && pulsed_fraction <= 1.0)) throw ArgumentError("corpus: pulsed_fraction must lie in [0, 1]");
    if (!(seconds >= 3.0 && seconds <= 300.0)) throw ArgumentError("corpus: seconds must lie in [3, 300]");
    if (!(noise_sd > 0.0 && noise_sd < 0.1)) throw ArgumentError("corpus: noise_sd must lie in (0, 0.1)");
    if (sites.empty()) throw ArgumentError("corpus: at least one site");
    if (first_year > last_year) throw ArgumentError("corpus: first_year after last_year");
  }
};

inline void to_json(nlohmann::json& j, const CorpusSpec& s) {
  j = {{"count", s.count},         {"positive_fraction", s.positive_fraction}, {"snr_db_min", s.snr_db_min},
       {"snr_db_max", s.snr_db_max}, {"pulsed_fraction", s.pulsed_fraction},   {"seconds", s.seconds},
       {"noise_sd", s.noise_sd},   {"seed", s.seed},                           {"sites", s.sites},
       {"first_year", s.first_year}, {"last_year", s.last_year}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, CorpusSpec& s) {
  if (!j.is_object()) throw ArgumentError("corpus: spec must be a JSON object");
  static const std::vector<std::string> known{"count", "positive_fraction", "snr_db_min", "snr_db_max", "pulsed_fraction", "seconds",
                                              "noise_sd", "seed", "sites", "first_year", "last_year"};
  for (const auto& [k, _] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ArgumentError("corpus: unknown key '" + k + "'");
  const CorpusSpec d;
  s.count = j.value("count", d.count);
  s.positive_fraction = j.value("positive_fraction", d.positive_fraction);
  s.snr_db_min = j.value("snr_db_min", d.snr_db_min);
  s.snr_db_max = j.value("snr_db_max", d.snr_db_max);
  s.pulsed_fraction = j.value("pulsed_fraction", d.pulsed_fraction);
  s.seconds = j.value("seconds", d.seconds);
  s.noise_sd = j.value("noise_sd", d.noise_sd);
  s.seed = j.value("seed", d.seed);
  s.sites = j.value("sites", d.sites);
  s.first_year = j.value("first_year", d.first_year);
  s.last_year = j.value("last_year", d.last_year);
}

/// Oracle label of one corpus file.
struct CorpusTruth {
  std::string sample_id;
  bool positive = false;
  std::optional<CallSpec> call;
};

inline nlohmann::json truth_to_json(const CorpusTruth& t) {
  nlohmann::json j = {{"sample_id", t.sample_id}, {"positive", t.positive}};
  if (t.call) {
    const CallBox b = t.call->box();
    j["kind"] = t.call->kind == CallKind::chirp ? "chirp" : "pulsed";
    j["snr_db"] = t.call->snr_db;
    j["f_start_hz"] = t.call->f_start_hz;
    j["f_end_hz"] = t.call->f_end_hz;
    j["box"] = {{"t_start_s", b.t_start_s}, {"t_end_s", b.t_end_s}, {"f_low_hz", b.f_low_hz}, {"f_high_hz", b.f_high_hz}};
  }
  return j;
}

struct SyntheticCorpus {
  std::vector<manifest::ManifestEntry> entries;
  std::vector<CorpusTruth> truth;
};

inline std::string corpus_sample_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "syn%06zu", i);
  return buf;
}

/// Indices of the positive files, ascending.
inline std::vector<std::size_t> corpus_positive_indices(const CorpusSpec& spec) {
  Rng rng(mix_seed(spec.seed, 0));
  auto idx = rng.sample_indices(spec.count, spec.positive_count());
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Audio and oracle label of file `i`. Each file draws from its own stream,
/// so any file can be regenerated alone.
inline std::pair<audio::AudioSegment, CorpusTruth> synthesize_corpus_file(const CorpusSpec& spec, std::size_t i,
                                                                          bool positive) {
  Rng rng(mix_seed(spec.seed, i + 1));
  const int rate = audio::kCanonicalRateHz;
  auto x = white_noise(static_cast<std::size_t>(std::llround(spec.seconds * rate)), spec.noise_sd, rng);
  CorpusTruth truth{corpus_sample_id(i), positive, std::nullopt};
  if (positive) {
    CallSpec call;
    call.kind = rng.bernoulli(spec.pulsed_fraction) ? CallKind::pulsed : CallKind::chirp;
    call.duration_s = rng.uniform(0.8, std::min(2.0, spec.seconds - 1.0));
    call.onset_s = rng.uniform(0.5, spec.seconds - call.duration_s - 0.5);
    call.f_start_hz = rng.uniform(1500.0, 4000.0);
    call.f_end_hz = rng.uniform(5000.0, 10000.0);
    if (rng.bernoulli(0.5)) std::swap(call.f_start_hz, call.f_end_hz);
    call.snr_db = rng.uniform(spec.snr_db_min, spec.snr_db_max);
    call.pulse_rate_hz = rng.uniform(200.0, 600.0);
    inject_call(x, rate, call, spec.noise_sd);
    truth.call = call;
  }
  const Timestamp t0 = make_timestamp(spec.first_year, 1, 1);
  const double span_s = seconds_between(t0, make_timestamp(spec.last_year + 1, 1, 1));
  const auto offset = std::chrono::seconds{static_cast<long long>(rng.uniform(0.0, span_s - spec.seconds))};
  return {audio::make_segment(truth.sample_id, std::move(x), rate, t0 + offset), std::move(truth)};
}

/// Writes `dir/audio/<id>.wav` (16-bit PCM), `dir/manifest.jsonl` with
/// URIs relative to `dir`, and `dir/truth.jsonl`. Output bytes depend only
/// on `spec`.
inline SyntheticCorpus make_synthetic_corpus(const CorpusSpec& spec, const std::filesystem::path& dir) {
  spec.validate();
  std::filesystem::create_directories(dir / "audio");
  std::vector<bool> positive(spec.count, false);
  for (auto i : corpus_positive_indices(spec)) positive[i] = true;

  SyntheticCorpus out;
  std::string manifest_text, truth_text;
  for (std::size_t i = 0; i < spec.count; ++i) {
    auto [seg, truth] = synthesize_corpus_file(spec, i, positive[i]);
    const auto wav = audio::encode_wav(seg.samples, seg.sample_rate_hz, audio::WavSampleFormat::pcm16);
    const std::string rel = "audio/" + seg.sample_id + ".wav";
    write_file_atomic(dir / rel, wav);
    manifest::ManifestEntry e;
    e.sample_id = seg.sample_id;
    e.uri = rel;
    e.sha256 = sha256_hex(std::string_view(reinterpret_cast<const char*>(wav.data()), wav.size()));
    e.recorded_at = seg.start_time;
    e.site = spec.sites[i % spec.sites.size()];
    e.license = "CC0-1.0";
    e.device = "synthetic";
    manifest_text += manifest::entry_to_json(e).dump() + "\n";
    truth_text += truth_to_json(truth).dump() + "\n";
    out.entries.push_back(std::move(e));
    out.truth.push_back(std::move(truth));
  }
  write_file_atomic(dir / "manifest.jsonl", manifest_text);
  write_file_atomic(dir / "truth.jsonl", truth_text);
  return out;
}

}  // namespace pam::synth
