#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pamcurator/core/error.hpp"
#include "pamcurator/core/io.hpp"
#include "pamcurator/core/time.hpp"

namespace pam::al {

enum class LabelState { unlabeled, positive, negative, pseudo_positive };
enum class LabelSource { none, seed, human, oracle, noise_flip, pseudo };
enum class Split { train, val, test };

inline std::string_view to_string(LabelState s) {
  switch (s) {
    case LabelState::unlabeled: return "unlabeled";
    case LabelState::positive: return "positive";
    case LabelState::negative: return "negative";
    case LabelState::pseudo_positive: return "pseudo_positive";
  }
  return "unlabeled";
}

inline std::string_view to_string(LabelSource s) {
  switch (s) {
    case LabelSource::none: return "none";
    case LabelSource::seed: return "seed";
    case LabelSource::human: return "human";
    case LabelSource::oracle: return "oracle";
    case LabelSource::noise_flip: return "noise_flip";
    case LabelSource::pseudo: return "pseudo";
  }
  return "none";
}

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

inline LabelState parse_label_state(std::string_view s) {
  if (s == "unlabeled") return LabelState::unlabeled;
  if (s == "positive") return LabelState::positive;
  if (s == "negative") return LabelState::negative;
  if (s == "pseudo_positive") return LabelState::pseudo_positive;
  throw ArgumentError("unknown label state '" + std::string(s) + "'");
}

inline LabelSource parse_label_source(std::string_view s) {
  if (s == "none" || s.empty()) return LabelSource::none;
  if (s == "seed") return LabelSource::seed;
  if (s == "human") return LabelSource::human;
  if (s == "oracle") return LabelSource::oracle;
  if (s == "noise_flip") return LabelSource::noise_flip;
  if (s == "pseudo") return LabelSource::pseudo;
  throw ArgumentError("unknown label source '" + std::string(s) + "'");
}

/// Year boundaries of the time split: train < val_year, val == val_year, test >= test_year.
/// Years strictly between val_year and test_year (if any) fall into val.
struct SplitPolicy {
  int val_year = 2021;
  int test_year = 2022;

  Split split_of(Timestamp t) const {
    const int y = year_of(t);
    if (y < val_year) return Split::train;
    if (y >= test_year) return Split::test;
    return Split::val;
  }

  void validate() const {
    if (test_year <= val_year) throw ArgumentError("split policy: test_year must exceed val_year");
  }
};

struct SampleRecord {
  std::string sample_id;
  Timestamp recorded_at{};
  std::string site;
  std::string device;       ///< co-deployed recorders at one site share labels
  std::string feature_ref;  ///< FeatureVector id; defaults to sample_id
  LabelState state = LabelState::unlabeled;
  LabelSource source = LabelSource::none;
  std::optional<std::string> species, ecotype;
  Split split = Split::train;
  int reviews = 0;                       ///< times an annotation was given
  std::optional<int> last_annotation;    ///< most recent annotation (after noise), 1 = positive

  bool labeled() const noexcept { return state != LabelState::unlabeled; }
  bool is_positive() const noexcept { return state == LabelState::positive || state == LabelState::pseudo_positive; }
};

inline nlohmann::json record_to_json(const SampleRecord& r) {
  nlohmann::json j = {{"sample_id", r.sample_id},
                      {"recorded_at", format_timestamp(r.recorded_at)},
                      {"site", r.site},
                      {"device", r.device},
                      {"feature_ref", r.feature_ref},
                      {"label_state", to_string(r.state)},
                      {"label_source", to_string(r.source)},
                      {"split", to_string(r.split)},
                      {"reviews", r.reviews}};
  if (r.species) j["species"] = *r.species;
  if (r.ecotype) j["ecotype"] = *r.ecotype;
  if (r.last_annotation) j["last_annotation"] = *r.last_annotation;
  return j;
}

/// The split is always re-derived from recorded_at; a stored split that
/// disagrees is a data error.
inline SampleRecord record_from_json(const nlohmann::json& j, const SplitPolicy& policy = {}) {
  SampleRecord r;
  try {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.recorded_at = parse_timestamp(j.at("recorded_at").get<std::string>());
    r.site = j.value("site", std::string{});
    r.device = j.value("device", std::string{});
    r.feature_ref = j.value("feature_ref", r.sample_id);
    r.state = parse_label_state(j.value("label_state", std::string("unlabeled")));
    r.source = parse_label_source(j.value("label_source", std::string("none")));
    if (j.contains("species") && !j["species"].is_null()) r.species = j["species"].get<std::string>();
    if (j.contains("ecotype") && !j["ecotype"].is_null()) r.ecotype = j["ecotype"].get<std::string>();
    r.reviews = j.value("reviews", 0);
    if (j.contains("last_annotation") && !j["last_annotation"].is_null()) r.last_annotation = j["last_annotation"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("sample record: ") + e.what());
  }
  if (r.sample_id.empty()) throw DataError("sample record: empty sample_id");
  r.split = policy.split_of(r.recorded_at);
  if (j.contains("split") && j["split"].get<std::string>() != to_string(r.split))
    throw DataError("sample '" + r.sample_id + "': stored split disagrees with recorded_at");
  if (r.source == LabelSource::noise_flip && r.state != LabelState::negative)
    throw DataError("sample '" + r.sample_id + "': noise_flip source on a non-negative record");
  if (r.labeled() && r.source == LabelSource::none)
    throw DataError("sample '" + r.sample_id + "': labeled record without a source");
  return r;
}

inline std::string pool_to_jsonl(const std::vector<SampleRecord>& pool) {
  std::string out;
  for (const auto& r : pool) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<SampleRecord> pool_from_jsonl(std::string_view text, const SplitPolicy& policy = {}) {
  std::vector<SampleRecord> pool;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("pool line " + std::to_string(line_no) + ": " + e.what());
    }
    pool.push_back(record_from_json(j, policy));
  }
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& r : pool) ids.push_back(r.sample_id);
  std::sort(ids.begin(), ids.end());
  if (const auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end())
    throw DataError("pool: duplicate sample_id '" + *dup + "'");
  return pool;
}

inline std::vector<SampleRecord> read_pool(const std::filesystem::path& path, const SplitPolicy& policy = {}) {
  return pool_from_jsonl(read_file_text(path), policy);
}

inline void write_pool(const std::filesystem::path& path, const std::vector<SampleRecord>& pool) {
  write_file_atomic(path, pool_to_jsonl(pool));
}

/// Pool dump sorted by sample_id, for byte comparison of states.
inline std::string sorted_pool_dump(std::vector<SampleRecord> pool) {
  std::sort(pool.begin(), pool.end(), [](const SampleRecord& a, const SampleRecord& b) { return a.sample_id < b.sample_id; });
  return pool_to_jsonl(pool);
}

struct PoolCounts {
  std::size_t unlabeled = 0, positive = 0, negative = 0, pseudo = 0;
  std::size_t total() const noexcept { return unlabeled + positive + negative + pseudo; }
};

inline PoolCounts count_states(const std::vector<SampleRecord>& pool) {
  PoolCounts c;
  for (const auto& r : pool) {
    switch (r.state) {
      case LabelState::unlabeled: ++c.unlabeled; break;
      case LabelState::positive: ++c.positive; break;
      case LabelState::negative: ++c.negative; break;
      case LabelState::pseudo_positive: ++c.pseudo; break;
    }
  }
  return c;
}

}  // namespace pam::al
