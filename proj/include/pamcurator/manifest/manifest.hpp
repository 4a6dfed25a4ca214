#pragma once

#include <cctype>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pamcurator/al/sample.hpp"
#include "pamcurator/core/error.hpp"
#include "pamcurator/core/io.hpp"
#include "pamcurator/core/time.hpp"

namespace pam::manifest {

/// One audio file of the corpus. Label fields are optional and mirror SampleRecord.
struct ManifestEntry {
  std::string sample_id;
  std::string uri;     ///< local path (absolute or relative to the manifest) or http(s) URL
  std::string sha256;  ///< lowercase hex
  Timestamp recorded_at{};
  std::string site;
  std::string license;
  std::string device;
  std::optional<al::LabelState> state;
  std::optional<al::LabelSource> source;
  std::optional<std::string> species, ecotype;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline bool is_sha256_hex(std::string_view s) {
  if (s.size() != 64) return false;
  for (char c : s)
    if (!std::isxdigit(static_cast<unsigned char>(c)) || std::isupper(static_cast<unsigned char>(c))) return false;
  return true;
}

inline nlohmann::json entry_to_json(const ManifestEntry& e) {
  nlohmann::json j = {{"sample_id", e.sample_id}, {"uri", e.uri},   {"sha256", e.sha256},
                      {"recorded_at", format_timestamp(e.recorded_at)}, {"site", e.site}, {"license", e.license}};
  if (!e.device.empty()) j["device"] = e.device;
  if (e.state) j["state"] = al::to_string(*e.state);
  if (e.source) j["source"] = al::to_string(*e.source);
  if (e.species) j["species"] = *e.species;
  if (e.ecotype) j["ecotype"] = *e.ecotype;
  return j;
}

inline ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  try {
    e.sample_id = j.at("sample_id").get<std::string>();
    e.uri = j.at("uri").get<std::string>();
    e.sha256 = j.at("sha256").get<std::string>();
    e.recorded_at = parse_timestamp(j.at("recorded_at").get<std::string>());
    e.site = j.value("site", std::string());
    e.license = j.value("license", std::string());
    e.device = j.value("device", std::string());
    if (j.contains("state")) e.state = al::parse_label_state(j["state"].get<std::string>());
    if (j.contains("source")) e.source = al::parse_label_source(j["source"].get<std::string>());
    if (j.contains("species")) e.species = j["species"].get<std::string>();
    if (j.contains("ecotype")) e.ecotype = j["ecotype"].get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("manifest entry: ") + ex.what());
  } catch (const ArgumentError& ex) {
    throw DataError(std::string("manifest entry: ") + ex.what());
  }
  if (e.sample_id.empty()) throw DataError("manifest entry: empty sample_id");
  if (!is_sha256_hex(e.sha256)) throw DataError("manifest entry '" + e.sample_id + "': sha256 must be 64 lowercase hex digits");
  return e;
}

inline std::vector<ManifestEntry> parse_manifest(std::string_view text) {
  std::vector<ManifestEntry> out;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  for (std::size_t pos = 0; pos < text.size();) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw DataError("manifest line " + std::to_string(line_no) + ": bad JSON");
    }
    ManifestEntry e;
    try {
      e = entry_from_json(j);
    } catch (const DataError& ex) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (!ids.insert(e.sample_id).second)
      throw DataError("manifest line " + std::to_string(line_no) + ": duplicate sample_id '" + e.sample_id + "'");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::string manifest_to_jsonl(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += entry_to_json(e).dump() + "\n";
  return out;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) { return parse_manifest(read_file_text(path)); }

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  write_file_atomic(path, manifest_to_jsonl(entries));
}

/// Pool record for an entry; unlabeled unless the entry carries a label.
inline al::SampleRecord to_sample_record(const ManifestEntry& e, const al::SplitPolicy& policy = {}) {
  al::SampleRecord r;
  r.sample_id = e.sample_id;
  r.recorded_at = e.recorded_at;
  r.site = e.site;
  r.device = e.device;
  r.feature_ref = e.sample_id;
  r.split = policy.split_of(e.recorded_at);
  if (e.state && *e.state != al::LabelState::unlabeled) {
    r.state = *e.state;
    r.source = e.source.value_or(al::LabelSource::human);
    r.species = e.species;
    r.ecotype = e.ecotype;
    r.reviews = 1;
    r.last_annotation = r.is_positive() ? 1 : 0;
  }
  return r;
}

}  // namespace pam::manifest
