#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pamcurator/core/httplib.hpp"
#include "pamcurator/core/io.hpp"
#include "pamcurator/core/sha256.hpp"
#include "pamcurator/manifest/manifest.hpp"

namespace pam::manifest {

/// Returns the bytes behind a URI or throws.
using Fetcher = std::function<std::string(const std::string& uri)>;

inline bool is_url(std::string_view uri) { return uri.starts_with("http://") || uri.starts_with("https://"); }

inline std::filesystem::path local_path_of(const std::string& uri, const std::filesystem::path& base_dir) {
  std::filesystem::path p = uri.starts_with("file://") ? std::filesystem::path(uri.substr(7)) : std::filesystem::path(uri);
  return p.is_relative() ? base_dir / p : p;
}

/// Local paths (relative to `base_dir`), file:// and http(s):// URLs.
inline Fetcher default_fetcher(std::filesystem::path base_dir) {
  return [base_dir = std::move(base_dir)](const std::string& uri) -> std::string {
    if (!is_url(uri)) return read_file_text(local_path_of(uri, base_dir));
    const auto scheme_end = uri.find("://") + 3;
    const auto path_begin = uri.find('/', scheme_end);
    const std::string origin = uri.substr(0, path_begin);
    const std::string path = path_begin == std::string::npos ? "/" : uri.substr(path_begin);
    httplib::Client cli(origin);
    cli.set_follow_location(true);
    cli.set_connection_timeout(30);
    cli.set_read_timeout(300);
    const auto res = cli.Get(path);
    if (!res) throw DataError("fetch '" + uri + "': " + httplib::to_string(res.error()));
    if (res->status != 200) throw DataError("fetch '" + uri + "': HTTP " + std::to_string(res->status));
    return res->body;
  };
}

struct IngestOptions {
  unsigned concurrency = 4;              ///< parallel fetches
  std::filesystem::path base_dir = ".";  ///< resolves relative local URIs
  Fetcher fetch;                         ///< defaults to default_fetcher(base_dir)
};

struct QuarantineRecord {
  std::string sample_id, expected_sha256, actual_sha256;
  std::filesystem::path path;  ///< quarantined bytes, inside the store
};

struct IngestFailure {
  std::string sample_id, error;
};

struct IngestReport {
  std::vector<std::string> stored;  ///< verified entries, manifest order
  std::size_t downloads = 0;        ///< fetches performed
  std::size_t reused = 0;           ///< already present and verified
  std::vector<QuarantineRecord> quarantined;
  std::vector<IngestFailure> failed;

  bool ok() const noexcept { return quarantined.empty() && failed.empty(); }
};

inline nlohmann::json report_to_json(const IngestReport& r) {
  nlohmann::json q = nlohmann::json::array(), f = nlohmann::json::array();
  for (const auto& x : r.quarantined)
    q.push_back({{"sample_id", x.sample_id}, {"expected_sha256", x.expected_sha256}, {"actual_sha256", x.actual_sha256}, {"path", x.path.string()}});
  for (const auto& x : r.failed) f.push_back({{"sample_id", x.sample_id}, {"error", x.error}});
  return {{"stored", r.stored.size()}, {"downloads", r.downloads}, {"reused", r.reused}, {"quarantined", q}, {"failed", f}};
}

/// Object path inside a store: content addressed, keeps the audio extension.
inline std::filesystem::path object_relpath(const ManifestEntry& e) {
  std::string ext = std::filesystem::path(e.uri.substr(0, e.uri.find_first_of("?#"))).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext.size() > 6) ext.clear();
  return std::filesystem::path("objects") / e.sha256.substr(0, 2) / (e.sha256 + ext);
}

/// Verified entries of a store, keyed by sample id.
inline std::map<std::string, ManifestEntry> read_store_index(const std::filesystem::path& store) {
  std::map<std::string, ManifestEntry> out;
  const auto path = store / "index.jsonl";
  if (!std::filesystem::exists(path)) return out;
  for (auto& e : parse_manifest(read_file_text(path))) out.emplace(e.sample_id, std::move(e));
  return out;
}

/// Local file holding an ingested sample's audio.
inline std::filesystem::path stored_audio_path(const std::filesystem::path& store, const ManifestEntry& e) {
  return store / object_relpath(e);
}

/// Fetches and verifies every entry into `store`. Entries whose bytes are
/// already present with the right checksum are not fetched again; checksum
/// mismatches land in `store/quarantine/`. The index is rewritten atomically.
inline IngestReport ingest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& store,
                           IngestOptions opt = {}) {
  namespace fs = std::filesystem;
  if (!opt.fetch) opt.fetch = default_fetcher(opt.base_dir);
  {
    std::set<std::string> ids;
    for (const auto& e : entries)
      if (!ids.insert(e.sample_id).second) throw DataError("manifest: duplicate sample_id '" + e.sample_id + "'");
  }
  fs::create_directories(store / "objects");
  auto index = read_store_index(store);

  enum class Outcome { reused, fetched, quarantined, failed };
  struct Result {
    Outcome outcome = Outcome::failed;
    std::string detail;
    QuarantineRecord q;
  };
  std::vector<Result> results(entries.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < entries.size(); k = next++) {
      const auto& e = entries[k];
      auto& res = results[k];
      const fs::path obj = store / object_relpath(e);
      try {
        if (fs::exists(obj) && sha256_file(obj) == e.sha256) {
          res.outcome = Outcome::reused;
          continue;
        }
        const std::string bytes = opt.fetch(e.uri);
        const std::string actual = sha256_hex(bytes);
        if (actual != e.sha256) {
          const fs::path qpath = store / "quarantine" / (e.sample_id + object_relpath(e).extension().string());
          write_file_atomic(qpath, bytes);
          res.outcome = Outcome::quarantined;
          res.q = {e.sample_id, e.sha256, actual, qpath};
          continue;
        }
        write_file_atomic(obj, bytes);
        res.outcome = Outcome::fetched;
      } catch (const std::exception& ex) {
        res.outcome = Outcome::failed;
        res.detail = ex.what();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(opt.concurrency, static_cast<unsigned>(entries.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  IngestReport report;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    switch (results[k].outcome) {
      case Outcome::reused:
      case Outcome::fetched:
        report.stored.push_back(e.sample_id);
        (results[k].outcome == Outcome::reused ? report.reused : report.downloads)++;
        index[e.sample_id] = e;
        break;
      case Outcome::quarantined:
        ++report.downloads;
        report.quarantined.push_back(results[k].q);
        index.erase(e.sample_id);
        break;
      case Outcome::failed:
        report.failed.push_back({e.sample_id, results[k].detail});
        break;
    }
  }
  std::vector<ManifestEntry> all;
  for (auto& [id, e] : index) all.push_back(e);
  write_file_atomic(store / "index.jsonl", manifest_to_jsonl(all));
  if (!report.quarantined.empty()) {
    std::string q;
    for (const auto& x : report.quarantined)
      q += nlohmann::json{{"sample_id", x.sample_id}, {"expected_sha256", x.expected_sha256}, {"actual_sha256", x.actual_sha256}}.dump() + "\n";
    write_file_atomic(store / "quarantine" / "quarantine.jsonl", q);
  }
  return report;
}

/// Manifest of everything verified in `store`, sorted by sample id.
inline std::vector<ManifestEntry> export_manifest(const std::filesystem::path& store) {
  std::vector<ManifestEntry> out;
  for (auto& [id, e] : read_store_index(store)) out.push_back(std::move(e));
  return out;
}

}  // namespace pam::manifest
