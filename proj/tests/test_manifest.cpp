#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include <catch_amalgamated.hpp>

#include "pamcurator/audio/decode.hpp"
#include "pamcurator/dsp/detector.hpp"
#include "pamcurator/manifest/corpus.hpp"
#include "pamcurator/manifest/ingest.hpp"
#include "test_support.hpp"

using namespace pam;
using namespace pam::manifest;
namespace fs = std::filesystem;

namespace {

IngestOptions opts(const fs::path& base_dir, unsigned concurrency = 4) {
  IngestOptions o;
  o.base_dir = base_dir;
  o.concurrency = concurrency;
  return o;
}

std::string bytes_of(const fs::path& p) { return read_file_text(p); }

/// Files `a`..`e` under `dir/src` with a matching manifest (URIs relative to `dir`).
std::vector<ManifestEntry> small_fixture(const fs::path& dir, std::size_t n = 5) {
  std::vector<ManifestEntry> out;
  fs::create_directories(dir / "src");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = std::string(1, static_cast<char>('a' + i));
    const std::string body = "payload " + id + std::string(100 + 37 * i, static_cast<char>('0' + i));
    write_file_atomic(dir / "src" / (id + ".wav"), body);
    ManifestEntry e;
    e.sample_id = id;
    e.uri = "src/" + id + ".wav";
    e.sha256 = sha256_hex(body);
    e.recorded_at = make_timestamp(2019 + static_cast<int>(i % 3), 3, 1 + static_cast<unsigned>(i), 12);
    e.site = i % 2 ? "east" : "west";
    e.license = "CC-BY-4.0";
    if (i == 2) {
      e.state = al::LabelState::positive;
      e.source = al::LabelSource::human;
      e.species = "killer whale";
      e.ecotype = "SRKW";
    }
    out.push_back(e);
  }
  return out;
}

std::vector<ManifestEntry> sorted(std::vector<ManifestEntry> v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
  return v;
}

}  // namespace

// ---------------------------------------------------------------- sha256

TEST_CASE("sha256 matches published test vectors", "[sha]") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  Sha256 h;
  h.update("ab").update("c");
  CHECK(h.hex() == sha256_hex("abc"));
}

// ---------------------------------------------------------------- manifest

TEST_CASE("manifest round-trips through JSON lines", "[manifest]") {
  const auto dir = test::temp_dir("man_rt");
  const auto entries = small_fixture(dir);
  const auto text = manifest_to_jsonl(entries);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  CHECK(parse_manifest(text) == entries);
  write_manifest(dir / "m.jsonl", entries);
  CHECK(read_manifest(dir / "m.jsonl") == entries);
  CHECK(parse_manifest("").empty());
  CHECK(parse_manifest("\n  \n").empty());
}

TEST_CASE("manifest rejects malformed and duplicate lines", "[manifest]") {
  const auto dir = test::temp_dir("man_bad");
  auto entries = small_fixture(dir, 2);
  const auto good = entry_to_json(entries[0]).dump();
  CHECK_THROWS_AS(parse_manifest(good + "\n{not json\n"), DataError);
  CHECK_THROWS_WITH(parse_manifest(good + "\n{not json\n"), Catch::Matchers::ContainsSubstring("line 2"));
  CHECK_THROWS_WITH(parse_manifest(good + "\n" + good + "\n"), Catch::Matchers::ContainsSubstring("duplicate"));

  auto j = entry_to_json(entries[0]);
  j["sha256"] = "ABC";
  CHECK_THROWS_AS(parse_manifest(j.dump()), DataError);
  j["sha256"] = std::string(64, 'F');
  CHECK_THROWS_AS(parse_manifest(j.dump()), DataError);
  j = entry_to_json(entries[0]);
  j.erase("uri");
  CHECK_THROWS_AS(parse_manifest(j.dump()), DataError);
  j = entry_to_json(entries[0]);
  j["recorded_at"] = "yesterday";
  CHECK_THROWS_AS(parse_manifest(j.dump()), DataError);
  j = entry_to_json(entries[0]);
  j["state"] = "maybe";
  CHECK_THROWS_AS(parse_manifest(j.dump()), DataError);
}

TEST_CASE("manifest entries become pool records", "[manifest]") {
  const auto dir = test::temp_dir("man_pool");
  const auto entries = small_fixture(dir);
  const auto r0 = to_sample_record(entries[0]);
  CHECK(r0.sample_id == "a");
  CHECK(r0.state == al::LabelState::unlabeled);
  CHECK(r0.split == al::SplitPolicy{}.split_of(entries[0].recorded_at));
  const auto r2 = to_sample_record(entries[2]);
  CHECK(r2.state == al::LabelState::positive);
  CHECK(r2.ecotype == std::optional<std::string>("SRKW"));
}

// ---------------------------------------------------------------- ingest

TEST_CASE("empty manifest gives an empty store", "[ingest]") {
  const auto dir = test::temp_dir("ing_empty");
  const auto report = ingest({}, dir / "store");
  CHECK(report.ok());
  CHECK(report.stored.empty());
  CHECK(report.downloads == 0);
  CHECK(export_manifest(dir / "store").empty());
  CHECK(bytes_of(dir / "store" / "index.jsonl").empty());
}

TEST_CASE("ingest stores verified content-addressed objects", "[ingest]") {
  const auto dir = test::temp_dir("ing_basic");
  const auto entries = small_fixture(dir);
  const auto report = ingest(entries, dir / "store", opts(dir, 3));
  CHECK(report.ok());
  CHECK(report.downloads == 5);
  CHECK(report.reused == 0);
  REQUIRE(report.stored.size() == 5);
  for (const auto& e : entries) {
    const auto obj = stored_audio_path(dir / "store", e);
    REQUIRE(fs::exists(obj));
    CHECK(obj.filename().string() == e.sha256 + ".wav");
    CHECK(bytes_of(obj) == bytes_of(dir / e.uri));
  }
  const auto j = report_to_json(report);
  CHECK(j["stored"] == 5);
  CHECK(j["quarantined"].empty());
}

TEST_CASE("re-ingesting an unchanged manifest downloads nothing", "[ingest]") {
  const auto dir = test::temp_dir("ing_idem");
  const auto entries = small_fixture(dir);
  std::atomic<int> fetches{0};
  IngestOptions opt = opts(dir, 2);
  opt.fetch = [&, inner = default_fetcher(dir)](const std::string& uri) {
    ++fetches;
    return inner(uri);
  };
  REQUIRE(ingest(entries, dir / "store", opt).downloads == 5);
  const auto index_before = bytes_of(dir / "store" / "index.jsonl");
  fetches = 0;
  const auto again = ingest(entries, dir / "store", opt);
  CHECK(again.downloads == 0);
  CHECK(fetches == 0);
  CHECK(again.reused == 5);
  CHECK(again.ok());
  CHECK(bytes_of(dir / "store" / "index.jsonl") == index_before);
}

TEST_CASE("a corrupted file is quarantined", "[ingest]") {
  const auto dir = test::temp_dir("ing_quar");
  const auto entries = small_fixture(dir);
  // Flip one bit of one source file after its checksum was recorded.
  auto body = bytes_of(dir / entries[3].uri);
  body[17] = static_cast<char>(body[17] ^ 0x04);
  write_file_atomic(dir / entries[3].uri, body);

  const auto report = ingest(entries, dir / "store", opts(dir));
  REQUIRE(report.quarantined.size() == 1);
  CHECK(report.quarantined[0].sample_id == entries[3].sample_id);
  CHECK(report.quarantined[0].expected_sha256 == entries[3].sha256);
  CHECK(report.quarantined[0].actual_sha256 == sha256_hex(body));
  CHECK(bytes_of(report.quarantined[0].path) == body);
  CHECK(report.stored.size() == 4);
  CHECK_FALSE(report.ok());
  CHECK_FALSE(fs::exists(stored_audio_path(dir / "store", entries[3])));
  CHECK(parse_manifest(bytes_of(dir / "store" / "index.jsonl")).size() == 4);
  const auto qlog = bytes_of(dir / "store" / "quarantine" / "quarantine.jsonl");
  CHECK(std::count(qlog.begin(), qlog.end(), '\n') == 1);
}

TEST_CASE("a repaired file leaves quarantine on the next run", "[ingest]") {
  const auto dir = test::temp_dir("ing_repair");
  const auto entries = small_fixture(dir);
  const auto good = bytes_of(dir / entries[1].uri);
  write_file_atomic(dir / entries[1].uri, good + "x");
  CHECK(ingest(entries, dir / "store", opts(dir)).quarantined.size() == 1);
  write_file_atomic(dir / entries[1].uri, good);
  const auto report = ingest(entries, dir / "store", opts(dir));
  CHECK(report.ok());
  CHECK(report.downloads == 1);
  CHECK(report.reused == 4);
}

TEST_CASE("missing sources are reported, not fatal", "[ingest]") {
  const auto dir = test::temp_dir("ing_missing");
  auto entries = small_fixture(dir);
  entries[0].uri = "src/nope.wav";
  const auto report = ingest(entries, dir / "store", opts(dir));
  REQUIRE(report.failed.size() == 1);
  CHECK(report.failed[0].sample_id == "a");
  CHECK(report.stored.size() == 4);
  entries.push_back(entries[1]);
  CHECK_THROWS_AS(ingest(entries, dir / "store", opts(dir)), DataError);
}

TEST_CASE("export of an ingested manifest equals the manifest up to order", "[ingest]") {
  const auto dir = test::temp_dir("ing_export");
  auto entries = small_fixture(dir);
  std::reverse(entries.begin(), entries.end());
  REQUIRE(ingest(entries, dir / "store", opts(dir)).ok());
  CHECK(export_manifest(dir / "store") == sorted(entries));

  // A second manifest merges into the same store.
  const auto more_dir = dir / "more";
  auto extra = small_fixture(more_dir, 2);
  for (auto& e : extra) {
    e.sample_id += "2";
    e.uri = (more_dir / e.uri).string();
  }
  REQUIRE(ingest(extra, dir / "store", opts(dir)).ok());
  auto all = entries;
  all.insert(all.end(), extra.begin(), extra.end());
  CHECK(export_manifest(dir / "store") == sorted(all));
}

TEST_CASE("ingest never exceeds its concurrency bound", "[ingest]") {
  const auto dir = test::temp_dir("ing_bound");
  const auto entries = small_fixture(dir, 12);
  for (unsigned bound : {1u, 3u}) {
    std::atomic<int> in_flight{0}, peak{0};
    IngestOptions opt = opts(dir, bound);
    opt.fetch = [&, inner = default_fetcher(dir)](const std::string& uri) {
      const int now = ++in_flight;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      --in_flight;
      return inner(uri);
    };
    fs::remove_all(dir / "store");
    CHECK(ingest(entries, dir / "store", opt).stored.size() == 12);
    CHECK(peak.load() <= static_cast<int>(bound));
    CHECK(peak.load() >= 1);
  }
}

TEST_CASE("ingest fetches over HTTP", "[ingest]") {
  const auto dir = test::temp_dir("ing_http");
  auto entries = small_fixture(dir);
  httplib::Server srv;
  REQUIRE(srv.set_mount_point("/files", (dir / "src").string()));
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  for (auto& e : entries) e.uri = "http://127.0.0.1:" + std::to_string(port) + "/files/" + e.sample_id + ".wav";
  entries[4].uri = "http://127.0.0.1:" + std::to_string(port) + "/files/absent.wav";
  const auto report = ingest(entries, dir / "store", opts(".", 2));
  srv.stop();
  th.join();
  CHECK(report.stored.size() == 4);
  REQUIRE(report.failed.size() == 1);
  CHECK_THAT(report.failed[0].error, Catch::Matchers::ContainsSubstring("404"));
  CHECK(bytes_of(stored_audio_path(dir / "store", entries[0])) == bytes_of(dir / "src" / "a.wav"));
}

// ---------------------------------------------------------------- synthetic corpus

TEST_CASE("synthetic corpus is byte-identical for a fixed seed", "[corpus]") {
  synth::CorpusSpec spec;
  spec.count = 12;
  spec.positive_fraction = 0.25;
  spec.seconds = 3.0;
  spec.seed = 42;
  const auto a = test::temp_dir("corpus_a"), b = test::temp_dir("corpus_b");
  synth::make_synthetic_corpus(spec, a);
  synth::make_synthetic_corpus(spec, b);
  std::size_t files = 0;
  for (const auto& f : fs::recursive_directory_iterator(a)) {
    if (!f.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(f.path(), a);
    INFO(rel.string());
    CHECK(bytes_of(f.path()) == bytes_of(b / rel));
  }
  CHECK(files == 12 + 2);
  spec.seed = 43;
  const auto c = test::temp_dir("corpus_c");
  synth::make_synthetic_corpus(spec, c);
  CHECK(bytes_of(a / "manifest.jsonl") != bytes_of(c / "manifest.jsonl"));
}

TEST_CASE("synthetic corpus has exactly the requested positive count", "[corpus]") {
  const auto dir = test::temp_dir("corpus_count");
  synth::CorpusSpec spec;
  spec.count = 250;
  spec.positive_fraction = 0.02;
  spec.seconds = 3.0;
  spec.seed = 7;
  const auto corpus = synth::make_synthetic_corpus(spec, dir);
  REQUIRE(corpus.truth.size() == 250);
  CHECK(std::count_if(corpus.truth.begin(), corpus.truth.end(), [](const auto& t) { return t.positive; }) == 5);
  for (const auto& t : corpus.truth) CHECK(t.positive == t.call.has_value());

  // The written manifest ingests cleanly and passes every checksum.
  const auto m = read_manifest(dir / "manifest.jsonl");
  CHECK(m == corpus.entries);
  const auto report = ingest(m, dir / "store", opts(dir));
  CHECK(report.ok());
  CHECK(report.stored.size() == 250);
  std::map<std::string, int> sites;
  for (const auto& e : m) {
    ++sites[e.site];
    CHECK(year_of(e.recorded_at) >= 2018);
    CHECK(year_of(e.recorded_at) <= 2022);
  }
  CHECK(sites.size() == 3);

  const auto truth_text = bytes_of(dir / "truth.jsonl");
  CHECK(std::count(truth_text.begin(), truth_text.end(), '\n') == 250);

  spec.count = 1;
  spec.positive_fraction = 1.0;
  CHECK(synth::make_synthetic_corpus(spec, test::temp_dir("corpus_one")).truth[0].positive);
  spec.count = 0;
  CHECK_THROWS_AS(synth::make_synthetic_corpus(spec, dir), ArgumentError);
}

TEST_CASE("synthetic corpus mixes chirps and pulsed calls", "[corpus]") {
  synth::CorpusSpec spec;
  spec.count = 400;
  spec.positive_fraction = 0.1;
  std::map<synth::CallKind, int> kinds;
  for (auto i : synth::corpus_positive_indices(spec)) {
    const auto [seg, truth] = synth::synthesize_corpus_file(spec, i, true);
    REQUIRE(truth.call);
    ++kinds[truth.call->kind];
    CHECK(truth.call->snr_db >= spec.snr_db_min);
    CHECK(truth.call->snr_db <= spec.snr_db_max);
    CHECK(truth.call->box().t_end_s <= spec.seconds);
  }
  CHECK(kinds[synth::CallKind::chirp] >= 10);
  CHECK(kinds[synth::CallKind::pulsed] >= 10);
}

TEST_CASE("injected chirps are found by the detector at high SNR", "[corpus]") {
  const auto dir = test::temp_dir("corpus_detect");
  synth::CorpusSpec spec;
  spec.count = 40;
  spec.positive_fraction = 0.5;
  spec.pulsed_fraction = 0.0;
  spec.snr_db_min = 20.0;
  spec.snr_db_max = 25.0;
  spec.seed = 11;
  const auto corpus = synth::make_synthetic_corpus(spec, dir);
  const dsp::DetectorParams params;
  int checked = 0;
  for (std::size_t i = 0; i < corpus.truth.size(); ++i) {
    const auto& t = corpus.truth[i];
    if (!t.positive) continue;
    // Decode from disk: the oracle box must survive 16-bit quantization.
    const auto segs = audio::decode(dir / corpus.entries[i].uri);
    REQUIRE(segs.size() == 1);
    const auto regions = dsp::detect(segs[0], params);
    double best = 0.0;
    for (const auto& r : regions)
      best = std::max(best, synth::box_iou({r.t_min_s(), r.t_max_s(), r.f_min_hz(), r.f_max_hz()}, t.call->box()));
    INFO(t.sample_id << " regions " << regions.size());
    CHECK(best >= 0.3);
    ++checked;
  }
  CHECK(checked == 20);
}
