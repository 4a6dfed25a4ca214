#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "pamcurator/al/engine.hpp"
#include "pamcurator/audio/wav.hpp"
#include "pamcurator/core/io.hpp"
#include "pamcurator/core/sha256.hpp"
#include "pamcurator/core/time.hpp"
#include "pamcurator/service/audio_source.hpp"
#include "pamcurator/service/render.hpp"

namespace pam::service {

enum class ServiceErrc { no_active_run, unknown_task, task_expired, invalid_label, busy, not_found, bad_request };

inline std::string_view to_string(ServiceErrc c) {
  switch (c) {
    case ServiceErrc::no_active_run: return "no_active_run";
    case ServiceErrc::unknown_task: return "unknown_task";
    case ServiceErrc::task_expired: return "task_expired";
    case ServiceErrc::invalid_label: return "invalid_label";
    case ServiceErrc::busy: return "busy";
    case ServiceErrc::not_found: return "not_found";
    case ServiceErrc::bad_request: return "bad_request";
  }
  return "bad_request";
}

inline int http_status(ServiceErrc c) {
  switch (c) {
    case ServiceErrc::no_active_run: return 409;
    case ServiceErrc::unknown_task: return 404;
    case ServiceErrc::task_expired: return 410;
    case ServiceErrc::invalid_label: return 422;
    case ServiceErrc::busy: return 409;
    case ServiceErrc::not_found: return 404;
    case ServiceErrc::bad_request: return 400;
  }
  return 400;
}

class ServiceError : public Error {
 public:
  ServiceError(ServiceErrc code, const std::string& what)
      : Error(code == ServiceErrc::not_found || code == ServiceErrc::unknown_task ? ErrorKind::not_found : ErrorKind::argument, what),
        code_(code) {}
  ServiceErrc code() const noexcept { return code_; }

 private:
  ServiceErrc code_;
};

/// Annotation tags the UI offers; config-file driven.
struct Vocabulary {
  std::vector<std::string> species{"humpback", "orca", "pacific white-sided dolphin", "sea lion",
                                   "minke",    "fin",  "sperm",                       "gray"};
  std::vector<std::string> ecotypes{"SRKW", "Bigg's", "NRKW", "offshore"};

  static bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  }
};

inline nlohmann::json vocabulary_to_json(const Vocabulary& v) { return {{"species", v.species}, {"ecotypes", v.ecotypes}}; }

inline Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  Vocabulary v;
  try {
    v.species = j.value("species", v.species);
    v.ecotypes = j.value("ecotypes", v.ecotypes);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("vocabulary: ") + e.what());
  }
  return v;
}

enum class TaskStatus { pending, submitted, expired };

inline std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::pending: return "pending";
    case TaskStatus::submitted: return "submitted";
    case TaskStatus::expired: return "expired";
  }
  return "pending";
}

struct LabelTask {
  std::string task_id;
  std::string sample_id;
  std::string spectrogram_uri;
  std::string audio_uri;
  double model_score = 0.0;
  std::string strategy;  ///< sub-strategy that selected the sample
  std::optional<Timestamp> issued_at;
  TaskStatus status = TaskStatus::pending;
  std::string session;  ///< lease holder, empty while queued
  al::Strategy picked_by = al::Strategy::entropy;
  std::string strategy_used;  ///< batch-level strategy name for the history row
};

inline nlohmann::json task_to_json(const LabelTask& t) {
  return {{"task_id", t.task_id},
          {"sample_id", t.sample_id},
          {"spectrogram_uri", t.spectrogram_uri},
          {"audio_uri", t.audio_uri},
          {"model_score", t.model_score},
          {"strategy", t.strategy},
          {"issued_at", t.issued_at ? nlohmann::json(format_timestamp(*t.issued_at)) : nlohmann::json()},
          {"status", to_string(t.status)}};
}

enum class LabelKind { positive, negative, skip };

inline std::string_view to_string(LabelKind k) {
  return k == LabelKind::positive ? "positive" : k == LabelKind::negative ? "negative" : "skip";
}

struct LabelSubmission {
  std::string task_id;
  LabelKind kind = LabelKind::negative;
  std::optional<std::string> species, ecotype;
  std::string session;
};

inline LabelSubmission submission_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ServiceError(ServiceErrc::bad_request, "label submission must be a JSON object");
  LabelSubmission s;
  try {
    s.task_id = j.at("task_id").get<std::string>();
    const auto label = j.at("label").get<std::string>();
    if (label == "positive")
      s.kind = LabelKind::positive;
    else if (label == "negative")
      s.kind = LabelKind::negative;
    else if (label == "skip")
      s.kind = LabelKind::skip;
    else
      throw ServiceError(ServiceErrc::invalid_label, "label must be positive, negative or skip");
    if (j.contains("species") && !j["species"].is_null()) s.species = j["species"].get<std::string>();
    if (j.contains("ecotype") && !j["ecotype"].is_null()) s.ecotype = j["ecotype"].get<std::string>();
    s.session = j.value("session", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(ServiceErrc::bad_request, std::string("label submission: ") + e.what());
  }
  return s;
}

// ---------------------------------------------------------------- write-ahead log

/// One line of the write-ahead log. `label` records mutate the pool,
/// `retrain` records refit the model; `skip` records are kept for audit.
struct WalRecord {
  std::uint64_t seq = 0;
  std::string op;
  std::string task_id, sample_id, session;
  std::string picked_by, strategy_used;
  bool positive = false;
  std::optional<std::string> species, ecotype;
  std::string at;
};

inline nlohmann::json wal_to_json(const WalRecord& r) {
  nlohmann::json j = {{"seq", r.seq}, {"op", r.op}, {"at", r.at}};
  if (r.op == "retrain") return j;
  j["task_id"] = r.task_id;
  j["sample_id"] = r.sample_id;
  j["session"] = r.session;
  if (r.op == "label") {
    j["positive"] = r.positive;
    j["picked_by"] = r.picked_by;
    j["strategy_used"] = r.strategy_used;
    if (r.species) j["species"] = *r.species;
    if (r.ecotype) j["ecotype"] = *r.ecotype;
  }
  return j;
}

inline WalRecord wal_from_json(const nlohmann::json& j) {
  WalRecord r;
  try {
    r.seq = j.at("seq").get<std::uint64_t>();
    r.op = j.at("op").get<std::string>();
    r.at = j.value("at", std::string());
    if (r.op != "label" && r.op != "skip" && r.op != "retrain") throw DataError("WAL: unknown op '" + r.op + "'");
    if (r.op == "retrain") return r;
    r.task_id = j.at("task_id").get<std::string>();
    r.sample_id = j.at("sample_id").get<std::string>();
    r.session = j.value("session", std::string());
    if (r.op == "label") {
      r.positive = j.at("positive").get<bool>();
      r.picked_by = j.at("picked_by").get<std::string>();
      r.strategy_used = j.value("strategy_used", std::string());
      if (j.contains("species")) r.species = j["species"].get<std::string>();
      if (j.contains("ecotype")) r.ecotype = j["ecotype"].get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("WAL: ") + e.what());
  }
  return r;
}

inline std::vector<WalRecord> parse_wal(std::string_view text) {
  std::vector<WalRecord> out;
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
      // A torn final line is a crash mid-append: the entry was never acked.
      if (pos >= text.size()) break;
      throw DataError("WAL line " + std::to_string(line_no) + ": bad JSON");
    }
    out.push_back(wal_from_json(j));
    if (out.back().seq != out.size()) throw DataError("WAL line " + std::to_string(line_no) + ": sequence gap");
  }
  return out;
}

/// Engine state plus the batch the service is currently serving.
struct LiveRun {
  al::ALState state;
  al::Batch batch;
};

/// The only path by which the service mutates engine state; replay uses it too.
inline void apply_wal_record(LiveRun& run, const al::ALConfig& cfg, const WalRecord& r) {
  if (r.op == "label") {
    const std::size_t row = run.state.index_of(r.sample_id);
    al::apply_label(run.state, row, al::Annotation{r.positive, r.species, r.ecotype}, al::parse_strategy(r.picked_by), cfg,
                    al::LabelSource::human);
    if (!r.strategy_used.empty()) run.state.pending_strategy = r.strategy_used;
  } else if (r.op == "retrain") {
    al::retrain(run.state, cfg);
    run.batch = al::select_batch(run.state, cfg);
  }
}

inline LiveRun start_run(std::vector<al::SampleRecord> pool, const std::vector<features::FeatureVector>& fv,
                         const al::ALConfig& cfg, std::uint64_t seed) {
  LiveRun run{al::make_state(std::move(pool), fv, seed), {}};
  al::initial_fit(run.state, cfg);
  run.batch = al::select_batch(run.state, cfg);
  return run;
}

/// Rebuilds a run from its base pool and write-ahead log.
inline LiveRun replay_wal(std::vector<al::SampleRecord> base, const std::vector<features::FeatureVector>& fv,
                          const al::ALConfig& cfg, std::uint64_t seed, std::string_view wal_text) {
  LiveRun run = start_run(std::move(base), fv, cfg, seed);
  for (const auto& r : parse_wal(wal_text)) apply_wal_record(run, cfg, r);
  return run;
}

inline nlohmann::json history_row_to_json(const al::HistoryRow& h) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  return {{"seed", h.seed},
          {"iteration", h.iteration},
          {"strategy_used", h.strategy_used},
          {"n_labeled", h.n_labeled},
          {"n_pos_found", h.n_pos_found},
          {"positivity_rate", opt(h.positivity_rate)},
          {"val_spec_at_95sens", opt(h.val_spec_at_95sens)},
          {"test_spec_at_95sens", opt(h.test_spec_at_95sens)}};
}

inline std::string run_id_for(const std::vector<al::SampleRecord>& base, const al::ALConfig& cfg, std::uint64_t seed) {
  Sha256 h;
  h.update(al::config_to_json(cfg).dump()).update(std::to_string(seed)).update(al::sorted_pool_dump(base));
  return h.hex().substr(0, 16);
}

inline std::string snapshot_pool_name(int iteration) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "pool_iter%04d.jsonl", iteration);
  return buf;
}

inline std::string snapshot_model_name(int iteration) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "model_iter%04d.json", iteration);
  return buf;
}

// ---------------------------------------------------------------- service

struct ServiceOptions {
  std::filesystem::path state_dir;  ///< empty: nothing persisted
  al::ALConfig al;
  std::uint64_t seed = 1;
  Vocabulary vocabulary;
  std::chrono::milliseconds lease = std::chrono::minutes(30);
  std::function<Timestamp()> clock;  ///< defaults to the system clock
  AudioSource audio;                 ///< defaults to no audio
};

struct Grant {
  std::string session, task_id, sample_id;
};

/// One live AL run. Task bookkeeping is guarded by one mutex; every engine
/// mutation goes through a single worker thread in write-ahead-log order;
/// readers take a shared lock on the engine state.
class CurationService {
 public:
  CurationService(std::vector<al::SampleRecord> pool, std::vector<features::FeatureVector> features, ServiceOptions opt)
      : base_(std::move(pool)), features_(std::move(features)), opt_(std::move(opt)) {
    opt_.al.validate();
    if (!opt_.clock) opt_.clock = [] { return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now()); };
    if (!opt_.audio) opt_.audio = no_audio_source();
    run_id_ = run_id_for(base_, opt_.al, opt_.seed);
    worker_ = std::thread([this] { worker_loop(); });
  }

  CurationService(const CurationService&) = delete;
  CurationService& operator=(const CurationService&) = delete;

  ~CurationService() {
    {
      std::lock_guard lk(q_mu_);
      stop_ = true;
      paused_ = false;
    }
    q_cv_.notify_all();
    worker_.join();
  }

  /// Fits the initial model (or replays an existing state directory) and
  /// issues the first batch. Returns false when no run can start, e.g. the
  /// pool has no positive labels yet.
  bool start() {
    std::unique_lock st(state_mu_);
    if (run_) return true;
    std::string wal_text;
    bool restored = false;
    if (!opt_.state_dir.empty()) {
      std::filesystem::create_directories(opt_.state_dir / "snapshots");
      const auto run_json = opt_.state_dir / "run.json";
      if (std::filesystem::exists(run_json)) {
        const auto j = nlohmann::json::parse(read_file_text(run_json));
        if (j.value("run_id", std::string()) != run_id_)
          throw DataError("state directory '" + opt_.state_dir.string() + "' belongs to run " + j.value("run_id", std::string("?")));
        if (std::filesystem::exists(wal_path())) wal_text = read_file_text(wal_path());
        restored = true;
      }
    }
    try {
      run_ = replay_wal(base_, features_, opt_.al, opt_.seed, wal_text);
    } catch (const DataError& e) {
      if (restored) throw;
      start_error_ = e.what();
      return false;
    }
    if (!opt_.state_dir.empty() && !restored) {
      write_file_atomic(opt_.state_dir / "base_pool.jsonl", al::pool_to_jsonl(base_));
      write_file_atomic(opt_.state_dir / "run.json", nlohmann::json{{"run_id", run_id_},
                                                                    {"seed", opt_.seed},
                                                                    {"config", al::config_to_json(opt_.al)},
                                                                    {"vocabulary", vocabulary_to_json(opt_.vocabulary)}}
                                                         .dump(2) + "\n");
      write_snapshot(run_->state);
    }
    iteration_ = run_->state.iteration;
    std::lock_guard tk(task_mu_);
    restore_tasks(parse_wal(wal_text));
    issue_batch(*run_);
    active_ = true;
    return true;
  }

  bool active() const noexcept { return active_.load(); }
  const std::string& start_error() const noexcept { return start_error_; }
  const std::string& run_id() const noexcept { return run_id_; }
  int iteration() const noexcept { return iteration_.load(); }
  const Vocabulary& vocabulary() const noexcept { return opt_.vocabulary; }
  const ServiceOptions& options() const noexcept { return opt_; }

  std::vector<LabelTask> get_next_tasks(const std::string& session, std::size_t n) {
    require_active();
    std::lock_guard tk(task_mu_);
    const Timestamp now = opt_.clock();
    expire_leases(now);
    std::vector<LabelTask> out;
    while (out.size() < n && !queue_.empty()) {
      auto& t = tasks_.at(queue_.front());
      queue_.pop_front();
      t.session = session;
      t.issued_at = now;
      grants_.push_back({session, t.task_id, t.sample_id});
      out.push_back(t);
    }
    return out;
  }

  /// Acks once the label is in the write-ahead log; the pool update follows
  /// through the command queue. A repeated submission returns the first ack.
  nlohmann::json submit_label(const LabelSubmission& sub) {
    require_active();
    std::lock_guard tk(task_mu_);
    const auto it = tasks_.find(sub.task_id);
    if (it == tasks_.end()) {
      if (const auto a = acks_.find(sub.task_id); a != acks_.end()) return a->second;
      throw ServiceError(ServiceErrc::unknown_task, "unknown task '" + sub.task_id + "'");
    }
    LabelTask& t = it->second;
    if (t.status == TaskStatus::submitted) return acks_.at(t.task_id);
    const Timestamp now = opt_.clock();
    if (t.status == TaskStatus::pending && t.issued_at && now - *t.issued_at > opt_.lease) expire(t);
    if (t.status == TaskStatus::expired) throw ServiceError(ServiceErrc::task_expired, "task '" + t.task_id + "' has expired");
    validate(sub);

    WalRecord r;
    r.op = sub.kind == LabelKind::skip ? "skip" : "label";
    r.task_id = t.task_id;
    r.sample_id = t.sample_id;
    r.session = sub.session.empty() ? t.session : sub.session;
    r.positive = sub.kind == LabelKind::positive;
    r.picked_by = std::string(al::to_string(t.picked_by));
    r.strategy_used = t.strategy_used;
    r.species = sub.species;
    r.ecotype = sub.ecotype;
    r.at = format_timestamp(now);
    append_wal(r);

    t.status = TaskStatus::submitted;
    std::erase(queue_, t.task_id);
    pending_by_sample_.erase(t.sample_id);
    nlohmann::json ack = {{"task_id", t.task_id}, {"sample_id", t.sample_id}, {"label", to_string(sub.kind)}, {"seq", r.seq}};
    acks_[t.task_id] = ack;
    if (sub.kind == LabelKind::skip) {
      requeue(t);
    } else {
      enqueue([this, r] {
        std::unique_lock st(state_mu_);
        apply_wal_record(*run_, opt_.al, r);
      });
    }
    return ack;
  }

  /// Queues a refit behind every label accepted so far. Outstanding tasks of
  /// the current batch expire; the next batch is issued after the refit.
  nlohmann::json trigger_retrain() {
    require_active();
    std::lock_guard tk(task_mu_);
    if (retrain_inflight_) throw ServiceError(ServiceErrc::busy, "a retrain is already running");
    for (auto& [id, t] : tasks_)
      if (t.status == TaskStatus::pending) t.status = TaskStatus::expired;
    queue_.clear();
    pending_by_sample_.clear();
    WalRecord r;
    r.op = "retrain";
    r.at = format_timestamp(opt_.clock());
    append_wal(r);
    retrain_inflight_ = true;
    enqueue([this, r] {
      std::unique_lock st(state_mu_);
      try {
        apply_wal_record(*run_, opt_.al, r);
        write_snapshot(run_->state);
      } catch (...) {
        std::lock_guard tk2(task_mu_);
        retrain_inflight_ = false;
        throw;
      }
      iteration_ = run_->state.iteration;
      std::lock_guard tk2(task_mu_);
      issue_batch(*run_);
      retrain_inflight_ = false;
    });
    return {{"status", "started"}, {"iteration", iteration_.load()}};
  }

  bool retrain_running() const {
    std::lock_guard tk(task_mu_);
    return retrain_inflight_;
  }

  std::vector<al::HistoryRow> get_run_stats() const {
    std::shared_lock st(state_mu_);
    if (!run_) return {};
    return run_->state.history;
  }

  nlohmann::json stats_json() const {
    std::shared_lock st(state_mu_);
    nlohmann::json rows = nlohmann::json::array();
    nlohmann::json counts;
    if (run_) {
      for (const auto& h : run_->state.history) rows.push_back(history_row_to_json(h));
      const auto c = al::count_states(run_->state.pool);
      counts = {{"unlabeled", c.unlabeled}, {"positive", c.positive}, {"negative", c.negative}, {"pseudo_positive", c.pseudo}};
    }
    std::lock_guard tk(task_mu_);
    std::size_t pending = 0;
    for (const auto& [id, t] : tasks_) pending += t.status == TaskStatus::pending;
    return {{"history", rows}, {"counts", counts}, {"pending_tasks", pending}, {"retrain_running", retrain_inflight_}};
  }

  std::vector<al::SampleRecord> pool_snapshot() const {
    std::shared_lock st(state_mu_);
    return run_ ? run_->state.pool : base_;
  }

  std::vector<Grant> grant_log() const {
    std::lock_guard tk(task_mu_);
    return grants_;
  }

  std::string wal_text() const {
    std::lock_guard tk(task_mu_);
    return wal_mem_;
  }

  std::vector<std::uint8_t> render_spectrogram(const std::string& sample_id, const RenderStyle& style = {}) const {
    return render_spectrogram_png(load_audio(sample_id), style);
  }

  std::vector<std::uint8_t> audio_wav(const std::string& sample_id) const {
    const auto seg = load_audio(sample_id);
    return audio::encode_wav(seg.samples, seg.sample_rate_hz, audio::WavSampleFormat::pcm16);
  }

  /// Blocks until every queued mutation has been applied.
  void drain() {
    std::unique_lock lk(q_mu_);
    if (paused_ && !cmds_.empty()) throw ArgumentError("drain: command queue is paused");
    idle_cv_.wait(lk, [&] { return cmds_.empty() && !running_; });
  }

  /// Holds queued mutations (labels still ack), e.g. while copying the state directory.
  void pause() {
    std::unique_lock lk(q_mu_);
    paused_ = true;
    idle_cv_.wait(lk, [&] { return !running_; });
  }

  void resume() {
    {
      std::lock_guard lk(q_mu_);
      paused_ = false;
    }
    q_cv_.notify_all();
  }

 private:
  std::filesystem::path wal_path() const { return opt_.state_dir / "wal.jsonl"; }

  void require_active() const {
    if (!active_) throw ServiceError(ServiceErrc::no_active_run, "no active run" + (start_error_.empty() ? std::string() : ": " + start_error_));
  }

  audio::AudioSegment load_audio(const std::string& id) const {
    try {
      return opt_.audio(id);
    } catch (const NotFoundError& e) {
      throw ServiceError(ServiceErrc::not_found, e.what());
    }
  }

  void validate(const LabelSubmission& s) const {
    if (s.kind != LabelKind::positive && (s.species || s.ecotype))
      throw ServiceError(ServiceErrc::invalid_label, "species and ecotype apply to positive labels only");
    if (s.species && !Vocabulary::contains(opt_.vocabulary.species, *s.species))
      throw ServiceError(ServiceErrc::invalid_label, "unknown species '" + *s.species + "'");
    if (s.ecotype && !Vocabulary::contains(opt_.vocabulary.ecotypes, *s.ecotype))
      throw ServiceError(ServiceErrc::invalid_label, "unknown ecotype '" + *s.ecotype + "'");
  }

  void append_wal(WalRecord& r) {
    r.seq = ++wal_seq_;
    const std::string line = wal_to_json(r).dump() + "\n";
    if (!opt_.state_dir.empty()) {
      std::ofstream out(wal_path(), std::ios::binary | std::ios::app);
      out << line;
      out.flush();
      if (!out) {
        --wal_seq_;
        throw DataError("cannot append to '" + wal_path().string() + "'");
      }
    }
    wal_mem_ += line;
  }

  void write_snapshot(const al::ALState& s) const {
    if (opt_.state_dir.empty()) return;
    const auto dir = opt_.state_dir / "snapshots";
    write_pool(dir / snapshot_pool_name(s.iteration), s.pool);
    write_file_atomic(dir / snapshot_model_name(s.iteration), learners::model_to_json(s.model).dump() + "\n");
  }

  std::string next_task_id() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%06llu", static_cast<unsigned long long>(++task_seq_));
    return buf;
  }

  void add_task(const al::ALState& s, std::size_t row, al::Strategy picked_by, const std::string& strategy_used) {
    const auto& rec = s.pool[row];
    if (rec.labeled() || pending_by_sample_.count(rec.sample_id) || submitted_unapplied(rec.sample_id)) return;
    LabelTask t;
    t.task_id = next_task_id();
    t.sample_id = rec.sample_id;
    t.spectrogram_uri = "/spectrogram/" + rec.sample_id + ".png";
    t.audio_uri = "/audio/" + rec.sample_id + ".wav";
    t.model_score = s.p_positive.empty() ? 0.0 : s.p_positive[row];
    t.picked_by = picked_by;
    t.strategy = std::string(al::to_string(picked_by));
    t.strategy_used = strategy_used;
    pending_by_sample_[t.sample_id] = t.task_id;
    queue_.push_back(t.task_id);
    tasks_.emplace(t.task_id, std::move(t));
  }

  bool submitted_unapplied(const std::string& sample_id) const { return submitted_since_fit_.count(sample_id) > 0; }

  void issue_batch(const LiveRun& run) {
    for (std::size_t k = 0; k < run.batch.size(); ++k)
      add_task(run.state, run.batch.indices[k], run.batch.picked_by[k], run.batch.strategy_used);
    submitted_since_fit_.clear();
  }

  /// After a restart: old task ids keep their acks, samples already
  /// submitted since the last refit are not reissued, and numbering resumes.
  void restore_tasks(const std::vector<WalRecord>& wal) {
    for (const auto& r : wal) {
      wal_seq_ = r.seq;
      wal_mem_ += wal_to_json(r).dump() + "\n";
      if (r.op == "retrain") {
        submitted_since_fit_.clear();
        continue;
      }
      acks_[r.task_id] = {{"task_id", r.task_id},
                          {"sample_id", r.sample_id},
                          {"label", r.op == "skip" ? "skip" : r.positive ? "positive" : "negative"},
                          {"seq", r.seq}};
      if (r.op == "label") submitted_since_fit_.insert(r.sample_id);
      if (r.task_id.size() > 1) task_seq_ = std::max<std::uint64_t>(task_seq_, std::stoull(r.task_id.substr(1)));
    }
  }

  void expire(LabelTask& t) {
    t.status = TaskStatus::expired;
    pending_by_sample_.erase(t.sample_id);
    std::erase(queue_, t.task_id);
    requeue(t);
  }

  /// Fresh pending task for the same sample at the tail of the queue.
  void requeue(const LabelTask& old) {
    LabelTask t = old;
    t.task_id = next_task_id();
    t.status = TaskStatus::pending;
    t.session.clear();
    t.issued_at.reset();
    pending_by_sample_[t.sample_id] = t.task_id;
    queue_.push_back(t.task_id);
    tasks_.emplace(t.task_id, std::move(t));
  }

  void expire_leases(Timestamp now) {
    std::vector<std::string> stale;
    for (const auto& [id, t] : tasks_)
      if (t.status == TaskStatus::pending && t.issued_at && now - *t.issued_at > opt_.lease) stale.push_back(id);
    for (const auto& id : stale) expire(tasks_.at(id));
  }

  void enqueue(std::function<void()> cmd) {
    {
      std::lock_guard lk(q_mu_);
      cmds_.push_back(std::move(cmd));
    }
    q_cv_.notify_all();
  }

  void worker_loop() {
    for (;;) {
      std::function<void()> cmd;
      {
        std::unique_lock lk(q_mu_);
        q_cv_.wait(lk, [&] { return (stop_ && cmds_.empty()) || (!paused_ && !cmds_.empty()); });
        if (cmds_.empty()) return;
        cmd = std::move(cmds_.front());
        cmds_.pop_front();
        running_ = true;
      }
      try {
        cmd();
      } catch (const std::exception& e) {
        std::cerr << "curation-service: command failed: " << e.what() << '\n';
      }
      {
        std::lock_guard lk(q_mu_);
        running_ = false;
      }
      idle_cv_.notify_all();
    }
  }

  std::vector<al::SampleRecord> base_;
  std::vector<features::FeatureVector> features_;
  ServiceOptions opt_;
  std::string run_id_, start_error_;

  mutable std::shared_mutex state_mu_;
  std::optional<LiveRun> run_;
  std::atomic<int> iteration_{0};
  std::atomic<bool> active_{false};

  mutable std::mutex task_mu_;
  std::map<std::string, LabelTask> tasks_;
  std::deque<std::string> queue_;
  std::unordered_map<std::string, std::string> pending_by_sample_;
  std::unordered_set<std::string> submitted_since_fit_;
  std::map<std::string, nlohmann::json> acks_;
  std::vector<Grant> grants_;
  std::uint64_t task_seq_ = 0, wal_seq_ = 0;
  std::string wal_mem_;
  bool retrain_inflight_ = false;

  std::mutex q_mu_;
  std::condition_variable q_cv_, idle_cv_;
  std::deque<std::function<void()>> cmds_;
  bool stop_ = false, paused_ = false, running_ = false;
  std::thread worker_;
};

}  // namespace pam::service
