// pam-curator: command-line entry points of the curation engine.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "pamcurator/core/httplib.hpp"

#include "cli_common.hpp"
#include "pamcurator/al/simulation.hpp"
#include "pamcurator/al/synthetic.hpp"
#include "pamcurator/audio/decode.hpp"
#include "pamcurator/dsp/detector.hpp"
#include "pamcurator/dsp/tuning.hpp"
#include "pamcurator/features/lda9.hpp"
#include "pamcurator/features/rocca.hpp"
#include "pamcurator/features/store.hpp"
#include "pamcurator/learners/forest.hpp"
#include "pamcurator/learners/lda.hpp"
#include "pamcurator/learners/logreg.hpp"
#include "pamcurator/manifest/corpus.hpp"
#include "pamcurator/manifest/ingest.hpp"
#include "pamcurator/metrics/metrics.hpp"
#include "pamcurator/service/http.hpp"

using namespace pam;
using namespace pam::cli;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string config;
  CLI::Option* seed_opt = nullptr;

  /// --seed wins, then a "seed" key in the config, then the default.
  std::uint64_t effective_seed(json& cfg) const {
    const auto from_cfg = take(cfg, "seed");
    if (seed_opt->count() == 0 && !from_cfg.is_null()) return from_cfg.get<std::uint64_t>();
    return seed;
  }
};

void add_common(CLI::App* sub, Common& c) {
  c.seed_opt = sub->add_option("--seed", c.seed, "Seed for every random choice of the command")->capture_default_str();
  sub->add_option("--config", c.config, "JSON settings: a file path or an inline object");
}

template <typename T>
void override_from(const CLI::Option* opt, const T& value, T& target) {
  if (opt->count() > 0) target = value;
}

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

// ---------------------------------------------------------------- audio inputs

struct AudioInput {
  std::string id;
  fs::path path;
  Timestamp start{};
};

bool is_audio_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav" || ext == ".wave" || ext == ".flac";
}

/// A store (ids from its index), a directory of audio files (ids = stems,
/// sorted) or a single file.
std::vector<AudioInput> audio_inputs(const std::string& in, const std::string& store) {
  std::vector<AudioInput> out;
  if (!store.empty()) {
    const auto dir = existing_input(store, "store");
    for (const auto& [id, e] : manifest::read_store_index(dir)) out.push_back({id, manifest::stored_audio_path(dir, e), e.recorded_at});
    return out;
  }
  if (in.empty()) throw ArgumentError("give --in or --store");
  const auto path = existing_input(in, "input");
  if (fs::is_directory(path)) {
    for (const auto& f : fs::directory_iterator(path))
      if (f.is_regular_file() && is_audio_file(f.path())) out.push_back({f.path().stem().string(), f.path(), {}});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  } else {
    out.push_back({path.stem().string(), path, {}});
  }
  return out;
}

std::vector<audio::AudioSegment> decode_input(const AudioInput& in) {
  audio::DecodeOptions opt;
  opt.sample_id = in.id;
  opt.start_time = in.start;
  return audio::decode(in.path, opt);
}

/// Runs `fn(k)` for k in [0, n) on up to `threads` workers; the first
/// exception is rethrown after all workers stop.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < n;) {
      try {
        fn(k);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

dsp::DetectorParams detector_params(const std::string& params_arg, json& cfg, int* slice_len = nullptr) {
  json p = take(cfg, "detector");
  if (!params_arg.empty()) p = load_config(params_arg);
  if (p.is_null()) p = json::object();
  if (slice_len) {
    const auto s = take(p, "slice_len");
    const auto c = take(cfg, "slice_len");
    if (!c.is_null()) *slice_len = c.get<int>();
    if (!s.is_null()) *slice_len = s.get<int>();
  }
  return p.get<dsp::DetectorParams>();
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  Common c;
  std::string out, kind = "audio";
  std::size_t count = 0;
  double positive_fraction = 0, snr_min = 0, snr_max = 0, seconds = 0, pulsed_fraction = 0;
  std::size_t dim = 0;
  bool label_holdout = false;
  std::size_t seed_positives = 0;
  CLI::Option *count_o, *pf_o, *snr_min_o, *snr_max_o, *seconds_o, *pulsed_o, *dim_o;
};

json run_synth_audio(SynthArgs& a, json& cfg, std::uint64_t seed) {
  synth::CorpusSpec spec = cfg.get<synth::CorpusSpec>();
  cfg = json::object();
  override_from(a.count_o, a.count, spec.count);
  override_from(a.pf_o, a.positive_fraction, spec.positive_fraction);
  override_from(a.snr_min_o, a.snr_min, spec.snr_db_min);
  override_from(a.snr_max_o, a.snr_max, spec.snr_db_max);
  override_from(a.seconds_o, a.seconds, spec.seconds);
  override_from(a.pulsed_o, a.pulsed_fraction, spec.pulsed_fraction);
  spec.seed = seed;
  const auto corpus = synth::make_synthetic_corpus(spec, a.out);
  std::size_t pos = 0;
  for (const auto& t : corpus.truth) pos += t.positive;
  return {{"kind", "audio"}, {"files", corpus.entries.size()}, {"positives", pos}, {"out", a.out},
          {"manifest", (fs::path(a.out) / "manifest.jsonl").string()}, {"truth", (fs::path(a.out) / "truth.jsonl").string()}};
}

json run_synth_features(SynthArgs& a, json& cfg, std::uint64_t seed) {
  auto spec = al::synthetic_spec_from_json(cfg);
  cfg = json::object();
  override_from(a.count_o, a.count, spec.n);
  override_from(a.pf_o, a.positive_fraction, spec.positive_fraction);
  override_from(a.dim_o, a.dim, spec.dim);
  spec.seed = seed;
  spec.validate();
  auto P = al::make_synthetic_pool(spec);
  Rng pick(mix_seed(seed, 0x5EED));
  std::vector<std::size_t> train_pos;
  for (std::size_t i = 0; i < P.pool.size(); ++i)
    if (P.truth[i] && P.pool[i].split == al::Split::train) train_pos.push_back(i);
  std::set<std::size_t> seeded;
  for (auto k : pick.sample_indices(train_pos.size(), a.seed_positives)) seeded.insert(train_pos[k]);
  std::string truth_csv = "sample_id,label\n";
  for (std::size_t i = 0; i < P.pool.size(); ++i) {
    auto& r = P.pool[i];
    truth_csv += csv::join({r.sample_id, std::to_string(P.truth[i])}) + "\n";
    const bool holdout = a.label_holdout && r.split != al::Split::train;
    if (!holdout && !seeded.count(i)) continue;
    r.state = P.truth[i] ? al::LabelState::positive : al::LabelState::negative;
    r.source = holdout ? al::LabelSource::oracle : al::LabelSource::seed;
    r.reviews = 1;
    r.last_annotation = P.truth[i];
  }
  const fs::path out(a.out);
  fs::create_directories(out);
  al::write_pool(out / "pool.jsonl", P.pool);
  features::write_feature_store(out / "features.emb", P.features);
  write_file_atomic(out / "truth.csv", truth_csv);
  std::size_t pos = 0;
  for (int t : P.truth) pos += t != 0;
  return {{"kind", "features"}, {"samples", P.pool.size()}, {"positives", pos}, {"dim", spec.dim}, {"out", a.out},
          {"seed_positives", seeded.size()}, {"label_holdout", a.label_holdout}};
}

int run_synth(SynthArgs& a, const std::vector<std::string>& argv) {
  json cfg = load_config(a.c.config);
  const auto seed = a.c.effective_seed(cfg);
  const json resolved = cfg;
  log_invocation(argv, seed, resolved);
  if (a.kind == "audio") {
    print_json(run_synth_audio(a, cfg, seed));
  } else if (a.kind == "features") {
    print_json(run_synth_features(a, cfg, seed));
  } else {
    throw ArgumentError("synth: --kind must be audio or features");
  }
  return 0;
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  Common c;
  std::string manifest, out;
  unsigned concurrency = 4;
  CLI::Option* conc_o;
};

int run_ingest(IngestArgs& a, const std::vector<std::string>& argv) {
  json cfg = load_config(a.c.config);
  const auto seed = a.c.effective_seed(cfg);
  const auto conc = take(cfg, "concurrency");
  if (!conc.is_null() && a.conc_o->count() == 0) a.concurrency = conc.get<unsigned>();
  reject_leftovers(cfg, "ingest");
  if (a.out.empty()) {
    const auto cache = env_path("PAM_CACHE_DIR");
    if (!cache) throw ArgumentError("ingest: give --out or set PAM_CACHE_DIR");
    a.out = (*cache / "store").string();
  }
  log_invocation(argv, seed, {{"concurrency", a.concurrency}, {"out", a.out}});
  const auto path = existing_input(a.manifest, "manifest");
  const auto entries = manifest::read_manifest(path);
  manifest::IngestOptions opt;
  opt.concurrency = std::max(1u, a.concurrency);
  opt.base_dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  const auto report = manifest::ingest(entries, a.out, opt);
  auto j = manifest::report_to_json(report);
  j["store"] = a.out;
  print_json(j);
  return report.ok() ? 0 : 3;
}

// ---------------------------------------------------------------- detect

struct DetectArgs {
  Common c;
  std::string in, store, params, out;
  unsigned threads = 1;
};

int run_detect(DetectArgs& a, const std::vector<std::string>& argv) {
  json cfg = load_config(a.c.config);
  const auto seed = a.c.effective_seed(cfg);
  const auto params = detector_params(a.params, cfg);
  reject_leftovers(cfg, "detect");
  log_invocation(argv, seed, {{"detector", params}});
  const auto inputs = audio_inputs(a.in, a.store);
  std::vector<std::string> lines(inputs.size());
  std::vector<double> seconds(inputs.size(), 0.0);
  std::vector<std::size_t> regions(inputs.size(), 0), segments(inputs.size(), 0);
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(inputs.size(), a.threads, [&](std::size_t k) {
    for (const auto& seg : decode_input(inputs[k])) {
      ++segments[k];
      seconds[k] += seg.duration_s;
      for (const auto& r : dsp::detect(seg, params)) {
        lines[k] += dsp::region_to_json(seg.sample_id, r).dump() + "\n";
        ++regions[k];
      }
    }
  });
  const double compute = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string text;
  for (const auto& l : lines) text += l;
  write_file_atomic(a.out, text);
  double audio_s = 0.0;
  for (double s : seconds) audio_s += s;
  std::size_t n_regions = 0, n_segments = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    n_regions += regions[k];
    n_segments += segments[k];
  }
  print_json({{"files", inputs.size()}, {"segments", n_segments}, {"regions", n_regions}, {"audio_seconds", audio_s},
              {"compute_seconds", compute}, {"realtime_factor", compute > 0 ? audio_s / compute : 0.0}, {"out", a.out}});
  return 0;
}

// ---------------------------------------------------------------- tune-detector

struct TuneArgs {
  Common c;
  std::string out, trials;
  int budget = 60;
  std::size_t calls = 40, noise = 40;
  unsigned threads = 1;
};

int run_tune(TuneArgs& a, const std::vector<std::string>& argv) {
  json cfg = load_config(a.c.config);
  const auto seed = a.c.effective_seed(cfg);
  synth::CorpusSpec spec;
  if (auto c = take(cfg, "corpus"); !c.is_null()) spec = c.get<synth::CorpusSpec>();
  reject_leftovers(cfg, "tune-detector");
  spec.seed = seed;
  if (a.calls < 1 || a.noise < 1) throw ArgumentError("tune-detector: --calls and --noise must be >= 1");
  log_invocation(argv, seed, {{"budget", a.budget}, {"calls", a.calls}, {"noise", a.noise}, {"corpus", spec}});
  const auto corpus = dsp::make_tuning_corpus(a.calls, a.noise, spec);
  const auto res = dsp::tune_detector(corpus, a.budget, seed, a.threads);
  auto score = [](const dsp::TuningScore& s) {
    return json{{"hit_rate", s.hit_rate}, {"noise_rate", s.noise_rate}, {"objective", s.objective}};
  };
  write_file_atomic(a.out, json(res.best).dump(2) + "\n");
  if (!a.trials.empty()) {
    std::ostringstream log;
    learners::write_trial_log(log, res.space, res.search);
    write_file_atomic(a.trials, log.str());
  }
  print_json({{"best", res.best}, {"best_score", score(res.best_score)}, {"default_score", score(res.default_score)},
              {"trials", res.search.trials.size()}, {"out", a.out}});
  return 0;
}

// ---------------------------------------------------------------- featurize

struct FeaturizeArgs {
  Common c;
  std::string in, store, params, out, kind = "lda9";
  unsigned threads = 1;
};

int run_featurize(FeaturizeArgs& a, const std::vector<std::string>& argv) {
  json cfg = load_config(a.c.config);
  const auto seed = a.c.effective_seed(cfg);
  const auto kind = features::parse_feature_kind(a.kind);
  std::vector<features::FeatureVector> rows;
  if (kind == features::FeatureKind::embedding) {
    reject_leftovers(cfg, "featurize");
    log_invocation(argv, seed, {{"kind", a.kind}});
    if (a.in.empty()) throw ArgumentError("featurize --kind embedding: give --in <DORICHK1 or DORIEMB1 file>");
    rows = features::load_embeddings(existing_input(a.in, "embeddings"));
  } else {
    int slice_len = features::kDefaultSliceLen;
    const auto params = detector_params(a.params, cfg, &slice_len);
    reject_leftovers(cfg, "featurize");
    json resolved = {{"kind", a.kind}, {"detector", params}};
    if (kind == features::FeatureKind::lda9) resolved["slice_len"] = slice_len;
    log_invocation(argv, seed, resolved);
    const auto inputs = audio_inputs(a.in, a.store);
    std::vector<std::vector<features::FeatureVector>> per(inputs.size());
    parallel_for(inputs.size(), a.threads, [&](std::size_t k) {
      for (const auto& seg : decode_input(inputs[k])) {
        const auto regions = dsp::detect(seg, params);
        if (kind == features::FeatureKind::lda9) {
          per[k].push_back(features::lda9_features(regions, slice_len, seg.sample_id));
          continue;
        }
        // One row per contour; "<sample_id>#<k>" ties contours to their spectrogram.
        for (std::size_t r = 0; r < regions.size(); ++r)
          if (!regions[r].ridge.empty()) per[k].push_back(features::rocca_features(regions[r], seg.sample_id + "#" + std::to_string(r)));
      }
    });
    for (auto& v : per) rows.insert(rows.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  }
  features::write_feature_store(a.out, rows);
  print_json({{"kind", a.kind}, {"rows", rows.size()}, {"dim", rows.empty() ? 0 : rows.front().values.size()}, {"out", a.out}});
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common c;
  std::string features, labels, pool, model = "logreg", out, scores;
  double lambda = 1e-4;
  int epochs = 1000, trees = 100, max_depth = 12;
  CLI::Option *lambda_o, *epochs_o, *trees_o, *depth_o;
};

/// Spectrogram id of a row: contour rows carry a "#<k>" suffix.
std::string base_id(const std::string& id) { return id.substr(0, id.rfind('#')); }

int run_train(TrainArgs& a, const std::vector<std::string>& argv) {
  json cfg = load_config(a.c.config);
  const auto seed = a.c.effective_seed(cfg);
  auto take_into = [&](const char* key, auto& target, const CLI::Option* opt) {
    const auto v = take(cfg, key);
    if (!v.is_null() && opt->count() == 0) target = v.get<std::decay_t<decltype(target)>>();
  };
  take_into("l2_lambda", a.lambda, a.lambda_o);
  take_into("max_epochs", a.epochs, a.epochs_o);
  take_into("n_trees", a.trees, a.trees_o);
  take_into("max_depth", a.max_depth, a.depth_o);
  const auto model_kind = take(cfg, "model");
  if (!model_kind.is_null()) a.model = model_kind.get<std::string>();
  reject_leftovers(cfg, "train");
  log_invocation(argv, seed,
                 {{"model", a.model}, {"l2_lambda", a.lambda}, {"max_epochs", a.epochs}, {"n_trees", a.trees}, {"max_depth", a.max_depth}});

  const auto rows = features::load_embeddings(existing_input(a.features, "features"));
  if (rows.empty()) throw DataError("train: feature file has no rows");
  std::map<std::string, std::string> label_of;
  if (!a.labels.empty()) {
    for (const auto& [id, l] : keyed_column(read_table(a.labels, "labels"), "label", "labels"))
      if (!is_missing(l)) label_of[id] = l;
  } else if (!a.pool.empty()) {
    for (const auto& r : al::read_pool(existing_input(a.pool, "pool")))
      if (r.labeled()) label_of[r.feature_ref.empty() ? r.sample_id : r.feature_ref] = r.is_positive() ? "positive" : "negative";
  } else {
    throw ArgumentError("train: give --labels <csv> or --pool <jsonl>");
  }

  std::vector<std::size_t> used;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto it = label_of.find(base_id(rows[i].sample_id));
    if (it == label_of.end()) continue;
    used.push_back(i);
    names.push_back(it->second);
  }
  if (used.empty()) throw DataError("train: no feature row has a label");
  bool binary = true;
  for (const auto& n : names) binary = binary && binary_label(n).has_value();
  std::vector<std::string> classes{"negative", "positive"};
  if (!binary) {
    const std::set<std::string> distinct(names.begin(), names.end());
    classes.assign(distinct.begin(), distinct.end());
  }
  std::vector<int> y;
  for (const auto& n : names)
    y.push_back(binary ? *binary_label(n) : static_cast<int>(std::find(classes.begin(), classes.end(), n) - classes.begin()));
  learners::Matrix X(static_cast<Eigen::Index>(used.size()), static_cast<Eigen::Index>(rows.front().values.size()));
  for (std::size_t r = 0; r < used.size(); ++r) X.row(static_cast<Eigen::Index>(r)) = learners::to_vector(rows[used[r]].values).transpose();

  json model_json;
  std::function<double(const learners::Vector&)> positive_score;
  std::function<std::string(const learners::Vector&)> predicted;
  if (a.model == "logreg" || a.model == "lda") {
    learners::LinearModel m;
    if (a.model == "logreg") {
      learners::LogregOptions opt;
      opt.l2_lambda = a.lambda;
      opt.max_epochs = a.epochs;
      m = learners::train_logreg(X, y, classes, opt);
    } else {
      if (!binary) throw ArgumentError("train: lda is binary only");
      m = learners::train_lda(X, y);
    }
    m.feature_kind = rows.front().kind;
    model_json = learners::model_to_json(m);
    positive_score = [m](const learners::Vector& x) { return m.binary() ? learners::predict_proba(m, x)[1] : std::nan(""); };
    predicted = [m](const learners::Vector& x) { return m.classes[learners::predict_class(m, x)]; };
  } else if (a.model == "forest") {
    learners::ForestOptions opt;
    opt.n_trees = a.trees;
    opt.max_depth = a.max_depth;
    opt.seed = seed;
    auto m = learners::train_forest(X, y, classes, opt);
    m.feature_kind = rows.front().kind;
    model_json = learners::forest_to_json(m);
    positive_score = [m](const learners::Vector& x) { return m.classes.size() == 2 ? learners::predict_proba(m, x)[1] : std::nan(""); };
    predicted = [m](const learners::Vector& x) { return m.classes[static_cast<std::size_t>(learners::predict_forest(m, x))]; };
  } else {
    throw ArgumentError("train: --model must be logreg, lda or forest");
  }
  write_file_atomic(a.out, model_json.dump(1) + "\n");

  if (!a.scores.empty()) {
    // Contour-level forest scores also get a per-spectrogram majority vote.
    std::string text = "sample_id,score,label\n";
    std::map<std::string, std::vector<int>> votes;
    for (const auto& r : rows) {
      const auto x = learners::to_vector(r.values);
      const double s = positive_score(x);
      const auto label = predicted(x);
      text += csv::join({r.sample_id, std::isnan(s) ? std::string("NA") : csv::number(s), label}) + "\n";
      if (r.sample_id.find('#') != std::string::npos && binary) votes[base_id(r.sample_id)].push_back(label == "positive");
    }
    write_file_atomic(a.scores, text);
    if (!votes.empty()) {
      std::string vt = "sample_id,label,votes_positive,votes_negative\n";
      for (const auto& [id, v] : votes) {
        const auto vote = learners::majority_vote(v);
        vt += csv::join({id, vote.label ? "positive" : "negative", std::to_string(vote.votes_positive),
                         std::to_string(vote.votes_negative)}) + "\n";
      }
      write_file_atomic(fs::path(a.scores).replace_extension(".votes.csv"), vt);
    }
  }
  std::map<std::string, int> counts;
  for (const auto& n : names) counts[binary ? classes[static_cast<std::size_t>(*binary_label(n))] : n]++;
  print_json({{"model", a.model}, {"rows", used.size()}, {"classes", classes}, {"class_counts", counts}, {"out", a.out}});
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  Common c;
  std::string pool, features, truth, out, seeds;
  bool synthetic = false, snapshots = false;
  unsigned threads = 1;
};

int run_simulate(SimulateArgs& a, const std::vector<std::string>& argv) {
  json cfg = load_config(a.c.config);
  const auto seed = a.c.effective_seed(cfg);
  json synth_cfg = take(cfg, "synthetic");
  auto al_cfg = al::config_from_json(cfg);
  if (!a.seeds.empty()) {
    al_cfg.seeds.clear();
    std::stringstream ss(a.seeds);
    for (std::string tok; std::getline(ss, tok, ',');) al_cfg.seeds.push_back(std::stoull(tok));
  }
  std::vector<al::SampleRecord> pool;
  std::vector<features::FeatureVector> fv;
  std::vector<int> truth;
  json resolved = {{"al", al::config_to_json(al_cfg)}};
  if (a.synthetic || !synth_cfg.is_null()) {
    auto spec = al::synthetic_spec_from_json(synth_cfg.is_null() ? json::object() : synth_cfg);
    spec.seed = seed;
    resolved["synthetic"] = {{"n", spec.n}, {"positive_fraction", spec.positive_fraction}, {"dim", spec.dim}, {"seed", spec.seed}};
    log_invocation(argv, seed, resolved);
    auto P = al::make_synthetic_pool(spec, al_cfg.split);
    pool = std::move(P.pool);
    fv = std::move(P.features);
    truth = std::move(P.truth);
  } else {
    if (a.pool.empty() || a.features.empty() || a.truth.empty())
      throw ArgumentError("simulate: give --pool, --features and --truth, or --synthetic");
    log_invocation(argv, seed, resolved);
    pool = al::read_pool(existing_input(a.pool, "pool"), al_cfg.split);
    fv = features::load_embeddings(existing_input(a.features, "features"));
    const auto t = keyed_column(read_table(a.truth, "truth"), "label", "truth");
    for (const auto& r : pool) {
      const auto it = t.find(r.sample_id);
      if (it == t.end()) throw DataError("simulate: no oracle label for '" + r.sample_id + "'");
      const auto l = binary_label(it->second);
      if (!l) throw DataError("simulate: oracle label for '" + r.sample_id + "' must be binary");
      truth.push_back(*l);
    }
  }
  const fs::path out(a.out);
  fs::create_directories(out);
  al::SimulationOptions opt;
  opt.threads = a.threads;
  if (a.snapshots) {
    opt.snapshot_dir = out / "snapshots";
    fs::create_directories(opt.snapshot_dir);
  }
  const auto res = al::run_simulation(al_cfg, pool, fv, truth, opt);
  write_file_atomic(out / "history.csv", al::history_csv(res));
  const auto summary = al::summary_json(res);
  write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
  write_file_atomic(out / "config.json", resolved.dump(2) + "\n");
  print_json(summary);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  Common c;
  std::string preds, truth, metric, mapping, out;
  double target = 0.95;
  double dataset_rate = -1.0;
};

std::vector<metrics::MetricsRow> evaluate(const EvalArgs& a, const std::string& metric) {
  const auto truth_tbl = read_table(a.truth, "truth");
  if (metric == "positivity_rate") {
    const auto labels = keyed_column(truth_tbl, "label", "truth");
    std::vector<std::optional<int>> v;
    for (const auto& [id, l] : labels) {
      if (is_missing(l)) {
        v.emplace_back();
        continue;
      }
      const auto b = binary_label(l);
      if (!b) throw DataError("positivity_rate: label of '" + id + "' must be binary");
      v.emplace_back(*b);
    }
    std::optional<double> rate;
    if (a.dataset_rate >= 0.0) rate = a.dataset_rate;
    return {metrics::positivity_rate(v, rate)};
  }
  if (a.preds.empty()) throw ArgumentError("eval: --preds is required for " + metric);
  const auto preds_tbl = read_table(a.preds, "preds");
  const auto truth = keyed_column(truth_tbl, "label", "truth");
  const bool scored = metric == "spec_at_sens";
  const auto preds = keyed_column(preds_tbl, scored ? "score" : "label", "preds");
  std::vector<std::string> ids;
  for (const auto& [id, _] : preds) {
    const auto it = truth.find(id);
    if (it == truth.end()) throw DataError("eval: no truth for '" + id + "'");
    if (!is_missing(it->second)) ids.push_back(id);
  }
  if (scored) {
    std::vector<double> s;
    std::vector<int> y;
    for (const auto& id : ids) {
      const auto l = binary_label(truth.at(id));
      if (!l) throw DataError("spec_at_sens: truth label of '" + id + "' must be binary");
      s.push_back(parse_number(preds.at(id), "preds score of '" + id + "'"));
      y.push_back(*l);
    }
    auto r = metrics::spec_at_sens(s, y, a.target);
    r.row.params["threshold"] = r.threshold;
    r.row.params["sensitivity"] = r.sensitivity;
    return {r.row};
  }
  std::vector<std::string> p, t;
  for (const auto& id : ids) {
    p.push_back(preds.at(id));
    t.push_back(truth.at(id));
  }
  if (metric == "cohens_kappa") return {metrics::cohens_kappa(p, t)};
  if (metric == "mapped_top1" || metric == "top1") {
    std::map<std::string, std::string> mapping;
    if (!a.mapping.empty()) {
      const auto j = load_config(a.mapping);
      for (const auto& [k, v] : j.items()) mapping[k] = v.is_null() ? std::string(metrics::kUnmapped) : v.get<std::string>();
    } else {
      mapping = metrics::identity_mapping(std::vector<std::string>(p.begin(), p.end()));
    }
    return {metrics::mapped_top1(p, t, mapping)};
  }
  throw ArgumentError("eval: unknown metric '" + metric + "' (spec_at_sens, cohens_kappa, mapped_top1, positivity_rate)");
}

int run_eval(EvalArgs& a, const std::vector<std::string>& argv) {
  json cfg = load_config(a.c.config);
  const auto seed = a.c.effective_seed(cfg);
  const auto t = take(cfg, "sensitivity_target");
  if (!t.is_null()) a.target = t.get<double>();
  reject_leftovers(cfg, "eval");
  log_invocation(argv, seed, {{"metric", a.metric}, {"sensitivity_target", a.target}});
  std::vector<metrics::MetricsRow> rows;
  std::stringstream ss(a.metric);
  for (std::string m; std::getline(ss, m, ',');)
    for (auto& r : evaluate(a, m)) rows.push_back(std::move(r));
  std::ostringstream os;
  metrics::write_metrics_csv(os, rows);
  if (a.out.empty())
    std::cout << os.str();
  else
    write_file_atomic(a.out, os.str());
  return 0;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  Common c;
  std::string pool, features, host = "127.0.0.1", state_dir, audio_dir, store;
  int port = 8080;
  double lease_minutes = 30.0;
  CLI::Option* lease_o;
};

volatile std::sig_atomic_t g_stop = 0;

int run_serve(ServeArgs& a, const std::vector<std::string>& argv) {
  json cfg = load_config(a.c.config);
  const auto seed = a.c.effective_seed(cfg);
  service::ServiceOptions opt;
  const auto vocab = take(cfg, "vocabulary");
  if (!vocab.is_null()) opt.vocabulary = service::vocabulary_from_json(vocab);
  const auto lease = take(cfg, "lease_minutes");
  if (!lease.is_null() && a.lease_o->count() == 0) a.lease_minutes = lease.get<double>();
  if (!(a.lease_minutes > 0.0)) throw ArgumentError("serve: lease must be positive");
  opt.al = al::config_from_json(cfg);
  opt.seed = seed;
  opt.state_dir = a.state_dir;
  opt.lease = std::chrono::milliseconds(static_cast<long long>(a.lease_minutes * 60000.0));
  if (!a.store.empty()) {
    std::map<std::string, fs::path> files;
    const auto dir = existing_input(a.store, "store");
    for (const auto& [id, e] : manifest::read_store_index(dir)) files[id] = manifest::stored_audio_path(dir, e);
    opt.audio = service::mapped_audio_source(std::move(files));
  } else if (!a.audio_dir.empty()) {
    opt.audio = service::directory_audio_source(existing_input(a.audio_dir, "audio directory"));
  }
  log_invocation(argv, seed, {{"al", al::config_to_json(opt.al)}, {"lease_minutes", a.lease_minutes}, {"state_dir", a.state_dir}});

  auto pool = al::read_pool(existing_input(a.pool, "pool"), opt.al.split);
  auto fv = features::load_embeddings(existing_input(a.features, "features"));
  service::CurationService svc(std::move(pool), std::move(fv), opt);
  if (!svc.start()) throw DataError("serve: " + svc.start_error());

  httplib::Server server;
  service::mount_routes(server, svc);
  int port = a.port;
  if (port == 0) {
    port = server.bind_to_any_port(a.host);
  } else if (!server.bind_to_port(a.host, port)) {
    port = -1;
  }
  if (port < 0) throw DataError("serve: cannot bind " + a.host + ":" + std::to_string(a.port));
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  std::thread watcher([&] {
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  });
  std::cout << json{{"listening", a.host + ":" + std::to_string(port)}, {"run_id", svc.run_id()}, {"iteration", svc.iteration()}}.dump()
            << std::endl;
  server.listen_after_bind();
  g_stop = 1;
  watcher.join();
  svc.drain();
  std::cerr << "[pam-curator] serve stopped at iteration " << svc.iteration() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"pam-curator: passive acoustic monitoring curation engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pam-curator 1.0.0");

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Write a deterministic synthetic corpus (audio + manifest, or feature pool)");
  add_common(s_synth, synth.c);
  s_synth->add_option("--out", synth.out, "Output directory")->required();
  s_synth->add_option("--kind", synth.kind, "audio | features")->capture_default_str();
  synth.count_o = s_synth->add_option("--count", synth.count, "Number of files (audio) or samples (features)");
  synth.pf_o = s_synth->add_option("--positive-fraction", synth.positive_fraction, "Share of positives");
  synth.snr_min_o = s_synth->add_option("--snr-min", synth.snr_min, "Lowest call SNR in dB (audio)");
  synth.snr_max_o = s_synth->add_option("--snr-max", synth.snr_max, "Highest call SNR in dB (audio)");
  synth.seconds_o = s_synth->add_option("--seconds", synth.seconds, "File length in seconds (audio)");
  synth.pulsed_o = s_synth->add_option("--pulsed-fraction", synth.pulsed_fraction, "Share of positives that are pulsed calls (audio)");
  synth.dim_o = s_synth->add_option("--dim", synth.dim, "Embedding dimension (features)");
  s_synth->add_flag("--label-holdout", synth.label_holdout, "Label every val/test sample from the oracle (features)");
  s_synth->add_option("--seed-positives", synth.seed_positives, "Train positives given as seed labels (features)");

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Fetch and verify manifest entries into a content-addressed store");
  add_common(s_ingest, ingest.c);
  s_ingest->add_option("--manifest", ingest.manifest, "Manifest (JSON lines)")->required();
  s_ingest->add_option("--out", ingest.out, "Store directory (default $PAM_CACHE_DIR/store)");
  ingest.conc_o = s_ingest->add_option("--concurrency", ingest.concurrency, "Parallel fetches")->capture_default_str();

  DetectArgs detect;
  auto* s_detect = app.add_subcommand("detect", "Find whistle and moan regions; writes one JSON line per region");
  add_common(s_detect, detect.c);
  s_detect->add_option("--in", detect.in, "Audio file or directory");
  s_detect->add_option("--store", detect.store, "Ingested store (sample ids from its index)");
  s_detect->add_option("--params", detect.params, "Detector parameters: JSON file or inline object");
  s_detect->add_option("--out", detect.out, "Region JSON lines")->required();
  s_detect->add_option("--threads", detect.threads, "Files processed in parallel")->capture_default_str();

  TuneArgs tune;
  auto* s_tune = app.add_subcommand("tune-detector", "Random search of detector parameters on a synthetic chirp/noise corpus");
  add_common(s_tune, tune.c);
  s_tune->add_option("--out", tune.out, "Best parameters (JSON, usable as detect --params)")->required();
  s_tune->add_option("--trials", tune.trials, "Per-trial CSV log");
  s_tune->add_option("--budget", tune.budget, "Number of trials")->capture_default_str();
  s_tune->add_option("--calls", tune.calls, "Chirp files in the tuning corpus")->capture_default_str();
  s_tune->add_option("--noise", tune.noise, "Noise-only files in the tuning corpus")->capture_default_str();
  s_tune->add_option("--threads", tune.threads, "Trials evaluated in parallel")->capture_default_str();

  FeaturizeArgs feat;
  auto* s_feat = app.add_subcommand("featurize", "Compute lda9 / rocca vectors from audio, or pool chunk embeddings");
  add_common(s_feat, feat.c);
  s_feat->add_option("--kind", feat.kind, "lda9 | rocca | embedding")->capture_default_str();
  s_feat->add_option("--in", feat.in, "Audio file or directory; for embedding a DORICHK1/DORIEMB1 file");
  s_feat->add_option("--store", feat.store, "Ingested store");
  s_feat->add_option("--params", feat.params, "Detector parameters (plus slice_len): JSON file or inline object");
  s_feat->add_option("--out", feat.out, "Feature store (DORIEMB1 + sidecar)")->required();
  s_feat->add_option("--threads", feat.threads, "Files processed in parallel")->capture_default_str();

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "Train a logreg, lda or forest model on labeled feature rows");
  add_common(s_train, train.c);
  s_train->add_option("--features", train.features, "Feature store")->required();
  s_train->add_option("--labels", train.labels, "CSV with sample_id,label");
  s_train->add_option("--pool", train.pool, "Pool JSON lines; labeled records are used");
  s_train->add_option("--model", train.model, "logreg | lda | forest")->capture_default_str();
  s_train->add_option("--out", train.out, "Model JSON")->required();
  s_train->add_option("--scores", train.scores, "Write sample_id,score,label for every feature row");
  train.lambda_o = s_train->add_option("--lambda", train.lambda, "L2 penalty (logreg)")->capture_default_str();
  train.epochs_o = s_train->add_option("--epochs", train.epochs, "Epoch cap (logreg)")->capture_default_str();
  train.trees_o = s_train->add_option("--trees", train.trees, "Trees (forest)")->capture_default_str();
  train.depth_o = s_train->add_option("--max-depth", train.max_depth, "Depth cap (forest)")->capture_default_str();

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Oracle-labelled active-learning simulation; writes history.csv");
  add_common(s_sim, sim.c);
  s_sim->add_option("--pool", sim.pool, "Pool JSON lines");
  s_sim->add_option("--features", sim.features, "Feature store");
  s_sim->add_option("--truth", sim.truth, "CSV with sample_id,label oracle labels");
  s_sim->add_flag("--synthetic", sim.synthetic, "Generate the pool (config key \"synthetic\" sets its shape; --seed its seed)");
  s_sim->add_option("--seeds", sim.seeds, "Comma-separated AL seeds (overrides the config)");
  s_sim->add_option("--out", sim.out, "Output directory")->required();
  s_sim->add_flag("--snapshots", sim.snapshots, "Write per-iteration pool snapshots");
  s_sim->add_option("--threads", sim.threads, "Seeds run in parallel")->capture_default_str();

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("eval", "Evaluate predictions; prints a MetricsRow CSV");
  add_common(s_eval, eval.c);
  s_eval->add_option("--preds", eval.preds, "CSV with sample_id and score (spec_at_sens) or label");
  s_eval->add_option("--truth", eval.truth, "CSV with sample_id,label")->required();
  s_eval->add_option("--metric", eval.metric, "spec_at_sens, cohens_kappa, mapped_top1, positivity_rate (comma list)")->required();
  s_eval->add_option("--mapping", eval.mapping, "Train-to-test class map: JSON file or inline object");
  s_eval->add_option("--target", eval.target, "Sensitivity target")->capture_default_str();
  s_eval->add_option("--dataset-rate", eval.dataset_rate, "Dataset-wide positivity attached to positivity_rate");
  s_eval->add_option("--out", eval.out, "Output CSV (default stdout)");

  ServeArgs serve;
  auto* s_serve = app.add_subcommand("serve", "Run the labeling service over HTTP");
  add_common(s_serve, serve.c);
  s_serve->add_option("--pool", serve.pool, "Pool JSON lines")->required();
  s_serve->add_option("--features", serve.features, "Feature store")->required();
  s_serve->add_option("--port", serve.port, "TCP port; 0 picks a free one")->capture_default_str();
  s_serve->add_option("--host", serve.host, "Bind address")->capture_default_str();
  s_serve->add_option("--state-dir", serve.state_dir, "Run state and write-ahead log (restart resumes)");
  s_serve->add_option("--audio-dir", serve.audio_dir, "Directory with <sample_id>.wav|.flac");
  s_serve->add_option("--store", serve.store, "Ingested store used as the audio source");
  serve.lease_o = s_serve->add_option("--lease-minutes", serve.lease_minutes, "Task lease")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (s_synth->parsed()) return run_synth(synth, args);
    if (s_ingest->parsed()) return run_ingest(ingest, args);
    if (s_detect->parsed()) return run_detect(detect, args);
    if (s_tune->parsed()) return run_tune(tune, args);
    if (s_feat->parsed()) return run_featurize(feat, args);
    if (s_train->parsed()) return run_train(train, args);
    if (s_sim->parsed()) return run_simulate(sim, args);
    if (s_eval->parsed()) return run_eval(eval, args);
    if (s_serve->parsed()) return run_serve(serve, args);
  } catch (const Error& e) {
    std::cerr << "pam-curator: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "pam-curator: invalid JSON setting: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pam-curator: internal error: " << e.what() << '\n';
    return 4;
  }
  return 4;
}
