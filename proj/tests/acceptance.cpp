// pam-acceptance: runs each acceptance criterion and prints one PASS/FAIL
// line per criterion. Exit status is the number of failures (capped at 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "metric_oracles.hpp"
#include "pamcurator/al/simulation.hpp"
#include "pamcurator/al/synthetic.hpp"
#include "pamcurator/dsp/detector.hpp"
#include "pamcurator/learners/lda.hpp"
#include "pamcurator/learners/logreg.hpp"
#include "pamcurator/manifest/synth.hpp"
#include "pamcurator/metrics/metrics.hpp"
#include "pamcurator/service/service.hpp"
#include "test_support.hpp"

using namespace pam;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_s;  ///< <= 0: no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

unsigned worker_threads() { return std::max(1u, std::min(4u, std::thread::hardware_concurrency())); }

// ---------------------------------------------------------------- metrics

Outcome metric_oracles() {
  constexpr int kTrials = 1000;
  int bad_spec = 0, bad_kappa = 0, bad_top1 = 0, bad_pos = 0;
  Rng rng(101);
  std::vector<double> s;
  std::vector<int> y;
  for (int t = 0; t < kTrials; ++t) {
    test::random_scores(rng, s, y);
    const double target = t % 3 == 0 ? 0.95 : rng.uniform(0.01, 1.0);
    const auto got = metrics::spec_at_sens(s, y, target);
    const auto want = test::spec_at_sens_oracle(s, y, target);
    bad_spec += got.row.defined() != want.defined || (want.defined && (*got.row.value != want.specificity || got.threshold != want.threshold));
  }
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t n = 1 + rng.below(500);
    const int k = 1 + static_cast<int>(rng.below(5));
    const double agree = rng.uniform(0, 1);
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      b[i] = rng.bernoulli(agree) ? a[i] : static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    }
    const auto got = metrics::cohens_kappa(a, b);
    const auto want = test::kappa_oracle(a, b);
    bad_kappa += got.defined() != want.has_value() || (want && *got.value != *want);
  }
  const std::vector<std::string> train{"t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7"}, tst{"e0", "e1", "e2", "e3"};
  for (int t = 0; t < kTrials; ++t) {
    std::map<std::string, std::string> map;
    for (const auto& c : train) map[c] = rng.bernoulli(0.2) ? "unmapped" : tst[rng.below(3)];
    const std::size_t n = 1 + rng.below(500);
    std::vector<std::string> p(n), tr(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = train[rng.below(train.size())];
      tr[i] = tst[rng.below(tst.size())];
    }
    bad_top1 += *metrics::mapped_top1(p, tr, map).value != test::mapped_top1_oracle(p, tr, map);
  }
  for (int t = 0; t < kTrials; ++t) {
    std::vector<std::optional<int>> l(1 + rng.below(500));
    const double p_lab = rng.uniform(0, 1), p_pos = rng.uniform(0, 1);
    for (auto& v : l)
      if (rng.bernoulli(p_lab)) v = rng.bernoulli(p_pos) ? 1 : 0;
    const auto got = metrics::positivity_rate(l);
    const auto want = test::positivity_oracle(l);
    bad_pos += got.defined() != want.has_value() || (want && *got.value != *want);
  }
  std::ostringstream d;
  d << kTrials << " instances each; mismatches spec_at_sens " << bad_spec << ", cohens_kappa " << bad_kappa << ", mapped_top1 "
    << bad_top1 << ", positivity_rate " << bad_pos;
  return {bad_spec + bad_kappa + bad_top1 + bad_pos == 0, d.str()};
}

Outcome pu_continuity() {
  Rng rng(202);
  int bad = 0;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double V = std::exp(rng.uniform(-3, 8)), n = std::exp(rng.uniform(0, 14)), e = rng.uniform(1e-3, 1.0);
    const double hb = std::sqrt(V / (n * e));
    const auto at = metrics::pu_rate_bound(V, n, e, hb);
    const auto below = metrics::pu_rate_bound(V, n, e, std::nextafter(hb, 0.0));
    const double rel = std::abs(at.value - below.value) / below.value;
    worst = std::max(worst, rel);
    bad += at.branch != "linear" || below.branch != "sqrt" || !(rel <= 1e-12);
  }
  return {bad == 0, "1000 parameterizations, worst relative jump " + fmt("%.2e", worst) + ", failures " + std::to_string(bad)};
}

// ---------------------------------------------------------------- DSP

audio::AudioSegment seg_of(std::vector<float> x) { return audio::make_segment("s", std::move(x), audio::kCanonicalRateHz); }

Outcome dsp_suite() {
  std::vector<std::string> failures;
  // Constant and zero inputs are fixed points.
  const auto c = seg_of(std::vector<float>(20000, 0.25f));
  if (dsp::click_filter(c, 1.0, 2.0).samples != c.samples) failures.push_back("constant not preserved");
  // Huge gamma is the identity.
  {
    const auto x = test::white_noise(30000, 0.3, 11);
    const auto y = dsp::click_filter(seg_of(x), 1e9, 2.0).samples;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::abs(y[i] - x[i]) > 1e-6 * std::max(1e-30f, std::abs(x[i]))) {
        failures.push_back("huge gamma not identity");
        break;
      }
  }
  // Never amplifies, for random parameters.
  {
    Rng rng(3);
    bool ok = true;
    for (int trial = 0; trial < 50 && ok; ++trial) {
      auto x = test::white_noise(4000 + rng.below(4000), rng.uniform(0.001, 1.0), 100 + static_cast<std::uint64_t>(trial));
      for (int k = 0; k < 5; ++k) x[rng.below(x.size())] += static_cast<float>(rng.uniform(-5, 5));
      const auto y = dsp::click_filter(seg_of(x), rng.uniform(0.1, 10.0), rng.uniform(0.1, 4.0), 16 + static_cast<int>(rng.below(2000))).samples;
      for (std::size_t i = 0; i < x.size() && ok; ++i) ok = std::abs(y[i]) <= std::abs(x[i]);
    }
    if (!ok) failures.push_back("output amplitude exceeded input");
  }
  // Impulse attenuation.
  {
    auto x = test::white_noise(16384, 0.01, 7);
    for (std::size_t i = 0; i < 50; ++i) x[8000 + i] += 0.2f;
    const auto y = dsp::click_filter(seg_of(x), 1.0, 2.0, 1024).samples;
    double pin = 0, pout = 0;
    for (std::size_t i = 8000; i < 8050; ++i) {
      pin = std::max(pin, std::abs(static_cast<double>(x[i])));
      pout = std::max(pout, std::abs(static_cast<double>(y[i])));
    }
    if (pin / pout < 10.0) failures.push_back("impulse attenuation " + fmt("%.1f", pin / pout) + "x < 10x");
  }
  const dsp::DetectorParams params;
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 977);
    synth::CallSpec call;
    call.onset_s = rng.uniform(0.8, 3.5);
    const auto seg = synth::chirp_in_noise(seed, 6.0, call);
    double best = 0.0;
    for (const auto& r : dsp::detect(seg, params))
      best = std::max(best, synth::box_iou({r.t_min_s(), r.t_max_s(), r.f_min_hz(), r.f_max_hz()}, call.box()));
    hits += best >= 0.3;
  }
  int noisy = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(0xBEEF + seed);
    noisy += !dsp::detect(seg_of(synth::white_noise(6 * 32000, 0.01, rng)), params).empty();
  }
  if (hits < 20) failures.push_back("chirp hits " + std::to_string(hits) + "/20");
  if (noisy > 10) failures.push_back("noise false-region rate " + std::to_string(noisy) + "%");
  std::string d = "click filter properties " + std::string(failures.empty() ? "ok" : "checked") + "; chirp IoU>=0.3 on " +
                  std::to_string(hits) + "/20; noise segments with regions " + std::to_string(noisy) + "/100";
  for (const auto& f : failures) d += "; " + f;
  return {failures.empty(), d};
}

Outcome throughput() {
  const unsigned threads = worker_threads();
  std::vector<audio::AudioSegment> segs;
  for (std::uint64_t k = 0; k < 20; ++k) {
    Rng rng(500 + k);
    synth::CallSpec call;
    call.onset_s = rng.uniform(0.5, 3.5);
    segs.push_back(k % 2 ? synth::chirp_in_noise(500 + k, 6.0, call) : seg_of(synth::white_noise(6 * 32000, 0.01, rng)));
  }
  double audio_s = 0.0;
  for (const auto& s : segs) audio_s += s.duration_s;
  const dsp::DetectorParams params;
  const auto t0 = std::chrono::steady_clock::now();
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < segs.size();) dsp::detect(segs[i], params);
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  const double compute = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double factor = audio_s / compute;
  return {factor >= 50.0, fmt("%.0f s of 32 kHz audio", audio_s) + " in " + fmt("%.2f s", compute) + " on " + std::to_string(threads) +
                              " thread(s): " + fmt("%.0fx real time", factor) + " (floor 50x)"};
}

// ---------------------------------------------------------------- learners

Outcome learner_suite() {
  using learners::Matrix;
  using learners::Vector;
  Rng rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 10 + static_cast<int>(rng.below(50)), dim = 1 + static_cast<int>(rng.below(8));
    Matrix Z(n, dim);
    Vector yv(n), w(dim);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < dim; ++j) Z(i, j) = rng.normal(0, 2);
      yv(i) = rng.bernoulli(0.4);
    }
    for (int j = 0; j < dim; ++j) w(j) = rng.normal(0, 1);
    const double b = rng.normal(0, 1), lambda = rng.uniform(0, 0.5), h = 1e-6;
    Vector g;
    double gb;
    learners::logreg_objective(Z, yv, w, b, lambda, &g, &gb);
    for (int j = 0; j < dim; ++j) {
      Vector wp = w, wm = w;
      wp(j) += h;
      wm(j) -= h;
      const double fd = (learners::logreg_objective(Z, yv, wp, b, lambda) - learners::logreg_objective(Z, yv, wm, b, lambda)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g(j)));
    }
    const double fdb = (learners::logreg_objective(Z, yv, w, b + h, lambda) - learners::logreg_objective(Z, yv, w, b - h, lambda)) / (2 * h);
    worst = std::max(worst, std::abs(fdb - gb));
  }

  int monotone_fail = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng r(seed);
    const int n = 160, dim = 6;
    Matrix X(n, dim);
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      const int c = i % 2;
      for (int j = 0; j < dim; ++j) X(i, j) = (c ? 0.4 : -0.4) + r.normal(0, 1);
      y.push_back(c);
    }
    learners::LogregOptions opt;
    opt.l2_lambda = seed == 1 ? 0.0 : 1e-3;
    learners::LogregTrace trace;
    learners::train_logreg(X, y, opt, &trace);
    bool ok = trace.losses.size() >= 2;
    for (std::size_t i = 1; i < trace.losses.size(); ++i) ok = ok && trace.losses[i] <= trace.losses[i - 1];
    monotone_fail += !ok;
  }

  Rng lr(14);
  const int dim = 9, n = 400;
  Matrix X(2 * n, dim);
  std::vector<int> y;
  for (int i = 0; i < 2 * n; ++i) {
    const int c = i % 2;
    for (int j = 0; j < dim; ++j) X(i, j) = lr.normal(0, 1) + (j == 0 ? (c ? 1.0 : -1.0) : 0.0);
    y.push_back(c);
  }
  const Vector wl = learners::train_lda(X, y).weights.row(0).transpose();
  const double angle = std::acos(std::clamp(wl(0) / wl.norm(), -1.0, 1.0)) * 180.0 / M_PI;

  const bool pass = worst < 1e-5 && monotone_fail == 0 && angle < 5.0;
  return {pass, "gradient vs central differences max |d| " + fmt("%.2e", worst) + " (< 1e-5); non-monotone loss runs " +
                    std::to_string(monotone_fail) + "/5; LDA axis error " + fmt("%.2f deg", angle) + " (< 5)"};
}

// ---------------------------------------------------------------- active learning

al::ALConfig desk_config(al::Strategy s, double flip) {
  al::ALConfig c;
  c.strategy = s;
  c.flip_rate = flip;
  c.batch_size = 100;
  c.iteration_cap = 20;
  c.seeds = {1, 2, 3, 4, 5};
  return c;
}

double final_spec(const al::SeedRun& r) { return r.history.back().test_spec_at_95sens.value_or(0.0); }

Outcome al_desk_scale() {
  al::SyntheticPoolSpec spec;  // 10,000 vectors, 2% positives
  spec.seed = 1;
  const auto P = al::make_synthetic_pool(spec);
  al::SimulationOptions opt;
  opt.threads = worker_threads();
  auto run = [&](al::Strategy s, double flip) { return al::run_simulation(desk_config(s, flip), P.pool, P.features, P.truth, opt); };
  const auto E = run(al::Strategy::entropy, 0.0), R = run(al::Strategy::random, 0.0);
  const auto PO = run(al::Strategy::positive_only, 0.0), EN = run(al::Strategy::entropy, 0.3);
  int a = 0, b = 0;
  double mean_clean = 0.0, mean_noisy = 0.0;
  for (std::size_t k = 0; k < 5; ++k) {
    a += final_spec(E.runs[k]) - final_spec(R.runs[k]) >= 0.05;
    bool dom = PO.runs[k].history.size() == 20 && R.runs[k].history.size() == 20;
    for (std::size_t it = 1; dom && it < 20; ++it) dom = PO.runs[k].history[it].n_pos_found > R.runs[k].history[it].n_pos_found;
    b += dom;
    mean_clean += final_spec(E.runs[k]) / 5.0;
    mean_noisy += final_spec(EN.runs[k]) / 5.0;
  }
  const double degrade = mean_clean - mean_noisy;
  std::ostringstream d;
  d << "(a) entropy beats random by >= 0.05 in " << a << "/5 seeds; (b) positive_only dominates random from iteration 2 in " << b
    << "/5; (c) flip 0.3 degrades mean spec@95sens by " << fmt("%.3f", degrade) << " (<= 0.10)";
  return {a >= 4 && b >= 4 && degrade <= 0.10, d.str()};
}

Outcome replay_determinism() {
  std::vector<std::string> failures;
  al::SyntheticPoolSpec spec;
  spec.n = 2000;
  spec.dim = 16;
  spec.positive_fraction = 0.05;
  spec.seed = 7;
  const auto P = al::make_synthetic_pool(spec);
  int compared = 0, identical = 0;
  for (auto st : {al::Strategy::entropy, al::Strategy::random, al::Strategy::positive_only, al::Strategy::loss_estimate,
                  al::Strategy::alternating, al::Strategy::mixed}) {
    al::ALConfig c = desk_config(st, 0.3);
    c.batch_size = 50;
    c.iteration_cap = 4;
    c.seeds = {1, 2, 3};
    const auto first = al::history_csv(al::run_simulation(c, P.pool, P.features, P.truth));
    // Second run from the serialized config, on two threads.
    const auto again_cfg = al::config_from_json(al::config_to_json(c));
    al::SimulationOptions threaded;
    threaded.threads = 2;
    const auto second = al::history_csv(al::run_simulation(again_cfg, P.pool, P.features, P.truth, threaded));
    ++compared;
    identical += first == second;
    if (first != second) failures.push_back(std::string("history differs for ") + std::string(al::to_string(st)));
  }

  // Service: live labeling rounds, then replay of the write-ahead log.
  auto pool = P.pool;
  std::size_t seeded = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    auto& r = pool[i];
    if (r.split == al::Split::train && !(P.truth[i] && seeded < 8)) continue;
    if (r.split == al::Split::train) ++seeded;
    r.state = P.truth[i] ? al::LabelState::positive : al::LabelState::negative;
    r.source = r.split == al::Split::train ? al::LabelSource::seed : al::LabelSource::human;
    r.reviews = 1;
    r.last_annotation = P.truth[i];
  }
  std::map<std::string, int> truth;
  for (std::size_t i = 0; i < pool.size(); ++i) truth[pool[i].sample_id] = P.truth[i];
  const auto dir = std::filesystem::temp_directory_path() / "pam_acceptance_replay";
  std::filesystem::remove_all(dir);
  service::ServiceOptions so;
  so.state_dir = dir;
  so.al.batch_size = 20;
  so.al.seeds = {1};
  so.al.max_epochs = 200;
  so.al.strategy = al::Strategy::random;
  so.seed = 1;
  std::string wal, live;
  int snapshots_ok = 0, snapshots = 0;
  {
    service::CurationService svc(pool, P.features, so);
    svc.start();
    for (int round = 0; round < 3; ++round) {
      const auto tasks = svc.get_next_tasks("acceptance", 100);
      for (std::size_t k = 0; k < tasks.size(); ++k) {
        service::LabelSubmission s;
        s.task_id = tasks[k].task_id;
        s.kind = k % 7 == 3 ? service::LabelKind::skip
                            : (truth.at(tasks[k].sample_id) ? service::LabelKind::positive : service::LabelKind::negative);
        svc.submit_label(s);
      }
      svc.trigger_retrain();
      svc.drain();
    }
    live = al::pool_to_jsonl(svc.pool_snapshot());
    wal = svc.wal_text();
  }
  const auto records = service::parse_wal(wal);
  std::string prefix;
  int iteration = 0;
  for (const auto& r : records) {
    prefix += service::wal_to_json(r).dump() + "\n";
    if (r.op != "retrain") continue;
    ++iteration;
    ++snapshots;
    const auto replayed = service::replay_wal(pool, P.features, so.al, so.seed, prefix);
    snapshots_ok += al::pool_to_jsonl(replayed.state.pool) == read_file_text(dir / "snapshots" / service::snapshot_pool_name(iteration));
  }
  const auto full = service::replay_wal(pool, P.features, so.al, so.seed, wal);
  if (al::pool_to_jsonl(full.state.pool) != live) failures.push_back("full replay differs from the live pool");
  if (snapshots == 0 || snapshots_ok != snapshots) failures.push_back("snapshot mismatch");
  std::filesystem::remove_all(dir);

  std::string d = "history CSVs identical for " + std::to_string(identical) + "/" + std::to_string(compared) + " strategies; WAL replay matches " + std::to_string(snapshots_ok) + "/" +
                  std::to_string(snapshots) + " persisted pool snapshots byte for byte";
  for (const auto& f : failures) d += "; " + f;
  return {failures.empty(), d};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("pam-acceptance: acceptance criteria, one line each");
  std::vector<std::string> only;
  app.add_option("--only", only, "Run only these criteria (by name)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {"metric-oracles", 10.0, metric_oracles},
      {"dsp-suite", 120.0, dsp_suite},
      {"learner-suite", 30.0, learner_suite},
      {"al-desk-scale", 300.0, al_desk_scale},
      {"replay-determinism", 0.0, replay_determinism},
      {"detect-throughput", 0.0, throughput},
      {"pu-bound-continuity", 0.0, pu_continuity},
  };
  for (const auto& name : only)
    if (std::none_of(all.begin(), all.end(), [&](const Criterion& c) { return c.name == name; })) {
      std::cerr << "unknown criterion '" << name << "'\n";
      return 2;
    }

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1f s", secs);
    if (c.limit_s > 0) {
      timing += fmt(" of %.0f s", c.limit_s);
      if (secs >= c.limit_s) {
        o.pass = false;
        o.detail += "; over the time limit";
      }
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << " [" << timing << "]" << std::endl;
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
