// Acceptance gate: ten end-to-end checks, one PASS/FAIL line each.
//
// Every numeric threshold is pinned here, next to the check it gates. The
// exit status is 0 only when all ten lines read PASS (and each timed check
// finishes inside its budget).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "linkforge/commands.hpp"
#include "linkforge/corpus.hpp"
#include "linkforge/crf.hpp"
#include "linkforge/evalkit.hpp"
#include "linkforge/linker.hpp"
#include "linkforge/textrep.hpp"
#include "support/oracles.hpp"
#include "support/synthcourse.hpp"

namespace fs = std::filesystem;
using namespace linkforge;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Swaps std::cout out while a command-layer call runs, so the gate's own
// output stays one line per criterion.
struct CoutSilencer {
  std::ostringstream sink;
  std::streambuf* old = std::cout.rdbuf(sink.rdbuf());
  ~CoutSilencer() { std::cout.rdbuf(old); }
};

using oracle::random_instance;
using oracle::random_model;

// ---------------------------------------------------------------------------
// Criterion 1: forward-backward and Viterbi against exhaustive enumeration
// ---------------------------------------------------------------------------

Outcome criterion1() {
  std::mt19937_64 rng(20260816);
  const int kRuns = 200;
  const double kTol = 1e-9;
  double worst_logz = 0, worst_marginal = 0;
  int viterbi_hits = 0, monotone_hits = 0;
  for (int i = 0; i < kRuns; ++i) {
    const int L = 2 + static_cast<int>(rng() % 3);  // 2..4 labels
    const int T = 1 + static_cast<int>(rng() % 6);  // 1..6 positions
    auto m = random_model(rng, 1 + static_cast<int>(rng() % 3), static_cast<int>(rng() % 3), L);
    auto x = random_instance(rng, m, T, false);

    auto bf = oracle::brute_force_chain(m, x);
    auto post = crf::forward_backward(m, x);
    worst_logz = std::max(worst_logz, std::abs(post.log_z - bf.log_z));
    for (size_t k = 0; k < bf.marginal.size(); ++k)
      worst_marginal = std::max(worst_marginal, std::abs(post.marginal[k] - bf.marginal[k]));
    for (size_t k = 0; k < bf.pair_marginal.size(); ++k)
      worst_marginal =
          std::max(worst_marginal, std::abs(post.pair_marginal[k] - bf.pair_marginal[k]));

    viterbi_hits += crf::viterbi(m, x) == bf.best_path;
    auto bf_mono = oracle::brute_force_chain(m, x, true);
    monotone_hits +=
        crf::viterbi(m, x, crf::DecodeConstraint::monotone_non_decreasing) == bf_mono.best_path;
  }

  // Degenerate all-tie instance: zero weights make every sequence score 0, so
  // the decoder must return the lexicographically smallest allowed path.
  crf::Model m0 = random_model(rng, 1, 1, 3);
  m0.theta = {0.0, 0.0};
  crf::ChainInstance x0;
  x0.length = 4;
  x0.num_labels = 3;
  x0.allowed = {0, 1, 1};
  x0.emission.assign(1, std::vector<double>(12, 0.25));
  x0.transition.resize(1);
  const bool tie_ok = crf::viterbi(m0, x0) == std::vector<int>(4, 1);

  const bool pass = worst_logz <= kTol && worst_marginal <= kTol && viterbi_hits == kRuns &&
                    monotone_hits == kRuns && tie_ok;
  std::string detail = "max |logZ err| " + num(worst_logz) + ", max |marginal err| " +
                       num(worst_marginal) + " (tol 1e-9); Viterbi " +
                       std::to_string(viterbi_hits) + "/" + std::to_string(kRuns) +
                       ", monotone " + std::to_string(monotone_hits) + "/" +
                       std::to_string(kRuns) + ", tie-break " + (tie_ok ? "ok" : "WRONG");
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// Criterion 2: analytic gradients against central finite differences
// ---------------------------------------------------------------------------

Outcome criterion2() {
  std::mt19937_64 rng(77);
  const double kEps = 1e-5, kTol = 1e-4, kFloor = 1e-5;

  double worst_chain = 0;
  for (int d = 0; d < 20; ++d) {
    const int L = 2 + static_cast<int>(rng() % 2);
    auto m = random_model(rng, 1 + static_cast<int>(rng() % 3), static_cast<int>(rng() % 3), L);
    std::vector<crf::ChainInstance> data;
    for (int i = 0; i < 3; ++i)
      data.push_back(random_instance(rng, m, 2 + static_cast<int>(rng() % 4), true));
    const double l2 = d % 3 == 0 ? 0.0 : (d % 3 == 1 ? 0.5 : 2.0);

    auto obj = crf::log_likelihood_and_gradient(m, data, l2, 1);
    auto f = [&](const std::vector<double>& theta) {
      crf::Model probe = m;
      probe.theta = theta;
      return crf::log_likelihood_and_gradient(probe, data, l2, 1).value;
    };
    auto fd = oracle::central_differences(f, m.theta, kEps);
    worst_chain = std::max(worst_chain, oracle::max_relative_error(obj.gradient, fd, kFloor));
  }

  double worst_cbow = 0;
  for (int d = 0; d < 20; ++d) {
    textrep::CbowConfig cfg;
    cfg.dim = 2 + static_cast<int>(rng() % 3);
    cfg.window = 1 + static_cast<int>(rng() % 2);
    cfg.seed = rng();
    const int vocab = 4 + static_cast<int>(rng() % 4);
    auto model = textrep::cbow_init(vocab, cfg);

    std::vector<int> doc(3 + rng() % 4);
    for (auto& w : doc) w = static_cast<int>(rng() % static_cast<std::uint64_t>(vocab));
    const int center = static_cast<int>(rng() % doc.size());

    auto grad = textrep::cbow_loss_and_gradient(model, doc, center);
    std::vector<double> analytic = grad.d_w1;
    analytic.insert(analytic.end(), grad.d_w2.begin(), grad.d_w2.end());
    std::vector<double> packed = model.w1;
    packed.insert(packed.end(), model.w2.begin(), model.w2.end());

    auto f = [&](const std::vector<double>& w) {
      textrep::CbowModel probe = model;
      std::copy(w.begin(), w.begin() + static_cast<long>(model.w1.size()), probe.w1.begin());
      std::copy(w.begin() + static_cast<long>(model.w1.size()), w.end(), probe.w2.begin());
      return textrep::cbow_loss_and_gradient(probe, doc, center).loss;
    };
    auto fd = oracle::central_differences(f, packed, kEps);
    worst_cbow = std::max(worst_cbow, oracle::max_relative_error(analytic, fd, kFloor));
  }

  const bool pass = worst_chain <= kTol && worst_cbow <= kTol;
  return {pass, "chain max rel err " + num(worst_chain) + ", context-predictor max rel err " +
                    num(worst_cbow) + " (eps 1e-5, tol 1e-4, 20 datasets each)"};
}

// ---------------------------------------------------------------------------
// Criterion 3: alignment accuracy and margin over the logistic baseline
// ---------------------------------------------------------------------------

Outcome criterion3() {
  linker::FeatureSuite chain_suite;  // lexical + transition
  linker::FeatureSuite logistic_suite;
  logistic_suite.transition = false;
  const std::vector<evalkit::SuiteSpec> suites{{"chain", chain_suite},
                                               {"logistic", logistic_suite}};
  const int kSeeds = 10;
  int wins = 0;
  double reference_accuracy = 0, accuracy_sum = 0, min_margin = 1e9;
  std::string margin_list;
  for (int s = 0; s < kSeeds; ++s) {
    synthcourse::AlignSpec spec;
    spec.tokens_per_sentence = 3;  // sparse lexical evidence: transitions must earn their keep
    spec.seed = 1000 + static_cast<std::uint64_t>(s);
    auto bundle = synthcourse::make_align_bundle(spec);

    evalkit::CrossvalConfig cfg;
    cfg.seed = spec.seed;
    cfg.k_grid = {0};  // both suites see only their own sentence; the ablation is transitions
    cfg.train.max_iters = 300;
    auto rep = evalkit::run_crossval(bundle, suites, cfg, {"alignment"});
    const double chain_acc = rep.rows[0].mean_accuracy;
    const double margin = rep.rows[0].mean_f1 - rep.rows[1].mean_f1;
    if (s == 0) reference_accuracy = chain_acc;
    accuracy_sum += chain_acc;
    min_margin = std::min(min_margin, margin);
    wins += margin >= 0.03;
    if (!margin_list.empty()) margin_list += ' ';
    margin_list += num(margin * 100);
  }
  const bool pass = reference_accuracy >= 0.95 && wins >= 9;
  return {pass, "chain accuracy " + num(reference_accuracy) + " on the reference bundle (need >= 0.95, mean over seeds " +
                    num(accuracy_sum / kSeeds) + "); margin >= 3 points on " +
                    std::to_string(wins) + "/" + std::to_string(kSeeds) +
                    " seeds (need >= 9; per-seed points: " + margin_list + ")"};
}

// ---------------------------------------------------------------------------
// Criterion 4: boundary-label expand/collapse round-trip
// ---------------------------------------------------------------------------

Outcome criterion4() {
  using linker::collapse_boundary_labels;
  using linker::expand_boundary_labels;
  using Seq = std::vector<std::string>;

  const std::vector<std::pair<Seq, Seq>> worked = {
      {{"1", "1", "2", "2"}, {"1", "1", "bnd", "2"}},
      {{"Y", "N", "N", "Y"}, {"Y", "bnd", "N", "bnd"}},
      {{"1"}, {"1"}},
      {{"1", "2", "2"}, {"1", "bnd", "2"}},
  };
  for (const auto& [base, want] : worked)
    if (expand_boundary_labels(base) != want) return {false, "worked example expands wrongly"};

  std::mt19937_64 rng(4);
  const Seq alphabet{"1", "2", "3", "4"};
  const int kRuns = 10000;
  int ok = 0;
  for (int i = 0; i < kRuns; ++i) {
    // Run-structured sequence: the first run may be any length, later runs
    // need >= 2 positions (a single boundary mark must not swallow a whole
    // run), adjacent runs differ.
    Seq base;
    const int runs = 1 + static_cast<int>(rng() % 5);
    size_t label = rng() % alphabet.size();
    for (int r = 0; r < runs; ++r) {
      const int len = (r == 0 ? 1 : 2) + static_cast<int>(rng() % 3);
      for (int j = 0; j < len; ++j) base.push_back(alphabet[label]);
      label = (label + 1 + rng() % (alphabet.size() - 1)) % alphabet.size();
    }
    const auto extended = expand_boundary_labels(base);
    const bool first_kept = extended[0] == base[0];
    ok += first_kept && collapse_boundary_labels(extended) == base;
  }
  return {ok == kRuns, std::to_string(ok) + "/" + std::to_string(kRuns) +
                           " round-trips on run-structured sequences (later runs >= 2); worked "
                           "examples exact"};
}

// ---------------------------------------------------------------------------
// Criterion 5: visual evidence helps on noisy transcripts
// ---------------------------------------------------------------------------

Outcome criterion5() {
  synthcourse::AlignSpec spec;
  spec.noise = 0.5;
  spec.tokens_per_sentence = 3;
  spec.seed = 501;
  spec.frames_root = fresh_dir("linkforge-accept-frames");
  auto bundle = synthcourse::make_align_bundle(spec);

  linker::FeatureSuite text_suite;  // lexical + transition
  linker::FeatureSuite visual_suite;
  visual_suite.visual = linker::VisualKind::horizontal_projection;
  visual_suite.use_boundary_label = true;

  const std::vector<evalkit::SuiteSpec> suites{{"text", text_suite},
                                               {"text+hp", visual_suite}};
  evalkit::CrossvalConfig cfg;
  cfg.seed = 501;
  cfg.train.max_iters = 300;
  auto rep = evalkit::run_crossval(bundle, suites, cfg, {"alignment"});
  const double text_acc = rep.rows[0].mean_accuracy;
  const double visual_acc = rep.rows[1].mean_accuracy;
  const double gain = visual_acc - text_acc;
  return {gain >= 0.02, "text " + num(text_acc) + ", text+projection " + num(visual_acc) +
                            ", gain " + num(gain * 100) + " points (need >= 2) at 50% token noise"};
}

// ---------------------------------------------------------------------------
// Criterion 6: agreement statistic on hand-computable fixtures
// ---------------------------------------------------------------------------

Outcome criterion6() {
  using Seq = std::vector<std::string>;
  bool ok = true;
  std::string note;

  const Seq a0{"A", "A", "B", "B"}, b0{"A", "B", "A", "B"};
  ok &= evalkit::cohen_kappa(a0, b0).kappa == 0.0;

  const Seq a1{"A", "A", "A", "B"}, b1{"A", "A", "B", "B"};
  ok &= evalkit::cohen_kappa(a1, b1).kappa == 0.5;

  const Seq two{"A", "B", "A", "C"};
  ok &= evalkit::cohen_kappa(two, two).kappa == 1.0;
  const Seq constant{"A", "A", "A"};
  ok &= evalkit::cohen_kappa(constant, constant).kappa == 1.0;  // chance agreement 1

  std::mt19937_64 rng(6);
  const char* labels[3] = {"A", "B", "C"};
  std::vector<Seq> annotators(3);
  for (auto& seq : annotators)
    for (int i = 0; i < 12; ++i) seq.push_back(labels[rng() % 3]);
  const double reference = evalkit::mean_pairwise_kappa(annotators);
  std::vector<int> perm{0, 1, 2};
  double max_dev = 0;
  do {
    const std::vector<Seq> shuffled{annotators[static_cast<size_t>(perm[0])],
                                    annotators[static_cast<size_t>(perm[1])],
                                    annotators[static_cast<size_t>(perm[2])]};
    max_dev = std::max(max_dev, std::abs(evalkit::mean_pairwise_kappa(shuffled) - reference));
  } while (std::next_permutation(perm.begin(), perm.end()));
  ok &= max_dev <= 1e-12;

  return {ok, std::string("kappa 0 and 0.5 fixtures exact; identical sequences give 1; mean over "
                          "3 annotators permutation-stable (max dev ") +
                  num(max_dev) + ")"};
}

// ---------------------------------------------------------------------------
// Criterion 7: planted links recovered; thread tags add measurable lift
// ---------------------------------------------------------------------------

Outcome criterion7() {
  synthcourse::LinkSpec spec;
  spec.seed = 7;
  auto bundle = synthcourse::make_link_bundle(spec);

  linker::FeatureSuite plain;  // lexical + transition
  linker::FeatureSuite tagged = plain;
  tagged.tagging = true;

  evalkit::CrossvalConfig cfg;
  cfg.seed = 7;
  cfg.train.max_iters = 300;

  const std::vector<evalkit::SuiteSpec> section_suites{{"plain", plain}};
  auto sections = evalkit::run_crossval(bundle, section_suites, cfg, {"links:section"});
  const double section_f1 = sections.rows[0].mean_f1;

  const std::vector<evalkit::SuiteSpec> thread_suites{{"plain", plain}, {"tagged", tagged}};
  auto threads = evalkit::run_crossval(bundle, thread_suites, cfg, {"links:thread"});
  const double thread_plain = threads.rows[0].mean_f1;
  const double thread_tagged = threads.rows[1].mean_f1;
  const double lift = thread_tagged - thread_plain;

  const bool pass = section_f1 >= 0.8 && lift >= 0.05;
  return {pass, "section F1 " + num(section_f1) + " (need >= 0.8); thread F1 " +
                    num(thread_plain) + " -> " + num(thread_tagged) + " with tags, lift " +
                    num(lift * 100) + " points (need >= 5)"};
}

// ---------------------------------------------------------------------------
// Criterion 8: constrained decoding is monotone everywhere
// ---------------------------------------------------------------------------

Outcome criterion8() {
  synthcourse::AlignSpec spec;
  spec.seed = 801;
  auto bundle = synthcourse::make_align_bundle(spec);
  auto text = linker::build_text_model(bundle, false);

  linker::FeatureSuite suite;  // lexical + transition, no boundary label
  crf::TrainConfig cfg;
  cfg.max_iters = 300;
  auto trained = linker::train_alignment(bundle, text, suite, cfg);

  bool all_monotone = true;
  int free_violations = 0, free_positions = 0;
  for (const auto& video : bundle.videos) {
    auto constrained = linker::align_video(bundle, text, trained.model, video.video_id, true);
    all_monotone &= evalkit::check_monotonic(constrained).is_monotone;
    auto unconstrained = linker::align_video(bundle, text, trained.model, video.video_id, false);
    free_violations += evalkit::check_monotonic(unconstrained).violations;
    free_positions += static_cast<int>(unconstrained.size()) - 1;
  }
  const double rate = free_positions > 0 ? double(free_violations) / free_positions : 0.0;
  return {all_monotone,
          std::string("constrained decode monotone on ") + std::to_string(bundle.videos.size()) +
              "/" + std::to_string(bundle.videos.size()) + " videos; unconstrained violation rate " +
              num(rate) + " (" + std::to_string(free_violations) + "/" +
              std::to_string(free_positions) + " adjacent pairs, reported without threshold)"};
}

// ---------------------------------------------------------------------------
// Criterion 9: n-gram retrieval equals the brute-force matcher
// ---------------------------------------------------------------------------

Outcome criterion9() {
  std::mt19937_64 rng(9);
  std::vector<std::string> vocab;
  for (int i = 0; i < 10; ++i) vocab.push_back("q" + std::to_string(i));
  const char* kinds[4] = {"video", "slide", "section", "thread"};

  const int kRuns = 50;
  int matches = 0;
  for (int i = 0; i < kRuns; ++i) {
    std::vector<textrep::SearchDoc> docs;
    const int ndocs = 4 + static_cast<int>(rng() % 8);
    for (int d = 0; d < ndocs; ++d) {
      textrep::SearchDoc doc;
      doc.kind = kinds[rng() % 4];
      doc.id = "doc" + std::to_string(d);
      const int len = 3 + static_cast<int>(rng() % 28);
      for (int t = 0; t < len; ++t) doc.stemmed.push_back(vocab[rng() % vocab.size()]);
      docs.push_back(std::move(doc));
    }
    std::string query;
    const int qlen = 1 + static_cast<int>(rng() % 6);
    for (int t = 0; t < qlen; ++t) {
      if (t) query += ' ';
      query += rng() % 5 == 0 ? std::string("zz") : vocab[rng() % vocab.size()];
    }
    const int max_n = 1 + static_cast<int>(rng() % 5);
    const int top_n = 1 + static_cast<int>(rng() % 10);

    auto got = textrep::ngram_search(docs, query, max_n, top_n);
    auto want = oracle::brute_force_search(docs, query, max_n, top_n);
    bool same = got.size() == want.size();
    for (size_t k = 0; same && k < got.size(); ++k)
      same = got[k].kind == want[k].kind && got[k].id == want[k].id &&
             got[k].score == want[k].score;
    matches += same;
  }
  return {matches == kRuns, std::to_string(matches) + "/" + std::to_string(kRuns) +
                                " random query/corpus pairs identical (ranks, ids, scores)"};
}

// ---------------------------------------------------------------------------
// Criterion 10: retraining and re-reporting are byte-identical
// ---------------------------------------------------------------------------

Outcome criterion10() {
  const fs::path fixture = fs::path(LINKFORGE_FIXTURE_DIR) / "mini6000x";
  const fs::path run_a = fresh_dir("linkforge-accept-10a");
  const fs::path run_b = fresh_dir("linkforge-accept-10b");
  const fs::path rep_a = fresh_dir("linkforge-accept-10c");
  const fs::path rep_b = fresh_dir("linkforge-accept-10d");

  commands::GlobalOpts global;
  global.bundle = fixture;
  global.seed = 5;
  commands::TrainOpts train;
  train.suite.repr_csv = "bow,embed";  // exercises the trained-embedding path too

  {
    CoutSilencer quiet;
    global.out = run_a;
    commands::cmd_train_align(global, train);
    global.out = run_b;
    commands::cmd_train_align(global, train);
  }
  const std::string model_a = slurp(run_a / "align_model.json");
  const bool model_same = !model_a.empty() && model_a == slurp(run_b / "align_model.json");
  const std::string embed_a = slurp(run_a / "align_model_embeddings.txt");
  const bool embed_same =
      !embed_a.empty() && embed_a == slurp(run_b / "align_model_embeddings.txt");

  commands::PredictOpts predict;
  predict.align_model = (run_a / "align_model.json").string();
  {
    CoutSilencer quiet;
    global.out = run_a;
    commands::cmd_predict(global, predict);
  }
  commands::ReportOpts report;
  report.tree = (run_a / "tree.json").string();
  {
    CoutSilencer quiet;
    global.out = rep_a;
    commands::cmd_report(global, report);
    global.out = rep_b;
    commands::cmd_report(global, report);
  }
  const std::string html_a = slurp(rep_a / "report.html");
  const bool html_same = !html_a.empty() && html_a == slurp(rep_b / "report.html");

  const bool pass = model_same && embed_same && html_same;
  return {pass, std::string("same-seed retrain: model ") + (model_same ? "identical" : "DIFFERS") +
                    ", embeddings " + (embed_same ? "identical" : "DIFFERS") + "; re-rendered "
                    "report " + (html_same ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* label;
    double budget_s;  // 0 = untimed
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "exact chain inference", 10.0, criterion1},
      {2, "gradients vs finite differences", 30.0, criterion2},
      {3, "alignment beats logistic baseline", 300.0, criterion3},
      {4, "boundary round-trip", 5.0, criterion4},
      {5, "visual features help", 300.0, criterion5},
      {6, "agreement fixtures", 0.0, criterion6},
      {7, "planted link recovery", 600.0, criterion7},
      {8, "monotone decoding", 0.0, criterion8},
      {9, "search vs brute force", 5.0, criterion9},
      {10, "byte-identical reruns", 0.0, criterion10},
  };

  int failures = 0;
  for (const auto& entry : entries) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = entry.fn();
    } catch (const std::exception& ex) {
      outcome = {false, std::string("exception: ") + ex.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = entry.budget_s == 0.0 || secs <= entry.budget_s;
    const bool pass = outcome.pass && in_budget;
    failures += !pass;
    std::printf("%s criterion %2d (%s): %s [%.1fs%s]\n", pass ? "PASS" : "FAIL", entry.id,
                entry.label, outcome.detail.c_str(), secs,
                in_budget ? "" : " — OVER BUDGET");
    std::fflush(stdout);
  }
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
