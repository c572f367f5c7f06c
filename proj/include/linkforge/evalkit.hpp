#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "linkforge/common.hpp"
#include "linkforge/corpus.hpp"
#include "linkforge/crf.hpp"
#include "linkforge/linker.hpp"
#include "linkforge/textrep.hpp"

namespace linkforge::evalkit {

// ---------------------------------------------------------------------------
// Sentence-level F1
// ---------------------------------------------------------------------------

struct F1Result {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

F1Result f1_from_counts(long long tp, long long fp, long long fn);

// Each sentence carries exactly one predicted and one gold page, so fp == fn
// and F1 degenerates to per-sentence accuracy. Throws DataError when the two
// maps cover different videos or the label sequences disagree in length.
F1Result sentence_f1_alignment(const std::map<std::string, std::vector<int>>& pred,
                               const std::map<std::string, std::vector<int>>& gold);

// Expands linked vignettes to their sentence spans and micro-averages over
// (sentence, leaf) positive pairs. `pred` and `gold` must cover the same
// leaves; every linked course_order must exist in `vignettes`.
F1Result sentence_f1_links(std::span<const corpus::LinkAnnotation> pred,
                           std::span<const corpus::LinkAnnotation> gold,
                           std::span<const corpus::VideoVignette> vignettes);

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

struct FoldSplit {
  int fold_id = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> dev_ids;
  std::vector<std::string> test_ids;
};

// Seeded shuffle, round-robin into 5 batches; fold i tests on batch i and
// holds out batch (i+1) mod 5 for hyper-parameter selection. Throws DataError
// with fewer than 5 units.
std::vector<FoldSplit> make_folds(std::vector<std::string> unit_ids, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

struct KappaResult {
  double p_a = 0;
  double p_c = 0;
  double kappa = 0;
};

// Cohen's kappa with each sequence's own marginals. Chance agreement of 1 is
// reported as kappa 1 when observed agreement is also 1 and is an error
// otherwise.
KappaResult cohen_kappa(std::span<const std::string> a, std::span<const std::string> b);
KappaResult cohen_kappa(std::span<const int> a, std::span<const int> b);

// Mean Cohen's kappa over all unordered sequence pairs (>= 2 required).
double mean_pairwise_kappa(const std::vector<std::vector<std::string>>& annotator_labels);

struct TaskKappa {
  double mean = 0;
  std::vector<std::tuple<std::string, std::string, double>> pairs;  // (a, b, kappa)
};

// Agreement between alignment annotators over the videos each pair shares
// (labels concatenated in manifest video order).
TaskKappa alignment_kappa(const corpus::CourseBundle& bundle);

// Agreement between link annotators over every (leaf of `leaf_kind`, vignette)
// cell; annotators that did not mark a leaf vote the empty set.
TaskKappa link_kappa(const corpus::CourseBundle& bundle, const std::string& leaf_kind);

// ---------------------------------------------------------------------------
// Structural checks
// ---------------------------------------------------------------------------

struct MonotoneResult {
  bool is_monotone = true;
  int violations = 0;  // adjacent pairs with a decreasing page label
};

MonotoneResult check_monotonic(std::span<const int> labels);

// Distinct topic terms whose stemmed phrase occurs contiguously in the
// stemmed essay. Topic terms must come from the glossary.
int keyterm_count(const std::string& essay, std::span<const std::string> glossary,
                  std::span<const std::string> topic_terms);

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct SuiteSpec {
  std::string name;  // report row label; FeatureSuite::name() when empty
  linker::FeatureSuite suite;
};

struct CrossvalConfig {
  std::uint64_t seed = 1;
  std::vector<int> k_grid = {1};        // lexical context radius candidates
  std::vector<double> l2_grid = {1.0};  // regularization candidates
  crf::TrainConfig train;
  textrep::CbowConfig cbow;
  bool monotone = false;  // alignment decoding constraint
};

struct FoldScore {
  int fold_id = 0;
  double f1 = 0;
  double accuracy = 0;  // alignment only; 0 for link tasks
  int chosen_k = 0;
  double chosen_l2 = 0;
};

struct ReportRow {
  std::string task;  // "alignment" | "links:section" | "links:thread"
  std::string suite_name;
  std::vector<FoldScore> per_fold;
  double mean_f1 = 0;
  double mean_accuracy = 0;
};

struct EvalReport {
  std::vector<ReportRow> rows;             // task-major, suite declaration order
  std::map<std::string, double> kappa;     // task -> mean pairwise kappa
  std::map<std::string, int> monotonicity; // video -> violations (first alignment suite)
  std::uint64_t seed = 0;
};

nlohmann::json report_to_json(const EvalReport& rep);

/// Runs 5-fold CV for each applicable task and suite: hyper-parameters selected
// on the dev batch, the winner retrained on train+dev, scored on test. `tasks`
// empty means every task the bundle supports.
EvalReport run_crossval(const corpus::CourseBundle& bundle, std::span<const SuiteSpec> suites,
                        const CrossvalConfig& cfg, const std::set<std::string>& tasks = {});

}  // namespace linkforge::evalkit
