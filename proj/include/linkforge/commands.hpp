#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "linkforge/linker.hpp"

namespace linkforge::commands {

struct GlobalOpts {
  std::filesystem::path bundle;
  std::filesystem::path out = ".";
  std::uint64_t seed = 1;
};

// Raw CLI strings describing a feature suite.
struct SuiteOpts {
  std::string suite_csv = "lexical,transition";  // of: lexical transition visual position tagging boundary
  std::string repr_csv = "bow";                  // of: bow embed
  std::string visual = "none";                   // hsv | hp | none
  int context_k = 1;
  std::string position_sign = "verbatim";
};

// Throws UsageError on unknown tokens or inconsistent flags.
linker::FeatureSuite parse_suite(const SuiteOpts& opts);

struct TrainOpts {
  SuiteOpts suite;
  std::vector<double> l2 = {1.0};  // several values = one model file per value
  double lr = 0.5;
  int max_iters = 500;
  std::string kind = "section";  // train-link only: section | thread
};

struct PredictOpts {
  std::filesystem::path align_model;
  std::filesystem::path section_model;  // optional (empty = skip section links)
  std::filesystem::path thread_model;   // optional
  bool monotone = false;
  bool gold = false;  // pass consensus annotations through instead of decoding
};

struct CrossvalOpts {
  std::vector<SuiteOpts> suites;  // one report row per suite
  std::vector<int> k_grid;        // empty = {suite.context_k}
  std::vector<double> l2_grid = {1.0};
  double lr = 0.5;
  int max_iters = 500;
  int folds = 5;  // the protocol is 5-fold; other values are rejected
  bool monotone = false;
  std::string task;  // "" = all | alignment | links:section | links:thread
};

struct ReportOpts {
  std::filesystem::path tree;  // tree.json from `predict`
};

struct SearchOpts {
  std::string query;
  int max_n = 5;
  int top_n = 60;
};

struct KappaOpts {
  std::string task = "alignment";  // alignment | links:section | links:thread
};

int cmd_validate(const GlobalOpts& g);
int cmd_train_align(const GlobalOpts& g, const TrainOpts& opts);
int cmd_train_link(const GlobalOpts& g, const TrainOpts& opts);
int cmd_predict(const GlobalOpts& g, const PredictOpts& opts);
int cmd_crossval(const GlobalOpts& g, const CrossvalOpts& opts);
int cmd_report(const GlobalOpts& g, const ReportOpts& opts);
int cmd_search(const GlobalOpts& g, const SearchOpts& opts);
int cmd_kappa(const GlobalOpts& g, const KappaOpts& opts);

// Runs `body`, mapping the error taxonomy onto exit codes: DataError 1,
// UsageError 2, NumericError 3 (anything else 1).
int run_command(const std::function<int()>& body);

}  // namespace linkforge::commands
