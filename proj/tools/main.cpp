// linkforge: align lecture transcripts to slides and link course vignettes to
// textbook sections and forum threads.
#include <CLI11.hpp>

#include <sstream>
#include <string>
#include <vector>

#include "linkforge/commands.hpp"

namespace {

using namespace linkforge::commands;

void add_global(CLI::App* sub, GlobalOpts& g) {
  sub->add_option("--bundle", g.bundle, "course bundle directory")->required();
  sub->add_option("--out", g.out, "output directory (default: current directory)");
  sub->add_option("--seed", g.seed, "random seed, echoed into every artifact");
}

void add_suite(CLI::App* sub, SuiteOpts& s) {
  sub->add_option("--suite", s.suite_csv,
                  "feature families, comma-separated: lexical,transition,visual,position,tagging,boundary");
  sub->add_option("--repr", s.repr_csv, "lexical representations, comma-separated: bow,embed");
  sub->add_option("--visual", s.visual, "visual descriptor: hsv | hp | none");
  sub->add_option("--context-k", s.context_k, "lexical context window size K");
  sub->add_option("--position-sign", s.position_sign, "position feature sign: verbatim | negated");
}

void add_train(CLI::App* sub, TrainOpts& t) {
  sub->add_option("--l2", t.l2, "L2 strength; several values write one model per value")
      ->delimiter(',');
  sub->add_option("--lr", t.lr, "initial gradient-ascent step size");
  sub->add_option("--max-iters", t.max_iters, "iteration cap");
}

bool has_token(const std::string& csv, const std::string& token) {
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ','))
    if (item == token) return true;
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"content linking for course materials: transcript/slide alignment "
               "and vignette linking to sections and threads"};
  app.require_subcommand(1);
  int exit_code = 0;

  GlobalOpts g_validate;
  auto* validate = app.add_subcommand("validate", "check a bundle; one JSON diagnostic per line on stderr");
  add_global(validate, g_validate);
  validate->callback([&] { exit_code = run_command([&] { return cmd_validate(g_validate); }); });

  GlobalOpts g_ta;
  TrainOpts ta;
  auto* train_align = app.add_subcommand("train-align", "train the transcript-to-slide alignment model");
  add_global(train_align, g_ta);
  add_suite(train_align, ta.suite);
  add_train(train_align, ta);
  train_align->callback([&] { exit_code = run_command([&] { return cmd_train_align(g_ta, ta); }); });

  GlobalOpts g_tl;
  TrainOpts tl;
  auto* train_link = app.add_subcommand("train-link", "train a vignette-to-leaf linking model");
  add_global(train_link, g_tl);
  add_suite(train_link, tl.suite);
  add_train(train_link, tl);
  train_link->add_option("--kind", tl.kind, "leaf kind: section | thread");
  train_link->callback([&] { exit_code = run_command([&] { return cmd_train_link(g_tl, tl); }); });

  GlobalOpts g_pr;
  PredictOpts pr;
  auto* predict = app.add_subcommand("predict", "produce predictions.json and tree.json for a bundle");
  add_global(predict, g_pr);
  predict->add_option("--align-model", pr.align_model, "trained alignment model JSON");
  predict->add_option("--section-model", pr.section_model, "trained section-linking model JSON");
  predict->add_option("--thread-model", pr.thread_model, "trained thread-linking model JSON");
  predict->add_flag("--monotone", pr.monotone, "constrain alignment decoding to non-decreasing pages");
  predict->add_flag("--gold", pr.gold, "pass consensus annotations through instead of decoding");
  predict->callback([&] { exit_code = run_command([&] { return cmd_predict(g_pr, pr); }); });

  GlobalOpts g_cv;
  CrossvalOpts cv;
  std::vector<std::string> cv_suites;
  SuiteOpts cv_shared;
  auto* crossval = app.add_subcommand("crossval", "5-fold cross-validation report over feature suites");
  add_global(crossval, g_cv);
  crossval->add_option("--suite", cv_suites, "feature families per run; repeat for several report rows");
  crossval->add_option("--repr", cv_shared.repr_csv, "lexical representations, comma-separated: bow,embed");
  crossval->add_option("--visual", cv_shared.visual, "visual descriptor for suites listing visual: hsv | hp");
  crossval->add_option("--context-k", cv_shared.context_k, "lexical context window size K");
  crossval->add_option("--position-sign", cv_shared.position_sign, "position feature sign: verbatim | negated");
  crossval->add_option("--k-grid", cv.k_grid, "context window sizes tried on the dev batch")->delimiter(',');
  crossval->add_option("--l2-grid", cv.l2_grid, "L2 strengths tried on the dev batch")->delimiter(',');
  crossval->add_option("--lr", cv.lr, "initial gradient-ascent step size");
  crossval->add_option("--max-iters", cv.max_iters, "iteration cap");
  crossval->add_option("--folds", cv.folds, "number of folds (the protocol is 5)");
  crossval->add_flag("--monotone", cv.monotone, "constrain alignment decoding to non-decreasing pages");
  crossval->add_option("--task", cv.task, "restrict to one task: alignment | links:section | links:thread");
  crossval->callback([&] {
    exit_code = run_command([&] {
      if (cv_suites.empty()) cv_suites.push_back(cv_shared.suite_csv);
      for (const std::string& csv : cv_suites) {
        SuiteOpts so = cv_shared;
        so.suite_csv = csv;
        if (!has_token(csv, "visual")) so.visual = "none";
        cv.suites.push_back(so);
      }
      return cmd_crossval(g_cv, cv);
    });
  });

  GlobalOpts g_rep;
  ReportOpts rep;
  auto* report = app.add_subcommand("report", "render tree.json as a self-contained HTML page");
  add_global(report, g_rep);
  report->add_option("--tree", rep.tree, "tree.json produced by predict")->required();
  report->callback([&] { exit_code = run_command([&] { return cmd_report(g_rep, rep); }); });

  GlobalOpts g_sr;
  SearchOpts sr;
  auto* search = app.add_subcommand("search", "rank course materials against a query");
  add_global(search, g_sr);
  search->add_option("--query", sr.query, "free-text query")->required();
  search->add_option("--max-n", sr.max_n, "longest n-gram considered");
  search->add_option("--top-n", sr.top_n, "number of results printed");
  search->callback([&] { exit_code = run_command([&] { return cmd_search(g_sr, sr); }); });

  GlobalOpts g_ka;
  KappaOpts ka;
  auto* kappa = app.add_subcommand("kappa", "inter-annotator agreement per task");
  add_global(kappa, g_ka);
  kappa->add_option("--task", ka.task, "alignment | links:section | links:thread");
  kappa->callback([&] { exit_code = run_command([&] { return cmd_kappa(g_ka, ka); }); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return exit_code;
}
