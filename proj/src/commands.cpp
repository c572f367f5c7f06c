#include "linkforge/commands.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "linkforge/evalkit.hpp"
#include "linkforge/report.hpp"

namespace linkforge::commands {

namespace {

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

corpus::CourseBundle load_bundle_arg(const GlobalOpts& g) {
  if (g.bundle.empty()) throw UsageError("--bundle is required");
  return corpus::load_bundle(g.bundle);
}

crf::Model load_model_file(const std::filesystem::path& path) {
  return crf::model_from_json(load_json_file(path));
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

crf::TrainConfig train_config(const TrainOpts& opts, double l2, std::uint64_t seed) {
  crf::TrainConfig cfg;
  cfg.learning_rate = opts.lr;
  cfg.l2 = l2;
  cfg.max_iters = opts.max_iters;
  cfg.seed = seed;
  cfg.threads = thread_cap();
  return cfg;
}

// Trained embeddings ride beside the model file so prediction reuses them.
std::optional<std::string> save_model_embeddings(const linker::TextModel& text,
                                                 const linker::FeatureSuite& suite,
                                                 const std::filesystem::path& out_dir,
                                                 const std::string& file_stem) {
  if (!suite.needs_embeddings()) return std::nullopt;
  const std::string name = file_stem + "_embeddings.txt";
  std::ostringstream body;
  textrep::save_embeddings(*text.embeddings, body);
  write_text_file(out_dir / name, body.str());
  return name;
}

linker::TextModel text_model_for(const corpus::CourseBundle& bundle,
                                 const linker::FeatureSuite& suite,
                                 const textrep::CbowConfig& cbow) {
  return linker::build_text_model(bundle, suite.needs_embeddings(), cbow);
}

// Prediction-side counterpart: vocabulary from the bundle, embeddings from the
// file recorded in the model.
linker::TextModel text_model_for_predict(const corpus::CourseBundle& bundle,
                                         const std::vector<const crf::Model*>& models,
                                         const std::vector<std::filesystem::path>& model_paths) {
  linker::TextModel text = linker::build_text_model(bundle, false);
  for (size_t i = 0; i < models.size(); ++i) {
    if (!models[i]) continue;
    const linker::FeatureSuite suite = linker::model_suite(*models[i]);
    if (!suite.needs_embeddings() || text.embeddings) continue;
    if (!models[i]->config_echo.contains("embeddings"))
      throw DataError("model " + model_paths[i].string() +
                      " needs embeddings but records no embeddings file");
    const std::filesystem::path file =
        model_paths[i].parent_path() / models[i]->config_echo["embeddings"].get<std::string>();
    std::ifstream in(file);
    if (!in) throw DataError("cannot open embeddings file: " + file.string());
    text.embeddings = textrep::load_embeddings(in);
  }
  return text;
}

int train_command(const GlobalOpts& g, const TrainOpts& opts, const std::string& task) {
  const corpus::CourseBundle bundle = load_bundle_arg(g);
  linker::FeatureSuite suite = parse_suite(opts.suite);
  if (opts.l2.empty()) throw UsageError("--l2 needs at least one value");
  textrep::CbowConfig cbow;
  cbow.seed = g.seed;
  const linker::TextModel text = text_model_for(bundle, suite, cbow);

  const std::string stem = task == "alignment" ? "align_model" : "link_" + opts.kind + "_model";
  const auto embeddings_file = save_model_embeddings(text, suite, g.out, stem);

  for (const double l2 : opts.l2) {
    const crf::TrainConfig cfg = train_config(opts, l2, g.seed);
    crf::TrainResult result = task == "alignment"
                                  ? linker::train_alignment(bundle, text, suite, cfg)
                                  : linker::train_linking(bundle, text, suite, opts.kind, cfg);
    if (embeddings_file) result.model.config_echo["embeddings"] = *embeddings_file;
    const std::string name =
        opts.l2.size() == 1 ? stem + ".json" : stem + "_l2_" + format_double(l2) + ".json";
    write_json_file(g.out / name, crf::model_to_json(result.model));
    std::cout << name << ": objective " << result.objective << " after " << result.iterations
              << " iterations (" << (result.converged ? "converged" : "iteration limit") << ")\n";
  }
  return 0;
}

}  // namespace

linker::FeatureSuite parse_suite(const SuiteOpts& opts) {
  linker::FeatureSuite suite;
  suite.lexical = false;
  suite.transition = false;
  bool visual_requested = false;
  for (const std::string& token : split_csv(opts.suite_csv)) {
    if (token == "lexical") suite.lexical = true;
    else if (token == "transition") suite.transition = true;
    else if (token == "visual") visual_requested = true;
    else if (token == "position") suite.position = true;
    else if (token == "tagging") suite.tagging = true;
    else if (token == "boundary") suite.use_boundary_label = true;
    else
      throw UsageError("unknown suite flag: " + token +
                       " (expected lexical, transition, visual, position, tagging, boundary)");
  }
  const linker::VisualKind kind = linker::visual_kind_from_string(opts.visual);
  if (visual_requested && kind == linker::VisualKind::none)
    throw UsageError("the visual suite flag needs --visual hsv or --visual hp");
  if (!visual_requested && kind != linker::VisualKind::none)
    throw UsageError("--visual is set but the suite does not include visual; add it to --suite");
  if (visual_requested) {
    suite.visual = kind;
    suite.use_boundary_label = true;
  }
  suite.representations.clear();
  for (const std::string& token : split_csv(opts.repr_csv))
    suite.representations.push_back(linker::representation_from_string(token));
  if (suite.representations.empty() && suite.lexical)
    throw UsageError("--repr needs at least one of bow, embed");
  suite.context_k = opts.context_k;
  suite.position_sign = linker::position_sign_from_string(opts.position_sign);
  suite.validate();
  return suite;
}

int cmd_validate(const GlobalOpts& g) {
  if (g.bundle.empty()) throw UsageError("--bundle is required");
  const corpus::LoadResult result = corpus::load_bundle_checked(g.bundle);
  for (const Diagnostic& d : result.diagnostics) std::cerr << d.to_json().dump() << "\n";
  if (!result.bundle) {
    std::cout << result.diagnostics.size() << " problem(s) found\n";
    return 1;
  }
  const corpus::CourseBundle& b = *result.bundle;
  std::cout << "bundle OK: " << b.videos.size() << " videos, " << b.decks.size() << " decks, "
            << b.sections.size() << " sections, " << b.threads.size() << " threads, "
            << b.alignment_annotations.size() << " alignment annotations, "
            << b.link_annotations.size() << " link annotations\n";
  return 0;
}

int cmd_train_align(const GlobalOpts& g, const TrainOpts& opts) {
  return train_command(g, opts, "alignment");
}

int cmd_train_link(const GlobalOpts& g, const TrainOpts& opts) {
  if (opts.kind != "section" && opts.kind != "thread")
    throw UsageError("--kind must be section or thread");
  return train_command(g, opts, "links:" + opts.kind);
}

int cmd_predict(const GlobalOpts& g, const PredictOpts& opts) {
  const corpus::CourseBundle bundle = load_bundle_arg(g);
  linker::CoursePredictions predictions;
  if (opts.gold) {
    predictions = linker::consensus_predictions(bundle);
  } else {
    if (opts.align_model.empty())
      throw UsageError("--align-model is required (or use --gold for the consensus pass-through)");
    const crf::Model align_model = load_model_file(opts.align_model);
    std::optional<crf::Model> section_model, thread_model;
    if (!opts.section_model.empty()) section_model = load_model_file(opts.section_model);
    if (!opts.thread_model.empty()) thread_model = load_model_file(opts.thread_model);
    const linker::TextModel text = text_model_for_predict(
        bundle,
        {&align_model, section_model ? &*section_model : nullptr,
         thread_model ? &*thread_model : nullptr},
        {opts.align_model, opts.section_model, opts.thread_model});
    predictions = linker::predict_course(bundle, text, align_model,
                                         section_model ? &*section_model : nullptr,
                                         thread_model ? &*thread_model : nullptr, opts.monotone);
  }
  write_json_file(g.out / "predictions.json", linker::predictions_to_json(predictions, g.seed));
  nlohmann::json tree_json = corpus::tree_to_json(linker::predictions_tree(bundle, predictions));
  tree_json["tool_version"] = kToolVersion;
  tree_json["seed"] = g.seed;
  write_json_file(g.out / "tree.json", tree_json);
  std::cout << "wrote predictions.json (" << predictions.alignments.size() << " videos, "
            << predictions.links.size() << " leaves) and tree.json ("
            << predictions.vignettes.size() << " vignettes)\n";
  return 0;
}

int cmd_crossval(const GlobalOpts& g, const CrossvalOpts& opts) {
  if (opts.folds != 5)
    throw UsageError("the evaluation protocol is 5-fold; --folds must be 5");
  if (opts.suites.empty()) throw UsageError("--suite is required at least once");
  const corpus::CourseBundle bundle = load_bundle_arg(g);

  std::vector<evalkit::SuiteSpec> suites;
  for (const SuiteOpts& s : opts.suites) suites.push_back({"", parse_suite(s)});

  evalkit::CrossvalConfig cfg;
  cfg.seed = g.seed;
  cfg.k_grid = opts.k_grid.empty() ? std::vector<int>{opts.suites.front().context_k} : opts.k_grid;
  cfg.l2_grid = opts.l2_grid;
  cfg.train.learning_rate = opts.lr;
  cfg.train.max_iters = opts.max_iters;
  cfg.train.threads = thread_cap();
  cfg.cbow.seed = g.seed;
  cfg.monotone = opts.monotone;

  std::set<std::string> tasks;
  if (!opts.task.empty()) tasks.insert(opts.task);
  const evalkit::EvalReport report = evalkit::run_crossval(bundle, suites, cfg, tasks);
  write_json_file(g.out / "report.json", evalkit::report_to_json(report));
  for (const auto& row : report.rows)
    std::cout << row.task << "\t" << row.suite_name << "\tmean_f1=" << row.mean_f1 << "\n";
  std::cout << "wrote report.json\n";
  return 0;
}

int cmd_report(const GlobalOpts& g, const ReportOpts& opts) {
  const corpus::CourseBundle bundle = load_bundle_arg(g);
  if (opts.tree.empty()) throw UsageError("--tree is required");
  const std::string tree_text = read_text_file(opts.tree);
  nlohmann::json tree_json;
  try {
    tree_json = nlohmann::json::parse(tree_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(opts.tree.string() + ": " + e.what());
  }
  const corpus::LinkingTree tree = corpus::tree_from_json(tree_json);
  std::uint64_t seed = g.seed;
  if (tree_json.contains("seed") && tree_json["seed"].is_number_unsigned())
    seed = tree_json["seed"].get<std::uint64_t>();
  write_text_file(g.out / "report.html",
                  report::render_tree_html(bundle, tree, tree_text, seed));
  std::cout << "wrote report.html (" << tree.vignettes.size() << " vignettes)\n";
  return 0;
}

int cmd_search(const GlobalOpts& g, const SearchOpts& opts) {
  if (opts.query.empty()) throw UsageError("query must be non-empty");
  const corpus::CourseBundle bundle = load_bundle_arg(g);
  const auto hits = textrep::ngram_search(bundle, opts.query, opts.max_n, opts.top_n);
  int rank = 1;
  for (const auto& h : hits)
    std::cout << rank++ << "\t" << h.kind << "\t" << h.id << "\t" << h.score << "\n";
  return 0;
}

int cmd_kappa(const GlobalOpts& g, const KappaOpts& opts) {
  const corpus::CourseBundle bundle = load_bundle_arg(g);
  evalkit::TaskKappa result;
  if (opts.task == "alignment")
    result = evalkit::alignment_kappa(bundle);
  else if (opts.task == "links:section")
    result = evalkit::link_kappa(bundle, "section");
  else if (opts.task == "links:thread")
    result = evalkit::link_kappa(bundle, "thread");
  else
    throw UsageError("--task must be alignment, links:section, or links:thread");
  for (const auto& [a, b, k] : result.pairs)
    std::cout << a << "\t" << b << "\t" << k << "\n";
  std::cout << "mean\t" << result.mean << "\n";
  return 0;
}

int run_command(const std::function<int()>& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace linkforge::commands
