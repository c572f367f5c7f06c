#include "linkforge/evalkit.hpp"

#include <algorithm>
#include <random>

#include "linkforge/visual.hpp"

namespace linkforge::evalkit {

// ---------------------------------------------------------------------------
// F1
// ---------------------------------------------------------------------------

F1Result f1_from_counts(long long tp, long long fp, long long fn) {
  F1Result r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

F1Result sentence_f1_alignment(const std::map<std::string, std::vector<int>>& pred,
                               const std::map<std::string, std::vector<int>>& gold) {
  if (pred.empty()) throw DataError("alignment scoring: empty prediction set");
  if (pred.size() != gold.size())
    throw DataError("alignment scoring: predictions cover " + std::to_string(pred.size()) +
                    " videos, gold covers " + std::to_string(gold.size()));
  long long tp = 0, mismatch = 0;
  for (const auto& [vid, p] : pred) {
    const auto it = gold.find(vid);
    if (it == gold.end()) throw DataError("alignment scoring: no gold labels for video " + vid);
    if (it->second.size() != p.size())
      throw DataError("alignment scoring: label count mismatch for video " + vid);
    for (size_t i = 0; i < p.size(); ++i)
      (p[i] == it->second[i] ? tp : mismatch) += 1;
  }
  return f1_from_counts(tp, mismatch, mismatch);
}

F1Result sentence_f1_links(std::span<const corpus::LinkAnnotation> pred,
                           std::span<const corpus::LinkAnnotation> gold,
                           std::span<const corpus::VideoVignette> vignettes) {
  std::map<int, long long> span_len;
  for (const auto& vg : vignettes)
    span_len[vg.course_order] = vg.last_sentence - vg.first_sentence + 1;
  const auto sentence_count = [&](const std::set<int>& orders) {
    long long n = 0;
    for (const int o : orders) {
      const auto it = span_len.find(o);
      if (it == span_len.end())
        throw DataError("link scoring: vignette order " + std::to_string(o) +
                        " is not in the vignette list");
      n += it->second;
    }
    return n;
  };

  std::map<std::pair<std::string, std::string>, const corpus::LinkAnnotation*> gold_by_leaf;
  for (const auto& g : gold) gold_by_leaf[{g.leaf_kind, g.leaf_id}] = &g;
  if (pred.size() != gold.size())
    throw DataError("link scoring: prediction and gold leaf sets differ in size");

  long long tp = 0, fp = 0, fn = 0;
  for (const auto& p : pred) {
    const auto it = gold_by_leaf.find({p.leaf_kind, p.leaf_id});
    if (it == gold_by_leaf.end())
      throw DataError("link scoring: no gold links for " + p.leaf_kind + " " + p.leaf_id);
    const std::set<int>& ps = p.linked_vignettes;
    const std::set<int>& gs = it->second->linked_vignettes;
    std::set<int> common;
    std::set_intersection(ps.begin(), ps.end(), gs.begin(), gs.end(),
                          std::inserter(common, common.begin()));
    tp += sentence_count(common);
    std::set<int> only_pred, only_gold;
    std::set_difference(ps.begin(), ps.end(), gs.begin(), gs.end(),
                        std::inserter(only_pred, only_pred.begin()));
    std::set_difference(gs.begin(), gs.end(), ps.begin(), ps.end(),
                        std::inserter(only_gold, only_gold.begin()));
    fp += sentence_count(only_pred);
    fn += sentence_count(only_gold);
  }
  return f1_from_counts(tp, fp, fn);
}

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

std::vector<FoldSplit> make_folds(std::vector<std::string> unit_ids, std::uint64_t seed) {
  if (unit_ids.size() < 5)
    throw DataError("5-fold cross-validation needs at least 5 units, got " +
                    std::to_string(unit_ids.size()));
  std::mt19937_64 rng(seed);
  std::shuffle(unit_ids.begin(), unit_ids.end(), rng);
  std::vector<std::vector<std::string>> batches(5);
  for (size_t i = 0; i < unit_ids.size(); ++i) batches[i % 5].push_back(unit_ids[i]);
  std::vector<FoldSplit> folds(5);
  for (int f = 0; f < 5; ++f) {
    folds[f].fold_id = f;
    folds[f].test_ids = batches[f];
    folds[f].dev_ids = batches[(f + 1) % 5];
    for (int b = 0; b < 5; ++b)
      if (b != f && b != (f + 1) % 5)
        folds[f].train_ids.insert(folds[f].train_ids.end(), batches[b].begin(), batches[b].end());
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

namespace {

template <typename T>
KappaResult cohen_kappa_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size())
    throw DataError("kappa: sequences differ in length (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  if (a.empty()) throw DataError("kappa: empty sequences");
  const double n = static_cast<double>(a.size());
  long long agree = 0;
  std::map<T, long long> ca, cb;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) ++agree;
    ++ca[a[i]];
    ++cb[b[i]];
  }
  KappaResult r;
  r.p_a = agree / n;
  r.p_c = 0;
  for (const auto& [label, count] : ca) {
    const auto it = cb.find(label);
    if (it != cb.end()) r.p_c += (count / n) * (it->second / n);
  }
  if (r.p_c == 1.0) {
    if (r.p_a == 1.0) {
      r.kappa = 1.0;
      return r;
    }
    throw DataError("kappa: chance agreement is 1 but observed agreement is not");
  }
  r.kappa = (r.p_a - r.p_c) / (1.0 - r.p_c);
  return r;
}

}  // namespace

KappaResult cohen_kappa(std::span<const std::string> a, std::span<const std::string> b) {
  return cohen_kappa_impl(a, b);
}

KappaResult cohen_kappa(std::span<const int> a, std::span<const int> b) {
  return cohen_kappa_impl(a, b);
}

double mean_pairwise_kappa(const std::vector<std::vector<std::string>>& annotator_labels) {
  if (annotator_labels.size() < 2) throw UsageError("mean kappa needs at least 2 annotators");
  double sum = 0;
  int pairs = 0;
  for (size_t i = 0; i < annotator_labels.size(); ++i)
    for (size_t j = i + 1; j < annotator_labels.size(); ++j) {
      sum += cohen_kappa(std::span<const std::string>(annotator_labels[i]),
                         std::span<const std::string>(annotator_labels[j]))
                 .kappa;
      ++pairs;
    }
  return sum / pairs;
}

TaskKappa alignment_kappa(const corpus::CourseBundle& bundle) {
  std::map<std::string, std::map<std::string, const std::vector<int>*>> by_annotator;
  for (const auto& ann : bundle.alignment_annotations)
    by_annotator[ann.annotator_id][ann.video_id] = &ann.labels;
  if (by_annotator.size() < 2)
    throw UsageError("alignment agreement needs at least 2 annotators");

  std::vector<std::string> annotators;
  for (const auto& [id, _] : by_annotator) annotators.push_back(id);

  TaskKappa out;
  double sum = 0;
  for (size_t i = 0; i < annotators.size(); ++i)
    for (size_t j = i + 1; j < annotators.size(); ++j) {
      std::vector<int> a, b;
      for (const auto& v : bundle.videos) {
        const auto& ma = by_annotator[annotators[i]];
        const auto& mb = by_annotator[annotators[j]];
        const auto ia = ma.find(v.video_id);
        const auto ib = mb.find(v.video_id);
        if (ia == ma.end() || ib == mb.end()) continue;
        a.insert(a.end(), ia->second->begin(), ia->second->end());
        b.insert(b.end(), ib->second->begin(), ib->second->end());
      }
      if (a.empty()) continue;  // the pair shares no videos
      const double k =
          cohen_kappa(std::span<const int>(a), std::span<const int>(b)).kappa;
      out.pairs.emplace_back(annotators[i], annotators[j], k);
      sum += k;
    }
  if (out.pairs.empty())
    throw DataError("alignment agreement: no annotator pair shares a video");
  out.mean = sum / static_cast<double>(out.pairs.size());
  return out;
}

TaskKappa link_kappa(const corpus::CourseBundle& bundle, const std::string& leaf_kind) {
  if (leaf_kind != "section" && leaf_kind != "thread")
    throw UsageError("unknown leaf kind: " + leaf_kind);
  const std::vector<std::string> annotators = bundle.link_annotator_ids();
  if (annotators.size() < 2) throw UsageError("link agreement needs at least 2 annotators");

  const auto vignettes =
      corpus::course_vignettes(bundle, corpus::consensus_alignments(bundle));
  if (vignettes.empty())
    throw DataError("link agreement: the course has no consensus alignments");

  std::vector<std::string> leaf_ids;
  if (leaf_kind == "section")
    for (const auto& s : bundle.sections) leaf_ids.push_back(s.section_id);
  else
    for (const auto& t : bundle.threads) leaf_ids.push_back(t.thread_id);
  if (leaf_ids.empty()) throw DataError("link agreement: no " + leaf_kind + " leaves");

  std::map<std::string, std::map<std::string, const std::set<int>*>> marks;  // annotator -> leaf
  for (const auto& l : bundle.link_annotations)
    if (l.leaf_kind == leaf_kind) marks[l.annotator_id][l.leaf_id] = &l.linked_vignettes;

  std::vector<std::vector<std::string>> sequences;
  for (const auto& a : annotators) {
    std::vector<std::string> seq;
    const auto& mine = marks[a];
    for (const auto& leaf : leaf_ids) {
      const auto it = mine.find(leaf);
      for (const auto& vg : vignettes) {
        const bool linked = it != mine.end() && it->second->count(vg.course_order) > 0;
        seq.push_back(linked ? "Y" : "N");
      }
    }
    sequences.push_back(std::move(seq));
  }

  TaskKappa out;
  double sum = 0;
  for (size_t i = 0; i < annotators.size(); ++i)
    for (size_t j = i + 1; j < annotators.size(); ++j) {
      const double k = cohen_kappa(std::span<const std::string>(sequences[i]),
                                   std::span<const std::string>(sequences[j]))
                           .kappa;
      out.pairs.emplace_back(annotators[i], annotators[j], k);
      sum += k;
    }
  out.mean = sum / static_cast<double>(out.pairs.size());
  return out;
}

// ---------------------------------------------------------------------------
// Structural checks
// ---------------------------------------------------------------------------

MonotoneResult check_monotonic(std::span<const int> labels) {
  MonotoneResult r;
  for (size_t i = 1; i < labels.size(); ++i)
    if (labels[i] < labels[i - 1]) ++r.violations;
  r.is_monotone = r.violations == 0;
  return r;
}

namespace {
bool contains_phrase(const std::vector<std::string>& tokens,
                     const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  for (size_t start = 0; start + phrase.size() <= tokens.size(); ++start) {
    bool all = true;
    for (size_t i = 0; i < phrase.size(); ++i)
      if (tokens[start + i] != phrase[i]) {
        all = false;
        break;
      }
    if (all) return true;
  }
  return false;
}
}  // namespace

int keyterm_count(const std::string& essay, std::span<const std::string> glossary,
                  std::span<const std::string> topic_terms) {
  if (glossary.empty()) throw UsageError("keyterm counting needs a non-empty glossary");
  std::set<std::string> glossary_set(glossary.begin(), glossary.end());
  const std::vector<std::string> essay_tokens =
      textrep::stem_all(textrep::tokenize(essay));
  std::set<std::vector<std::string>> counted;
  int n = 0;
  for (const auto& term : topic_terms) {
    if (!glossary_set.count(term))
      throw UsageError("topic term is not in the glossary: " + term);
    const std::vector<std::string> phrase = textrep::stem_all(textrep::tokenize(term));
    if (counted.count(phrase)) continue;
    if (contains_phrase(essay_tokens, phrase)) {
      counted.insert(phrase);
      ++n;
    }
  }
  return n;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

namespace {

struct GridChoice {
  int k = 0;
  double l2 = 0;
};

std::vector<std::string> concat(const std::vector<std::string>& a,
                                const std::vector<std::string>& b) {
  std::vector<std::string> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

double score_alignment(const corpus::CourseBundle& bundle, const linker::TextModel& text,
                       const crf::Model& model, const std::vector<std::string>& video_ids,
                       const std::map<std::string, corpus::AlignmentAnnotation>& consensus,
                       bool monotone, std::map<std::string, std::vector<int>>* out_pred) {
  std::map<std::string, std::vector<int>> pred, gold;
  visual::DescriptorCache cache;
  for (const auto& id : video_ids) {
    pred[id] = linker::align_video(bundle, text, model, id, monotone, &cache);
    gold[id] = consensus.at(id).labels;
  }
  if (out_pred)
    for (const auto& [id, labels] : pred) (*out_pred)[id] = labels;
  return sentence_f1_alignment(pred, gold).f1;
}

double score_links(const corpus::CourseBundle& bundle, const linker::TextModel& text,
                   const crf::Model& model, const std::string& leaf_kind,
                   const std::vector<std::string>& leaf_ids,
                   const std::map<std::string, std::set<int>>& gold_links,
                   const std::vector<corpus::VideoVignette>& vignettes) {
  std::vector<corpus::LinkAnnotation> pred, gold;
  visual::DescriptorCache cache;
  for (const auto& id : leaf_ids) {
    pred.push_back({"model", id, leaf_kind,
                    linker::link_leaf(bundle, text, model, vignettes, leaf_kind, id, &cache)});
    gold.push_back({"consensus", id, leaf_kind, gold_links.at(id)});
  }
  return sentence_f1_links(pred, gold, vignettes).f1;
}

ReportRow crossval_alignment_row(const corpus::CourseBundle& bundle,
                                 const linker::TextModel& text, const SuiteSpec& spec,
                                 const std::vector<FoldSplit>& folds,
                                 const std::map<std::string, corpus::AlignmentAnnotation>& consensus,
                                 const CrossvalConfig& cfg,
                                 std::map<std::string, std::vector<int>>* out_pred) {
  ReportRow row;
  row.task = "alignment";
  row.suite_name = spec.name.empty() ? spec.suite.name() : spec.name;
  double sum = 0;
  for (const auto& fold : folds) {
    GridChoice best{cfg.k_grid.front(), cfg.l2_grid.front()};
    if (cfg.k_grid.size() * cfg.l2_grid.size() > 1) {
      double best_score = -1;
      for (const int k : cfg.k_grid)
        for (const double l2 : cfg.l2_grid) {
          linker::FeatureSuite s = spec.suite;
          s.context_k = k;
          crf::TrainConfig tc = cfg.train;
          tc.l2 = l2;
          const auto trained = linker::train_alignment(bundle, text, s, tc, fold.train_ids);
          const double score = score_alignment(bundle, text, trained.model, fold.dev_ids,
                                               consensus, cfg.monotone, nullptr);
          if (score > best_score) {
            best_score = score;
            best = {k, l2};
          }
        }
    }
    linker::FeatureSuite s = spec.suite;
    s.context_k = best.k;
    crf::TrainConfig tc = cfg.train;
    tc.l2 = best.l2;
    const auto trained = linker::train_alignment(bundle, text, s, tc,
                                                 concat(fold.train_ids, fold.dev_ids));
    const double f1 = score_alignment(bundle, text, trained.model, fold.test_ids, consensus,
                                      cfg.monotone, out_pred);
    row.per_fold.push_back({fold.fold_id, f1, f1, best.k, best.l2});
    sum += f1;
  }
  row.mean_f1 = sum / static_cast<double>(folds.size());
  row.mean_accuracy = row.mean_f1;
  return row;
}

ReportRow crossval_link_row(const corpus::CourseBundle& bundle, const linker::TextModel& text,
                            const SuiteSpec& spec, const std::string& leaf_kind,
                            const std::vector<FoldSplit>& folds,
                            const std::map<std::string, std::set<int>>& gold_links,
                            const std::vector<corpus::VideoVignette>& vignettes,
                            const CrossvalConfig& cfg) {
  ReportRow row;
  row.task = "links:" + leaf_kind;
  row.suite_name = spec.name.empty() ? spec.suite.name() : spec.name;
  double sum = 0;
  for (const auto& fold : folds) {
    GridChoice best{cfg.k_grid.front(), cfg.l2_grid.front()};
    if (cfg.k_grid.size() * cfg.l2_grid.size() > 1) {
      double best_score = -1;
      for (const int k : cfg.k_grid)
        for (const double l2 : cfg.l2_grid) {
          linker::FeatureSuite s = spec.suite;
          s.context_k = k;
          crf::TrainConfig tc = cfg.train;
          tc.l2 = l2;
          const auto trained =
              linker::train_linking(bundle, text, s, leaf_kind, tc, fold.train_ids);
          const double score = score_links(bundle, text, trained.model, leaf_kind, fold.dev_ids,
                                           gold_links, vignettes);
          if (score > best_score) {
            best_score = score;
            best = {k, l2};
          }
        }
    }
    linker::FeatureSuite s = spec.suite;
    s.context_k = best.k;
    crf::TrainConfig tc = cfg.train;
    tc.l2 = best.l2;
    const auto trained = linker::train_linking(bundle, text, s, leaf_kind, tc,
                                               concat(fold.train_ids, fold.dev_ids));
    const double f1 =
        score_links(bundle, text, trained.model, leaf_kind, fold.test_ids, gold_links, vignettes);
    row.per_fold.push_back({fold.fold_id, f1, 0.0, best.k, best.l2});
    sum += f1;
  }
  row.mean_f1 = sum / static_cast<double>(folds.size());
  row.mean_accuracy = 0;
  return row;
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& row : rep.rows) {
    nlohmann::json per_fold = nlohmann::json::array();
    for (const auto& f : row.per_fold)
      per_fold.push_back({{"fold", f.fold_id},
                          {"f1", f.f1},
                          {"accuracy", f.accuracy},
                          {"k", f.chosen_k},
                          {"l2", f.chosen_l2}});
    tasks.push_back({{"task", row.task},
                     {"suite", row.suite_name},
                     {"per_fold", per_fold},
                     {"mean_f1", row.mean_f1},
                     {"mean_accuracy", row.mean_accuracy}});
  }
  return {{"tool_version", kToolVersion},
          {"seed", rep.seed},
          {"tasks", tasks},
          {"kappa", rep.kappa},
          {"monotonicity", rep.monotonicity}};
}

EvalReport run_crossval(const corpus::CourseBundle& bundle, std::span<const SuiteSpec> suites,
                        const CrossvalConfig& cfg, const std::set<std::string>& tasks) {
  if (suites.empty()) throw UsageError("cross-validation needs at least one feature suite");
  const auto wants = [&tasks](const std::string& t) { return tasks.empty() || tasks.count(t); };

  EvalReport rep;
  rep.seed = cfg.seed;

  bool need_embeddings = false;
  for (const auto& s : suites) need_embeddings = need_embeddings || s.suite.needs_embeddings();
  const linker::TextModel text = linker::build_text_model(bundle, need_embeddings, cfg.cbow);

  const auto consensus = corpus::consensus_alignments(bundle);

  if (wants("alignment") && !consensus.empty()) {
    std::vector<std::string> units;
    for (const auto& v : bundle.videos)
      if (consensus.count(v.video_id)) units.push_back(v.video_id);
    const auto folds = make_folds(units, cfg.seed);
    bool first = true;
    for (const auto& spec : suites) {
      std::map<std::string, std::vector<int>> predictions;
      rep.rows.push_back(crossval_alignment_row(bundle, text, spec, folds, consensus, cfg,
                                                first ? &predictions : nullptr));
      if (first)
        for (const auto& [vid, labels] : predictions)
          rep.monotonicity[vid] = check_monotonic(labels).violations;
      first = false;
    }
    std::set<std::string> annotators;
    for (const auto& a : bundle.alignment_annotations) annotators.insert(a.annotator_id);
    if (annotators.size() >= 2) rep.kappa["alignment"] = alignment_kappa(bundle).mean;
  }

  const auto links = corpus::consensus_links(bundle);
  if (!links.empty() && !consensus.empty()) {
    const auto vignettes = corpus::course_vignettes(bundle, consensus);
    for (const std::string kind : {"section", "thread"}) {
      if (!wants("links:" + kind)) continue;
      std::map<std::string, std::set<int>> gold;
      for (const auto& l : links)
        if (l.leaf_kind == kind) gold[l.leaf_id] = l.linked_vignettes;
      if (gold.empty()) continue;
      std::vector<std::string> units;
      if (kind == "section")
        for (const auto& s : bundle.sections) units.push_back(s.section_id);
      else
        for (const auto& t : bundle.threads) units.push_back(t.thread_id);
      if (units.size() < 5) continue;
      const auto folds = make_folds(units, cfg.seed);
      for (const auto& spec : suites) {
        if (spec.suite.tagging && kind != "thread") continue;
        rep.rows.push_back(
            crossval_link_row(bundle, text, spec, kind, folds, gold, vignettes, cfg));
      }
      if (bundle.link_annotator_ids().size() >= 2)
        rep.kappa["links:" + kind] = link_kappa(bundle, kind).mean;
    }
  }

  if (rep.rows.empty())
    throw DataError("cross-validation: the bundle supports none of the requested tasks");
  return rep;
}

}  // namespace linkforge::evalkit
