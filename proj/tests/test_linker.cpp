// Feature suites, boundary-label codec, template banks, and the two linking
// passes (sentence->page alignment, vignette->leaf linking) end to end on
// synthetic courses.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "linkforge/corpus.hpp"
#include "linkforge/crf.hpp"
#include "linkforge/linker.hpp"
#include "support/synthcourse.hpp"

using namespace linkforge;
using linker::FeatureSuite;
using linker::Representation;
using linker::VisualKind;

namespace {

const corpus::CourseBundle& small_align_bundle() {
  static const corpus::CourseBundle b = [] {
    synthcourse::AlignSpec spec;
    spec.videos = 3;
    spec.sentences_per_video = 12;
    spec.pages_per_deck = 4;
    spec.noise = 0.2;
    spec.seed = 42;
    return synthcourse::make_align_bundle(spec);
  }();
  return b;
}

const corpus::CourseBundle& small_link_bundle() {
  static const corpus::CourseBundle b = [] {
    synthcourse::LinkSpec spec;
    spec.seed = 3;
    return synthcourse::make_link_bundle(spec);
  }();
  return b;
}

const linker::TextModel& align_text() {
  static const linker::TextModel t = linker::build_text_model(small_align_bundle(), false);
  return t;
}

const linker::TextModel& link_text() {
  static const linker::TextModel t = linker::build_text_model(small_link_bundle(), false);
  return t;
}

crf::TrainConfig quick_train() {
  crf::TrainConfig cfg;
  cfg.max_iters = 200;
  return cfg;
}

}  // namespace

TEST_CASE("suite names list the families that are switched on") {
  CHECK(FeatureSuite{}.name() == "bow+trans");

  FeatureSuite rich;
  rich.representations = {Representation::bow_tfidf, Representation::embedding_avg};
  rich.visual = VisualKind::horizontal_projection;
  rich.use_boundary_label = true;
  rich.position = true;
  rich.tagging = true;
  CHECK(rich.name() == "bow+emb+trans+vis(hp)+pos+tag");

  FeatureSuite boundary_only;
  boundary_only.transition = false;
  boundary_only.use_boundary_label = true;
  CHECK(boundary_only.name() == "bow+bnd");

  FeatureSuite empty;
  empty.lexical = false;
  empty.transition = false;
  CHECK(empty.name() == "empty");
}

TEST_CASE("suite validation and enum parsing reject unknown configurations") {
  FeatureSuite s;
  s.context_k = -1;
  CHECK_THROWS_AS(s.validate(), UsageError);

  FeatureSuite no_reps;
  no_reps.representations.clear();
  CHECK_THROWS_AS(no_reps.validate(), UsageError);

  FeatureSuite vis;
  vis.visual = VisualKind::hsv_hist;
  CHECK_THROWS_AS(vis.validate(), UsageError);  // boundary label missing
  vis.use_boundary_label = true;
  CHECK_NOTHROW(vis.validate());
  vis.bins.h = 0;
  CHECK_THROWS_AS(vis.validate(), UsageError);

  CHECK_THROWS_AS(linker::representation_from_string("bag"), UsageError);
  CHECK_THROWS_AS(linker::visual_kind_from_string("rgb"), UsageError);
  CHECK_THROWS_AS(linker::position_sign_from_string("flipped"), UsageError);
  CHECK(linker::representation_from_string("bow_tfidf") == Representation::bow_tfidf);
  CHECK(linker::visual_kind_from_string("horizontal_projection") ==
        VisualKind::horizontal_projection);
}

TEST_CASE("a suite survives the json round trip") {
  FeatureSuite s;
  s.lexical = true;
  s.transition = false;
  s.position = true;
  s.tagging = true;
  s.visual = VisualKind::horizontal_projection;
  s.use_boundary_label = true;
  s.context_k = 2;
  s.representations = {Representation::embedding_avg, Representation::bow_tfidf};
  s.position_sign = linker::PositionSign::negated;
  s.bins.h = 12;
  s.bins.s = 3;
  s.bins.v = 3;
  CHECK(linker::suite_from_json(linker::suite_to_json(s)) == s);
  CHECK(s.needs_embeddings());
  CHECK(!FeatureSuite{}.needs_embeddings());
}

TEST_CASE("boundary expansion marks run starts and collapse inverts it") {
  using V = std::vector<std::string>;
  CHECK(linker::expand_boundary_labels({"1", "1", "2", "2"}) == V{"1", "1", "bnd", "2"});
  CHECK(linker::expand_boundary_labels({"Y", "N", "N", "Y"}) == V{"Y", "bnd", "N", "bnd"});
  CHECK(linker::expand_boundary_labels({"1"}) == V{"1"});
  CHECK(linker::expand_boundary_labels({"1", "2", "2"}) == V{"1", "bnd", "2"});

  const V base{"1", "1", "2", "2", "3", "3"};
  CHECK(linker::collapse_boundary_labels(linker::expand_boundary_labels(base)) == base);

  // Length-1 runs after the first are not recoverable: the codec is lossy there.
  CHECK(linker::collapse_boundary_labels(linker::expand_boundary_labels({"Y", "N", "N", "Y"})) ==
        V{"Y", "N", "N", "N"});

  CHECK(linker::collapse_boundary_labels({"A", "bnd", "bnd"}) == V{"A", "A", "A"});
  CHECK(linker::collapse_boundary_labels({"bnd", "bnd", "A"}) == V{"A", "A", "A"});
  CHECK_THROWS_AS(linker::collapse_boundary_labels({"bnd", "bnd"}), DataError);
}

TEST_CASE("label universes are pages or Y/N, boundary label last") {
  const auto align = linker::align_label_set(3, false);
  CHECK(align.names == std::vector<std::string>{"1", "2", "3"});
  const auto align_b = linker::align_label_set(2, true);
  CHECK(align_b.names == std::vector<std::string>{"1", "2", "bnd"});
  CHECK(linker::link_label_set(false).names == std::vector<std::string>{"N", "Y"});
  CHECK(linker::link_label_set(true).names == std::vector<std::string>{"N", "Y", "bnd"});
}

TEST_CASE("alignment banks lay out lexical context then transitions") {
  const auto& b = small_align_bundle();
  const auto task = linker::make_align_task(b, b.videos[0].video_id);
  const auto labels = linker::align_label_set(4, false);
  const auto bank = linker::align_bank(task, FeatureSuite{}, labels, align_text());

  std::vector<std::string> expected{"lex:bow:k=-1", "lex:bow:k=+0", "lex:bow:k=+1",
                                    "trans:START->1", "trans:START->2", "trans:START->3",
                                    "trans:START->4"};
  for (const auto& a : labels.names)
    for (const auto& bb : labels.names) expected.push_back("trans:" + a + "->" + bb);
  CHECK(bank.ids() == expected);
  for (const auto& e : bank.emissions) CHECK(e.standardize);

  // The lexical emission fires on every page label and reads the shifted
  // sentence/page cosine: out-of-range shifts contribute nothing.
  const auto& lex = bank.emissions[0];  // k = -1
  CHECK(lex.fires(0));
  CHECK(lex.fires(3));
  CHECK(lex.signal(0, 0) == 0.0);
  CHECK(lex.signal(1, 0) == bank.emissions[1].signal(0, 0));
}

TEST_CASE("position features decay with the time/page offset") {
  synthcourse::AlignSpec spec;
  spec.videos = 1;
  spec.sentences_per_video = 4;
  spec.pages_per_deck = 4;
  spec.seed = 11;
  const auto b = synthcourse::make_align_bundle(spec);
  const auto text = linker::build_text_model(b, false);
  const auto task = linker::make_align_task(b, b.videos[0].video_id);
  const auto labels = linker::align_label_set(4, false);

  FeatureSuite s;
  s.lexical = false;
  s.transition = false;
  s.position = true;
  auto bank = linker::align_bank(task, s, labels, text);
  REQUIRE(bank.emissions.size() == 4);
  REQUIRE(bank.transitions.empty());
  const auto& last = bank.emissions[3];
  CHECK(last.id == "pos:y=4");
  CHECK(last.fires(3));
  CHECK(!last.fires(0));
  // Sentence 2 of 4 against page 4 of 4: |2/4 - 4/4| = 0.5.
  CHECK(last.signal(1, 3) == doctest::Approx(std::exp(0.5)).epsilon(1e-12));

  s.position_sign = linker::PositionSign::negated;
  bank = linker::align_bank(task, s, labels, text);
  CHECK(bank.emissions[3].signal(1, 3) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("link banks carry per-label lexical features and the forum tag") {
  const auto& b = small_link_bundle();
  const auto vignettes = corpus::course_vignettes(b, corpus::consensus_alignments(b));

  // Pick a thread that carries a forum tag.
  const corpus::DiscussionThread* tagged = nullptr;
  for (const auto& t : b.threads)
    if (t.tagged_video_id) tagged = &t;
  REQUIRE(tagged != nullptr);

  const auto task = linker::make_link_task(b, vignettes, "thread", tagged->thread_id);
  CHECK(task.tagged_video_id == tagged->tagged_video_id);

  FeatureSuite s;
  s.tagging = true;
  const auto labels = linker::link_label_set(false);
  const auto bank = linker::link_bank(task, s, labels, link_text(), b);

  std::vector<std::string> expected{"lex:bow:k=-1:y=N", "lex:bow:k=-1:y=Y",
                                    "lex:bow:k=+0:y=N", "lex:bow:k=+0:y=Y",
                                    "lex:bow:k=+1:y=N", "lex:bow:k=+1:y=Y",
                                    "tag:y=N",          "tag:y=Y",
                                    "trans:START->N",   "trans:START->Y",
                                    "trans:N->N",       "trans:N->Y",
                                    "trans:Y->N",       "trans:Y->Y"};
  CHECK(bank.ids() == expected);

  const auto& tag_y = bank.emissions[7];
  CHECK(tag_y.id == "tag:y=Y");
  CHECK(!tag_y.standardize);  // indicators keep their 0/1 scale
  for (size_t t = 0; t < vignettes.size(); ++t) {
    const double want = vignettes[t].video_id == *task.tagged_video_id ? 1.0 : 0.0;
    CHECK(tag_y.signal(static_cast<int>(t), 1) == want);
  }
}

TEST_CASE("tagging is rejected outside thread linking") {
  const auto& ab = small_align_bundle();
  const auto& lb = small_link_bundle();
  FeatureSuite s;
  s.tagging = true;

  const auto atask = linker::make_align_task(ab, ab.videos[0].video_id);
  CHECK_THROWS_AS(
      linker::align_bank(atask, s, linker::align_label_set(4, false), align_text()),
      UsageError);

  const auto vignettes = corpus::course_vignettes(lb, corpus::consensus_alignments(lb));
  const auto stask =
      linker::make_link_task(lb, vignettes, "section", lb.sections[0].section_id);
  CHECK_THROWS_AS(
      linker::link_bank(stask, s, linker::link_label_set(false), link_text(), lb),
      UsageError);

  CHECK_THROWS_AS(linker::train_linking(lb, link_text(), s, "section", quick_train()),
                  UsageError);
}

TEST_CASE("task construction validates ids and gold labels") {
  const auto& b = small_align_bundle();
  CHECK_THROWS_AS(linker::make_align_task(b, "no-such-video"), DataError);
  const int T = static_cast<int>(b.videos[0].sentences.size());
  CHECK_THROWS_AS(linker::make_align_task(b, b.videos[0].video_id, std::vector<int>(T - 1, 1)),
                  DataError);
  CHECK_THROWS_AS(linker::make_align_task(b, b.videos[0].video_id, std::vector<int>(T, 99)),
                  DataError);

  const auto& lb = small_link_bundle();
  const auto vignettes = corpus::course_vignettes(lb, corpus::consensus_alignments(lb));
  CHECK_THROWS_AS(linker::make_link_task(lb, vignettes, "thread", "no-such-thread"), DataError);
  CHECK_THROWS_AS(linker::make_link_task(lb, {}, "section", lb.sections[0].section_id),
                  DataError);
}

TEST_CASE("compiling with the boundary label expands the gold run starts") {
  synthcourse::AlignSpec spec;
  spec.videos = 1;
  spec.sentences_per_video = 4;
  spec.pages_per_deck = 4;
  spec.seed = 11;
  const auto b = synthcourse::make_align_bundle(spec);
  const auto text = linker::build_text_model(b, false);
  const auto task =
      linker::make_align_task(b, b.videos[0].video_id, std::vector<int>{1, 1, 2, 2});

  FeatureSuite s;
  s.use_boundary_label = true;
  const auto labels = linker::align_label_set(4, true);  // "1","2","3","4","bnd"
  const auto inst = linker::compile_align_task(task, s, labels, text);
  CHECK(inst.length == 4);
  CHECK(inst.num_labels == 5);
  CHECK(inst.gold == std::vector<int>{0, 0, 4, 1});

  const auto plain = linker::compile_align_task(task, FeatureSuite{},
                                                linker::align_label_set(4, false), text);
  CHECK(plain.gold == std::vector<int>{0, 0, 1, 1});
}

TEST_CASE("alignment training recovers the planted sentence-page structure") {
  const auto& b = small_align_bundle();
  const auto consensus = corpus::consensus_alignments(b);

  const auto result =
      linker::train_alignment(b, align_text(), FeatureSuite{}, quick_train());
  CHECK(result.iterations > 0);
  CHECK(linker::model_suite(result.model) == FeatureSuite{});

  int hits = 0, total = 0, monotone_ok = 0;
  for (const auto& v : b.videos) {
    const auto pred = linker::align_video(b, align_text(), result.model, v.video_id);
    const auto& gold = consensus.at(v.video_id).labels;
    REQUIRE(pred.size() == gold.size());
    for (size_t i = 0; i < gold.size(); ++i) hits += pred[i] == gold[i];
    total += static_cast<int>(gold.size());

    const auto mono =
        linker::align_video(b, align_text(), result.model, v.video_id, /*monotone=*/true);
    monotone_ok += std::is_sorted(mono.begin(), mono.end());
  }
  // Deterministic with this seed; the planted vocabulary makes the task easy.
  CHECK(static_cast<double>(hits) / total >= 0.9);
  CHECK(monotone_ok == static_cast<int>(b.videos.size()));
}

TEST_CASE("monotone decoding refuses boundary-label models") {
  const auto& b = small_align_bundle();
  FeatureSuite s;
  s.use_boundary_label = true;
  crf::TrainConfig cfg = quick_train();
  cfg.max_iters = 3;  // the guard fires before decoding; no need to converge
  const auto result = linker::train_alignment(b, align_text(), s, cfg);
  CHECK_THROWS_WITH_AS(
      linker::align_video(b, align_text(), result.model, b.videos[0].video_id, true),
      "monotone decoding requires a model trained without the boundary label", UsageError);
}

TEST_CASE("decoding refuses a model whose templates differ from the bank") {
  const auto& b = small_align_bundle();
  crf::TrainConfig cfg = quick_train();
  cfg.max_iters = 3;
  auto result = linker::train_alignment(b, align_text(), FeatureSuite{}, cfg);
  result.model.template_ids.back() = "trans:4->5";  // simulate a stale model file
  CHECK_THROWS_WITH_AS(
      linker::align_video(b, align_text(), result.model, b.videos[0].video_id),
      "feature templates do not match the trained model", DataError);
}

TEST_CASE("a model with no suite record is rejected up front") {
  crf::Model bare;
  CHECK_THROWS_AS(linker::model_suite(bare), DataError);
}

TEST_CASE("an embedding representation needs a trained table") {
  CHECK_THROWS_AS(align_text().vectorize({"tok"}, Representation::embedding_avg), UsageError);
}

TEST_CASE("section linking recovers most planted links") {
  const auto& b = small_link_bundle();
  const auto vignettes = corpus::course_vignettes(b, corpus::consensus_alignments(b));

  std::map<std::string, std::set<int>> gold;
  for (const auto& l : corpus::consensus_links(b))
    if (l.leaf_kind == "section") gold[l.leaf_id] = l.linked_vignettes;

  const auto result =
      linker::train_linking(b, link_text(), FeatureSuite{}, "section", quick_train());
  int exact = 0;
  for (const auto& s : b.sections) {
    const auto pred =
        linker::link_leaf(b, link_text(), result.model, vignettes, "section", s.section_id);
    exact += pred == gold.at(s.section_id);
  }
  CHECK(exact >= static_cast<int>(b.sections.size()) - 2);
}

TEST_CASE("grouping predicted labels matches the consensus grouping") {
  const auto& b = small_align_bundle();
  const auto consensus = corpus::consensus_alignments(b);
  std::map<std::string, std::vector<int>> as_predictions;
  for (const auto& [vid, ann] : consensus) as_predictions[vid] = ann.labels;
  CHECK(linker::group_vignettes(b, as_predictions) ==
        corpus::course_vignettes(b, consensus));
}

TEST_CASE("full prediction runs both passes and survives the json round trip") {
  const auto& b = small_link_bundle();
  crf::TrainConfig cfg = quick_train();
  cfg.max_iters = 150;
  const auto align_model = linker::train_alignment(b, link_text(), FeatureSuite{}, cfg).model;
  const auto section_model =
      linker::train_linking(b, link_text(), FeatureSuite{}, "section", cfg).model;

  const auto p = linker::predict_course(b, link_text(), align_model, &section_model, nullptr);
  CHECK(p.alignments.size() == b.videos.size());
  REQUIRE(!p.vignettes.empty());
  for (size_t i = 0; i < p.vignettes.size(); ++i)
    CHECK(p.vignettes[i].course_order == static_cast<int>(i) + 1);
  CHECK(p.links.size() == b.sections.size());  // no thread model was supplied
  for (const auto& l : p.links) CHECK(l.leaf_kind == "section");

  // The record stores alignments and links; vignettes are regrouped on demand.
  const auto back = linker::predictions_from_json(linker::predictions_to_json(p, 7));
  CHECK(back.alignments == p.alignments);
  CHECK(back.vignettes.empty());
  CHECK(linker::group_vignettes(b, back.alignments) == p.vignettes);
  REQUIRE(back.links.size() == p.links.size());
  for (size_t i = 0; i < p.links.size(); ++i) {
    CHECK(back.links[i].leaf_id == p.links[i].leaf_id);
    CHECK(back.links[i].leaf_kind == p.links[i].leaf_kind);
    CHECK(back.links[i].vignettes == p.links[i].vignettes);
  }

  const auto tree = linker::predictions_tree(b, p);
  CHECK(tree.trunk.size() == p.vignettes.size());
}

TEST_CASE("consensus predictions repackage the annotations unchanged") {
  const auto& b = small_link_bundle();
  const auto p = linker::consensus_predictions(b);
  const auto consensus = corpus::consensus_alignments(b);
  REQUIRE(p.alignments.size() == consensus.size());
  for (const auto& [vid, ann] : consensus) CHECK(p.alignments.at(vid) == ann.labels);
  CHECK(p.vignettes == corpus::course_vignettes(b, consensus));

  // Sections in book order first, then threads.
  REQUIRE(p.links.size() == b.sections.size() + b.threads.size());
  for (size_t i = 0; i < b.sections.size(); ++i)
    CHECK(p.links[i].leaf_id == b.sections[i].section_id);
  for (size_t i = 0; i < b.threads.size(); ++i)
    CHECK(p.links[b.sections.size() + i].leaf_id == b.threads[i].thread_id);

  const auto gold = corpus::consensus_links(b);
  for (const auto& l : p.links) {
    const auto it = std::find_if(gold.begin(), gold.end(),
                                 [&](const auto& g) { return g.leaf_id == l.leaf_id; });
    REQUIRE(it != gold.end());
    CHECK(l.vignettes == it->linked_vignettes);
  }
}
