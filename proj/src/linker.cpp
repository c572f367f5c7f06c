#include "linkforge/linker.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

namespace linkforge::linker {

namespace {

std::string short_tag(Representation r) {
  return r == Representation::bow_tfidf ? "bow" : "emb";
}

std::string signed_str(int k) {
  return k >= 0 ? "+" + std::to_string(k) : std::to_string(k);
}

void add_transition_templates(crf::TemplateBank& bank, const crf::LabelSet& labels) {
  const int L = labels.size();
  for (int b = 0; b < L; ++b) {
    crf::TransitionTemplate tt;
    tt.id = "trans:START->" + labels.names[b];
    tt.value = [b](int, int yp, int y) { return yp == crf::kStart && y == b ? 1.0 : 0.0; };
    bank.transitions.push_back(std::move(tt));
  }
  for (int a = 0; a < L; ++a) {
    for (int b = 0; b < L; ++b) {
      crf::TransitionTemplate tt;
      tt.id = "trans:" + labels.names[a] + "->" + labels.names[b];
      tt.value = [a, b](int, int yp, int y) { return yp == a && y == b ? 1.0 : 0.0; };
      bank.transitions.push_back(std::move(tt));
    }
  }
}

visual::DescriptorKind descriptor_kind(VisualKind k) {
  return k == VisualKind::hsv_hist ? visual::DescriptorKind::hsv_hist
                                   : visual::DescriptorKind::horizontal_projection;
}

std::string visual_tag(VisualKind k) { return k == VisualKind::hsv_hist ? "hsv" : "hp"; }

}  // namespace

// ---------------------------------------------------------------------------
// Enums and the suite
// ---------------------------------------------------------------------------

std::string to_string(Representation r) {
  return r == Representation::bow_tfidf ? "bow_tfidf" : "embedding_avg";
}

std::string to_string(VisualKind k) {
  switch (k) {
    case VisualKind::none: return "none";
    case VisualKind::hsv_hist: return "hsv_hist";
    case VisualKind::horizontal_projection: return "horizontal_projection";
  }
  return "none";
}

std::string to_string(PositionSign s) {
  return s == PositionSign::verbatim ? "verbatim" : "negated";
}

Representation representation_from_string(const std::string& s) {
  if (s == "bow" || s == "bow_tfidf") return Representation::bow_tfidf;
  if (s == "embed" || s == "emb" || s == "embedding_avg") return Representation::embedding_avg;
  throw UsageError("unknown representation: " + s + " (expected bow or embed)");
}

VisualKind visual_kind_from_string(const std::string& s) {
  if (s == "none") return VisualKind::none;
  if (s == "hsv" || s == "hsv_hist") return VisualKind::hsv_hist;
  if (s == "hp" || s == "horizontal_projection") return VisualKind::horizontal_projection;
  throw UsageError("unknown visual kind: " + s + " (expected hsv, hp, or none)");
}

PositionSign position_sign_from_string(const std::string& s) {
  if (s == "verbatim") return PositionSign::verbatim;
  if (s == "negated") return PositionSign::negated;
  throw UsageError("unknown position sign: " + s + " (expected verbatim or negated)");
}

bool FeatureSuite::needs_embeddings() const {
  return lexical && std::find(representations.begin(), representations.end(),
                              Representation::embedding_avg) != representations.end();
}

std::string FeatureSuite::name() const {
  std::vector<std::string> parts;
  if (lexical)
    for (const Representation r : representations) parts.push_back(short_tag(r));
  if (transition) parts.push_back("trans");
  if (has_visual()) parts.push_back("vis(" + visual_tag(visual) + ")");
  if (position) parts.push_back("pos");
  if (tagging) parts.push_back("tag");
  if (use_boundary_label && !has_visual()) parts.push_back("bnd");
  if (parts.empty()) return "empty";
  std::string out = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
  return out;
}

void FeatureSuite::validate() const {
  if (context_k < 0) throw UsageError("context radius must be >= 0");
  if (lexical && representations.empty())
    throw UsageError("lexical features need at least one representation");
  if (has_visual() && !use_boundary_label)
    throw UsageError("visual features require the boundary label");
  if (bins.h < 1 || bins.s < 1 || bins.v < 1)
    throw UsageError("histogram bin counts must be >= 1");
}

nlohmann::json suite_to_json(const FeatureSuite& s) {
  nlohmann::json reps = nlohmann::json::array();
  for (const Representation r : s.representations) reps.push_back(to_string(r));
  return {{"lexical", s.lexical},
          {"transition", s.transition},
          {"position", s.position},
          {"tagging", s.tagging},
          {"visual", to_string(s.visual)},
          {"use_boundary_label", s.use_boundary_label},
          {"context_k", s.context_k},
          {"representations", reps},
          {"position_sign", to_string(s.position_sign)},
          {"bins", {{"h", s.bins.h}, {"s", s.bins.s}, {"v", s.bins.v}}}};
}

FeatureSuite suite_from_json(const nlohmann::json& j) {
  try {
    FeatureSuite s;
    s.lexical = j.at("lexical").get<bool>();
    s.transition = j.at("transition").get<bool>();
    s.position = j.at("position").get<bool>();
    s.tagging = j.at("tagging").get<bool>();
    s.visual = visual_kind_from_string(j.at("visual").get<std::string>());
    s.use_boundary_label = j.at("use_boundary_label").get<bool>();
    s.context_k = j.at("context_k").get<int>();
    s.representations.clear();
    for (const auto& r : j.at("representations"))
      s.representations.push_back(representation_from_string(r.get<std::string>()));
    s.position_sign = position_sign_from_string(j.at("position_sign").get<std::string>());
    if (j.contains("bins")) {
      s.bins.h = j["bins"].at("h").get<int>();
      s.bins.s = j["bins"].at("s").get<int>();
      s.bins.v = j["bins"].at("v").get<int>();
    }
    s.validate();
    return s;
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid feature suite record: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid feature suite record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Text resources
// ---------------------------------------------------------------------------

namespace {
std::vector<std::string> stem_text(const std::string& text) {
  return textrep::stem_all(textrep::tokenize(text));
}
}  // namespace

StemmedCourse stem_course(const corpus::CourseBundle& bundle) {
  StemmedCourse out;
  for (const auto& v : bundle.videos) {
    auto& sentences = out.video_sentences[v.video_id];
    for (const auto& s : v.sentences) sentences.push_back(stem_text(s.text));
  }
  for (const auto& d : bundle.decks) {
    auto& pages = out.deck_pages[d.deck_id];
    for (const auto& p : d.pages) pages.push_back(stem_text(p.text));
  }
  for (const auto& s : bundle.sections) out.sections[s.section_id] = stem_text(s.text);
  for (const auto& t : bundle.threads) out.threads[t.thread_id] = stem_text(t.text);
  return out;
}

std::vector<std::vector<std::string>> text_model_docs(const StemmedCourse& stems,
                                                      const corpus::CourseBundle& bundle) {
  std::vector<std::vector<std::string>> docs;
  for (const auto& v : bundle.videos)
    for (const auto& s : stems.video_sentences.at(v.video_id)) docs.push_back(s);
  for (const auto& d : bundle.decks)
    for (const auto& p : stems.deck_pages.at(d.deck_id)) docs.push_back(p);
  for (const auto& s : bundle.sections) docs.push_back(stems.sections.at(s.section_id));
  for (const auto& t : bundle.threads) docs.push_back(stems.threads.at(t.thread_id));
  return docs;
}

textrep::DocVector TextModel::vectorize(const std::vector<std::string>& stemmed_tokens,
                                        Representation rep) const {
  if (rep == Representation::bow_tfidf) return textrep::tfidf_vector(stemmed_tokens, vocab);
  if (!embeddings)
    throw UsageError("the embedding representation needs a trained embedding table");
  return textrep::embed_doc(stemmed_tokens, *embeddings);
}

TextModel build_text_model(const corpus::CourseBundle& bundle, bool need_embeddings,
                           const textrep::CbowConfig& cbow) {
  TextModel tm;
  tm.stems = stem_course(bundle);
  const auto docs = text_model_docs(tm.stems, bundle);
  tm.vocab = textrep::build_vocab(docs);
  if (need_embeddings) tm.embeddings = textrep::cbow_train(docs, cbow);
  return tm;
}

// ---------------------------------------------------------------------------
// Boundary label
// ---------------------------------------------------------------------------

std::vector<std::string> expand_boundary_labels(const std::vector<std::string>& base) {
  std::vector<std::string> out = base;
  for (size_t t = 1; t < base.size(); ++t)
    if (base[t] != base[t - 1]) out[t] = kBoundaryLabel;
  return out;
}

std::vector<std::string> collapse_boundary_labels(const std::vector<std::string>& extended) {
  const size_t n = extended.size();
  if (n == 0) return {};
  size_t last_non = n;
  for (size_t i = n; i-- > 0;) {
    if (extended[i] != kBoundaryLabel) {
      last_non = i;
      break;
    }
  }
  if (last_non == n)
    throw DataError("cannot collapse a sequence whose every label is the boundary label");
  std::vector<std::string> out(n);
  for (size_t i = last_non + 1; i < n; ++i) out[i] = extended[last_non];
  std::string next;
  for (size_t i = last_non + 1; i-- > 0;) {
    if (extended[i] != kBoundaryLabel) next = extended[i];
    out[i] = next;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

AlignTask make_align_task(const corpus::CourseBundle& bundle, const std::string& video_id,
                          const std::vector<int>& gold) {
  const corpus::VideoEntry* video = bundle.find_video(video_id);
  if (!video) throw DataError("unknown video: " + video_id);
  const corpus::SlideDeck* deck = bundle.find_deck(video->deck_id);
  if (!deck) throw DataError("video " + video_id + " references unknown deck " + video->deck_id);
  AlignTask task;
  task.video = video;
  task.deck = deck;
  task.frames_root = bundle.root;
  const auto it = bundle.frames.find(video_id);
  if (it != bundle.frames.end() && !it->second.empty()) task.frames = &it->second;
  if (!gold.empty()) {
    if (gold.size() != video->sentences.size())
      throw DataError("alignment for " + video_id + " has " + std::to_string(gold.size()) +
                      " labels for " + std::to_string(video->sentences.size()) + " sentences");
    for (const int p : gold)
      if (p < 1 || p > static_cast<int>(deck->pages.size()))
        throw DataError("alignment for " + video_id + " references page " + std::to_string(p) +
                        " outside deck " + deck->deck_id);
    task.gold = gold;
  }
  return task;
}

LinkTask make_link_task(const corpus::CourseBundle& bundle,
                        const std::vector<corpus::VideoVignette>& vignettes,
                        const std::string& leaf_kind, const std::string& leaf_id,
                        const std::set<int>* gold_links) {
  if (vignettes.empty()) throw DataError("no vignettes to link");
  LinkTask task;
  task.vignettes = &vignettes;
  task.leaf_kind = leaf_kind;
  task.leaf_id = leaf_id;
  if (leaf_kind == "section") {
    const corpus::TextbookSection* s = bundle.find_section(leaf_id);
    if (!s) throw DataError("unknown section: " + leaf_id);
    task.leaf_index = s->order;
    task.leaf_count = static_cast<int>(bundle.sections.size());
  } else if (leaf_kind == "thread") {
    const corpus::DiscussionThread* th = bundle.find_thread(leaf_id);
    if (!th) throw DataError("unknown thread: " + leaf_id);
    for (size_t i = 0; i < bundle.threads.size(); ++i)
      if (bundle.threads[i].thread_id == leaf_id) task.leaf_index = static_cast<int>(i) + 1;
    task.leaf_count = static_cast<int>(bundle.threads.size());
    task.tagged_video_id = th->tagged_video_id;
  } else {
    throw UsageError("unknown leaf kind: " + leaf_kind);
  }
  if (gold_links) {
    for (const int order : *gold_links) {
      const bool known = std::any_of(vignettes.begin(), vignettes.end(),
                                     [order](const auto& vg) { return vg.course_order == order; });
      if (!known)
        throw DataError("link for " + leaf_id + " refers to unknown vignette order " +
                        std::to_string(order));
    }
    task.gold.resize(vignettes.size());
    for (size_t t = 0; t < vignettes.size(); ++t)
      task.gold[t] = gold_links->count(vignettes[t].course_order) ? 1 : 0;
  }
  return task;
}

// ---------------------------------------------------------------------------
// Label sets and banks
// ---------------------------------------------------------------------------

crf::LabelSet align_label_set(int max_pages, bool boundary) {
  if (max_pages < 1) throw DataError("a label universe needs at least one page");
  crf::LabelSet ls;
  for (int p = 1; p <= max_pages; ++p) ls.names.push_back(std::to_string(p));
  if (boundary) ls.names.push_back(kBoundaryLabel);
  return ls;
}

crf::LabelSet link_label_set(bool boundary) {
  crf::LabelSet ls;
  ls.names = {"N", "Y"};
  if (boundary) ls.names.push_back(kBoundaryLabel);
  return ls;
}

namespace {

struct AlignData {
  int T = 0;
  int S = 0;
  std::vector<std::vector<double>> cos;  // per representation: T*S
  std::vector<double> vis;               // per sentence
  double sign = 1.0;
};

struct LinkData {
  int T = 0;
  std::vector<std::vector<double>> cos;  // per representation: T
  std::vector<double> vis;               // per vignette
  std::vector<double> tag;               // per vignette
  double sign = 1.0;
  int leaf_index = 0;
  int leaf_count = 0;
};

const std::vector<std::vector<std::string>>& video_stems(const TextModel& text,
                                                         const std::string& video_id) {
  const auto it = text.stems.video_sentences.find(video_id);
  if (it == text.stems.video_sentences.end())
    throw DataError("text model does not cover video " + video_id);
  return it->second;
}

std::vector<visual::TimedFrame> resolve_frames(const std::vector<corpus::FrameRef>* frames,
                                               const std::filesystem::path& root,
                                               const std::string& video_id) {
  if (!frames || frames->empty())
    throw DataError("video " + video_id + " has no frame index (visual features need one)");
  std::vector<visual::TimedFrame> out;
  out.reserve(frames->size());
  for (const auto& f : *frames) out.push_back({f.ms, root / f.file});
  return out;
}

}  // namespace

crf::TemplateBank align_bank(const AlignTask& task, const FeatureSuite& suite,
                             const crf::LabelSet& labels, const TextModel& text,
                             visual::DescriptorCache* cache) {
  suite.validate();
  if (suite.tagging) throw UsageError("tagging features apply only to thread linking");
  const int T = static_cast<int>(task.video->sentences.size());
  const int S = static_cast<int>(task.deck->pages.size());
  const int base_count = labels.size() - (suite.use_boundary_label ? 1 : 0);
  if (S > base_count)
    throw DataError("deck " + task.deck->deck_id + " has " + std::to_string(S) +
                    " pages but the label universe supports " + std::to_string(base_count));

  auto data = std::make_shared<AlignData>();
  data->T = T;
  data->S = S;
  data->sign = suite.position_sign == PositionSign::verbatim ? 1.0 : -1.0;

  crf::TemplateBank bank;

  if (suite.lexical) {
    const auto& sent = video_stems(text, task.video->video_id);
    const auto dit = text.stems.deck_pages.find(task.deck->deck_id);
    if (dit == text.stems.deck_pages.end())
      throw DataError("text model does not cover deck " + task.deck->deck_id);
    for (const Representation rep : suite.representations) {
      std::vector<textrep::DocVector> sv, pv;
      sv.reserve(sent.size());
      pv.reserve(dit->second.size());
      for (const auto& toks : sent) sv.push_back(text.vectorize(toks, rep));
      for (const auto& toks : dit->second) pv.push_back(text.vectorize(toks, rep));
      std::vector<double> table(static_cast<size_t>(T) * S, 0.0);
      for (int t = 0; t < T; ++t)
        for (int p = 0; p < S; ++p)
          table[static_cast<size_t>(t) * S + p] = textrep::cosine(sv[t], pv[p]);
      data->cos.push_back(std::move(table));
    }
    for (size_t r = 0; r < suite.representations.size(); ++r) {
      const std::string rtag = short_tag(suite.representations[r]);
      for (int k = -suite.context_k; k <= suite.context_k; ++k) {
        crf::EmissionTemplate e;
        e.id = "lex:" + rtag + ":k=" + signed_str(k);
        e.standardize = true;
        e.fires = [base_count](int y) { return y < base_count; };
        e.signal = [data, r, k](int t, int y) {
          const int tk = t + k;
          if (tk < 0 || tk >= data->T || y >= data->S) return 0.0;
          return data->cos[r][static_cast<size_t>(tk) * data->S + y];
        };
        bank.emissions.push_back(std::move(e));
      }
    }
  }

  if (suite.has_visual()) {
    const auto frames = resolve_frames(task.frames, task.frames_root, task.video->video_id);
    visual::DescriptorCache local;
    visual::DescriptorCache* c = cache ? cache : &local;
    data->vis.resize(T);
    for (int t = 0; t < T; ++t) {
      const corpus::Sentence& s = task.video->sentences[t];
      data->vis[t] = visual::frame_distance(frames, s.start_ms, s.end_ms,
                                            descriptor_kind(suite.visual), suite.bins, c);
    }
    const std::string vtag = visual_tag(suite.visual);
    for (int yy = 0; yy < labels.size(); ++yy) {
      crf::EmissionTemplate e;
      e.id = "vis:" + vtag + ":y=" + labels.names[yy];
      e.standardize = true;
      e.fires = [yy](int y) { return y == yy; };
      e.signal = [data](int t, int) { return data->vis[t]; };
      bank.emissions.push_back(std::move(e));
    }
  }

  if (suite.position) {
    for (int yy = 0; yy < base_count; ++yy) {
      crf::EmissionTemplate e;
      e.id = "pos:y=" + labels.names[yy];
      e.standardize = true;
      e.fires = [yy](int y) { return y == yy; };
      e.signal = [data, yy](int t, int) {
        return std::exp(data->sign * std::abs(static_cast<double>(t + 1) / data->T -
                                              static_cast<double>(yy + 1) / data->S));
      };
      bank.emissions.push_back(std::move(e));
    }
  }

  if (suite.transition) add_transition_templates(bank, labels);
  return bank;
}

crf::TemplateBank link_bank(const LinkTask& task, const FeatureSuite& suite,
                            const crf::LabelSet& labels, const TextModel& text,
                            const corpus::CourseBundle& bundle, visual::DescriptorCache* cache) {
  suite.validate();
  if (suite.tagging && task.leaf_kind != "thread")
    throw UsageError("tagging features apply only to thread linking");
  const auto& vignettes = *task.vignettes;
  const int T = static_cast<int>(vignettes.size());
  const int base_count = labels.size() - (suite.use_boundary_label ? 1 : 0);

  auto data = std::make_shared<LinkData>();
  data->T = T;
  data->sign = suite.position_sign == PositionSign::verbatim ? 1.0 : -1.0;
  data->leaf_index = task.leaf_index;
  data->leaf_count = task.leaf_count;

  const auto vignette_tokens = [&](const corpus::VideoVignette& vg) {
    const auto& sents = video_stems(text, vg.video_id);
    std::vector<std::string> toks;
    for (int i = vg.first_sentence; i <= vg.last_sentence; ++i)
      toks.insert(toks.end(), sents[i].begin(), sents[i].end());
    return toks;
  };

  crf::TemplateBank bank;

  if (suite.lexical) {
    const auto leaf_it = task.leaf_kind == "section" ? text.stems.sections.find(task.leaf_id)
                                                     : text.stems.threads.find(task.leaf_id);
    const auto leaf_end =
        task.leaf_kind == "section" ? text.stems.sections.end() : text.stems.threads.end();
    if (leaf_it == leaf_end)
      throw DataError("text model does not cover " + task.leaf_kind + " " + task.leaf_id);
    for (const Representation rep : suite.representations) {
      const textrep::DocVector leaf_vec = text.vectorize(leaf_it->second, rep);
      std::vector<double> table(T, 0.0);
      for (int t = 0; t < T; ++t)
        table[t] = textrep::cosine(text.vectorize(vignette_tokens(vignettes[t]), rep), leaf_vec);
      data->cos.push_back(std::move(table));
    }
    for (size_t r = 0; r < suite.representations.size(); ++r) {
      const std::string rtag = short_tag(suite.representations[r]);
      for (int k = -suite.context_k; k <= suite.context_k; ++k) {
        for (int yy = 0; yy < base_count; ++yy) {
          crf::EmissionTemplate e;
          e.id = "lex:" + rtag + ":k=" + signed_str(k) + ":y=" + labels.names[yy];
          e.standardize = true;
          e.fires = [yy](int y) { return y == yy; };
          e.signal = [data, r, k](int t, int) {
            const int tk = t + k;
            if (tk < 0 || tk >= data->T) return 0.0;
            return data->cos[r][tk];
          };
          bank.emissions.push_back(std::move(e));
        }
      }
    }
  }

  if (suite.has_visual()) {
    data->vis.resize(T);
    visual::DescriptorCache local;
    visual::DescriptorCache* c = cache ? cache : &local;
    for (int t = 0; t < T; ++t) {
      const corpus::VideoVignette& vg = vignettes[t];
      const corpus::VideoEntry* video = bundle.find_video(vg.video_id);
      if (!video) throw DataError("vignette references unknown video " + vg.video_id);
      const auto fit = bundle.frames.find(vg.video_id);
      const auto frames = resolve_frames(
          fit == bundle.frames.end() ? nullptr : &fit->second, bundle.root, vg.video_id);
      data->vis[t] = visual::frame_distance(
          frames, video->sentences[vg.first_sentence].start_ms,
          video->sentences[vg.last_sentence].end_ms, descriptor_kind(suite.visual), suite.bins, c);
    }
    const std::string vtag = visual_tag(suite.visual);
    for (int yy = 0; yy < labels.size(); ++yy) {
      crf::EmissionTemplate e;
      e.id = "vis:" + vtag + ":y=" + labels.names[yy];
      e.standardize = true;
      e.fires = [yy](int y) { return y == yy; };
      e.signal = [data](int t, int) { return data->vis[t]; };
      bank.emissions.push_back(std::move(e));
    }
  }

  if (suite.position) {
    for (int yy = 0; yy < base_count; ++yy) {
      crf::EmissionTemplate e;
      e.id = "pos:y=" + labels.names[yy];
      e.standardize = true;
      e.fires = [yy](int y) { return y == yy; };
      e.signal = [data](int t, int) {
        return std::exp(data->sign *
                        std::abs(static_cast<double>(t + 1) / data->T -
                                 static_cast<double>(data->leaf_index) / data->leaf_count));
      };
      bank.emissions.push_back(std::move(e));
    }
  }

  if (suite.tagging) {
    data->tag.assign(T, 0.0);
    if (task.tagged_video_id)
      for (int t = 0; t < T; ++t)
        if (vignettes[t].video_id == *task.tagged_video_id) data->tag[t] = 1.0;
    for (int yy = 0; yy < base_count; ++yy) {
      crf::EmissionTemplate e;
      e.id = "tag:y=" + labels.names[yy];
      e.standardize = false;
      e.fires = [yy](int y) { return y == yy; };
      e.signal = [data](int t, int) { return data->tag[t]; };
      bank.emissions.push_back(std::move(e));
    }
  }

  if (suite.transition) add_transition_templates(bank, labels);
  return bank;
}

// ---------------------------------------------------------------------------
// Compilation
// ---------------------------------------------------------------------------

namespace {

std::vector<int> gold_indices(const std::vector<std::string>& names, const crf::LabelSet& labels) {
  std::vector<int> out;
  out.reserve(names.size());
  for (const auto& n : names) {
    const int idx = labels.index_of(n);
    if (idx < 0) throw DataError("gold label " + n + " is outside the label universe");
    out.push_back(idx);
  }
  return out;
}

crf::ChainInstance compile_align_with(const crf::TemplateBank& bank, const AlignTask& task,
                                      const FeatureSuite& suite, const crf::LabelSet& labels) {
  const int L = labels.size();
  const int S = static_cast<int>(task.deck->pages.size());
  std::vector<char> allowed(L, 0);
  for (int p = 0; p < S; ++p) allowed[p] = 1;
  if (suite.use_boundary_label) allowed[L - 1] = 1;
  std::vector<int> gold;
  if (!task.gold.empty()) {
    std::vector<std::string> names;
    names.reserve(task.gold.size());
    for (const int p : task.gold) names.push_back(std::to_string(p));
    if (suite.use_boundary_label) names = expand_boundary_labels(names);
    gold = gold_indices(names, labels);
  }
  return crf::compile_chain(bank, L, static_cast<int>(task.video->sentences.size()),
                            std::move(gold), std::move(allowed));
}

crf::ChainInstance compile_link_with(const crf::TemplateBank& bank, const LinkTask& task,
                                     const FeatureSuite& suite, const crf::LabelSet& labels) {
  std::vector<int> gold;
  if (!task.gold.empty()) {
    std::vector<std::string> names;
    names.reserve(task.gold.size());
    for (const int g : task.gold) names.push_back(g ? "Y" : "N");
    if (suite.use_boundary_label) names = expand_boundary_labels(names);
    gold = gold_indices(names, labels);
  }
  return crf::compile_chain(bank, labels.size(), static_cast<int>(task.vignettes->size()),
                            std::move(gold), {});
}

}  // namespace

crf::ChainInstance compile_align_task(const AlignTask& task, const FeatureSuite& suite,
                                      const crf::LabelSet& labels, const TextModel& text,
                                      visual::DescriptorCache* cache) {
  const crf::TemplateBank bank = align_bank(task, suite, labels, text, cache);
  return compile_align_with(bank, task, suite, labels);
}

crf::ChainInstance compile_link_task(const LinkTask& task, const FeatureSuite& suite,
                                     const crf::LabelSet& labels, const TextModel& text,
                                     const corpus::CourseBundle& bundle,
                                     visual::DescriptorCache* cache) {
  const crf::TemplateBank bank = link_bank(task, suite, labels, text, bundle, cache);
  return compile_link_with(bank, task, suite, labels);
}

// ---------------------------------------------------------------------------
// Homologous pass
// ---------------------------------------------------------------------------

namespace {

crf::Model init_model(const crf::LabelSet& labels, const crf::TemplateBank& bank,
                      const crf::Standardization& st, const std::string& task,
                      const FeatureSuite& suite, const crf::TrainConfig& cfg) {
  crf::Model init;
  init.labels = labels;
  init.template_ids = bank.ids();
  init.emission_count = static_cast<int>(bank.emissions.size());
  init.standardization = st;
  init.config_echo = {{"task", task},
                      {"suite", suite_to_json(suite)},
                      {"seed", cfg.seed},
                      {"l2", cfg.l2},
                      {"tool_version", kToolVersion}};
  return init;
}

}  // namespace

crf::TrainResult train_alignment(const corpus::CourseBundle& bundle, const TextModel& text,
                                 const FeatureSuite& suite, const crf::TrainConfig& cfg,
                                 const std::vector<std::string>& video_ids) {
  suite.validate();
  const auto consensus = corpus::consensus_alignments(bundle);
  std::vector<std::string> ids = video_ids;
  if (ids.empty())
    for (const auto& v : bundle.videos)
      if (consensus.count(v.video_id)) ids.push_back(v.video_id);
  if (ids.empty()) throw DataError("no videos with consensus alignments to train on");

  int max_pages = 0;
  for (const auto& d : bundle.decks) max_pages = std::max(max_pages, static_cast<int>(d.pages.size()));
  const crf::LabelSet labels = align_label_set(max_pages, suite.use_boundary_label);

  visual::DescriptorCache cache;
  std::vector<crf::ChainInstance> data;
  std::optional<crf::TemplateBank> bank0;
  for (const auto& id : ids) {
    const auto it = consensus.find(id);
    if (it == consensus.end()) throw DataError("video has no consensus alignment: " + id);
    const AlignTask task = make_align_task(bundle, id, it->second.labels);
    crf::TemplateBank bank = align_bank(task, suite, labels, text, &cache);
    data.push_back(compile_align_with(bank, task, suite, labels));
    if (!bank0) bank0 = std::move(bank);
  }

  const crf::Standardization st = crf::fit_standardization(*bank0, data);
  for (auto& inst : data) crf::apply_standardization(*bank0, st, inst);
  return crf::train(init_model(labels, *bank0, st, "alignment", suite, cfg), data, cfg);
}

std::vector<int> align_video(const corpus::CourseBundle& bundle, const TextModel& text,
                             const crf::Model& model, const std::string& video_id, bool monotone,
                             visual::DescriptorCache* cache) {
  const FeatureSuite suite = model_suite(model);
  if (monotone && suite.use_boundary_label)
    throw UsageError("monotone decoding requires a model trained without the boundary label");
  const AlignTask task = make_align_task(bundle, video_id);
  const crf::TemplateBank bank = align_bank(task, suite, model.labels, text, cache);
  if (bank.ids() != model.template_ids)
    throw DataError("feature templates do not match the trained model");
  crf::ChainInstance inst = compile_align_with(bank, task, suite, model.labels);
  crf::apply_standardization(bank, model.standardization, inst);
  const auto constraint = monotone ? crf::DecodeConstraint::monotone_non_decreasing
                                   : crf::DecodeConstraint::none;
  const std::vector<int> path = crf::viterbi(model, inst, constraint);
  std::vector<std::string> names;
  names.reserve(path.size());
  for (const int y : path) names.push_back(model.labels.names[y]);
  if (suite.use_boundary_label) names = collapse_boundary_labels(names);
  std::vector<int> pages;
  pages.reserve(names.size());
  for (const auto& n : names) pages.push_back(std::stoi(n));
  return pages;
}

// ---------------------------------------------------------------------------
// Grouping and the heterologous pass
// ---------------------------------------------------------------------------

std::vector<corpus::VideoVignette> group_vignettes(
    const corpus::CourseBundle& bundle,
    const std::map<std::string, std::vector<int>>& alignments) {
  std::map<std::string, corpus::AlignmentAnnotation> anns;
  for (const auto& [vid, pages] : alignments)
    anns[vid] = corpus::AlignmentAnnotation{"predicted", vid, pages};
  return corpus::course_vignettes(bundle, anns);
}

crf::TrainResult train_linking(const corpus::CourseBundle& bundle, const TextModel& text,
                               const FeatureSuite& suite, const std::string& leaf_kind,
                               const crf::TrainConfig& cfg,
                               const std::vector<std::string>& leaf_ids) {
  suite.validate();
  if (leaf_kind != "section" && leaf_kind != "thread")
    throw UsageError("unknown leaf kind: " + leaf_kind);
  if (suite.tagging && leaf_kind != "thread")
    throw UsageError("tagging features apply only to thread linking");

  const std::vector<corpus::VideoVignette> vignettes =
      corpus::course_vignettes(bundle, corpus::consensus_alignments(bundle));
  if (vignettes.empty()) throw DataError("no vignettes: the course has no consensus alignments");

  std::map<std::string, std::set<int>> gold;
  for (const auto& l : corpus::consensus_links(bundle))
    if (l.leaf_kind == leaf_kind) gold[l.leaf_id] = l.linked_vignettes;
  if (gold.empty()) throw DataError("no link annotations for " + leaf_kind + " leaves");

  std::vector<std::string> ids = leaf_ids;
  if (ids.empty()) {
    if (leaf_kind == "section")
      for (const auto& s : bundle.sections) ids.push_back(s.section_id);
    else
      for (const auto& t : bundle.threads) ids.push_back(t.thread_id);
  }
  if (ids.empty()) throw DataError("no " + leaf_kind + " leaves to train on");

  const crf::LabelSet labels = link_label_set(suite.use_boundary_label);
  visual::DescriptorCache cache;
  std::vector<crf::ChainInstance> data;
  std::optional<crf::TemplateBank> bank0;
  for (const auto& id : ids) {
    const auto it = gold.find(id);
    if (it == gold.end()) throw DataError("leaf has no consensus links: " + id);
    const LinkTask task = make_link_task(bundle, vignettes, leaf_kind, id, &it->second);
    crf::TemplateBank bank = link_bank(task, suite, labels, text, bundle, &cache);
    data.push_back(compile_link_with(bank, task, suite, labels));
    if (!bank0) bank0 = std::move(bank);
  }

  const crf::Standardization st = crf::fit_standardization(*bank0, data);
  for (auto& inst : data) crf::apply_standardization(*bank0, st, inst);
  return crf::train(init_model(labels, *bank0, st, "links:" + leaf_kind, suite, cfg), data, cfg);
}

std::set<int> link_leaf(const corpus::CourseBundle& bundle, const TextModel& text,
                        const crf::Model& model, const std::vector<corpus::VideoVignette>& vignettes,
                        const std::string& leaf_kind, const std::string& leaf_id,
                        visual::DescriptorCache* cache) {
  const FeatureSuite suite = model_suite(model);
  const LinkTask task = make_link_task(bundle, vignettes, leaf_kind, leaf_id);
  const crf::TemplateBank bank = link_bank(task, suite, model.labels, text, bundle, cache);
  if (bank.ids() != model.template_ids)
    throw DataError("feature templates do not match the trained model");
  crf::ChainInstance inst = compile_link_with(bank, task, suite, model.labels);
  crf::apply_standardization(bank, model.standardization, inst);
  const std::vector<int> path = crf::viterbi(model, inst);
  std::vector<std::string> names;
  names.reserve(path.size());
  for (const int y : path) names.push_back(model.labels.names[y]);
  if (suite.use_boundary_label) names = collapse_boundary_labels(names);
  std::set<int> linked;
  for (size_t t = 0; t < names.size(); ++t)
    if (names[t] == "Y") linked.insert(vignettes[t].course_order);
  return linked;
}

// ---------------------------------------------------------------------------
// Full two-pass prediction
// ---------------------------------------------------------------------------

CoursePredictions predict_course(const corpus::CourseBundle& bundle, const TextModel& text,
                                 const crf::Model& align_model, const crf::Model* section_model,
                                 const crf::Model* thread_model, bool monotone) {
  CoursePredictions out;
  visual::DescriptorCache cache;
  for (const auto& v : bundle.videos)
    out.alignments[v.video_id] = align_video(bundle, text, align_model, v.video_id, monotone, &cache);
  out.vignettes = group_vignettes(bundle, out.alignments);
  if (section_model)
    for (const auto& s : bundle.sections)
      out.links.push_back({s.section_id, "section",
                           link_leaf(bundle, text, *section_model, out.vignettes, "section",
                                     s.section_id, &cache)});
  if (thread_model)
    for (const auto& t : bundle.threads)
      out.links.push_back({t.thread_id, "thread",
                           link_leaf(bundle, text, *thread_model, out.vignettes, "thread",
                                     t.thread_id, &cache)});
  return out;
}

CoursePredictions consensus_predictions(const corpus::CourseBundle& bundle) {
  CoursePredictions out;
  const auto consensus = corpus::consensus_alignments(bundle);
  for (const auto& [vid, ann] : consensus) out.alignments[vid] = ann.labels;
  out.vignettes = corpus::course_vignettes(bundle, consensus);
  for (const auto& l : corpus::consensus_links(bundle))
    out.links.push_back({l.leaf_id, l.leaf_kind, l.linked_vignettes});
  return out;
}

nlohmann::json predictions_to_json(const CoursePredictions& p, std::uint64_t seed) {
  nlohmann::json alignments = nlohmann::json::object();
  for (const auto& [vid, pages] : p.alignments) alignments[vid] = pages;
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : p.links)
    links.push_back({{"leaf_id", l.leaf_id},
                     {"leaf_kind", l.leaf_kind},
                     {"vignettes", std::vector<int>(l.vignettes.begin(), l.vignettes.end())}});
  return {{"tool_version", kToolVersion},
          {"seed", seed},
          {"alignments", alignments},
          {"links", links}};
}

CoursePredictions predictions_from_json(const nlohmann::json& j) {
  try {
    CoursePredictions p;
    for (const auto& [vid, pages] : j.at("alignments").items())
      p.alignments[vid] = pages.get<std::vector<int>>();
    for (const auto& l : j.at("links")) {
      LeafPrediction lp;
      lp.leaf_id = l.at("leaf_id").get<std::string>();
      lp.leaf_kind = l.at("leaf_kind").get<std::string>();
      for (const auto& v : l.at("vignettes")) lp.vignettes.insert(v.get<int>());
      p.links.push_back(std::move(lp));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid predictions record: ") + e.what());
  }
}

corpus::LinkingTree predictions_tree(const corpus::CourseBundle& bundle,
                                     const CoursePredictions& p) {
  const std::vector<corpus::VideoVignette> vignettes =
      p.vignettes.empty() ? group_vignettes(bundle, p.alignments) : p.vignettes;
  std::vector<corpus::LinkAnnotation> links;
  links.reserve(p.links.size());
  for (const auto& l : p.links)
    links.push_back(corpus::LinkAnnotation{"model", l.leaf_id, l.leaf_kind, l.vignettes});
  return corpus::build_linking_tree(bundle, vignettes, links);
}

FeatureSuite model_suite(const crf::Model& model) {
  if (!model.config_echo.is_object() || !model.config_echo.contains("suite"))
    throw DataError("model carries no feature-suite record");
  return suite_from_json(model.config_echo.at("suite"));
}

}  // namespace linkforge::linker
