#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "linkforge/common.hpp"
#include "linkforge/corpus.hpp"
#include "linkforge/crf.hpp"
#include "linkforge/textrep.hpp"
#include "linkforge/visual.hpp"

namespace linkforge::linker {

// ---------------------------------------------------------------------------
// Feature suite
// ---------------------------------------------------------------------------

enum class Representation { bow_tfidf, embedding_avg };
enum class VisualKind { none, hsv_hist, horizontal_projection };
enum class PositionSign { verbatim, negated };

std::string to_string(Representation r);
std::string to_string(VisualKind k);
std::string to_string(PositionSign s);
Representation representation_from_string(const std::string& s);  // UsageError on unknown
VisualKind visual_kind_from_string(const std::string& s);
PositionSign position_sign_from_string(const std::string& s);

// Which feature families a model uses, plus their knobs. The boundary label
// (`bnd`) augments the label set so transition and visual features can mark
// segment starts; visual features require it.
struct FeatureSuite {
  bool lexical = true;
  bool transition = true;
  bool position = false;
  bool tagging = false;  // thread linking only
  VisualKind visual = VisualKind::none;
  bool use_boundary_label = false;
  int context_k = 1;  // lexical context radius K
  std::vector<Representation> representations = {Representation::bow_tfidf};
  PositionSign position_sign = PositionSign::verbatim;
  visual::HistogramBins bins;  // for visual = hsv_hist

  bool has_visual() const { return visual != VisualKind::none; }
  bool needs_embeddings() const;
  // Short row label, e.g. "bow+trans" or "bow+emb+trans+vis(hp)".
  std::string name() const;
  // Throws UsageError: context_k < 0, lexical with no representations,
  // visual without the boundary label.
  void validate() const;

  bool operator==(const FeatureSuite&) const = default;
};

nlohmann::json suite_to_json(const FeatureSuite& s);
FeatureSuite suite_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Text resources
// ---------------------------------------------------------------------------

// Tokenized and stemmed course text, computed once per bundle.
struct StemmedCourse {
  std::map<std::string, std::vector<std::vector<std::string>>> video_sentences;  // video_id
  std::map<std::string, std::vector<std::vector<std::string>>> deck_pages;       // deck_id, [page-1]
  std::map<std::string, std::vector<std::string>> sections;                      // section_id
  std::map<std::string, std::vector<std::string>> threads;                       // thread_id
};

StemmedCourse stem_course(const corpus::CourseBundle& bundle);

// Canonical document list feeding vocabulary/embedding construction: every
// sentence, then every slide page, then sections, then threads.
std::vector<std::vector<std::string>> text_model_docs(const StemmedCourse& stems,
                                                      const corpus::CourseBundle& bundle);

// Vocabulary (+ optional trained embeddings) over one bundle's text.
struct TextModel {
  StemmedCourse stems;
  textrep::Vocab vocab;
  std::optional<textrep::EmbeddingTable> embeddings;

  // `stemmed_tokens` must already be stemmed. Throws UsageError when the
  // embedding representation is requested but no table is loaded.
  textrep::DocVector vectorize(const std::vector<std::string>& stemmed_tokens,
                               Representation rep) const;
};

TextModel build_text_model(const corpus::CourseBundle& bundle, bool need_embeddings,
                           const textrep::CbowConfig& cbow = {});

// ---------------------------------------------------------------------------
// Boundary label
// ---------------------------------------------------------------------------

inline const std::string kBoundaryLabel = "bnd";

// Marks the first position of every run after the first with `bnd`; the first
// position is never relabeled. Lossy for adjacent length-1 runs (the marked
// position's own label is recoverable only from the positions after it), so
// the collapse below inverts this exactly on sequences whose runs after the
// first all have length >= 2.
std::vector<std::string> expand_boundary_labels(const std::vector<std::string>& base);

// Each bnd takes the next non-bnd label; a trailing bnd run takes the previous
// non-bnd label. Throws DataError when every position is bnd.
std::vector<std::string> collapse_boundary_labels(const std::vector<std::string>& extended);

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

struct AlignTask {
  const corpus::VideoEntry* video = nullptr;
  const corpus::SlideDeck* deck = nullptr;
  const std::vector<corpus::FrameRef>* frames = nullptr;  // null when the video has none
  std::filesystem::path frames_root;  // frame files are relative to this
  std::vector<int> gold;  // one 1-based page per sentence; empty when unannotated
};

// Throws DataError on unknown video/deck or gold length/range mismatch.
AlignTask make_align_task(const corpus::CourseBundle& bundle, const std::string& video_id,
                          const std::vector<int>& gold = {});

struct LinkTask {
  const std::vector<corpus::VideoVignette>* vignettes = nullptr;  // course-ordered
  std::string leaf_id;
  std::string leaf_kind;  // "section" | "thread"
  int leaf_index = 0;     // 1-based among leaves of this kind
  int leaf_count = 0;
  std::optional<std::string> tagged_video_id;  // threads only
  std::vector<int> gold;  // 0/1 per vignette; empty when unannotated
};

// Throws DataError on unknown leaf or empty vignette list.
LinkTask make_link_task(const corpus::CourseBundle& bundle,
                        const std::vector<corpus::VideoVignette>& vignettes,
                        const std::string& leaf_kind, const std::string& leaf_id,
                        const std::set<int>* gold_links = nullptr);

// ---------------------------------------------------------------------------
// Feature assembly (exposed for tests; training/prediction below wrap these)
// ---------------------------------------------------------------------------

// Label universe shared by every alignment instance of one model: pages
// "1".."S_max" plus optionally "bnd". Link universe: "N", "Y" (+ "bnd").
crf::LabelSet align_label_set(int max_pages, bool boundary);
crf::LabelSet link_label_set(bool boundary);

// Template banks bound to one task. Template ids depend only on (suite,
// labels), so instances compiled from different tasks share one weight vector.
crf::TemplateBank align_bank(const AlignTask& task, const FeatureSuite& suite,
                             const crf::LabelSet& labels, const TextModel& text,
                             visual::DescriptorCache* cache = nullptr);
crf::TemplateBank link_bank(const LinkTask& task, const FeatureSuite& suite,
                            const crf::LabelSet& labels, const TextModel& text,
                            const corpus::CourseBundle& bundle,
                            visual::DescriptorCache* cache = nullptr);

// Compile a task against the given universe; gold labels are boundary-expanded
// when the suite uses the boundary label.
crf::ChainInstance compile_align_task(const AlignTask& task, const FeatureSuite& suite,
                                      const crf::LabelSet& labels, const TextModel& text,
                                      visual::DescriptorCache* cache = nullptr);
crf::ChainInstance compile_link_task(const LinkTask& task, const FeatureSuite& suite,
                                     const crf::LabelSet& labels, const TextModel& text,
                                     const corpus::CourseBundle& bundle,
                                     visual::DescriptorCache* cache = nullptr);

// ---------------------------------------------------------------------------
// Homologous pass: sentence -> slide page
// ---------------------------------------------------------------------------

// Trains on the consensus alignments of `video_ids` (every consensus-annotated
// video, in manifest order, when empty). The returned model embeds the suite
// and label universe; config_echo records suite/seed/task.
crf::TrainResult train_alignment(const corpus::CourseBundle& bundle, const TextModel& text,
                                 const FeatureSuite& suite, const crf::TrainConfig& cfg,
                                 const std::vector<std::string>& video_ids = {});

// Decodes one video to a 1-based page per sentence (boundary labels already
// collapsed). Monotone decoding requires a boundary-free model (UsageError).
std::vector<int> align_video(const corpus::CourseBundle& bundle, const TextModel& text,
                             const crf::Model& model, const std::string& video_id,
                             bool monotone = false, visual::DescriptorCache* cache = nullptr);

// ---------------------------------------------------------------------------
// Grouping and the heterologous pass: vignette -> section / thread
// ---------------------------------------------------------------------------

// Maximal same-page runs of each video's predicted labels, course_order
// assigned 1-based in (manifest video order, run order).
std::vector<corpus::VideoVignette> group_vignettes(
    const corpus::CourseBundle& bundle, const std::map<std::string, std::vector<int>>& alignments);

// Trains one binary linking model for a material kind on consensus links over
// consensus vignettes. `leaf_ids` empty = every leaf of that kind.
crf::TrainResult train_linking(const corpus::CourseBundle& bundle, const TextModel& text,
                               const FeatureSuite& suite, const std::string& leaf_kind,
                               const crf::TrainConfig& cfg,
                               const std::vector<std::string>& leaf_ids = {});

// Linked course_order values for one leaf under the trained model.
std::set<int> link_leaf(const corpus::CourseBundle& bundle, const TextModel& text,
                        const crf::Model& model, const std::vector<corpus::VideoVignette>& vignettes,
                        const std::string& leaf_kind, const std::string& leaf_id,
                        visual::DescriptorCache* cache = nullptr);

// ---------------------------------------------------------------------------
// Full two-pass prediction
// ---------------------------------------------------------------------------

struct LeafPrediction {
  std::string leaf_id;
  std::string leaf_kind;
  std::set<int> vignettes;  // course_order values
};

struct CoursePredictions {
  std::map<std::string, std::vector<int>> alignments;  // video_id -> pages
  std::vector<corpus::VideoVignette> vignettes;        // grouped from `alignments`
  std::vector<LeafPrediction> links;                   // sections (book order), then threads
};

CoursePredictions predict_course(const corpus::CourseBundle& bundle, const TextModel& text,
                                 const crf::Model& align_model, const crf::Model* section_model,
                                 const crf::Model* thread_model, bool monotone = false);

// Consensus annotations repackaged as predictions (gold pass-through).
CoursePredictions consensus_predictions(const corpus::CourseBundle& bundle);

nlohmann::json predictions_to_json(const CoursePredictions& p, std::uint64_t seed);
CoursePredictions predictions_from_json(const nlohmann::json& j);

corpus::LinkingTree predictions_tree(const corpus::CourseBundle& bundle,
                                     const CoursePredictions& p);

// Suite recorded in a trained model's config echo. Throws DataError when absent.
FeatureSuite model_suite(const crf::Model& model);

}  // namespace linkforge::linker
