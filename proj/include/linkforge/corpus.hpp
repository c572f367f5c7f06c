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

namespace linkforge::corpus {

// ---------------------------------------------------------------------------
// Course material types
// ---------------------------------------------------------------------------

struct Sentence {
  int index = 0;  // 0-based position within its video
  std::string text;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  bool operator==(const Sentence&) const = default;
};

struct VideoEntry {
  std::string video_id;
  std::string deck_id;
  std::vector<Sentence> sentences;
  bool operator==(const VideoEntry&) const = default;
};

struct SlidePage {
  int page = 0;  // 1-based
  std::string text;
  bool operator==(const SlidePage&) const = default;
};

struct SlideDeck {
  std::string deck_id;
  std::vector<SlidePage> pages;  // contiguous 1..n
  bool operator==(const SlideDeck&) const = default;
};

struct TextbookSection {
  std::string section_id;
  int order = 0;  // 1-based position in the book
  std::string text;
  bool operator==(const TextbookSection&) const = default;
};

struct DiscussionThread {
  std::string thread_id;
  std::int64_t created_ms = 0;
  std::string text;
  std::optional<std::string> tagged_video_id;  // forum tag: posted under this video
  bool operator==(const DiscussionThread&) const = default;
};

// A maximal run of consecutive sentences aligned to the same slide page.
struct VideoVignette {
  std::string video_id;
  int slide_page = 0;
  int first_sentence = 0;  // inclusive, 0-based sentence indices
  int last_sentence = 0;   // inclusive
  int course_order = 0;    // 1-based position over the whole course; 0 = unset
  bool operator==(const VideoVignette&) const = default;
};

struct AlignmentAnnotation {
  std::string annotator_id;
  std::string video_id;
  std::vector<int> labels;  // one 1-based page per sentence
  bool operator==(const AlignmentAnnotation&) const = default;
};

struct LinkAnnotation {
  std::string annotator_id;
  std::string leaf_id;
  std::string leaf_kind;  // "section" | "thread"
  std::set<int> linked_vignettes;  // course_order values
  bool operator==(const LinkAnnotation&) const = default;
};

struct FrameRef {
  std::int64_t ms = 0;
  std::string file;  // relative to the bundle root
  bool operator==(const FrameRef&) const = default;
};

struct CourseBundle {
  std::string course_id;
  std::string book_id;
  std::string forum_id;
  std::vector<VideoEntry> videos;        // manifest order
  std::vector<SlideDeck> decks;          // first-appearance order over videos
  std::vector<TextbookSection> sections; // sorted by order
  std::vector<DiscussionThread> threads; // sorted by (created_ms, thread_id)
  std::vector<AlignmentAnnotation> alignment_annotations;  // (annotator, video) order
  std::vector<LinkAnnotation> link_annotations;            // (annotator, file) order
  std::map<std::string, std::vector<FrameRef>> frames;     // video_id -> timeline
  std::filesystem::path root;  // where the bundle was loaded from; not part of equality

  const VideoEntry* find_video(const std::string& id) const;
  const SlideDeck* find_deck(const std::string& id) const;
  const TextbookSection* find_section(const std::string& id) const;
  const DiscussionThread* find_thread(const std::string& id) const;
  std::vector<std::string> link_annotator_ids() const;  // sorted unique

  bool operator==(const CourseBundle& other) const;
};

// ---------------------------------------------------------------------------
// Parsing and IO
// ---------------------------------------------------------------------------

// SubRip transcripts: numbered cues, "HH:MM:SS,mmm --> HH:MM:SS,mmm", text
// lines joined with single spaces. Throws DataError naming the cue ordinal.
std::vector<Sentence> parse_srt(const std::string& body, const std::string& file_for_errors);

std::string format_srt(std::span<const Sentence> sentences);

struct LoadResult {
  std::optional<CourseBundle> bundle;  // set iff diagnostics is empty
  std::vector<Diagnostic> diagnostics;
};

// Loads a bundle directory, collecting as many diagnostics as possible.
LoadResult load_bundle_checked(const std::filesystem::path& dir);

// Throwing convenience wrapper; message carries the first diagnostic.
CourseBundle load_bundle(const std::filesystem::path& dir);

// Writes the on-disk layout (manifest, srt, slides, textbook, forum,
// annotations, frame index). Frame image files are not copied.
void write_bundle(const CourseBundle& bundle, const std::filesystem::path& dir);

nlohmann::json bundle_to_json(const CourseBundle& bundle);
CourseBundle bundle_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Consensus and the linking tree
// ---------------------------------------------------------------------------

// Per-position mode over equal-length label sequences; ties pick the smallest
// page. Result annotator_id is "consensus". Throws DataError on empty input or
// mismatched lengths/videos.
AlignmentAnnotation majority_vote_alignment(std::span<const AlignmentAnnotation> annotations);

// Strict majority (> n/2) over annotator vignette sets; annotators that did
// not mark the leaf count as voting the empty set.
std::set<int> majority_vote_links(const std::vector<std::set<int>>& per_annotator);

// Consensus alignment per video, over videos that have at least one
// annotation. Keyed by video id.
std::map<std::string, AlignmentAnnotation> consensus_alignments(const CourseBundle& bundle);

// Consensus links for every section and thread leaf (empty sets included)
// when the bundle has at least one link annotator; empty vector otherwise.
std::vector<LinkAnnotation> consensus_links(const CourseBundle& bundle);

// Maximal same-page runs of one video's labels; course_order left 0.
std::vector<VideoVignette> vignettes_for_video(const std::string& video_id,
                                               std::span<const int> labels);

// Vignettes over the whole course in (manifest video order, run order), with
// 1-based course_order. Videos missing from `alignments` are skipped.
std::vector<VideoVignette> course_vignettes(
    const CourseBundle& bundle,
    const std::map<std::string, AlignmentAnnotation>& alignments);

struct LeafRef {
  std::string leaf_id;
  std::string leaf_kind;  // "slide" | "section" | "thread"
  bool operator==(const LeafRef&) const = default;
};

// Trunk-and-leaves structure: trunk node i is vignettes[i], named trunk[i].
struct LinkingTree {
  std::vector<std::string> trunk;  // "vg:<course_order>"
  std::vector<VideoVignette> vignettes;
  std::map<std::string, std::vector<LeafRef>> leaves;
  bool operator==(const LinkingTree&) const = default;
};

// Attaches each vignette's slide page plus every section/thread whose link set
// contains the vignette's course_order.
LinkingTree build_linking_tree(const CourseBundle& bundle,
                               const std::vector<VideoVignette>& vignettes,
                               std::span<const LinkAnnotation> links);

nlohmann::json tree_to_json(const LinkingTree& tree);
LinkingTree tree_from_json(const nlohmann::json& j);

}  // namespace linkforge::corpus
