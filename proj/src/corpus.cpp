#include "linkforge/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <regex>
#include <sstream>

namespace linkforge::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Bundle lookups
// ---------------------------------------------------------------------------

const VideoEntry* CourseBundle::find_video(const std::string& id) const {
  for (const auto& v : videos)
    if (v.video_id == id) return &v;
  return nullptr;
}

const SlideDeck* CourseBundle::find_deck(const std::string& id) const {
  for (const auto& d : decks)
    if (d.deck_id == id) return &d;
  return nullptr;
}

const TextbookSection* CourseBundle::find_section(const std::string& id) const {
  for (const auto& s : sections)
    if (s.section_id == id) return &s;
  return nullptr;
}

const DiscussionThread* CourseBundle::find_thread(const std::string& id) const {
  for (const auto& t : threads)
    if (t.thread_id == id) return &t;
  return nullptr;
}

std::vector<std::string> CourseBundle::link_annotator_ids() const {
  std::vector<std::string> ids;
  for (const auto& l : link_annotations) ids.push_back(l.annotator_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

bool CourseBundle::operator==(const CourseBundle& other) const {
  return course_id == other.course_id && book_id == other.book_id &&
         forum_id == other.forum_id && videos == other.videos &&
         decks == other.decks && sections == other.sections &&
         threads == other.threads &&
         alignment_annotations == other.alignment_annotations &&
         link_annotations == other.link_annotations && frames == other.frames;
}

// ---------------------------------------------------------------------------
// SRT
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

const std::regex kTimeLine(
    R"(^(\d{2}):(\d{2}):(\d{2}),(\d{3}) --> (\d{2}):(\d{2}):(\d{2}),(\d{3})$)");

std::int64_t to_ms(int h, int m, int s, int ms) {
  return ((std::int64_t(h) * 60 + m) * 60 + s) * 1000 + ms;
}

std::string format_ms(std::int64_t ms) {
  char buf[40];
  const std::int64_t h = ms / 3600000, m = (ms / 60000) % 60, s = (ms / 1000) % 60,
                     rem = ms % 1000;
  std::snprintf(buf, sizeof(buf), "%02lld:%02lld:%02lld,%03lld",
                static_cast<long long>(h), static_cast<long long>(m),
                static_cast<long long>(s), static_cast<long long>(rem));
  return buf;
}

}  // namespace

std::vector<Sentence> parse_srt(const std::string& body, const std::string& file_for_errors) {
  std::vector<std::string> lines;
  {
    std::string cur;
    for (char c : body) {
      if (c == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur.push_back(c);
      }
    }
    lines.push_back(cur);
  }

  auto fail = [&](int cue, const std::string& what) -> void {
    throw DataError(file_for_errors + ": cue " + std::to_string(cue) + ": " + what);
  };

  std::vector<Sentence> out;
  size_t i = 0;
  std::int64_t prev_start = -1;
  while (i < lines.size()) {
    if (trim(lines[i]).empty()) {
      ++i;
      continue;
    }
    const int cue = static_cast<int>(out.size()) + 1;
    if (!all_digits(trim(lines[i]))) fail(cue, "expected numeric cue counter, got \"" + trim(lines[i]) + "\"");
    ++i;
    if (i >= lines.size()) fail(cue, "missing timestamp line");
    std::smatch m;
    const std::string tline = trim(lines[i]);
    if (!std::regex_match(tline, m, kTimeLine))
      fail(cue, "malformed timestamp line \"" + tline + "\"");
    const std::int64_t start = to_ms(std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]), std::stoi(m[4]));
    const std::int64_t end = to_ms(std::stoi(m[5]), std::stoi(m[6]), std::stoi(m[7]), std::stoi(m[8]));
    if (end < start) fail(cue, "cue ends before it starts");
    if (start < prev_start) fail(cue, "cue starts before the previous cue");
    ++i;
    std::string text;
    while (i < lines.size() && !trim(lines[i]).empty()) {
      if (!text.empty()) text += ' ';
      text += trim(lines[i]);
      ++i;
    }
    if (text.empty()) fail(cue, "empty cue text");
    out.push_back(Sentence{static_cast<int>(out.size()), text, start, end});
    prev_start = start;
  }
  return out;
}

std::string format_srt(std::span<const Sentence> sentences) {
  std::ostringstream out;
  for (size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    out << (i + 1) << "\n"
        << format_ms(s.start_ms) << " --> " << format_ms(s.end_ms) << "\n"
        << s.text << "\n\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Bundle loading
// ---------------------------------------------------------------------------

namespace {

struct Loader {
  fs::path dir;
  CourseBundle b;
  std::vector<Diagnostic> diags;

  void report(const std::string& file, const std::string& id, const std::string& msg,
              int line = 0) {
    diags.push_back(Diagnostic{file, line, id, msg});
  }

  static std::vector<fs::path> sorted_entries(const fs::path& p, bool directories) {
    std::vector<fs::path> out;
    if (!fs::exists(p)) return out;
    for (const auto& e : fs::directory_iterator(p)) {
      if (directories == e.is_directory()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::optional<json> read_json(const std::string& rel) {
    const fs::path p = dir / rel;
    if (!fs::exists(p)) {
      report(rel, "", "missing file");
      return std::nullopt;
    }
    try {
      return load_json_file(p);
    } catch (const DataError& e) {
      report(rel, "", e.what());
      return std::nullopt;
    }
  }

  void load_manifest() {
    const std::string rel = "manifest.json";
    if (!fs::exists(dir / rel)) {
      report(rel, "", "missing manifest");
      return;
    }
    auto j = read_json(rel);
    if (!j) return;
    try {
      b.course_id = j->at("course_id").get<std::string>();
      b.book_id = j->at("book_id").get<std::string>();
      b.forum_id = j->at("forum_id").get<std::string>();
      for (const auto& v : j->at("videos")) {
        VideoEntry e;
        e.video_id = v.at("video_id").get<std::string>();
        e.deck_id = v.at("deck_id").get<std::string>();
        if (b.find_video(e.video_id))
          report(rel, e.video_id, "duplicate video id");
        else
          b.videos.push_back(std::move(e));
      }
    } catch (const json::exception& e) {
      report(rel, "", std::string("bad manifest: ") + e.what());
    }
  }

  void load_videos() {
    for (auto& v : b.videos) {
      const std::string rel = "videos/" + v.video_id + ".srt";
      const fs::path p = dir / rel;
      if (!fs::exists(p)) {
        report(rel, v.video_id, "missing transcript for video named in manifest");
        continue;
      }
      try {
        v.sentences = parse_srt(read_text_file(p), rel);
      } catch (const DataError& e) {
        report(rel, v.video_id, e.what());
        continue;
      }
      if (v.sentences.empty()) report(rel, v.video_id, "transcript has no cues");
    }
  }

  void load_decks() {
    std::vector<std::string> deck_ids;
    for (const auto& v : b.videos)
      if (std::find(deck_ids.begin(), deck_ids.end(), v.deck_id) == deck_ids.end())
        deck_ids.push_back(v.deck_id);
    for (const auto& id : deck_ids) {
      const std::string rel = "slides/" + id + ".json";
      auto j = read_json(rel);
      if (!j) continue;  // missing deck referenced by manifest -> diagnostic above
      SlideDeck deck;
      deck.deck_id = id;
      try {
        for (const auto& pj : *j) {
          SlidePage page;
          page.page = pj.at("page").get<int>();
          page.text = pj.at("text").get<std::string>();
          deck.pages.push_back(std::move(page));
        }
      } catch (const json::exception& e) {
        report(rel, id, std::string("bad slide deck: ") + e.what());
        continue;
      }
      std::sort(deck.pages.begin(), deck.pages.end(),
                [](const SlidePage& a, const SlidePage& c) { return a.page < c.page; });
      for (size_t i = 0; i < deck.pages.size(); ++i) {
        if (deck.pages[i].page != static_cast<int>(i) + 1) {
          report(rel, id, "pages must be contiguous starting at 1");
          break;
        }
      }
      if (deck.pages.empty()) report(rel, id, "deck has no pages");
      for (const auto& page : deck.pages)
        if (trim(page.text).empty())
          report(rel, id + ":" + std::to_string(page.page), "empty slide text");
      b.decks.push_back(std::move(deck));
    }
  }

  void load_sections() {
    const std::string rel = "textbook.json";
    auto j = read_json(rel);
    if (!j) return;
    try {
      for (const auto& sj : *j) {
        TextbookSection s;
        s.section_id = sj.at("section_id").get<std::string>();
        s.order = sj.at("order").get<int>();
        s.text = sj.at("text").get<std::string>();
        if (trim(s.text).empty()) report(rel, s.section_id, "empty section text");
        if (b.find_section(s.section_id))
          report(rel, s.section_id, "duplicate section id");
        else
          b.sections.push_back(std::move(s));
      }
    } catch (const json::exception& e) {
      report(rel, "", std::string("bad textbook file: ") + e.what());
      return;
    }
    std::sort(b.sections.begin(), b.sections.end(),
              [](const TextbookSection& a, const TextbookSection& c) { return a.order < c.order; });
    for (size_t i = 0; i < b.sections.size(); ++i)
      if (b.sections[i].order != static_cast<int>(i) + 1) {
        report(rel, b.sections[i].section_id, "section orders must be contiguous starting at 1");
        break;
      }
  }

  void load_threads() {
    const std::string rel = "forum.json";
    auto j = read_json(rel);
    if (!j) return;
    try {
      for (const auto& tj : *j) {
        DiscussionThread t;
        t.thread_id = tj.at("thread_id").get<std::string>();
        t.created_ms = tj.at("created_ms").get<std::int64_t>();
        t.text = tj.at("text").get<std::string>();
        if (tj.contains("tagged_video_id"))
          t.tagged_video_id = tj.at("tagged_video_id").get<std::string>();
        if (trim(t.text).empty()) report(rel, t.thread_id, "empty thread text");
        if (t.tagged_video_id && !b.find_video(*t.tagged_video_id))
          report(rel, t.thread_id, "tagged_video_id names unknown video \"" + *t.tagged_video_id + "\"");
        if (b.find_thread(t.thread_id))
          report(rel, t.thread_id, "duplicate thread id");
        else
          b.threads.push_back(std::move(t));
      }
    } catch (const json::exception& e) {
      report(rel, "", std::string("bad forum file: ") + e.what());
      return;
    }
    std::sort(b.threads.begin(), b.threads.end(),
              [](const DiscussionThread& a, const DiscussionThread& c) {
                return std::tie(a.created_ms, a.thread_id) < std::tie(c.created_ms, c.thread_id);
              });
  }

  void load_alignment_annotations() {
    const fs::path base = dir / "annotations" / "alignment";
    for (const auto& annotator_dir : sorted_entries(base, /*directories=*/true)) {
      const std::string annotator = annotator_dir.filename().string();
      for (const auto& file : sorted_entries(annotator_dir, /*directories=*/false)) {
        if (file.extension() != ".json") continue;
        const std::string video_id = file.stem().string();
        const std::string rel = "annotations/alignment/" + annotator + "/" + video_id + ".json";
        const VideoEntry* video = b.find_video(video_id);
        if (!video) {
          report(rel, video_id, "alignment annotation for unknown video");
          continue;
        }
        json j;
        try {
          j = load_json_file(file);
        } catch (const DataError& e) {
          report(rel, video_id, e.what());
          continue;
        }
        AlignmentAnnotation a;
        a.annotator_id = annotator;
        a.video_id = video_id;
        try {
          a.labels = j.get<std::vector<int>>();
        } catch (const json::exception& e) {
          report(rel, video_id, std::string("expected an array of pages: ") + e.what());
          continue;
        }
        if (a.labels.size() != video->sentences.size()) {
          report(rel, video_id,
                 "annotation has " + std::to_string(a.labels.size()) + " labels for " +
                     std::to_string(video->sentences.size()) + " sentences");
          continue;
        }
        const SlideDeck* deck = b.find_deck(video->deck_id);
        const int pages = deck ? static_cast<int>(deck->pages.size()) : 0;
        bool ok = true;
        for (int label : a.labels) {
          if (label < 1 || (pages > 0 && label > pages)) {
            report(rel, video_id, "page " + std::to_string(label) + " out of range 1.." + std::to_string(pages));
            ok = false;
            break;
          }
        }
        if (ok) b.alignment_annotations.push_back(std::move(a));
      }
    }
    std::sort(b.alignment_annotations.begin(), b.alignment_annotations.end(),
              [](const AlignmentAnnotation& a, const AlignmentAnnotation& c) {
                return std::tie(a.annotator_id, a.video_id) < std::tie(c.annotator_id, c.video_id);
              });
  }

  void load_link_annotations() {
    const fs::path base = dir / "annotations" / "links";
    for (const auto& file : sorted_entries(base, /*directories=*/false)) {
      if (file.extension() != ".json") continue;
      const std::string annotator = file.stem().string();
      const std::string rel = "annotations/links/" + annotator + ".json";
      json j;
      try {
        j = load_json_file(file);
      } catch (const DataError& e) {
        report(rel, annotator, e.what());
        continue;
      }
      try {
        for (const auto& lj : j) {
          LinkAnnotation l;
          l.annotator_id = annotator;
          l.leaf_id = lj.at("leaf_id").get<std::string>();
          l.leaf_kind = lj.at("leaf_kind").get<std::string>();
          for (int v : lj.at("vignettes").get<std::vector<int>>()) l.linked_vignettes.insert(v);
          if (l.leaf_kind == "section") {
            if (!b.find_section(l.leaf_id)) report(rel, l.leaf_id, "link names unknown section");
          } else if (l.leaf_kind == "thread") {
            if (!b.find_thread(l.leaf_id)) report(rel, l.leaf_id, "link names unknown thread");
          } else {
            report(rel, l.leaf_id, "leaf_kind must be \"section\" or \"thread\", got \"" + l.leaf_kind + "\"");
          }
          b.link_annotations.push_back(std::move(l));
        }
      } catch (const json::exception& e) {
        report(rel, annotator, std::string("bad link annotation file: ") + e.what());
      }
    }
    std::sort(b.link_annotations.begin(), b.link_annotations.end(),
              [](const LinkAnnotation& a, const LinkAnnotation& c) {
                return std::tie(a.annotator_id, a.leaf_kind, a.leaf_id) <
                       std::tie(c.annotator_id, c.leaf_kind, c.leaf_id);
              });
  }

  void load_frames() {
    const std::string rel = "frames/index.json";
    if (!fs::exists(dir / rel)) return;
    auto j = read_json(rel);
    if (!j) return;
    try {
      for (const auto& [video_id, list] : j->items()) {
        if (!b.find_video(video_id)) {
          report(rel, video_id, "frame index names unknown video");
          continue;
        }
        std::vector<FrameRef> refs;
        for (const auto& fj : list) {
          FrameRef f;
          f.ms = fj.at("ms").get<std::int64_t>();
          f.file = fj.at("file").get<std::string>();
          if (!refs.empty() && f.ms <= refs.back().ms) {
            report(rel, video_id, "frame timestamps must be strictly increasing");
            break;
          }
          if (!fs::exists(dir / f.file))
            report(rel, video_id, "frame file missing: " + f.file);
          refs.push_back(std::move(f));
        }
        b.frames[video_id] = std::move(refs);
      }
    } catch (const json::exception& e) {
      report(rel, "", std::string("bad frame index: ") + e.what());
    }
  }

  void cross_check_links() {
    if (b.link_annotations.empty()) return;
    if (b.alignment_annotations.empty()) {
      report("annotations/links", "", "link annotations present but no alignment annotations to derive vignettes from");
      return;
    }
    const auto consensus = consensus_alignments(b);
    const auto vignettes = course_vignettes(b, consensus);
    const int n = static_cast<int>(vignettes.size());
    for (const auto& l : b.link_annotations) {
      for (int v : l.linked_vignettes) {
        if (v < 1 || v > n) {
          report("annotations/links/" + l.annotator_id + ".json", l.leaf_id,
                 "vignette " + std::to_string(v) + " out of range 1.." + std::to_string(n));
          break;
        }
      }
    }
  }

  LoadResult run() {
    if (!fs::exists(dir)) {
      report(dir.string(), "", "bundle directory does not exist");
      return {std::nullopt, diags};
    }
    load_manifest();
    if (!diags.empty() && b.videos.empty()) return {std::nullopt, diags};
    load_videos();
    load_decks();
    load_sections();
    load_threads();
    load_alignment_annotations();
    load_link_annotations();
    load_frames();
    cross_check_links();
    if (!diags.empty()) return {std::nullopt, diags};
    return {std::move(b), {}};
  }
};

}  // namespace

LoadResult load_bundle_checked(const fs::path& dir) {
  Loader loader;
  loader.dir = dir;
  loader.b.root = dir;
  return loader.run();
}

CourseBundle load_bundle(const fs::path& dir) {
  LoadResult r = load_bundle_checked(dir);
  if (!r.bundle) {
    std::string msg = "invalid bundle at " + dir.string();
    if (!r.diagnostics.empty()) {
      const auto& d = r.diagnostics.front();
      msg += ": " + d.file + ": " + d.message;
      if (r.diagnostics.size() > 1)
        msg += " (+" + std::to_string(r.diagnostics.size() - 1) + " more)";
    }
    throw DataError(msg);
  }
  return std::move(*r.bundle);
}

// ---------------------------------------------------------------------------
// Bundle writing
// ---------------------------------------------------------------------------

namespace {

void dump_json_file(const fs::path& p, const json& j) {
  write_text_file(p, j.dump(2) + "\n");
}

}  // namespace

void write_bundle(const CourseBundle& b, const fs::path& dir) {
  fs::create_directories(dir / "videos");
  fs::create_directories(dir / "slides");

  json manifest;
  manifest["course_id"] = b.course_id;
  manifest["book_id"] = b.book_id;
  manifest["forum_id"] = b.forum_id;
  manifest["videos"] = json::array();
  for (const auto& v : b.videos)
    manifest["videos"].push_back({{"video_id", v.video_id}, {"deck_id", v.deck_id}});
  dump_json_file(dir / "manifest.json", manifest);

  for (const auto& v : b.videos)
    write_text_file(dir / "videos" / (v.video_id + ".srt"), format_srt(v.sentences));

  for (const auto& d : b.decks) {
    json pages = json::array();
    for (const auto& p : d.pages) pages.push_back({{"page", p.page}, {"text", p.text}});
    dump_json_file(dir / "slides" / (d.deck_id + ".json"), pages);
  }

  json sections = json::array();
  for (const auto& s : b.sections)
    sections.push_back({{"section_id", s.section_id}, {"order", s.order}, {"text", s.text}});
  dump_json_file(dir / "textbook.json", sections);

  json threads = json::array();
  for (const auto& t : b.threads) {
    json tj = {{"thread_id", t.thread_id}, {"created_ms", t.created_ms}, {"text", t.text}};
    if (t.tagged_video_id) tj["tagged_video_id"] = *t.tagged_video_id;
    threads.push_back(std::move(tj));
  }
  dump_json_file(dir / "forum.json", threads);

  for (const auto& a : b.alignment_annotations)
    dump_json_file(dir / "annotations" / "alignment" / a.annotator_id / (a.video_id + ".json"),
                   json(a.labels));

  std::map<std::string, json> link_files;
  for (const auto& l : b.link_annotations) {
    json lj = {{"leaf_id", l.leaf_id},
               {"leaf_kind", l.leaf_kind},
               {"vignettes", json(std::vector<int>(l.linked_vignettes.begin(), l.linked_vignettes.end()))}};
    auto [it, inserted] = link_files.try_emplace(l.annotator_id, json::array());
    it->second.push_back(std::move(lj));
  }
  for (const auto& [annotator, arr] : link_files)
    dump_json_file(dir / "annotations" / "links" / (annotator + ".json"), arr);

  if (!b.frames.empty()) {
    json index = json::object();
    for (const auto& [video_id, refs] : b.frames) {
      json arr = json::array();
      for (const auto& f : refs) arr.push_back({{"ms", f.ms}, {"file", f.file}});
      index[video_id] = std::move(arr);
    }
    dump_json_file(dir / "frames" / "index.json", index);
  }
}

// ---------------------------------------------------------------------------
// Canonical JSON round trip
// ---------------------------------------------------------------------------

json bundle_to_json(const CourseBundle& b) {
  json j;
  j["course_id"] = b.course_id;
  j["book_id"] = b.book_id;
  j["forum_id"] = b.forum_id;
  j["videos"] = json::array();
  for (const auto& v : b.videos) {
    json sentences = json::array();
    for (const auto& s : v.sentences)
      sentences.push_back({{"index", s.index},
                           {"text", s.text},
                           {"start_ms", s.start_ms},
                           {"end_ms", s.end_ms}});
    j["videos"].push_back({{"video_id", v.video_id},
                           {"deck_id", v.deck_id},
                           {"sentences", std::move(sentences)}});
  }
  j["decks"] = json::array();
  for (const auto& d : b.decks) {
    json pages = json::array();
    for (const auto& p : d.pages) pages.push_back({{"page", p.page}, {"text", p.text}});
    j["decks"].push_back({{"deck_id", d.deck_id}, {"pages", std::move(pages)}});
  }
  j["sections"] = json::array();
  for (const auto& s : b.sections)
    j["sections"].push_back({{"section_id", s.section_id}, {"order", s.order}, {"text", s.text}});
  j["threads"] = json::array();
  for (const auto& t : b.threads) {
    json tj = {{"thread_id", t.thread_id}, {"created_ms", t.created_ms}, {"text", t.text}};
    if (t.tagged_video_id) tj["tagged_video_id"] = *t.tagged_video_id;
    j["threads"].push_back(std::move(tj));
  }
  j["alignment_annotations"] = json::array();
  for (const auto& a : b.alignment_annotations)
    j["alignment_annotations"].push_back(
        {{"annotator_id", a.annotator_id}, {"video_id", a.video_id}, {"labels", a.labels}});
  j["link_annotations"] = json::array();
  for (const auto& l : b.link_annotations)
    j["link_annotations"].push_back(
        {{"annotator_id", l.annotator_id},
         {"leaf_id", l.leaf_id},
         {"leaf_kind", l.leaf_kind},
         {"vignettes", std::vector<int>(l.linked_vignettes.begin(), l.linked_vignettes.end())}});
  j["frames"] = json::object();
  for (const auto& [video_id, refs] : b.frames) {
    json arr = json::array();
    for (const auto& f : refs) arr.push_back({{"ms", f.ms}, {"file", f.file}});
    j["frames"][video_id] = std::move(arr);
  }
  return j;
}

CourseBundle bundle_from_json(const json& j) {
  CourseBundle b;
  try {
    b.course_id = j.at("course_id").get<std::string>();
    b.book_id = j.at("book_id").get<std::string>();
    b.forum_id = j.at("forum_id").get<std::string>();
    for (const auto& vj : j.at("videos")) {
      VideoEntry v;
      v.video_id = vj.at("video_id").get<std::string>();
      v.deck_id = vj.at("deck_id").get<std::string>();
      for (const auto& sj : vj.at("sentences"))
        v.sentences.push_back(Sentence{sj.at("index").get<int>(), sj.at("text").get<std::string>(),
                                       sj.at("start_ms").get<std::int64_t>(),
                                       sj.at("end_ms").get<std::int64_t>()});
      b.videos.push_back(std::move(v));
    }
    for (const auto& dj : j.at("decks")) {
      SlideDeck d;
      d.deck_id = dj.at("deck_id").get<std::string>();
      for (const auto& pj : dj.at("pages"))
        d.pages.push_back(SlidePage{pj.at("page").get<int>(), pj.at("text").get<std::string>()});
      b.decks.push_back(std::move(d));
    }
    for (const auto& sj : j.at("sections"))
      b.sections.push_back(TextbookSection{sj.at("section_id").get<std::string>(),
                                           sj.at("order").get<int>(),
                                           sj.at("text").get<std::string>()});
    for (const auto& tj : j.at("threads")) {
      DiscussionThread t;
      t.thread_id = tj.at("thread_id").get<std::string>();
      t.created_ms = tj.at("created_ms").get<std::int64_t>();
      t.text = tj.at("text").get<std::string>();
      if (tj.contains("tagged_video_id"))
        t.tagged_video_id = tj.at("tagged_video_id").get<std::string>();
      b.threads.push_back(std::move(t));
    }
    for (const auto& aj : j.at("alignment_annotations"))
      b.alignment_annotations.push_back(AlignmentAnnotation{
          aj.at("annotator_id").get<std::string>(), aj.at("video_id").get<std::string>(),
          aj.at("labels").get<std::vector<int>>()});
    for (const auto& lj : j.at("link_annotations")) {
      LinkAnnotation l;
      l.annotator_id = lj.at("annotator_id").get<std::string>();
      l.leaf_id = lj.at("leaf_id").get<std::string>();
      l.leaf_kind = lj.at("leaf_kind").get<std::string>();
      for (int v : lj.at("vignettes").get<std::vector<int>>()) l.linked_vignettes.insert(v);
      b.link_annotations.push_back(std::move(l));
    }
    for (const auto& [video_id, list] : j.at("frames").items()) {
      std::vector<FrameRef> refs;
      for (const auto& fj : list)
        refs.push_back(FrameRef{fj.at("ms").get<std::int64_t>(), fj.at("file").get<std::string>()});
      b.frames[video_id] = std::move(refs);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("bad bundle json: ") + e.what());
  }
  return b;
}

// ---------------------------------------------------------------------------
// Consensus
// ---------------------------------------------------------------------------

AlignmentAnnotation majority_vote_alignment(std::span<const AlignmentAnnotation> annotations) {
  if (annotations.empty()) throw DataError("majority_vote_alignment: no annotations");
  const auto& first = annotations.front();
  if (first.labels.empty()) throw DataError("majority_vote_alignment: empty label sequence");
  for (const auto& a : annotations) {
    if (a.video_id != first.video_id)
      throw DataError("majority_vote_alignment: annotations span different videos");
    if (a.labels.size() != first.labels.size())
      throw DataError("majority_vote_alignment: annotations disagree on sentence count for video " +
                      a.video_id);
  }
  AlignmentAnnotation out;
  out.annotator_id = "consensus";
  out.video_id = first.video_id;
  out.labels.resize(first.labels.size());
  for (size_t t = 0; t < first.labels.size(); ++t) {
    std::map<int, int> votes;  // ordered: ties resolve to the smallest page
    for (const auto& a : annotations) ++votes[a.labels[t]];
    int best_label = 0, best_count = -1;
    for (const auto& [label, count] : votes) {
      if (count > best_count) {
        best_label = label;
        best_count = count;
      }
    }
    out.labels[t] = best_label;
  }
  return out;
}

std::set<int> majority_vote_links(const std::vector<std::set<int>>& per_annotator) {
  const int n = static_cast<int>(per_annotator.size());
  std::map<int, int> votes;
  for (const auto& s : per_annotator)
    for (int v : s) ++votes[v];
  std::set<int> out;
  for (const auto& [v, count] : votes)
    if (2 * count > n) out.insert(v);
  return out;
}

std::map<std::string, AlignmentAnnotation> consensus_alignments(const CourseBundle& b) {
  std::map<std::string, std::vector<AlignmentAnnotation>> by_video;
  for (const auto& a : b.alignment_annotations) by_video[a.video_id].push_back(a);
  std::map<std::string, AlignmentAnnotation> out;
  for (const auto& [video_id, list] : by_video) out[video_id] = majority_vote_alignment(list);
  return out;
}

std::vector<LinkAnnotation> consensus_links(const CourseBundle& b) {
  const auto annotators = b.link_annotator_ids();
  if (annotators.empty()) return {};
  // (annotator, kind, leaf) -> marked set
  std::map<std::tuple<std::string, std::string, std::string>, std::set<int>> marked;
  for (const auto& l : b.link_annotations)
    marked[{l.annotator_id, l.leaf_kind, l.leaf_id}] = l.linked_vignettes;

  auto vote = [&](const std::string& kind, const std::string& leaf_id) {
    std::vector<std::set<int>> per_annotator;
    for (const auto& a : annotators) {
      auto it = marked.find({a, kind, leaf_id});
      per_annotator.push_back(it == marked.end() ? std::set<int>{} : it->second);
    }
    LinkAnnotation out;
    out.annotator_id = "consensus";
    out.leaf_id = leaf_id;
    out.leaf_kind = kind;
    out.linked_vignettes = majority_vote_links(per_annotator);
    return out;
  };

  std::vector<LinkAnnotation> out;
  for (const auto& s : b.sections) out.push_back(vote("section", s.section_id));
  for (const auto& t : b.threads) out.push_back(vote("thread", t.thread_id));
  return out;
}

// ---------------------------------------------------------------------------
// Vignettes and the linking tree
// ---------------------------------------------------------------------------

std::vector<VideoVignette> vignettes_for_video(const std::string& video_id,
                                               std::span<const int> labels) {
  std::vector<VideoVignette> out;
  size_t t = 0;
  while (t < labels.size()) {
    size_t end = t;
    while (end + 1 < labels.size() && labels[end + 1] == labels[t]) ++end;
    out.push_back(VideoVignette{video_id, labels[t], static_cast<int>(t), static_cast<int>(end), 0});
    t = end + 1;
  }
  return out;
}

std::vector<VideoVignette> course_vignettes(
    const CourseBundle& b, const std::map<std::string, AlignmentAnnotation>& alignments) {
  std::vector<VideoVignette> out;
  for (const auto& v : b.videos) {
    auto it = alignments.find(v.video_id);
    if (it == alignments.end()) continue;
    for (auto& vg : vignettes_for_video(v.video_id, it->second.labels)) {
      vg.course_order = static_cast<int>(out.size()) + 1;
      out.push_back(vg);
    }
  }
  return out;
}

LinkingTree build_linking_tree(const CourseBundle& b,
                               const std::vector<VideoVignette>& vignettes,
                               std::span<const LinkAnnotation> links) {
  LinkingTree tree;
  tree.vignettes = vignettes;
  for (const auto& vg : vignettes) {
    const std::string id = "vg:" + std::to_string(vg.course_order);
    tree.trunk.push_back(id);
    std::vector<LeafRef> leaf_list;
    if (const VideoEntry* video = b.find_video(vg.video_id))
      leaf_list.push_back(LeafRef{
          "slide:" + video->deck_id + ":" + std::to_string(vg.slide_page), "slide"});
    tree.leaves[id] = std::move(leaf_list);
  }
  for (const auto& l : links) {
    for (int course_order : l.linked_vignettes) {
      if (course_order < 1 || course_order > static_cast<int>(vignettes.size()))
        throw DataError("linking tree: vignette " + std::to_string(course_order) +
                        " out of range for leaf " + l.leaf_id);
      tree.leaves["vg:" + std::to_string(course_order)].push_back(LeafRef{l.leaf_id, l.leaf_kind});
    }
  }
  return tree;
}

json tree_to_json(const LinkingTree& tree) {
  json j;
  j["trunk"] = tree.trunk;
  j["vignettes"] = json::array();
  for (const auto& vg : tree.vignettes)
    j["vignettes"].push_back({{"video_id", vg.video_id},
                              {"slide_page", vg.slide_page},
                              {"first_sentence", vg.first_sentence},
                              {"last_sentence", vg.last_sentence},
                              {"course_order", vg.course_order}});
  j["leaves"] = json::object();
  for (const auto& [trunk_id, refs] : tree.leaves) {
    json arr = json::array();
    for (const auto& r : refs) arr.push_back({{"leaf_id", r.leaf_id}, {"leaf_kind", r.leaf_kind}});
    j["leaves"][trunk_id] = std::move(arr);
  }
  return j;
}

LinkingTree tree_from_json(const json& j) {
  LinkingTree tree;
  try {
    tree.trunk = j.at("trunk").get<std::vector<std::string>>();
    for (const auto& vj : j.at("vignettes"))
      tree.vignettes.push_back(VideoVignette{vj.at("video_id").get<std::string>(),
                                             vj.at("slide_page").get<int>(),
                                             vj.at("first_sentence").get<int>(),
                                             vj.at("last_sentence").get<int>(),
                                             vj.at("course_order").get<int>()});
    for (const auto& [trunk_id, arr] : j.at("leaves").items()) {
      std::vector<LeafRef> refs;
      for (const auto& rj : arr)
        refs.push_back(LeafRef{rj.at("leaf_id").get<std::string>(),
                               rj.at("leaf_kind").get<std::string>()});
      tree.leaves[trunk_id] = std::move(refs);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("bad tree json: ") + e.what());
  }
  return tree;
}

}  // namespace linkforge::corpus
