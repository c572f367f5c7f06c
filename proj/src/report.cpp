#include "linkforge/report.hpp"

#include <sstream>

namespace linkforge::report {

namespace {

std::string html_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

// First 200 bytes, trimmed back to a UTF-8 boundary, with an ellipsis when
// anything was cut.
std::string excerpt(const std::string& text) {
  constexpr size_t kLimit = 200;
  if (text.size() <= kLimit) return text;
  size_t end = kLimit;
  while (end > 0 && (static_cast<unsigned char>(text[end]) & 0xc0) == 0x80) --end;
  return text.substr(0, end) + "\xe2\x80\xa6";
}

struct LeafView {
  std::string kind;
  std::string label;
  std::string text;
};

LeafView resolve_leaf(const corpus::CourseBundle& bundle, const corpus::LeafRef& leaf) {
  if (leaf.leaf_kind == "slide") {
    const std::string body = leaf.leaf_id.substr(0, 6) == "slide:" ? leaf.leaf_id.substr(6) : "";
    const size_t colon = body.rfind(':');
    if (colon == std::string::npos)
      throw DataError("report: malformed slide leaf id " + leaf.leaf_id);
    const std::string deck_id = body.substr(0, colon);
    const int page = std::atoi(body.c_str() + colon + 1);
    const corpus::SlideDeck* deck = bundle.find_deck(deck_id);
    if (!deck || page < 1 || page > static_cast<int>(deck->pages.size()))
      throw DataError("report: tree references unknown slide " + leaf.leaf_id);
    return {"slide", deck_id + " p." + std::to_string(page), deck->pages[page - 1].text};
  }
  if (leaf.leaf_kind == "section") {
    const corpus::TextbookSection* s = bundle.find_section(leaf.leaf_id);
    if (!s) throw DataError("report: tree references unknown section " + leaf.leaf_id);
    return {"section", leaf.leaf_id, s->text};
  }
  if (leaf.leaf_kind == "thread") {
    const corpus::DiscussionThread* t = bundle.find_thread(leaf.leaf_id);
    if (!t) throw DataError("report: tree references unknown thread " + leaf.leaf_id);
    return {"thread", leaf.leaf_id, t->text};
  }
  throw DataError("report: unknown leaf kind " + leaf.leaf_kind);
}

std::string vignette_text(const corpus::CourseBundle& bundle, const corpus::VideoVignette& vg) {
  const corpus::VideoEntry* video = bundle.find_video(vg.video_id);
  if (!video) throw DataError("report: tree references unknown video " + vg.video_id);
  if (vg.first_sentence < 0 || vg.last_sentence >= static_cast<int>(video->sentences.size()) ||
      vg.first_sentence > vg.last_sentence)
    throw DataError("report: vignette sentence span is outside video " + vg.video_id);
  std::string text;
  for (int i = vg.first_sentence; i <= vg.last_sentence; ++i) {
    if (!text.empty()) text += " ";
    text += video->sentences[i].text;
  }
  return text;
}

}  // namespace

std::string render_tree_html(const corpus::CourseBundle& bundle, const corpus::LinkingTree& tree,
                             const std::string& tree_json_text, std::uint64_t seed) {
  if (tree.trunk.size() != tree.vignettes.size())
    throw DataError("report: trunk and vignette lists differ in length");

  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n"
      << "<meta charset=\"utf-8\">\n"
      << "<meta name=\"tool-version\" content=\"" << kToolVersion << "\">\n"
      << "<meta name=\"seed\" content=\"" << seed << "\">\n"
      << "<meta name=\"tree-checksum\" content=\"" << fnv1a64_hex(tree_json_text) << "\">\n"
      << "<title>Linking tree \xe2\x80\x94 " << html_escape(bundle.course_id) << "</title>\n"
      << "<style>\n"
      << "body{font-family:sans-serif;margin:2rem auto;max-width:60rem;color:#222}\n"
      << "h1{font-size:1.4rem}\n"
      << ".vignette{border:1px solid #ccc;border-radius:6px;padding:.6rem .9rem;margin:.7rem 0}\n"
      << ".vignette h2{font-size:1rem;margin:.1rem 0 .4rem}\n"
      << ".meta{color:#666;font-size:.85rem}\n"
      << "ul.leaves{list-style:none;margin:.4rem 0 0;padding-left:.2rem}\n"
      << "li.leaf{margin:.25rem 0;padding:.3rem .5rem;background:#f7f7f7;border-radius:4px}\n"
      << ".badge{display:inline-block;font-size:.75rem;padding:.05rem .45rem;border-radius:8px;"
         "margin-right:.5rem;color:#fff}\n"
      << ".badge-slide{background:#3566a5}\n"
      << ".badge-section{background:#2e7d32}\n"
      << ".badge-thread{background:#b26a00}\n"
      << ".excerpt{font-size:.9rem}\n"
      << "</style>\n</head>\n<body>\n"
      << "<h1>Linking tree \xe2\x80\x94 " << html_escape(bundle.course_id) << "</h1>\n"
      << "<p class=\"meta\">" << tree.vignettes.size() << " vignettes &middot; course "
      << html_escape(bundle.course_id) << " &middot; book " << html_escape(bundle.book_id)
      << " &middot; forum " << html_escape(bundle.forum_id) << "</p>\n";

  for (size_t i = 0; i < tree.vignettes.size(); ++i) {
    const corpus::VideoVignette& vg = tree.vignettes[i];
    const std::string& trunk_id = tree.trunk[i];
    out << "<section class=\"vignette\" id=\"" << html_escape(trunk_id) << "\">\n"
        << "<h2>" << html_escape(trunk_id) << " <span class=\"meta\">video "
        << html_escape(vg.video_id) << ", sentences " << vg.first_sentence << "\xe2\x80\x93"
        << vg.last_sentence << ", page " << vg.slide_page << "</span></h2>\n"
        << "<p class=\"excerpt\">" << html_escape(excerpt(vignette_text(bundle, vg)))
        << "</p>\n";
    const auto it = tree.leaves.find(trunk_id);
    if (it != tree.leaves.end() && !it->second.empty()) {
      out << "<ul class=\"leaves\">\n";
      for (const corpus::LeafRef& leaf : it->second) {
        const LeafView view = resolve_leaf(bundle, leaf);
        out << "<li class=\"leaf\"><span class=\"badge badge-" << view.kind << "\">" << view.kind
            << "</span><strong>" << html_escape(view.label) << "</strong> "
            << "<span class=\"excerpt\">" << html_escape(excerpt(view.text)) << "</span></li>\n";
      }
      out << "</ul>\n";
    }
    out << "</section>\n";
  }

  out << "<footer class=\"meta\"><p>tool " << kToolVersion << " &middot; seed " << seed
      << " &middot; tree checksum " << fnv1a64_hex(tree_json_text) << "</p></footer>\n"
      << "</body>\n</html>\n";
  return out.str();
}

}  // namespace linkforge::report
