#include "support/synthcourse.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "linkforge/visual.hpp"

namespace synthcourse {

using namespace linkforge;

namespace {

constexpr int kWordsPerPage = 8;
constexpr int kFillerWords = 32;

std::string page_word(int video, int page, int i) {
  return "w" + std::to_string(video) + "p" + std::to_string(page) + "x" + std::to_string(i);
}

std::string filler_word(int i) { return "filler" + std::to_string(i); }

std::string two_digits(int i) {
  return (i < 10 ? "0" : "") + std::to_string(i);
}

// Contiguous run lengths covering `total` positions with `runs` runs, each of
// length >= 2, mildly jittered.
std::vector<int> run_lengths(int total, int runs, std::mt19937_64& rng) {
  std::vector<int> len(runs, total / runs);
  for (int p = 0; p < total % runs; ++p) ++len[p];
  std::uniform_int_distribution<int> shift(-1, 1);
  for (int p = 0; p + 1 < runs; ++p) {
    const int s = shift(rng);
    if (len[p] + s >= 2 && len[p + 1] - s >= 2) {
      len[p] += s;
      len[p + 1] -= s;
    }
  }
  return len;
}

struct TranscriptSpec {
  int videos;
  int sentences;
  int pages;
  int tokens;
  double noise;
};

// Videos, decks and gold alignment annotations (annotator "gen").
void fill_transcripts(corpus::CourseBundle& b, const TranscriptSpec& ts, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick_word(0, kWordsPerPage - 1);
  std::uniform_int_distribution<int> pick_filler(0, kFillerWords - 1);
  std::bernoulli_distribution coin(0.5);

  for (int v = 0; v < ts.videos; ++v) {
    corpus::VideoEntry video;
    video.video_id = "vid" + two_digits(v + 1);
    video.deck_id = "deck" + two_digits(v + 1);

    corpus::SlideDeck deck;
    deck.deck_id = video.deck_id;
    for (int p = 1; p <= ts.pages; ++p) {
      std::string text;
      for (int i = 0; i < kWordsPerPage; ++i) {
        if (!text.empty()) text += ' ';
        text += page_word(v, p, i);
      }
      deck.pages.push_back(corpus::SlidePage{p, text});
    }

    std::vector<int> gold;
    const std::vector<int> lens = run_lengths(ts.sentences, ts.pages, rng);
    for (int p = 0; p < ts.pages; ++p)
      for (int i = 0; i < lens[p]; ++i) gold.push_back(p + 1);

    std::bernoulli_distribution is_noise(ts.noise);
    std::uniform_int_distribution<int> other_offset(1, ts.pages - 1);
    for (int t = 0; t < ts.sentences; ++t) {
      const int g = gold[t];
      const int confusion = (g - 1 + other_offset(rng)) % ts.pages + 1;
      std::string text;
      for (int i = 0; i < ts.tokens; ++i) {
        std::string w;
        if (!is_noise(rng))
          w = page_word(v, g, pick_word(rng));
        else if (coin(rng))
          w = page_word(v, confusion, pick_word(rng));
        else
          w = filler_word(pick_filler(rng));
        if (!text.empty()) text += ' ';
        text += w;
      }
      video.sentences.push_back(
          corpus::Sentence{t, text, t * 5000LL, t * 5000LL + 4800});
    }

    b.alignment_annotations.push_back(
        corpus::AlignmentAnnotation{"gen", video.video_id, gold});
    b.videos.push_back(std::move(video));
    b.decks.push_back(std::move(deck));
  }
}

constexpr std::uint8_t kPalette[8][3] = {
    {220, 30, 30}, {30, 220, 30},  {30, 30, 220},  {220, 220, 30},
    {220, 30, 220}, {30, 220, 220}, {240, 140, 40}, {120, 60, 200},
};

visual::Image solid_color(int page) {
  visual::Image img;
  img.width = 8;
  img.height = 8;
  img.rgb.resize(3 * 8 * 8);
  const auto& c = kPalette[(page - 1) % 8];
  for (size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = c[0];
    img.rgb[i + 1] = c[1];
    img.rgb[i + 2] = c[2];
  }
  return img;
}

void write_frames(corpus::CourseBundle& b, const std::filesystem::path& root) {
  b.root = root;
  for (const auto& a : b.alignment_annotations) {
    const std::string& vid = a.video_id;
    std::filesystem::create_directories(root / "frames" / vid);
    std::vector<corpus::FrameRef> refs;
    for (size_t t = 0; t < a.labels.size(); ++t) {
      const std::string rel = "frames/" + vid + "/f" + std::to_string(t) + ".ppm";
      visual::write_ppm(solid_color(a.labels[t]), root / rel);
      refs.push_back(corpus::FrameRef{static_cast<std::int64_t>(t) * 5000 + 100, rel});
    }
    b.frames[vid] = std::move(refs);
  }
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

corpus::CourseBundle make_align_bundle(const AlignSpec& spec) {
  corpus::CourseBundle b;
  b.course_id = "synth-align";
  b.book_id = "synth-book";
  b.forum_id = "synth-forum";
  std::mt19937_64 rng(spec.seed);
  fill_transcripts(b,
                   TranscriptSpec{spec.videos, spec.sentences_per_video, spec.pages_per_deck,
                                  spec.tokens_per_sentence, spec.noise},
                   rng);
  if (!spec.frames_root.empty()) write_frames(b, spec.frames_root);
  return b;
}

corpus::CourseBundle make_link_bundle(const LinkSpec& spec) {
  corpus::CourseBundle b;
  b.course_id = "synth-link";
  b.book_id = "synth-book";
  b.forum_id = "synth-forum";
  std::mt19937_64 rng(spec.seed);
  fill_transcripts(b,
                   TranscriptSpec{spec.videos, spec.sentences_per_video, spec.pages_per_deck,
                                  /*tokens=*/6, /*noise=*/0.15},
                   rng);

  const auto vignettes = corpus::course_vignettes(b, corpus::consensus_alignments(b));
  const int n = static_cast<int>(vignettes.size());

  const auto vignette_words = [&](const corpus::VideoVignette& vg) {
    const corpus::VideoEntry* video = b.find_video(vg.video_id);
    std::vector<std::string> words;
    for (int i = vg.first_sentence; i <= vg.last_sentence; ++i) {
      auto w = split_words(video->sentences[i].text);
      words.insert(words.end(), w.begin(), w.end());
    }
    return words;
  };

  std::uniform_int_distribution<int> pick_filler(0, kFillerWords - 1);
  const auto leaf_text = [&](const corpus::VideoVignette& vg, double signal) {
    const std::vector<std::string> pool = vignette_words(vg);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(pool.size()) - 1);
    std::bernoulli_distribution from_pool(signal);
    std::string text;
    for (int i = 0; i < spec.leaf_tokens; ++i) {
      if (!text.empty()) text += ' ';
      text += from_pool(rng) ? pool[pick(rng)] : filler_word(pick_filler(rng));
    }
    return text;
  };

  // Targets spread over the course, in shuffled assignment order.
  std::vector<int> section_targets(spec.sections), thread_targets(spec.threads);
  for (int j = 0; j < spec.sections; ++j)
    section_targets[j] = static_cast<int>(static_cast<long>(j) * n / spec.sections);
  for (int j = 0; j < spec.threads; ++j)
    thread_targets[j] = static_cast<int>((2L * j + 1) * n / (2 * spec.threads));
  std::shuffle(section_targets.begin(), section_targets.end(), rng);
  std::shuffle(thread_targets.begin(), thread_targets.end(), rng);

  for (int j = 0; j < spec.sections; ++j) {
    const corpus::VideoVignette& vg = vignettes[section_targets[j]];
    corpus::TextbookSection s;
    s.section_id = "sec" + two_digits(j + 1);
    s.order = j + 1;
    s.text = leaf_text(vg, spec.section_signal);
    b.sections.push_back(std::move(s));
    corpus::LinkAnnotation l;
    l.annotator_id = "gen";
    l.leaf_id = b.sections.back().section_id;
    l.leaf_kind = "section";
    l.linked_vignettes = {vg.course_order};
    b.link_annotations.push_back(std::move(l));
  }

  // Thread text mixes the target vignette's words with two vignettes from
  // other videos, so text alone is close to a three-way tie and the forum tag
  // is what localizes the right video.
  const auto thread_text = [&](const corpus::VideoVignette& vg) {
    const std::vector<std::string> target_pool = vignette_words(vg);
    std::vector<int> others;
    for (int i = 0; i < n; ++i)
      if (vignettes[i].video_id != vg.video_id) others.push_back(i);
    std::shuffle(others.begin(), others.end(), rng);
    std::vector<std::vector<std::string>> distractor_pools;
    for (size_t i = 0; i < 2 && i < others.size(); ++i)
      distractor_pools.push_back(vignette_words(vignettes[others[i]]));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::string text;
    for (int i = 0; i < spec.leaf_tokens; ++i) {
      if (!text.empty()) text += ' ';
      const double r = coin(rng);
      if (r < spec.thread_signal || distractor_pools.empty()) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(target_pool.size()) - 1);
        text += target_pool[pick(rng)];
      } else if (r < spec.thread_signal + spec.thread_distractor) {
        const auto& pool = distractor_pools[rng() % distractor_pools.size()];
        std::uniform_int_distribution<int> pick(0, static_cast<int>(pool.size()) - 1);
        text += pool[pick(rng)];
      } else {
        text += filler_word(pick_filler(rng));
      }
    }
    return text;
  };

  std::vector<int> tagged(spec.threads, 0);
  const int tagged_count =
      static_cast<int>(spec.tagged_fraction * spec.threads + 0.5);
  for (int j = 0; j < tagged_count && j < spec.threads; ++j) tagged[j] = 1;
  std::shuffle(tagged.begin(), tagged.end(), rng);

  for (int j = 0; j < spec.threads; ++j) {
    const corpus::VideoVignette& vg = vignettes[thread_targets[j]];
    corpus::DiscussionThread t;
    t.thread_id = "th" + two_digits(j + 1);
    t.created_ms = 1000LL * (j + 1);
    t.text = thread_text(vg);
    if (tagged[j]) t.tagged_video_id = vg.video_id;
    b.threads.push_back(std::move(t));
    corpus::LinkAnnotation l;
    l.annotator_id = "gen";
    l.leaf_id = b.threads.back().thread_id;
    l.leaf_kind = "thread";
    l.linked_vignettes = {vg.course_order};
    b.link_annotations.push_back(std::move(l));
  }

  return b;
}

}  // namespace synthcourse
