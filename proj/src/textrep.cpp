#include "linkforge/textrep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "linkforge/corpus.hpp"

namespace linkforge::textrep {

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    const bool word_char = std::isalnum(c) || c >= 0x80;
    if (word_char) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary and tf-idf
// ---------------------------------------------------------------------------

Vocab build_vocab(const std::vector<std::vector<std::string>>& docs) {
  Vocab v;
  v.corpus_size = static_cast<int>(docs.size());
  for (const auto& doc : docs) {
    std::vector<int> seen_in_doc;
    for (const auto& w : doc) {
      auto it = v.index.find(w);
      int id;
      if (it == v.index.end()) {
        id = static_cast<int>(v.words.size());
        v.index.emplace(w, id);
        v.words.push_back(w);
        v.doc_freq.push_back(0);
      } else {
        id = it->second;
      }
      if (std::find(seen_in_doc.begin(), seen_in_doc.end(), id) == seen_in_doc.end())
        seen_in_doc.push_back(id);
    }
    for (int id : seen_in_doc) ++v.doc_freq[id];
  }
  return v;
}

double DocVector::norm() const {
  double s = 0;
  for (const auto& [dim, value] : entries) s += value * value;
  return std::sqrt(s);
}

DocVector tfidf_vector(const std::vector<std::string>& tokens, const Vocab& vocab) {
  std::unordered_map<int, int> counts;
  for (const auto& t : tokens) {
    const int id = vocab.id_of(t);
    if (id >= 0) ++counts[id];
  }
  DocVector out;
  out.kind = VectorKind::bow_tfidf;
  out.entries.reserve(counts.size());
  for (const auto& [id, count] : counts) {
    const double idf = std::log(static_cast<double>(vocab.corpus_size) / vocab.doc_freq[id]);
    out.entries.emplace_back(id, count * idf);
  }
  std::sort(out.entries.begin(), out.entries.end());
  return out;
}

double cosine(const DocVector& a, const DocVector& b) {
  if (a.kind != b.kind)
    throw DataError("cosine: representation kinds differ");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0;
  size_t i = 0, j = 0;
  while (i < a.entries.size() && j < b.entries.size()) {
    if (a.entries[i].first < b.entries[j].first)
      ++i;
    else if (a.entries[i].first > b.entries[j].first)
      ++j;
    else
      dot += a.entries[i++].second * b.entries[j++].second;
  }
  return dot / (na * nb);
}

// ---------------------------------------------------------------------------
// Embedding table IO
// ---------------------------------------------------------------------------

EmbeddingTable load_embeddings(std::istream& in) {
  EmbeddingTable t;
  int count = 0;
  if (!(in >> count >> t.dim) || count < 0 || t.dim <= 0)
    throw DataError("embedding table: bad header");
  t.words.reserve(count);
  t.matrix.reserve(static_cast<size_t>(count) * t.dim);
  for (int i = 0; i < count; ++i) {
    std::string word;
    if (!(in >> word)) throw DataError("embedding table: truncated at row " + std::to_string(i + 1));
    for (int d = 0; d < t.dim; ++d) {
      double v;
      if (!(in >> v))
        throw DataError("embedding table: truncated vector for token \"" + word + "\"");
      t.matrix.push_back(v);
    }
    if (t.index.count(word)) throw DataError("embedding table: duplicate token \"" + word + "\"");
    t.index.emplace(word, i);
    t.words.push_back(std::move(word));
  }
  return t;
}

void save_embeddings(const EmbeddingTable& t, std::ostream& out) {
  out << t.words.size() << ' ' << t.dim << '\n';
  char buf[64];
  for (size_t i = 0; i < t.words.size(); ++i) {
    out << t.words[i];
    for (int d = 0; d < t.dim; ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", t.matrix[i * t.dim + d]);
      out << ' ' << buf;
    }
    out << '\n';
  }
}

DocVector embed_doc(const std::vector<std::string>& tokens, const EmbeddingTable& table) {
  std::vector<double> sum(table.dim, 0.0);
  int hits = 0;
  for (const auto& t : tokens) {
    const int id = table.id_of(t);
    if (id < 0) continue;
    const double* row = table.row(id);
    for (int d = 0; d < table.dim; ++d) sum[d] += row[d];
    ++hits;
  }
  DocVector out;
  out.kind = VectorKind::embedding_avg;
  out.entries.reserve(table.dim);
  for (int d = 0; d < table.dim; ++d)
    out.entries.emplace_back(d, hits ? sum[d] / hits : 0.0);
  return out;
}

// ---------------------------------------------------------------------------
// CBOW
// ---------------------------------------------------------------------------

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Context block b (0..2k-1) looks at offset b-k for b<k, else b-k+1: the
// center itself is excluded.
inline int block_offset(int b, int k) { return b < k ? b - k : b - k + 1; }

}  // namespace

std::vector<double> CbowModel::word_vector(int word) const {
  const int blocks = 2 * window;
  std::vector<double> out(dim, 0.0);
  for (int h = 0; h < dim; ++h) {
    double s = 0;
    for (int b = 0; b < blocks; ++b)
      s += w1[static_cast<size_t>(h) * blocks * vocab + static_cast<size_t>(b) * vocab + word];
    out[h] = s / blocks;
  }
  return out;
}

CbowModel cbow_init(int vocab_size, const CbowConfig& cfg) {
  if (vocab_size <= 0) throw DataError("cbow: empty vocabulary");
  if (cfg.dim <= 0 || cfg.window <= 0) throw DataError("cbow: dim and window must be positive");
  CbowModel m;
  m.vocab = vocab_size;
  m.window = cfg.window;
  m.dim = cfg.dim;
  std::mt19937_64 rng(cfg.seed);
  const double half = 0.5 / cfg.dim;
  std::uniform_real_distribution<double> dist(-half, half);
  m.w1.resize(static_cast<size_t>(cfg.dim) * 2 * cfg.window * vocab_size);
  m.w2.resize(static_cast<size_t>(vocab_size) * cfg.dim);
  for (auto& w : m.w1) w = dist(rng);
  for (auto& w : m.w2) w = dist(rng);
  return m;
}

CbowGradient cbow_loss_and_gradient(const CbowModel& m, const std::vector<int>& doc, int center) {
  const int blocks = 2 * m.window;
  const int n = static_cast<int>(doc.size());
  const size_t in_width = static_cast<size_t>(blocks) * m.vocab;

  std::vector<int> ctx(blocks, -1);
  for (int b = 0; b < blocks; ++b) {
    const int pos = center + block_offset(b, m.window);
    if (pos >= 0 && pos < n) ctx[b] = doc[pos];
  }

  // Forward pass.
  std::vector<double> act(m.dim), hidden(m.dim);
  for (int h = 0; h < m.dim; ++h) {
    double a = 0;
    for (int b = 0; b < blocks; ++b)
      if (ctx[b] >= 0) a += m.w1[h * in_width + static_cast<size_t>(b) * m.vocab + ctx[b]];
    act[h] = a;
    hidden[h] = sigmoid(a);
  }
  std::vector<double> scores(m.vocab);
  double max_score = -1e300;
  for (int o = 0; o < m.vocab; ++o) {
    double s = 0;
    for (int h = 0; h < m.dim; ++h) s += m.w2[static_cast<size_t>(o) * m.dim + h] * hidden[h];
    scores[o] = s;
    max_score = std::max(max_score, s);
  }
  double z = 0;
  for (int o = 0; o < m.vocab; ++o) z += std::exp(scores[o] - max_score);
  const int target = doc[center];

  CbowGradient g;
  g.loss = -(scores[target] - max_score - std::log(z));
  g.d_w1.assign(m.w1.size(), 0.0);
  g.d_w2.assign(m.w2.size(), 0.0);

  // Backward pass: d loss / d score = softmax - onehot(target).
  std::vector<double> d_hidden(m.dim, 0.0);
  for (int o = 0; o < m.vocab; ++o) {
    const double p = std::exp(scores[o] - max_score) / z;
    const double ds = p - (o == target ? 1.0 : 0.0);
    for (int h = 0; h < m.dim; ++h) {
      g.d_w2[static_cast<size_t>(o) * m.dim + h] = ds * hidden[h];
      d_hidden[h] += ds * m.w2[static_cast<size_t>(o) * m.dim + h];
    }
  }
  for (int h = 0; h < m.dim; ++h) {
    const double da = d_hidden[h] * hidden[h] * (1.0 - hidden[h]);
    for (int b = 0; b < blocks; ++b)
      if (ctx[b] >= 0)
        g.d_w1[h * in_width + static_cast<size_t>(b) * m.vocab + ctx[b]] += da;
  }
  return g;
}

namespace {

double corpus_avg_loss(const CbowModel& m, const std::vector<std::vector<int>>& docs) {
  double total = 0;
  long centers = 0;
  for (const auto& doc : docs)
    for (int c = 0; c < static_cast<int>(doc.size()); ++c) {
      total += cbow_loss_and_gradient(m, doc, c).loss;
      ++centers;
    }
  return centers ? total / centers : 0.0;
}

}  // namespace

EmbeddingTable cbow_train(const std::vector<std::vector<std::string>>& docs,
                          const CbowConfig& cfg, CbowStats* stats) {
  const Vocab vocab = build_vocab(docs);
  if (vocab.words.empty()) throw DataError("cbow: corpus has no tokens");

  std::vector<std::vector<int>> ids;
  ids.reserve(docs.size());
  for (const auto& doc : docs) {
    std::vector<int> row;
    row.reserve(doc.size());
    for (const auto& w : doc) row.push_back(vocab.id_of(w));
    ids.push_back(std::move(row));
  }

  CbowModel m = cbow_init(static_cast<int>(vocab.words.size()), cfg);
  const double initial = corpus_avg_loss(m, ids);

  double lr = cfg.learning_rate;
  double prev_epoch_loss = initial;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_total = 0;
    long centers = 0;
    for (const auto& doc : ids) {
      for (int c = 0; c < static_cast<int>(doc.size()); ++c) {
        CbowGradient g = cbow_loss_and_gradient(m, doc, c);
        if (!std::isfinite(g.loss)) throw NumericError("cbow: non-finite loss");
        epoch_total += g.loss;
        ++centers;
        for (size_t i = 0; i < m.w1.size(); ++i) m.w1[i] -= lr * g.d_w1[i];
        for (size_t i = 0; i < m.w2.size(); ++i) m.w2[i] -= lr * g.d_w2[i];
      }
    }
    const double epoch_loss = centers ? epoch_total / centers : 0.0;
    // Keep the pass monotone at epoch granularity: back off when overshooting.
    if (epoch_loss > prev_epoch_loss) lr *= 0.5;
    prev_epoch_loss = epoch_loss;
  }

  EmbeddingTable t;
  t.dim = m.dim;
  t.words = vocab.words;
  t.index = vocab.index;
  t.matrix.resize(t.words.size() * static_cast<size_t>(t.dim));
  for (size_t w = 0; w < t.words.size(); ++w) {
    const auto vec = m.word_vector(static_cast<int>(w));
    std::copy(vec.begin(), vec.end(), t.matrix.begin() + w * t.dim);
  }
  if (stats) {
    stats->initial_avg_loss = initial;
    stats->final_avg_loss = corpus_avg_loss(m, ids);
    stats->vocab = vocab;
  }
  return t;
}

// ---------------------------------------------------------------------------
// N-gram key-term search
// ---------------------------------------------------------------------------

namespace {

bool contains_contiguous(const std::vector<std::string>& doc,
                         const std::vector<std::string>& gram) {
  if (gram.empty() || gram.size() > doc.size()) return false;
  for (size_t i = 0; i + gram.size() <= doc.size(); ++i) {
    bool match = true;
    for (size_t j = 0; j < gram.size(); ++j) {
      if (doc[i + j] != gram[j]) {
        match = false;
        break;
      }
    }
    if (match) return true;
  }
  return false;
}

}  // namespace

std::vector<SearchHit> ngram_search(const std::vector<SearchDoc>& docs, const std::string& query,
                                    int max_n, int top_n) {
  if (max_n < 1 || top_n < 1) throw UsageError("ngram_search: max_n and top_n must be positive");
  const std::vector<std::string> q = stem_all(tokenize(query));
  if (q.empty()) throw UsageError("ngram_search: empty query");

  // Every (start, n) slice of the stemmed query is one candidate n-gram.
  std::vector<std::vector<std::string>> grams;
  const int len = static_cast<int>(q.size());
  for (int n = 1; n <= std::min(max_n, len); ++n)
    for (int s = 0; s + n <= len; ++s)
      grams.emplace_back(q.begin() + s, q.begin() + s + n);

  struct Scored {
    int score;
    size_t position;
  };
  std::vector<std::pair<Scored, const SearchDoc*>> scored;
  for (size_t p = 0; p < docs.size(); ++p) {
    int score = 0;
    for (const auto& g : grams)
      if (contains_contiguous(docs[p].stemmed, g)) ++score;
    if (score > 0) scored.push_back({{score, p}, &docs[p]});
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first.score != b.first.score) return a.first.score > b.first.score;
    return a.first.position < b.first.position;
  });
  if (static_cast<int>(scored.size()) > top_n) scored.resize(top_n);

  std::vector<SearchHit> out;
  out.reserve(scored.size());
  for (const auto& [s, doc] : scored) out.push_back(SearchHit{doc->kind, doc->id, s.score});
  return out;
}

std::vector<SearchDoc> search_docs(const corpus::CourseBundle& bundle) {
  std::vector<SearchDoc> docs;
  for (const auto& v : bundle.videos) {
    std::vector<std::string> tokens;
    for (const auto& s : v.sentences) {
      auto t = tokenize(s.text);
      tokens.insert(tokens.end(), t.begin(), t.end());
    }
    docs.push_back(SearchDoc{"video", v.video_id, stem_all(tokens)});
  }
  for (const auto& d : bundle.decks)
    for (const auto& p : d.pages)
      docs.push_back(SearchDoc{"slide", d.deck_id + ":" + std::to_string(p.page),
                               stem_all(tokenize(p.text))});
  for (const auto& s : bundle.sections)
    docs.push_back(SearchDoc{"section", s.section_id, stem_all(tokenize(s.text))});
  for (const auto& t : bundle.threads)
    docs.push_back(SearchDoc{"thread", t.thread_id, stem_all(tokenize(t.text))});
  return docs;
}

std::vector<SearchHit> ngram_search(const corpus::CourseBundle& bundle, const std::string& query,
                                    int max_n, int top_n) {
  return ngram_search(search_docs(bundle), query, max_n, top_n);
}

}  // namespace linkforge::textrep
