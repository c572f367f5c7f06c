#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "linkforge/common.hpp"

namespace linkforge::corpus {
struct CourseBundle;
}

namespace linkforge::textrep {

// Lowercases and splits on non-alphanumeric bytes. Bytes >= 0x80 are treated
// as word characters so UTF-8 sequences stay inside tokens.
std::vector<std::string> tokenize(const std::string& text);

// Porter stemmer (1980). Words shorter than three letters are returned as-is.
std::string stem(const std::string& word);
std::vector<std::string> stem_all(const std::vector<std::string>& tokens);

// ---------------------------------------------------------------------------
// Vector representations
// ---------------------------------------------------------------------------

struct Vocab {
  std::vector<std::string> words;  // first-appearance order
  std::unordered_map<std::string, int> index;
  std::vector<int> doc_freq;  // documents containing each word
  int corpus_size = 0;

  int id_of(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? -1 : it->second;
  }
};

Vocab build_vocab(const std::vector<std::vector<std::string>>& docs);

enum class VectorKind { bow_tfidf, embedding_avg };

struct DocVector {
  VectorKind kind = VectorKind::bow_tfidf;
  std::vector<std::pair<int, double>> entries;  // sorted by dimension
  double norm() const;
};

// Raw term count times ln(corpus_size / doc_freq). Out-of-vocabulary tokens
// are skipped.
DocVector tfidf_vector(const std::vector<std::string>& tokens, const Vocab& vocab);

// Zero if either vector has zero norm; throws DataError on kind mismatch.
double cosine(const DocVector& a, const DocVector& b);

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

struct EmbeddingTable {
  int dim = 0;
  std::vector<std::string> words;
  std::vector<double> matrix;  // row-major, words.size() x dim
  std::unordered_map<std::string, int> index;

  const double* row(int i) const { return matrix.data() + static_cast<size_t>(i) * dim; }
  int id_of(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? -1 : it->second;
  }
};

// Text format: "<count> <dim>" header line, then one "<token> v1 ... vdim"
// line per word.
EmbeddingTable load_embeddings(std::istream& in);
void save_embeddings(const EmbeddingTable& table, std::ostream& out);

// Mean of token embeddings (OOV tokens skipped); zero vector when nothing hits.
DocVector embed_doc(const std::vector<std::string>& tokens, const EmbeddingTable& table);

// ---------------------------------------------------------------------------
// Continuous bag-of-words trainer
// ---------------------------------------------------------------------------
//
// Predicts the center word from the 2k concatenated one-hot context vectors
// through a sigmoid hidden layer and a full softmax output:
//     center = softmax(W2 * sigmoid(W1 * [x_{t-k}; ...; x_{t-1}; x_{t+1}; ...; x_{t+k}]))
// trained by per-position SGD on cross-entropy. A word's embedding is the mean
// over the 2k position blocks of its W1 column.

struct CbowConfig {
  int dim = 16;       // hidden width = embedding dimension
  int window = 2;     // k: context positions on each side
  int epochs = 5;
  double learning_rate = 0.1;
  std::uint64_t seed = 1;
};

struct CbowModel {
  int vocab = 0;
  int window = 0;
  int dim = 0;
  std::vector<double> w1;  // dim x (2*window*vocab), w1[h*(2k*V) + block*V + word]
  std::vector<double> w2;  // vocab x dim, w2[out*dim + h]

  std::vector<double> word_vector(int word) const;
};

CbowModel cbow_init(int vocab_size, const CbowConfig& cfg);

struct CbowGradient {
  double loss = 0;
  std::vector<double> d_w1;
  std::vector<double> d_w2;
};

// Cross-entropy loss and gradients for one (document, center position) pair.
// Out-of-range context positions contribute zero blocks.
CbowGradient cbow_loss_and_gradient(const CbowModel& model, const std::vector<int>& doc,
                                    int center);

struct CbowStats {
  double initial_avg_loss = 0;
  double final_avg_loss = 0;
  Vocab vocab;
};

EmbeddingTable cbow_train(const std::vector<std::vector<std::string>>& docs,
                          const CbowConfig& cfg, CbowStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Key-term n-gram search
// ---------------------------------------------------------------------------

struct SearchDoc {
  std::string kind;  // "video" | "slide" | "section" | "thread"
  std::string id;
  std::vector<std::string> stemmed;
};

struct SearchHit {
  std::string kind;
  std::string id;
  int score = 0;  // count of query n-gram instances found contiguously
};

// Stems the query, enumerates its n-grams (n = 1..max_n), scores each doc by
// how many of those n-gram instances occur contiguously in it, and returns the
// top_n docs with positive score (score desc, ties by doc position).
std::vector<SearchHit> ngram_search(const std::vector<SearchDoc>& docs, const std::string& query,
                                    int max_n = 5, int top_n = 60);

// Canonical object list for a bundle: videos (manifest order), slide pages,
// sections, threads.
std::vector<SearchDoc> search_docs(const corpus::CourseBundle& bundle);

std::vector<SearchHit> ngram_search(const corpus::CourseBundle& bundle, const std::string& query,
                                    int max_n = 5, int top_n = 60);

}  // namespace linkforge::textrep
