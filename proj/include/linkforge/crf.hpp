#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "linkforge/common.hpp"

namespace linkforge::crf {

// Distinguished start state: the predecessor label at t = 0.
inline constexpr int kStart = -1;

struct LabelSet {
  std::vector<std::string> names;

  int index_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }
  int size() const { return static_cast<int>(names.size()); }
  bool operator==(const LabelSet&) const = default;
};

// ---------------------------------------------------------------------------
// Feature templates
// ---------------------------------------------------------------------------
//
// An emission feature is fires(y) * signal(t, y): `fires` is the label scope
// (an indicator), `signal` the real-valued part. Standardized templates get
// their signal z-scored with training statistics; the indicator structure is
// untouched. A transition feature sees (t, y_prev, y) with y_prev == kStart
// at t = 0.

struct EmissionTemplate {
  std::string id;
  bool standardize = false;
  std::function<bool(int y)> fires;
  std::function<double(int t, int y)> signal;
};

struct TransitionTemplate {
  std::string id;
  std::function<double(int t, int y_prev, int y)> value;
};

struct TemplateBank {
  std::vector<EmissionTemplate> emissions;
  std::vector<TransitionTemplate> transitions;

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& e : emissions) out.push_back(e.id);
    for (const auto& t : transitions) out.push_back(t.id);
    return out;
  }
  size_t size() const { return emissions.size() + transitions.size(); }
};

// ---------------------------------------------------------------------------
// Compiled chains
// ---------------------------------------------------------------------------
//
// Template evaluators are bound to one observation sequence and evaluated once
// into a compiled instance; everything downstream (inference, training) works
// on these tables. `allowed` restricts the label set per instance (e.g. a
// video whose deck has fewer pages than the course-wide label universe).

struct ChainInstance {
  int length = 0;
  int num_labels = 0;
  std::vector<int> gold;          // empty, or one label index per position
  std::vector<char> allowed;      // per label; empty means all allowed
  std::vector<std::vector<double>> emission;  // [k][t*L + y]

  struct TransEntry {
    int t;
    int y_prev;  // kStart only at t == 0
    int y;
    double v;
  };
  std::vector<std::vector<TransEntry>> transition;  // per transition template

  bool label_allowed(int y) const { return allowed.empty() || allowed[y]; }
};

ChainInstance compile_chain(const TemplateBank& bank, int num_labels, int length,
                            std::vector<int> gold = {}, std::vector<char> allowed = {});

// Per-emission-template z-scoring parameters (identity for indicators and for
// degenerate signals).
struct Standardization {
  std::vector<double> mu;
  std::vector<double> sigma;
  bool operator==(const Standardization&) const = default;
};

Standardization fit_standardization(const TemplateBank& bank,
                                    std::span<const ChainInstance> train);
void apply_standardization(const TemplateBank& bank, const Standardization& st,
                           ChainInstance& inst);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct Model {
  LabelSet labels;
  std::vector<std::string> template_ids;  // emissions first, then transitions
  int emission_count = 0;
  std::vector<double> theta;
  Standardization standardization;  // sized emission_count
  nlohmann::json config_echo;       // caller-owned record of the suite and training setup

  int transition_count() const { return static_cast<int>(template_ids.size()) - emission_count; }
};

nlohmann::json model_to_json(const Model& m);  // version "crf-1"
Model model_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

double score_sequence(const Model& m, const ChainInstance& x, std::span<const int> y);

struct Posterior {
  double log_z = 0;
  std::vector<double> marginal;       // T*L
  std::vector<double> pair_marginal;  // (T-1)*L*L, transition into position t stored at t-1
};

Posterior forward_backward(const Model& m, const ChainInstance& x);

enum class DecodeConstraint { none, monotone_non_decreasing };

// Returns the highest-scoring label sequence; among ties, the
// lexicographically smallest. The monotone constraint restricts decoding to
// non-decreasing label indices (labels must be ordered for this to be
// meaningful).
std::vector<int> viterbi(const Model& m, const ChainInstance& x,
                         DecodeConstraint constraint = DecodeConstraint::none);

struct Objective {
  double value = 0;
  std::vector<double> gradient;
};

// Regularized conditional log-likelihood of gold labels, plus its gradient:
//   sum_i [score(x_i, y_i) - log Z(x_i)] - l2/2 * |theta|^2.
// Instance contributions are summed in instance order regardless of thread
// count.
Objective log_likelihood_and_gradient(const Model& m, std::span<const ChainInstance> data,
                                      double l2, int threads = 1);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.5;
  double l2 = 1.0;
  double tol = 1e-5;  // on the max-norm of the parameter step
  int max_iters = 500;
  bool random_init = false;  // zeros otherwise
  std::uint64_t seed = 0;
  int threads = 1;
};

struct TrainResult {
  Model model;
  double objective = 0;
  int iterations = 0;
  bool converged = false;
};

// Gradient ascent with step halving on objective decrease. `init.theta` may be
// empty (initialized per cfg). All instances must carry gold labels.
TrainResult train(Model init, std::span<const ChainInstance> data, const TrainConfig& cfg);

// Per-token multinomial logistic regression: the same machinery on length-1
// chains with no transition templates.
TrainResult logreg_train(Model init, std::span<const ChainInstance> data, const TrainConfig& cfg);
int logreg_predict(const Model& m, const ChainInstance& x);

}  // namespace linkforge::crf
