#include "linkforge/crf.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

namespace linkforge::crf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double s = 0;
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

// Dense score tables for one (theta, instance) pair. The transition table has
// L+1 predecessor rows; row L is the start state.
struct ScoreTables {
  int T = 0;
  int L = 0;
  std::vector<double> unary;  // T*L, -inf on disallowed labels
  std::vector<double> trans;  // T*(L+1)*L

  double u(int t, int y) const { return unary[static_cast<size_t>(t) * L + y]; }
  double w(int t, int yp, int y) const {
    const int row = yp == kStart ? L : yp;
    return trans[(static_cast<size_t>(t) * (L + 1) + row) * L + y];
  }
};

ScoreTables assemble(const Model& m, const ChainInstance& x) {
  ScoreTables s;
  s.T = x.length;
  s.L = x.num_labels;
  s.unary.assign(static_cast<size_t>(s.T) * s.L, 0.0);
  s.trans.assign(static_cast<size_t>(s.T) * (s.L + 1) * s.L, 0.0);

  for (int k = 0; k < m.emission_count; ++k) {
    const double th = m.theta[k];
    if (th == 0.0) continue;
    const auto& em = x.emission[k];
    for (size_t i = 0; i < em.size(); ++i) s.unary[i] += th * em[i];
  }
  for (size_t k = 0; k < x.transition.size(); ++k) {
    const double th = m.theta[m.emission_count + k];
    if (th == 0.0) continue;
    for (const auto& e : x.transition[k]) {
      const int row = e.y_prev == kStart ? s.L : e.y_prev;
      s.trans[(static_cast<size_t>(e.t) * (s.L + 1) + row) * s.L + e.y] += th * e.v;
    }
  }
  for (int t = 0; t < s.T; ++t)
    for (int y = 0; y < s.L; ++y)
      if (!x.label_allowed(y)) s.unary[static_cast<size_t>(t) * s.L + y] = kNegInf;
  return s;
}

void check_sized(const Model& m, const ChainInstance& x) {
  if (static_cast<int>(x.emission.size()) != m.emission_count ||
      static_cast<int>(x.transition.size()) != m.transition_count())
    throw DataError("chain instance was compiled against a different template bank");
  if (x.num_labels != m.labels.size())
    throw DataError("chain instance label count differs from the model label set");
}

}  // namespace

// ---------------------------------------------------------------------------
// Compilation and standardization
// ---------------------------------------------------------------------------

ChainInstance compile_chain(const TemplateBank& bank, int num_labels, int length,
                            std::vector<int> gold, std::vector<char> allowed) {
  if (length <= 0) throw DataError("compile_chain: empty chain");
  if (num_labels <= 0) throw DataError("compile_chain: empty label set");
  if (!allowed.empty() && static_cast<int>(allowed.size()) != num_labels)
    throw DataError("compile_chain: allowed mask size mismatch");

  ChainInstance x;
  x.length = length;
  x.num_labels = num_labels;
  x.allowed = std::move(allowed);
  if (!gold.empty()) {
    if (static_cast<int>(gold.size()) != length)
      throw DataError("compile_chain: gold label count differs from chain length");
    for (int y : gold)
      if (y < 0 || y >= num_labels || !x.label_allowed(y))
        throw DataError("compile_chain: gold label out of range");
    x.gold = std::move(gold);
  }

  x.emission.resize(bank.emissions.size());
  for (size_t k = 0; k < bank.emissions.size(); ++k) {
    const auto& tpl = bank.emissions[k];
    auto& em = x.emission[k];
    em.assign(static_cast<size_t>(length) * num_labels, 0.0);
    for (int t = 0; t < length; ++t)
      for (int y = 0; y < num_labels; ++y)
        if (x.label_allowed(y) && tpl.fires(y))
          em[static_cast<size_t>(t) * num_labels + y] = tpl.signal(t, y);
  }

  x.transition.resize(bank.transitions.size());
  for (size_t k = 0; k < bank.transitions.size(); ++k) {
    const auto& tpl = bank.transitions[k];
    auto& entries = x.transition[k];
    for (int y = 0; y < num_labels; ++y) {
      if (!x.label_allowed(y)) continue;
      const double v = tpl.value(0, kStart, y);
      if (v != 0.0) entries.push_back({0, kStart, y, v});
    }
    for (int t = 1; t < length; ++t)
      for (int yp = 0; yp < num_labels; ++yp) {
        if (!x.label_allowed(yp)) continue;
        for (int y = 0; y < num_labels; ++y) {
          if (!x.label_allowed(y)) continue;
          const double v = tpl.value(t, yp, y);
          if (v != 0.0) entries.push_back({t, yp, y, v});
        }
      }
  }
  return x;
}

Standardization fit_standardization(const TemplateBank& bank,
                                    std::span<const ChainInstance> train) {
  Standardization st;
  st.mu.assign(bank.emissions.size(), 0.0);
  st.sigma.assign(bank.emissions.size(), 1.0);
  for (size_t k = 0; k < bank.emissions.size(); ++k) {
    if (!bank.emissions[k].standardize) continue;
    double sum = 0, sum_sq = 0;
    long n = 0;
    for (const auto& x : train) {
      for (int t = 0; t < x.length; ++t)
        for (int y = 0; y < x.num_labels; ++y) {
          if (!x.label_allowed(y) || !bank.emissions[k].fires(y)) continue;
          const double v = x.emission[k][static_cast<size_t>(t) * x.num_labels + y];
          sum += v;
          sum_sq += v * v;
          ++n;
        }
    }
    if (n == 0) continue;
    const double mu = sum / n;
    const double var = std::max(0.0, sum_sq / n - mu * mu);
    const double sigma = std::sqrt(var);
    if (sigma < 1e-9) continue;  // constant signal: leave untouched
    st.mu[k] = mu;
    st.sigma[k] = sigma;
  }
  return st;
}

void apply_standardization(const TemplateBank& bank, const Standardization& st,
                           ChainInstance& x) {
  if (st.mu.size() != bank.emissions.size() || st.sigma.size() != bank.emissions.size())
    throw DataError("standardization size mismatch");
  for (size_t k = 0; k < bank.emissions.size(); ++k) {
    if (st.mu[k] == 0.0 && st.sigma[k] == 1.0) continue;
    for (int t = 0; t < x.length; ++t)
      for (int y = 0; y < x.num_labels; ++y) {
        if (!x.label_allowed(y) || !bank.emissions[k].fires(y)) continue;
        auto& v = x.emission[k][static_cast<size_t>(t) * x.num_labels + y];
        v = (v - st.mu[k]) / st.sigma[k];
      }
  }
}

// ---------------------------------------------------------------------------
// Model serialization
// ---------------------------------------------------------------------------

nlohmann::json model_to_json(const Model& m) {
  nlohmann::json j;
  j["version"] = "crf-1";
  j["labels"] = m.labels.names;
  j["emission_count"] = m.emission_count;
  nlohmann::json templates = nlohmann::json::array();
  for (size_t k = 0; k < m.template_ids.size(); ++k) {
    nlohmann::json tj = {{"id", m.template_ids[k]}};
    if (static_cast<int>(k) < m.emission_count) {
      tj["mu"] = m.standardization.mu[k];
      tj["sigma"] = m.standardization.sigma[k];
    }
    templates.push_back(std::move(tj));
  }
  j["templates"] = std::move(templates);
  j["theta"] = m.theta;
  j["config"] = m.config_echo;
  return j;
}

Model model_from_json(const nlohmann::json& j) {
  Model m;
  try {
    if (j.at("version").get<std::string>() != "crf-1")
      throw DataError("unsupported model version \"" + j.at("version").get<std::string>() + "\"");
    m.labels.names = j.at("labels").get<std::vector<std::string>>();
    m.emission_count = j.at("emission_count").get<int>();
    for (const auto& tj : j.at("templates")) {
      m.template_ids.push_back(tj.at("id").get<std::string>());
      if (static_cast<int>(m.template_ids.size()) <= m.emission_count) {
        m.standardization.mu.push_back(tj.at("mu").get<double>());
        m.standardization.sigma.push_back(tj.at("sigma").get<double>());
      }
    }
    m.theta = j.at("theta").get<std::vector<double>>();
    if (j.contains("config")) m.config_echo = j.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad model json: ") + e.what());
  }
  if (m.theta.size() != m.template_ids.size())
    throw DataError("model json: theta size differs from template count");
  if (m.emission_count < 0 || m.emission_count > static_cast<int>(m.template_ids.size()))
    throw DataError("model json: bad emission_count");
  return m;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

double score_sequence(const Model& m, const ChainInstance& x, std::span<const int> y) {
  check_sized(m, x);
  if (static_cast<int>(y.size()) != x.length)
    throw DataError("score_sequence: label sequence length mismatch");
  const ScoreTables s = assemble(m, x);
  double total = 0;
  for (int t = 0; t < x.length; ++t) {
    total += s.u(t, y[t]);
    total += s.w(t, t == 0 ? kStart : y[t - 1], y[t]);
  }
  return total;
}

namespace {

Posterior forward_backward_tables(const ScoreTables& s) {
  const int T = s.T, L = s.L;
  std::vector<double> alpha(static_cast<size_t>(T) * L, kNegInf);
  std::vector<double> beta(static_cast<size_t>(T) * L, 0.0);
  std::vector<double> scratch(L);

  for (int y = 0; y < L; ++y) alpha[y] = s.u(0, y) + s.w(0, kStart, y);
  for (int t = 1; t < T; ++t)
    for (int y = 0; y < L; ++y) {
      for (int yp = 0; yp < L; ++yp)
        scratch[yp] = alpha[static_cast<size_t>(t - 1) * L + yp] + s.w(t, yp, y);
      alpha[static_cast<size_t>(t) * L + y] = s.u(t, y) + logsumexp(scratch);
    }

  Posterior post;
  post.log_z = logsumexp(std::span(alpha).subspan(static_cast<size_t>(T - 1) * L, L));
  if (post.log_z == kNegInf) throw DataError("forward_backward: no allowed label sequence");

  for (int t = T - 2; t >= 0; --t)
    for (int y = 0; y < L; ++y) {
      for (int yn = 0; yn < L; ++yn)
        scratch[yn] = s.w(t + 1, y, yn) + s.u(t + 1, yn) + beta[static_cast<size_t>(t + 1) * L + yn];
      beta[static_cast<size_t>(t) * L + y] = logsumexp(scratch);
    }

  post.marginal.assign(static_cast<size_t>(T) * L, 0.0);
  for (int t = 0; t < T; ++t)
    for (int y = 0; y < L; ++y) {
      const double lp = alpha[static_cast<size_t>(t) * L + y] +
                        beta[static_cast<size_t>(t) * L + y] - post.log_z;
      post.marginal[static_cast<size_t>(t) * L + y] = lp == kNegInf ? 0.0 : std::exp(lp);
    }

  if (T > 1) {
    post.pair_marginal.assign(static_cast<size_t>(T - 1) * L * L, 0.0);
    for (int t = 1; t < T; ++t)
      for (int yp = 0; yp < L; ++yp) {
        const double a = alpha[static_cast<size_t>(t - 1) * L + yp];
        if (a == kNegInf) continue;
        for (int y = 0; y < L; ++y) {
          const double lp = a + s.w(t, yp, y) + s.u(t, y) +
                            beta[static_cast<size_t>(t) * L + y] - post.log_z;
          post.pair_marginal[(static_cast<size_t>(t - 1) * L + yp) * L + y] =
              lp == kNegInf ? 0.0 : std::exp(lp);
        }
      }
  }
  return post;
}

}  // namespace

Posterior forward_backward(const Model& m, const ChainInstance& x) {
  check_sized(m, x);
  return forward_backward_tables(assemble(m, x));
}

std::vector<int> viterbi(const Model& m, const ChainInstance& x, DecodeConstraint constraint) {
  check_sized(m, x);
  const ScoreTables s = assemble(m, x);
  const int T = s.T, L = s.L;
  const bool monotone = constraint == DecodeConstraint::monotone_non_decreasing;

  // Max score of any suffix continuation from (t, y), excluding position t's
  // own scores. Computed backwards so the forward pass below can break ties
  // toward the lexicographically smallest full sequence.
  std::vector<double> best_suffix(static_cast<size_t>(T) * L, 0.0);
  for (int t = T - 2; t >= 0; --t)
    for (int y = 0; y < L; ++y) {
      double best = kNegInf;
      for (int yn = monotone ? y : 0; yn < L; ++yn) {
        if (!x.label_allowed(yn)) continue;
        best = std::max(best, s.w(t + 1, y, yn) + s.u(t + 1, yn) +
                                  best_suffix[static_cast<size_t>(t + 1) * L + yn]);
      }
      best_suffix[static_cast<size_t>(t) * L + y] = best;
    }

  std::vector<int> out(T, -1);
  double best = kNegInf;
  for (int y = 0; y < L; ++y) {
    if (!x.label_allowed(y)) continue;
    best = std::max(best, s.u(0, y) + s.w(0, kStart, y) + best_suffix[y]);
  }
  if (best == kNegInf) throw DataError("viterbi: no allowed label sequence");
  for (int y = 0; y < L; ++y) {
    if (!x.label_allowed(y)) continue;
    if (s.u(0, y) + s.w(0, kStart, y) + best_suffix[y] == best) {
      out[0] = y;
      break;
    }
  }
  for (int t = 1; t < T; ++t) {
    const int prev = out[t - 1];
    const double target = best_suffix[static_cast<size_t>(t - 1) * L + prev];
    for (int y = monotone ? prev : 0; y < L; ++y) {
      if (!x.label_allowed(y)) continue;
      if (s.w(t, prev, y) + s.u(t, y) + best_suffix[static_cast<size_t>(t) * L + y] == target) {
        out[t] = y;
        break;
      }
    }
    if (out[t] < 0) throw NumericError("viterbi: backtrack failed");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood and gradient
// ---------------------------------------------------------------------------

namespace {

struct InstanceContribution {
  double ll = 0;
  std::vector<double> grad;
};

InstanceContribution instance_objective(const Model& m, const ChainInstance& x) {
  if (x.gold.empty()) throw DataError("likelihood: instance without gold labels");
  const ScoreTables s = assemble(m, x);
  const Posterior post = forward_backward_tables(s);
  const int L = x.num_labels;

  InstanceContribution out;
  out.grad.assign(m.theta.size(), 0.0);

  double gold_score = 0;
  for (int t = 0; t < x.length; ++t) {
    gold_score += s.u(t, x.gold[t]);
    gold_score += s.w(t, t == 0 ? kStart : x.gold[t - 1], x.gold[t]);
  }
  out.ll = gold_score - post.log_z;

  for (int k = 0; k < m.emission_count; ++k) {
    const auto& em = x.emission[k];
    double g = 0;
    for (int t = 0; t < x.length; ++t) {
      const size_t row = static_cast<size_t>(t) * L;
      g += em[row + x.gold[t]];
      for (int y = 0; y < L; ++y) {
        const double v = em[row + y];
        if (v != 0.0) g -= post.marginal[row + y] * v;
      }
    }
    out.grad[k] = g;
  }
  for (size_t k = 0; k < x.transition.size(); ++k) {
    double g = 0;
    for (const auto& e : x.transition[k]) {
      const bool fired = e.t == 0 ? (e.y_prev == kStart && x.gold[0] == e.y)
                                  : (x.gold[e.t - 1] == e.y_prev && x.gold[e.t] == e.y);
      if (fired) g += e.v;
      const double expectation =
          e.t == 0 ? (e.y_prev == kStart ? post.marginal[e.y] : 0.0)
                   : post.pair_marginal[(static_cast<size_t>(e.t - 1) * L + e.y_prev) * L + e.y];
      g -= expectation * e.v;
    }
    out.grad[m.emission_count + k] = g;
  }
  return out;
}

}  // namespace

Objective log_likelihood_and_gradient(const Model& m, std::span<const ChainInstance> data,
                                      double l2, int threads) {
  const size_t n = data.size();
  std::vector<InstanceContribution> parts(n);

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) parts[i] = instance_objective(m, data[i]);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
          parts[i] = instance_objective(m, data[i]);
      });
    for (auto& t : pool) t.join();
  }

  // Fixed reduction order: instance contributions are summed in instance
  // order regardless of which worker produced them.
  Objective out;
  out.gradient.assign(m.theta.size(), 0.0);
  for (const auto& p : parts) {
    out.value += p.ll;
    for (size_t k = 0; k < out.gradient.size(); ++k) out.gradient[k] += p.grad[k];
  }
  double norm_sq = 0;
  for (size_t k = 0; k < m.theta.size(); ++k) {
    norm_sq += m.theta[k] * m.theta[k];
    out.gradient[k] -= l2 * m.theta[k];
  }
  out.value -= 0.5 * l2 * norm_sq;
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainResult train(Model init, std::span<const ChainInstance> data, const TrainConfig& cfg) {
  if (cfg.max_iters <= 0) throw UsageError("train: max_iters must be positive");
  if (cfg.learning_rate <= 0) throw UsageError("train: learning_rate must be positive");
  if (cfg.l2 < 0) throw UsageError("train: l2 must be non-negative");
  if (data.empty()) throw DataError("train: no training instances");
  for (const auto& x : data) {
    check_sized(init, x);
    if (x.gold.empty()) throw DataError("train: instance without gold labels");
  }

  const size_t K = init.template_ids.size();
  if (init.theta.empty()) {
    init.theta.assign(K, 0.0);
    if (cfg.random_init) {
      std::mt19937_64 rng(cfg.seed);
      std::uniform_real_distribution<double> dist(-0.1, 0.1);
      for (auto& th : init.theta) th = dist(rng);
    }
  } else if (init.theta.size() != K) {
    throw DataError("train: init theta size differs from template count");
  }

  TrainResult result;
  result.model = std::move(init);
  Model& m = result.model;

  Objective cur = log_likelihood_and_gradient(m, data, cfg.l2, cfg.threads);
  if (!std::isfinite(cur.value)) throw NumericError("train: non-finite objective at init");

  double step = cfg.learning_rate;
  std::vector<double> candidate(K);
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    result.iterations = iter;
    Objective next;
    bool stalled = false;
    while (true) {
      for (size_t k = 0; k < K; ++k) candidate[k] = m.theta[k] + step * cur.gradient[k];
      Model probe = m;
      probe.theta = candidate;
      next = log_likelihood_and_gradient(probe, data, cfg.l2, cfg.threads);
      if (std::isfinite(next.value) && next.value >= cur.value) break;
      step *= 0.5;
      if (step < 1e-14) {  // cannot make progress at any step size
        stalled = true;
        break;
      }
    }
    if (stalled) {
      result.converged = true;
      break;
    }
    double delta_inf = 0;
    for (size_t k = 0; k < K; ++k)
      delta_inf = std::max(delta_inf, std::abs(candidate[k] - m.theta[k]));
    m.theta = candidate;
    cur = std::move(next);
    step = std::min(step * 2.0, cfg.learning_rate);
    if (delta_inf < cfg.tol) {
      result.converged = true;
      break;
    }
  }
  if (!std::isfinite(cur.value)) throw NumericError("train: non-finite objective");
  result.objective = cur.value;
  return result;
}

TrainResult logreg_train(Model init, std::span<const ChainInstance> data, const TrainConfig& cfg) {
  if (init.transition_count() != 0)
    throw UsageError("logreg_train: transition templates are not allowed");
  for (const auto& x : data)
    if (x.length != 1) throw UsageError("logreg_train: instances must have length 1");
  return train(std::move(init), data, cfg);
}

int logreg_predict(const Model& m, const ChainInstance& x) {
  if (x.length != 1) throw UsageError("logreg_predict: instance must have length 1");
  return viterbi(m, x)[0];
}

}  // namespace linkforge::crf
