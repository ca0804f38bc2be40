#include "apo/policy.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

#include "apo/tasks.hpp"

namespace apo::policy {

namespace {

// Incremental context state: the recency-decayed embedding sum, plus the last
// token id for the bigram channel.
struct ContextState {
  const PolicySnapshot& p;
  std::vector<double> decay_sum;
  TokenId last = -1;
  int length = 0;

  explicit ContextState(const PolicySnapshot& policy)
      : p(policy), decay_sum(policy.embed_dim, 0.0) {}

  void push(TokenId t) {
    const double* emb = p.params.data() + p.emb_offset() +
                        static_cast<size_t>(t) * p.embed_dim;
    for (int j = 0; j < p.embed_dim; ++j) {
      decay_sum[j] = kContextDecay * decay_sum[j] + emb[j];
    }
    last = t;
    ++length;
  }

  double position_feature() const {
    return std::min(1.0, static_cast<double>(length) / p.max_length);
  }

  // z_v = w1_v . emb[last] + w2_v . (decay_sum + pos*u) + bias_v
  void logits(std::span<double> z) const {
    const int V = p.vocab_size;
    const int E = p.embed_dim;
    const double* emb_last =
        p.params.data() + p.emb_offset() + static_cast<size_t>(last) * E;
    const double* wout = p.params.data() + p.wout_offset();
    const double* bias = p.params.data() + p.bias_offset();
    const double* pos_u = p.params.data() + p.posu_offset();
    const double pos = position_feature();
    for (int v = 0; v < V; ++v) {
      const double* w = wout + static_cast<size_t>(v) * 2 * E;
      double acc = bias[v];
      for (int j = 0; j < E; ++j) acc += w[j] * emb_last[j];
      for (int j = 0; j < E; ++j) acc += w[E + j] * (decay_sum[j] + pos * pos_u[j]);
      z[v] = acc;
    }
  }
};

// Stable softmax; returns log(sum exp(z - max)) and fills probs normalized
// so they sum to exactly the computed total.
struct Distribution {
  std::vector<double> probs;
  double max_logit = 0.0;
  double log_sum = 0.0;  // log sum exp(z - max)

  double logp(std::span<const double> z, TokenId t) const {
    return (z[t] - max_logit) - log_sum;
  }
};

Distribution softmax(std::span<const double> z) {
  Distribution d;
  d.max_logit = *std::max_element(z.begin(), z.end());
  d.probs.resize(z.size());
  double sum = 0.0;
  for (size_t v = 0; v < z.size(); ++v) {
    d.probs[v] = std::exp(z[v] - d.max_logit);
    sum += d.probs[v];
  }
  d.log_sum = std::log(sum);
  for (double& pv : d.probs) pv /= sum;
  return d;
}

ContextState fold_prompt(const PolicySnapshot& policy,
                         const TaskInstance& task) {
  if (task.prompt_tokens.empty()) {
    throw std::invalid_argument("policy: empty prompt");
  }
  ContextState state(policy);
  for (TokenId t : task.prompt_tokens) {
    if (t < 0 || t >= policy.vocab_size) {
      throw std::out_of_range("policy: prompt token outside vocabulary");
    }
    state.push(t);
  }
  return state;
}

}  // namespace

PolicySnapshot PolicySnapshot::zeros(int vocab_size, int embed_dim,
                                     int max_length, TokenId eos_token) {
  PolicySnapshot p;
  p.vocab_size = vocab_size;
  p.embed_dim = embed_dim;
  p.max_length = max_length;
  p.eos_token = eos_token;
  p.params.assign(p.param_count(), 0.0);
  return p;
}

PolicySnapshot PolicySnapshot::random_init(int vocab_size, int embed_dim,
                                           int max_length, double scale,
                                           Rng& rng, TokenId eos_token) {
  PolicySnapshot p = zeros(vocab_size, embed_dim, max_length, eos_token);
  for (double& w : p.params) w = scale * rng.next_gaussian();
  return p;
}

SampledResponse sample_response(const PolicySnapshot& policy,
                                const TaskInstance& task, Rng& rng) {
  ContextState state = fold_prompt(policy, task);
  SampledResponse out;
  std::vector<double> z(policy.vocab_size);

  while (static_cast<int>(out.tokens.size()) < policy.max_length) {
    state.logits(z);
    const Distribution dist = softmax(z);
    const double u = rng.next_unit();
    double cum = 0.0;
    TokenId chosen = policy.vocab_size - 1;
    for (int v = 0; v < policy.vocab_size; ++v) {
      cum += dist.probs[v];
      if (u < cum) {
        chosen = v;
        break;
      }
    }
    out.tokens.push_back(chosen);
    out.logp.push_back(dist.logp(z, chosen));
    if (chosen == policy.eos_token) break;
    state.push(chosen);
  }
  return out;
}

std::vector<double> score_logprob(const PolicySnapshot& policy,
                                  const TaskInstance& task,
                                  std::span<const TokenId> tokens) {
  if (tokens.empty()) {
    throw std::invalid_argument("score_logprob: empty token sequence");
  }
  ContextState state = fold_prompt(policy, task);
  std::vector<double> z(policy.vocab_size);
  std::vector<double> out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t < 0 || t >= policy.vocab_size) {
      throw std::out_of_range("score_logprob: token outside vocabulary");
    }
    state.logits(z);
    const Distribution dist = softmax(z);
    out.push_back(dist.logp(z, t));
    state.push(t);
  }
  return out;
}

std::vector<double> next_token_probs(const PolicySnapshot& policy,
                                     const TaskInstance& task,
                                     std::span<const TokenId> prefix) {
  ContextState state = fold_prompt(policy, task);
  for (TokenId t : prefix) state.push(t);
  std::vector<double> z(policy.vocab_size);
  state.logits(z);
  return softmax(z).probs;
}

double policy_entropy(const PolicySnapshot& policy,
                      std::span<const DecodeContext> contexts) {
  if (contexts.empty()) {
    throw std::invalid_argument("policy_entropy: no contexts");
  }
  double total = 0.0;
  std::vector<double> z(policy.vocab_size);
  for (const DecodeContext& ctx : contexts) {
    ContextState state = fold_prompt(policy, ctx.task);
    for (TokenId t : ctx.prefix) state.push(t);
    state.logits(z);
    const Distribution dist = softmax(z);
    double h = 0.0;
    for (int v = 0; v < policy.vocab_size; ++v) {
      const double lp = dist.logp(z, v);
      h -= dist.probs[v] * lp;
    }
    total += h;
  }
  return total / static_cast<double>(contexts.size());
}

void accumulate_logprob_grad(const PolicySnapshot& policy,
                             const TaskInstance& task,
                             std::span<const TokenId> response,
                             std::span<const double> coef,
                             std::span<double> grad) {
  if (response.size() != coef.size()) {
    throw std::invalid_argument("accumulate_logprob_grad: coef size mismatch");
  }
  if (grad.size() != policy.param_count()) {
    throw std::invalid_argument("accumulate_logprob_grad: grad size mismatch");
  }
  const int V = policy.vocab_size;
  const int E = policy.embed_dim;
  const int prompt_len = static_cast<int>(task.prompt_tokens.size());
  const int resp_len = static_cast<int>(response.size());

  ContextState state = fold_prompt(policy, task);
  const double* wout = policy.params.data() + policy.wout_offset();
  double* g_emb = grad.data() + policy.emb_offset();
  double* g_wout = grad.data() + policy.wout_offset();
  double* g_bias = grad.data() + policy.bias_offset();
  double* g_posu = grad.data() + policy.posu_offset();

  std::vector<double> z(V);
  // Recency-channel pullback per position, needed again in the reverse pass
  // that distributes gradient onto context-token embeddings.
  std::vector<double> recency_pull(static_cast<size_t>(resp_len) * E, 0.0);

  for (int t = 0; t < resp_len; ++t) {
    const TokenId target = response[t];
    if (target < 0 || target >= V) {
      throw std::out_of_range("accumulate_logprob_grad: token outside vocab");
    }
    state.logits(z);
    const Distribution dist = softmax(z);
    const double c = coef[t];
    const double pos = state.position_feature();
    const double* emb_last = policy.params.data() + policy.emb_offset() +
                             static_cast<size_t>(state.last) * E;

    // d logp / d logits = onehot(target) - probs
    // -> bias, w_out rows, and the two feature-channel pullbacks q1, q2.
    double* q2 = recency_pull.data() + static_cast<size_t>(t) * E;
    std::vector<double> q1(E, 0.0);
    for (int v = 0; v < V; ++v) {
      const double dz = (v == target ? 1.0 : 0.0) - dist.probs[v];
      const double* w = wout + static_cast<size_t>(v) * 2 * E;
      g_bias[v] += c * dz;
      double* gw = g_wout + static_cast<size_t>(v) * 2 * E;
      for (int j = 0; j < E; ++j) {
        gw[j] += c * dz * emb_last[j];
        gw[E + j] += c * dz * (state.decay_sum[j] + pos *
                               policy.params[policy.posu_offset() + j]);
        q1[j] += dz * w[j];
        q2[j] += dz * w[E + j];
      }
    }
    double* g_emb_last = g_emb + static_cast<size_t>(state.last) * E;
    for (int j = 0; j < E; ++j) {
      g_emb_last[j] += c * q1[j];
      g_posu[j] += c * q2[j] * pos;
      q2[j] *= c;  // fold the coefficient into the stored pullback
    }
    state.push(target);
  }

  // Reverse pass: token k of the full sequence receives
  // sum_{t : prompt_len+t-1 >= k} coef_t * q2_t * decay^(prompt_len+t-1-k).
  std::vector<double> acc(E, 0.0);
  const int seq_len = prompt_len + resp_len;
  for (int k = seq_len - 2; k >= 0; --k) {
    for (int j = 0; j < E; ++j) acc[j] *= kContextDecay;
    const int t = k + 1 - prompt_len;  // position whose context ends at k
    if (t >= 0 && t < resp_len) {
      const double* q2 = recency_pull.data() + static_cast<size_t>(t) * E;
      for (int j = 0; j < E; ++j) acc[j] += q2[j];
    }
    const TokenId tok =
        k < prompt_len ? task.prompt_tokens[k] : response[k - prompt_len];
    double* g = g_emb + static_cast<size_t>(tok) * E;
    for (int j = 0; j < E; ++j) g[j] += acc[j];
  }
}

void warm_start_format(PolicySnapshot& policy,
                       std::span<const TaskInstance> tasks, int demo_count,
                       int epochs, double learning_rate, Rng rng) {
  if (tasks.empty() || demo_count <= 0 || epochs <= 0) return;

  struct Demo {
    const TaskInstance* task;
    std::vector<TokenId> target;
  };
  std::vector<Demo> demos;
  demos.reserve(demo_count);
  for (int i = 0; i < demo_count; ++i) {
    const TaskInstance& task = tasks[rng.next_below(tasks.size())];
    std::vector<TokenId> target;
    target.push_back(tasks::kThinkOpen);
    // Think section restates the expression (everything before '='), then
    // rambles for 0x/2x/4x the expression length in filler glyphs. The
    // filler spreads the response lengths and, through the recency decay,
    // washes the prompt out of the context: redundant thinking costs answer
    // signal, as in the base models this warm start stands in for.
    int expr_len = 0;
    for (TokenId t : task.prompt_tokens) {
      if (t == tasks::kEquals) break;
      target.push_back(t);
      ++expr_len;
    }
    const int filler = 2 * expr_len * static_cast<int>(rng.next_below(3));
    for (int k = 0; k < filler; ++k) {
      target.push_back(static_cast<TokenId>(24 + rng.next_below(8)));
    }
    target.push_back(tasks::kThinkClose);
    target.push_back(tasks::kAnswerOpen);
    for (size_t k = 0; k < task.ground_truth.size(); ++k) {
      target.push_back(static_cast<TokenId>(rng.next_below(10)));
    }
    target.push_back(tasks::kAnswerClose);
    target.push_back(policy.eos_token);
    demos.push_back({&task, std::move(target)});
  }

  std::vector<double> grad(policy.param_count());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const Demo& demo : demos) {
      std::fill(grad.begin(), grad.end(), 0.0);
      // Mean cross-entropy: coefficient -1/L per token turns the accumulated
      // logprob gradient into the CE gradient.
      const std::vector<double> coef(demo.target.size(),
                                     -1.0 / demo.target.size());
      accumulate_logprob_grad(policy, *demo.task, demo.target, coef, grad);
      for (size_t j = 0; j < grad.size(); ++j) {
        policy.params[j] -= learning_rate * grad[j];
      }
    }
  }
}

}  // namespace apo::policy
