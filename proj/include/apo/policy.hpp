#pragma once

#include <span>
#include <vector>

#include "apo/core.hpp"
#include "apo/prng.hpp"

namespace apo::policy {

// Single-layer autoregressive scorer over the task vocabulary. The context is
// summarized by two additive feature channels — the last-token embedding and
// a recency-decayed embedding sum with a position term — mapped linearly to
// next-token logits. Small enough for finite-difference validation over the
// full parameter vector, expressive enough to learn the low-tier tasks.
//
// Parameter layout (one flat vector):
//   emb   [vocab_size x embed_dim]   token embeddings (shared by both channels)
//   w_out [vocab_size x 2*embed_dim] output weights: [last-token | recency]
//   bias  [vocab_size]
//   pos_u [embed_dim]                position feature, scaled by n/max_length
struct PolicySnapshot {
  int vocab_size = 32;
  int embed_dim = 16;
  int max_length = 256;  // hard decode cap on response length
  TokenId eos_token = 22;
  std::vector<double> params;

  size_t emb_offset() const { return 0; }
  size_t wout_offset() const {
    return static_cast<size_t>(vocab_size) * embed_dim;
  }
  size_t bias_offset() const {
    return wout_offset() + static_cast<size_t>(vocab_size) * 2 * embed_dim;
  }
  size_t posu_offset() const {
    return bias_offset() + static_cast<size_t>(vocab_size);
  }
  size_t param_count() const {
    return posu_offset() + static_cast<size_t>(embed_dim);
  }

  static PolicySnapshot zeros(int vocab_size, int embed_dim, int max_length,
                              TokenId eos_token = 22);
  // Gaussian init of scale `scale`; breaks the symmetry that keeps zero
  // embeddings stuck at zero gradient.
  static PolicySnapshot random_init(int vocab_size, int embed_dim,
                                    int max_length, double scale, Rng& rng,
                                    TokenId eos_token = 22);
};

// Recency decay of the context channel. Fixed, not a trained parameter.
inline constexpr double kContextDecay = 0.9;

struct SampledResponse {
  std::vector<TokenId> tokens;  // includes the terminating EOS when sampled
  std::vector<double> logp;     // log-prob of each emitted token
};

// Ancestral sampling until EOS or max_length response tokens. Deterministic
// in (policy, task, rng state).
SampledResponse sample_response(const PolicySnapshot& policy,
                                const TaskInstance& task, Rng& rng);

// Exact conditional log-probabilities of `tokens` given the task prompt.
// Scoring a sampled trajectory under its sampling policy reproduces the
// recorded values bit-for-bit (same code path).
std::vector<double> score_logprob(const PolicySnapshot& policy,
                                  const TaskInstance& task,
                                  std::span<const TokenId> tokens);

// Next-token distribution after prompt + prefix; sums to 1 by construction.
std::vector<double> next_token_probs(const PolicySnapshot& policy,
                                     const TaskInstance& task,
                                     std::span<const TokenId> prefix);

struct DecodeContext {
  TaskInstance task;
  std::vector<TokenId> prefix;
};

// Mean over contexts of the full next-token distribution entropy, in nats.
double policy_entropy(const PolicySnapshot& policy,
                      std::span<const DecodeContext> contexts);

// Accumulates sum_t coef[t] * d logp(response[t] | prompt, response[<t]) / d theta
// into `grad` (size param_count). The analytic backward pass for everything
// built on top of score_logprob.
void accumulate_logprob_grad(const PolicySnapshot& policy,
                             const TaskInstance& task,
                             std::span<const TokenId> response,
                             std::span<const double> coef,
                             std::span<double> grad);

// Supervised warm start on template demonstrations: for each drawn task the
// demo is <think> expr </think><answer> random-digits </answer><eos>. Teaches
// the response format while leaving answers at chance level, standing in for
// the pretrained base model that RL fine-tuning assumes.
void warm_start_format(PolicySnapshot& policy,
                       std::span<const TaskInstance> tasks, int demo_count,
                       int epochs, double learning_rate, Rng rng);

}  // namespace apo::policy
