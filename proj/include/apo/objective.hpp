#pragma once

#include <stdexcept>
#include <vector>

#include "apo/core.hpp"
#include "apo/policy.hpp"

namespace apo::objective {

// Clipped group surrogate with per-token KL penalty, and its exact analytic
// gradient through the policy's log-probabilities. The loss is the negated
// objective so the optimizer minimizes.

struct SkippedGroupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LossBreakdown {
  double surrogate_term = 0.0;  // (1/G) sum_i (1/L_i) sum_t min(...)
  double kl_term = 0.0;         // (1/G) sum_i (1/L_i) sum_t beta_i * kl_t
  double total = 0.0;           // -(surrogate_term - kl_term)
  double clip_fraction = 0.0;   // tokens where min picked the clipped branch
};

// exp(logp_current - logp_old).
double importance_ratio(double logp_current, double logp_old);

// Non-negative KL estimator exp(delta) - delta - 1, delta = logp_ref -
// logp_current. Zero iff the two log-probs agree.
double token_kl(double logp_current, double logp_ref);

// Loss over one shaped group. Throws SkippedGroupError for filtered groups.
LossBreakdown group_loss(const RolloutGroup& group,
                         const ShapedAdvantages& shaped,
                         const TrainConfig& config);

// d(total)/d(theta), treating logp_old and logp_ref as constants. `policy`
// must be the snapshot that produced logp_current. Tokens where the clipped
// branch is active contribute zero surrogate gradient.
std::vector<double> group_loss_gradient(const RolloutGroup& group,
                                        const ShapedAdvantages& shaped,
                                        const policy::PolicySnapshot& policy,
                                        const TrainConfig& config);

}  // namespace apo::objective
