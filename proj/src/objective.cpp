#include "apo/objective.hpp"

#include <algorithm>
#include <cmath>

namespace apo::objective {

namespace {

void check_shaped(const RolloutGroup& group, const ShapedAdvantages& shaped) {
  if (shaped.group_skipped) {
    throw SkippedGroupError("group was filtered; no loss contribution");
  }
  if (shaped.per_token_advantage.size() != group.trajectories.size() ||
      shaped.kl_weight.size() != group.trajectories.size()) {
    throw std::invalid_argument("shaped advantages do not match group shape");
  }
}

// The clipped branch is selected exactly when clamping binds on the side the
// advantage sign makes binding: ratio above 1+eps with positive advantage, or
// below 1-eps with negative advantage. In both cases the surrogate gradient
// vanishes.
inline bool clip_active(double ratio, double advantage, double eps) {
  return (advantage > 0.0 && ratio > 1.0 + eps) ||
         (advantage < 0.0 && ratio < 1.0 - eps);
}

}  // namespace

double importance_ratio(double logp_current, double logp_old) {
  return std::exp(logp_current - logp_old);
}

double token_kl(double logp_current, double logp_ref) {
  const double delta = logp_ref - logp_current;
  return std::exp(delta) - delta - 1.0;
}

LossBreakdown group_loss(const RolloutGroup& group,
                         const ShapedAdvantages& shaped,
                         const TrainConfig& config) {
  check_shaped(group, shaped);

  const int group_size = group.size();
  const double eps = config.clip_epsilon;
  LossBreakdown out;
  long clipped_tokens = 0;
  long total_tokens = 0;

  for (int i = 0; i < group_size; ++i) {
    const Trajectory& tr = group.trajectories[i];
    const std::vector<double>& adv = shaped.per_token_advantage[i];
    const double beta_i = shaped.kl_weight[i];
    const int len = tr.length();
    double surrogate_sum = 0.0;
    double kl_sum = 0.0;
    for (int t = 0; t < len; ++t) {
      const double ratio = importance_ratio(tr.logp_current[t], tr.logp_old[t]);
      const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
      surrogate_sum += std::min(ratio * adv[t], clipped * adv[t]);
      kl_sum += beta_i * token_kl(tr.logp_current[t], tr.logp_ref[t]);
      if (clip_active(ratio, adv[t], eps)) ++clipped_tokens;
    }
    out.surrogate_term += surrogate_sum / len;
    out.kl_term += kl_sum / len;
    total_tokens += len;
  }
  out.surrogate_term /= group_size;
  out.kl_term /= group_size;
  out.total = -(out.surrogate_term - out.kl_term);
  out.clip_fraction =
      static_cast<double>(clipped_tokens) / static_cast<double>(total_tokens);
  return out;
}

std::vector<double> group_loss_gradient(const RolloutGroup& group,
                                        const ShapedAdvantages& shaped,
                                        const policy::PolicySnapshot& policy,
                                        const TrainConfig& config) {
  check_shaped(group, shaped);

  const int group_size = group.size();
  const double eps = config.clip_epsilon;
  std::vector<double> grad(policy.param_count(), 0.0);
  std::vector<double> coef;

  for (int i = 0; i < group_size; ++i) {
    const Trajectory& tr = group.trajectories[i];
    const std::vector<double>& adv = shaped.per_token_advantage[i];
    const double beta_i = shaped.kl_weight[i];
    const int len = tr.length();
    const double scale =
        -1.0 / (static_cast<double>(group_size) * static_cast<double>(len));

    coef.assign(len, 0.0);
    for (int t = 0; t < len; ++t) {
      const double ratio = importance_ratio(tr.logp_current[t], tr.logp_old[t]);
      // d surrogate / d logp_current: A * ratio unless the clip binds.
      double c = clip_active(ratio, adv[t], eps) ? 0.0 : adv[t] * ratio;
      // d kl / d logp_current = 1 - exp(delta)
      const double delta = tr.logp_ref[t] - tr.logp_current[t];
      c -= beta_i * (1.0 - std::exp(delta));
      coef[t] = scale * c;
    }
    policy::accumulate_logprob_grad(policy, group.task, tr.tokens, coef, grad);
  }
  return grad;
}

}  // namespace apo::objective
