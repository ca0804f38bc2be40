#include "apo/shaping.hpp"

#include <cmath>
#include <numbers>

namespace apo::shaping {

double group_difficulty(std::span<const int> accuracy_flags, int group_size) {
  if (group_size <= 0 ||
      accuracy_flags.size() != static_cast<size_t>(group_size)) {
    throw std::invalid_argument("group_difficulty: flags/G mismatch");
  }
  int incorrect = 0;
  for (int flag : accuracy_flags) {
    if (flag == 0) ++incorrect;
  }
  return static_cast<double>(incorrect) / static_cast<double>(group_size);
}

std::vector<double> normalize_advantages(std::span<const double> rewards,
                                         double epsilon_std) {
  if (rewards.size() < 2) {
    throw std::invalid_argument("normalize_advantages: need >= 2 rewards");
  }
  const int n = static_cast<int>(rewards.size());
  double sum = 0.0;
  for (double r : rewards) sum += r;
  const double mean = sum / n;
  double var = 0.0;
  for (double r : rewards) {
    const double d = r - mean;
    var += d * d;
  }
  const double std_dev = std::sqrt(var / n);

  std::vector<double> out(rewards.size(), 0.0);
  if (std_dev == 0.0) return out;
  for (int i = 0; i < n; ++i) {
    out[i] = (rewards[i] - mean) / (std_dev + epsilon_std);
  }
  return out;
}

double eval_projection(ProjectionVariant variant, double d) {
  if (!(d >= 0.0 && d <= 1.0)) {
    throw std::domain_error("eval_projection: d outside [0,1]");
  }
  switch (variant) {
    case ProjectionVariant::Exponential:
      return 1.0 - std::exp(std::numbers::e * (d - 1.0));
    case ProjectionVariant::Linear:
      return 1.0 - d;
    case ProjectionVariant::Cubic:
      return 1.0 - d * d * d;
    case ProjectionVariant::Constant:
      return 1.0;
  }
  return 1.0;
}

std::vector<double> dads_kl_weights(const RolloutGroup& group, double beta,
                                    ProjectionVariant variant) {
  const double d = group.difficulty;
  if (d == 0.0) {
    throw FilteredGroupError(
        "dads_kl_weights: all-correct group must be filtered upstream");
  }
  const double shaped = eval_projection(variant, d) * beta;
  std::vector<double> weights(group.trajectories.size(), beta);
  for (size_t i = 0; i < group.trajectories.size(); ++i) {
    if (group.trajectories[i].accuracy_reward == 1) {
      weights[i] = shaped;
    }
  }
  return weights;
}

double stcr_alpha(int length, double mean_correct_length, double mu) {
  return 2.0 - std::pow(mu, mean_correct_length - length);
}

ShapedAdvantages shape_group(
    const RolloutGroup& group, const TrainConfig& config,
    std::optional<double> mean_correct_length_override) {
  const auto check = validate_group(group);
  if (!check.ok()) {
    throw std::invalid_argument(std::string("shape_group: ") + check.detail);
  }

  const int group_size = group.size();
  ShapedAdvantages shaped;
  shaped.per_token_advantage.resize(group_size);
  shaped.kl_weight.assign(group_size, 0.0);

  // All-correct groups carry no advantage signal and are dropped entirely.
  if (group.difficulty == 0.0) {
    shaped.group_skipped = true;
    for (int i = 0; i < group_size; ++i) {
      shaped.per_token_advantage[i].assign(group.trajectories[i].length(), 0.0);
    }
    return shaped;
  }

  std::vector<double> rewards(group_size);
  for (int i = 0; i < group_size; ++i) {
    const Trajectory& tr = group.trajectories[i];
    rewards[i] = tr.accuracy_reward + config.lambda * tr.format_reward;
  }
  const std::vector<double> advantages =
      normalize_advantages(rewards, config.epsilon_std);

  const std::optional<double> mean_correct_length =
      mean_correct_length_override.has_value() ? mean_correct_length_override
                                               : group.mean_correct_length;

  for (int i = 0; i < group_size; ++i) {
    const Trajectory& tr = group.trajectories[i];
    double adv = advantages[i];
    if (config.enable_stcr && mean_correct_length.has_value() &&
        tr.accuracy_reward == 0 && tr.length() > *mean_correct_length) {
      adv *= stcr_alpha(tr.length(), *mean_correct_length, config.mu);
    }
    shaped.per_token_advantage[i].assign(tr.length(), adv);
  }

  if (!config.enable_kl) {
    // kl_weight already zero-initialized
  } else if (config.enable_dads) {
    shaped.kl_weight = dads_kl_weights(group, config.beta, config.fd_variant);
  } else {
    shaped.kl_weight.assign(group_size, config.beta);
  }
  return shaped;
}

}  // namespace apo::shaping
