#include "oracle.hpp"

#include <cmath>
#include <numbers>

#include "apo/reward.hpp"

namespace apo::oracle {

namespace {

// Projection family written out again on purpose; must not call shaping code.
double projection(ProjectionVariant variant, double d) {
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

}  // namespace

ShapedAdvantages scalar_shape_pipeline(
    const RolloutGroup& group, const TrainConfig& config,
    std::optional<double> mean_correct_length_override) {
  const int group_size = group.size();
  ShapedAdvantages out;
  out.per_token_advantage.resize(group_size);
  out.kl_weight.assign(group_size, 0.0);

  int incorrect = 0;
  for (int i = 0; i < group_size; ++i) {
    if (group.trajectories[i].accuracy_reward == 0) ++incorrect;
  }
  const double difficulty =
      static_cast<double>(incorrect) / static_cast<double>(group_size);

  if (difficulty == 0.0) {
    out.group_skipped = true;
    for (int i = 0; i < group_size; ++i) {
      out.per_token_advantage[i].assign(group.trajectories[i].length(), 0.0);
    }
    return out;
  }

  std::vector<double> rewards(group_size, 0.0);
  for (int i = 0; i < group_size; ++i) {
    rewards[i] = group.trajectories[i].accuracy_reward +
                 config.lambda * group.trajectories[i].format_reward;
  }
  double sum = 0.0;
  for (int i = 0; i < group_size; ++i) sum += rewards[i];
  const double mean = sum / group_size;
  double var = 0.0;
  for (int i = 0; i < group_size; ++i) {
    const double dev = rewards[i] - mean;
    var += dev * dev;
  }
  const double sd = std::sqrt(var / group_size);

  std::vector<double> advantages(group_size, 0.0);
  if (sd != 0.0) {
    for (int i = 0; i < group_size; ++i) {
      advantages[i] = (rewards[i] - mean) / (sd + config.epsilon_std);
    }
  }

  std::optional<double> lmean = mean_correct_length_override;
  if (!lmean.has_value()) {
    double len_sum = 0.0;
    int n_correct = 0;
    for (int i = 0; i < group_size; ++i) {
      if (group.trajectories[i].accuracy_reward == 1) {
        len_sum += group.trajectories[i].length();
        ++n_correct;
      }
    }
    if (n_correct > 0) lmean = len_sum / n_correct;
  }

  for (int i = 0; i < group_size; ++i) {
    const Trajectory& tr = group.trajectories[i];
    double adv = advantages[i];
    if (config.enable_stcr && lmean.has_value() && tr.accuracy_reward == 0 &&
        tr.length() > *lmean) {
      const double alpha = 2.0 - std::pow(config.mu, *lmean - tr.length());
      adv = adv * alpha;
    }
    out.per_token_advantage[i].assign(tr.length(), adv);
  }

  for (int i = 0; i < group_size; ++i) {
    if (!config.enable_kl) {
      out.kl_weight[i] = 0.0;
    } else if (config.enable_dads &&
               group.trajectories[i].accuracy_reward == 1 &&
               difficulty != 0.0) {
      out.kl_weight[i] = projection(config.fd_variant, difficulty) * config.beta;
    } else {
      out.kl_weight[i] = config.beta;
    }
  }
  return out;
}

std::vector<double> fd_gradient(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::span<const double> params, double step) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("fd_gradient: step must be > 0");
  }
  std::vector<double> theta(params.begin(), params.end());
  std::vector<double> grad(theta.size(), 0.0);
  for (size_t j = 0; j < theta.size(); ++j) {
    const double saved = theta[j];
    theta[j] = saved + step;
    const double up = loss_fn(theta);
    theta[j] = saved - step;
    const double down = loss_fn(theta);
    theta[j] = saved;
    grad[j] = (up - down) / (2.0 * step);
  }
  return grad;
}

namespace {

struct Enumerator {
  const policy::PolicySnapshot& policy;
  const TaskInstance& task;
  const std::function<std::string(std::span<const TokenId>)>& detokenize;
  const std::string& ground_truth;
  double lambda;
  int max_len;
  long node_cap;
  long nodes = 0;
  bool squared = false;
  double acc = 0.0;
  std::vector<TokenId> prefix;

  double reward_of(std::span<const TokenId> response) const {
    const std::string text = detokenize(response);
    return reward::check_accuracy(text, ground_truth) +
           lambda * reward::check_format(text);
  }

  void walk(double prefix_prob) {
    const std::vector<double> probs =
        policy::next_token_probs(policy, task, prefix);
    for (TokenId v = 0; v < policy.vocab_size; ++v) {
      if (++nodes > node_cap) {
        throw ExplosionGuardError("exhaustive_expectation: enumeration cap");
      }
      const double p = prefix_prob * probs[v];
      prefix.push_back(v);
      if (v == policy.eos_token ||
          static_cast<int>(prefix.size()) == max_len) {
        const double r = reward_of(prefix);
        acc += p * (squared ? r * r : r);
      } else {
        walk(p);
      }
      prefix.pop_back();
    }
  }
};

double run_enumeration(
    const policy::PolicySnapshot& policy, const TaskInstance& task,
    const std::function<std::string(std::span<const TokenId>)>& detokenize,
    const std::string& ground_truth, double lambda, int max_len, long node_cap,
    bool squared) {
  if (max_len < 1) {
    throw std::invalid_argument("exhaustive_expectation: max_len must be >= 1");
  }
  Enumerator e{policy, task, detokenize, ground_truth,
               lambda, max_len, node_cap, 0, squared, 0.0, {}};
  e.walk(1.0);
  return e.acc;
}

}  // namespace

double exhaustive_expectation(
    const policy::PolicySnapshot& policy, const TaskInstance& task,
    const std::function<std::string(std::span<const TokenId>)>& detokenize,
    const std::string& ground_truth, double lambda, int max_len,
    long node_cap) {
  return run_enumeration(policy, task, detokenize, ground_truth, lambda,
                         max_len, node_cap, false);
}

double exhaustive_second_moment(
    const policy::PolicySnapshot& policy, const TaskInstance& task,
    const std::function<std::string(std::span<const TokenId>)>& detokenize,
    const std::string& ground_truth, double lambda, int max_len,
    long node_cap) {
  return run_enumeration(policy, task, detokenize, ground_truth, lambda,
                         max_len, node_cap, true);
}

}  // namespace apo::oracle
