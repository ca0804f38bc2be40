#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace apo {

using TokenId = int32_t;

// One verifiable question: prompt as token ids, answer as a canonical string.
struct TaskInstance {
  std::string id;
  std::vector<TokenId> prompt_tokens;
  std::string ground_truth;
  int difficulty_tier = 0;
};

// One sampled response with the per-token log-probs recorded under the
// current, behavior, and reference policies. Rewards are kept as {0,1} flags;
// the composite reward is recomputed on demand so lambda stays sweepable.
struct Trajectory {
  std::vector<TokenId> tokens;
  std::vector<double> logp_current;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  int accuracy_reward = 0;
  int format_reward = 0;

  int length() const { return static_cast<int>(tokens.size()); }
};

// G trajectories for one task plus the group statistics. `difficulty` is
// stored redundantly with its defining count and re-validated downstream.
struct RolloutGroup {
  TaskInstance task;
  std::vector<Trajectory> trajectories;
  double difficulty = 0.0;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  std::optional<double> mean_correct_length;

  int size() const { return static_cast<int>(trajectories.size()); }
};

// Per-token advantages after normalization and STCR, plus the per-trajectory
// KL weights after DADS. Within one trajectory all entries are equal (the
// group-level advantage broadcast to tokens).
struct ShapedAdvantages {
  std::vector<std::vector<double>> per_token_advantage;
  std::vector<double> kl_weight;
  bool group_skipped = false;
};

enum class ProjectionVariant { Exponential, Linear, Cubic, Constant };
enum class LMeanScope { Group, Batch };
enum class OptimizerKind { Sgd, Adam };

const char* to_string(ProjectionVariant v);
const char* to_string(LMeanScope s);
const char* to_string(OptimizerKind k);
ProjectionVariant projection_variant_from_string(const std::string& s);
LMeanScope lmean_scope_from_string(const std::string& s);
OptimizerKind optimizer_kind_from_string(const std::string& s);

// Every hyperparameter of a run. The first block mirrors the algorithm
// hyperparameters; the second block is engine plumbing (batch shape, decode
// cap, warm start). All fields participate in the config hash.
struct TrainConfig {
  int group_size = 8;
  double lambda = 0.5;
  double beta = 0.04;
  double mu = 1.0001;
  double clip_epsilon = 0.2;
  double learning_rate = 1e-6;
  double lr_multiplier = 1.0;  // desk-scale runs scale the paper rate up
  ProjectionVariant fd_variant = ProjectionVariant::Exponential;
  bool enable_dads = true;
  bool enable_stcr = true;
  bool enable_kl = true;
  uint64_t seed = 42;

  double epsilon_std = 1e-6;
  int batch_size = 64;
  int updates_per_rollout = 1;
  LMeanScope lmean_scope = LMeanScope::Group;
  int max_length = 256;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  int embed_dim = 16;
  int warmstart_demos = 384;
  int warmstart_epochs = 6;
  double warmstart_lr = 0.1;

  double effective_learning_rate() const {
    return learning_rate * lr_multiplier;
  }

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

enum class GroupError {
  None,
  LengthMismatch,
  NonFiniteLogProb,
  DifficultyMismatch,
  MeanCorrectLengthMismatch,
  EmptyTrajectory,
  BadRewardFlag,
  BadTask,
  EmptyGroup,
};

const char* to_string(GroupError e);

struct ValidationResult {
  GroupError error = GroupError::None;
  std::string detail;

  bool ok() const { return error == GroupError::None; }
};

// Checks every type invariant of the group and its trajectories. When
// vocab_size > 0, prompt token ids are range-checked against it.
ValidationResult validate_group(const RolloutGroup& group, int vocab_size = 0);

// Assembles a group from verified trajectories, computing difficulty, reward
// mean/std (population), and the mean correct length. `lambda` is the reward
// trade-off in force at rollout time.
RolloutGroup make_group(TaskInstance task, std::vector<Trajectory> trajectories,
                        double lambda);

// Trajectory-log format: one JSON object per line, UTF-8, token ids as
// integer arrays, floats printed with 17 significant digits so every value
// round-trips bit-exactly.
std::string format_double(double v);

std::string to_json_line(const TaskInstance& task);
std::string to_json_line(const RolloutGroup& group);
std::string to_json_line(const ShapedAdvantages& shaped);

TaskInstance task_from_json(const std::string& line);
RolloutGroup group_from_json(const std::string& line);
ShapedAdvantages shaped_from_json(const std::string& line);

}  // namespace apo
