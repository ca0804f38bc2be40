#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "apo/core.hpp"
#include "apo/policy.hpp"

namespace apo::trainer {

struct DegenerateMeanError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One row per training step. Length fields are absent when their population
// is empty (e.g. no correct response in the batch).
struct MetricRow {
  int64_t step = 0;
  double mean_accuracy_reward = 0.0;
  double mean_format_reward = 0.0;
  std::optional<double> mean_len_correct;
  std::optional<double> mean_len_incorrect;
  std::optional<double> length_gap;  // incorrect minus correct
  double policy_entropy = 0.0;
  double mean_kl = 0.0;
  std::optional<double> clip_fraction;
  int groups_filtered_all_correct = 0;
  int groups_zero_variance = 0;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t t = 0;
};

struct TrainState {
  int64_t step = 0;
  policy::PolicySnapshot current;
  policy::PolicySnapshot behavior;   // theta_old, refreshed at rollout time
  policy::PolicySnapshot reference;  // frozen at step 0 for the whole run
  OptimizerState optimizer_state;
  std::vector<MetricRow> metrics_log;
};

// Random init + format warm start; current, behavior, and reference all start
// as the same snapshot.
TrainState init_train_state(const TrainConfig& config,
                            std::span<const TaskInstance> warmstart_pool);

// The task batch for one step, drawn with replacement from the active pool.
// Deterministic in (config.seed, step).
std::vector<TaskInstance> sample_batch(std::span<const TaskInstance> pool,
                                       const TrainConfig& config, int64_t step);

// G samples per task from the behavior policy; logp_old from sampling,
// logp_ref and logp_current by rescoring; rewards verified; group statistics
// computed. Deterministic in (config.seed, state.step, task index, sample).
std::vector<RolloutGroup> rollout_phase(const TrainState& state,
                                        std::span<const TaskInstance> tasks,
                                        const TrainConfig& config);

// Rescores logp_current under `current`; used between optimizer updates when
// several updates share one rollout batch.
void refresh_current_logps(std::vector<RolloutGroup>& groups,
                           const policy::PolicySnapshot& current);

// Drops all-correct groups (counting them), skips zero-variance groups
// (counting them), shapes and accumulates gradients over the rest, applies
// one optimizer step, and appends a MetricRow. A batch with nothing to train
// on is a no-op that still logs.
MetricRow train_step(TrainState& state, const std::vector<RolloutGroup>& groups,
                     const TrainConfig& config);

// Sample standard deviation divided by mean. Throws DegenerateMeanError when
// the series is empty or the mean is not positive.
double coefficient_of_variation(std::span<const double> series);

struct CurriculumTier {
  int tier = 0;
  std::vector<TaskInstance> tasks;
};

struct RunIO {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  bool resume = false;            // append to metrics, restart from checkpoint
};

struct RunResult {
  TrainState state;
  std::filesystem::path metrics_csv;
  std::filesystem::path metrics_jsonl;
  std::filesystem::path checkpoint;
};

// Rollout/update cycles over the curriculum: tiers are introduced in the
// given order with an equal share of the step budget each. `total_steps` is
// the run total; a resumed run continues from the checkpointed step.
RunResult run_training(const TrainConfig& config,
                       const std::vector<CurriculumTier>& curriculum,
                       int64_t total_steps, const RunIO& io);

// Metrics serialization. CSV columns are exactly the MetricRow field names;
// absent optionals serialize as empty cells (CSV) or null (JSONL).
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricRow& row);
std::string metrics_json_row(const MetricRow& row);
std::vector<MetricRow> parse_metrics_csv(const std::filesystem::path& path);

// Checkpoints: parameter vectors + config + step, decimal floats only.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const TrainConfig& config);
struct Checkpoint {
  TrainState state;
  TrainConfig config;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace apo::trainer
