#include "apo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "apo/objective.hpp"
#include "apo/reward.hpp"
#include "apo/shaping.hpp"
#include "apo/tasks.hpp"

namespace apo::trainer {

namespace {

using nlohmann::json;

// Substream tags for everything derived from config.seed.
constexpr uint64_t kInitStream = 1;
constexpr uint64_t kWarmstartStream = 2;
constexpr uint64_t kBatchStream = 3;
constexpr uint64_t kRolloutStream = 4;

constexpr double kInitScale = 0.05;

// Adam moment constants for the adaptive-moment option.
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

bool advantages_all_zero(const ShapedAdvantages& shaped) {
  for (const auto& row : shaped.per_token_advantage) {
    if (!row.empty() && row[0] != 0.0) return false;
  }
  return true;
}

std::optional<double> batch_mean_correct_length(
    const std::vector<RolloutGroup>& groups) {
  double sum = 0.0;
  int count = 0;
  for (const RolloutGroup& g : groups) {
    if (g.difficulty == 0.0) continue;  // filtered groups never train
    for (const Trajectory& tr : g.trajectories) {
      if (tr.accuracy_reward == 1) {
        sum += tr.length();
        ++count;
      }
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

void apply_optimizer_step(TrainState& state, std::span<const double> grad,
                          const TrainConfig& config) {
  const double lr = config.effective_learning_rate();
  auto& params = state.current.params;
  if (config.optimizer == OptimizerKind::Sgd) {
    for (size_t j = 0; j < params.size(); ++j) {
      params[j] -= lr * grad[j];
    }
    return;
  }
  OptimizerState& opt = state.optimizer_state;
  if (opt.m.size() != params.size()) {
    opt.m.assign(params.size(), 0.0);
    opt.v.assign(params.size(), 0.0);
    opt.t = 0;
  }
  ++opt.t;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(opt.t));
  for (size_t j = 0; j < params.size(); ++j) {
    opt.m[j] = kAdamBeta1 * opt.m[j] + (1.0 - kAdamBeta1) * grad[j];
    opt.v[j] = kAdamBeta2 * opt.v[j] + (1.0 - kAdamBeta2) * grad[j] * grad[j];
    params[j] -= lr * (opt.m[j] / bc1) / (std::sqrt(opt.v[j] / bc2) + kAdamEps);
  }
}

std::string optional_csv(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json policy_to_json(const policy::PolicySnapshot& p) {
  json j;
  j["vocab_size"] = p.vocab_size;
  j["embed_dim"] = p.embed_dim;
  j["max_length"] = p.max_length;
  j["eos_token"] = p.eos_token;
  j["params"] = p.params;
  return j;
}

policy::PolicySnapshot policy_from_json(const json& j) {
  policy::PolicySnapshot p;
  p.vocab_size = j.at("vocab_size").get<int>();
  p.embed_dim = j.at("embed_dim").get<int>();
  p.max_length = j.at("max_length").get<int>();
  p.eos_token = j.at("eos_token").get<TokenId>();
  p.params = j.at("params").get<std::vector<double>>();
  if (p.params.size() != p.param_count()) {
    throw std::invalid_argument("checkpoint: parameter count mismatch");
  }
  return p;
}

json config_to_json(const TrainConfig& c) {
  json j;
  j["group_size"] = c.group_size;
  j["lambda"] = c.lambda;
  j["beta"] = c.beta;
  j["mu"] = c.mu;
  j["clip_epsilon"] = c.clip_epsilon;
  j["learning_rate"] = c.learning_rate;
  j["lr_multiplier"] = c.lr_multiplier;
  j["fd_variant"] = to_string(c.fd_variant);
  j["enable_dads"] = c.enable_dads;
  j["enable_stcr"] = c.enable_stcr;
  j["enable_kl"] = c.enable_kl;
  j["seed"] = c.seed;
  j["epsilon_std"] = c.epsilon_std;
  j["batch_size"] = c.batch_size;
  j["updates_per_rollout"] = c.updates_per_rollout;
  j["lmean_scope"] = to_string(c.lmean_scope);
  j["max_length"] = c.max_length;
  j["optimizer"] = to_string(c.optimizer);
  j["embed_dim"] = c.embed_dim;
  j["warmstart_demos"] = c.warmstart_demos;
  j["warmstart_epochs"] = c.warmstart_epochs;
  j["warmstart_lr"] = c.warmstart_lr;
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.group_size = j.at("group_size").get<int>();
  c.lambda = j.at("lambda").get<double>();
  c.beta = j.at("beta").get<double>();
  c.mu = j.at("mu").get<double>();
  c.clip_epsilon = j.at("clip_epsilon").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.lr_multiplier = j.at("lr_multiplier").get<double>();
  c.fd_variant = projection_variant_from_string(j.at("fd_variant"));
  c.enable_dads = j.at("enable_dads").get<bool>();
  c.enable_stcr = j.at("enable_stcr").get<bool>();
  c.enable_kl = j.at("enable_kl").get<bool>();
  c.seed = j.at("seed").get<uint64_t>();
  c.epsilon_std = j.at("epsilon_std").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.updates_per_rollout = j.at("updates_per_rollout").get<int>();
  c.lmean_scope = lmean_scope_from_string(j.at("lmean_scope"));
  c.max_length = j.at("max_length").get<int>();
  c.optimizer = optimizer_kind_from_string(j.at("optimizer"));
  c.embed_dim = j.at("embed_dim").get<int>();
  c.warmstart_demos = j.at("warmstart_demos").get<int>();
  c.warmstart_epochs = j.at("warmstart_epochs").get<int>();
  c.warmstart_lr = j.at("warmstart_lr").get<double>();
  return c;
}

}  // namespace

TrainState init_train_state(const TrainConfig& config,
                            std::span<const TaskInstance> warmstart_pool) {
  config.validate();
  const Rng root(config.seed);
  Rng init_rng = root.child(kInitStream);
  policy::PolicySnapshot p = policy::PolicySnapshot::random_init(
      tasks::kVocabSize, config.embed_dim, config.max_length, kInitScale,
      init_rng, tasks::kEos);
  policy::warm_start_format(p, warmstart_pool, config.warmstart_demos,
                            config.warmstart_epochs, config.warmstart_lr,
                            root.child(kWarmstartStream));
  TrainState state;
  state.current = p;
  state.behavior = p;
  state.reference = std::move(p);
  return state;
}

std::vector<TaskInstance> sample_batch(std::span<const TaskInstance> pool,
                                       const TrainConfig& config,
                                       int64_t step) {
  if (pool.empty()) {
    throw std::invalid_argument("sample_batch: empty task pool");
  }
  Rng batch_rng = Rng(config.seed)
                      .child(kBatchStream)
                      .child(static_cast<uint64_t>(step));
  std::vector<TaskInstance> batch;
  batch.reserve(config.batch_size);
  for (int b = 0; b < config.batch_size; ++b) {
    batch.push_back(pool[batch_rng.next_below(pool.size())]);
  }
  return batch;
}

std::vector<RolloutGroup> rollout_phase(const TrainState& state,
                                        std::span<const TaskInstance> tasks,
                                        const TrainConfig& config) {
  if (tasks.empty()) {
    throw std::invalid_argument("rollout_phase: empty task batch");
  }
  const Rng phase_rng = Rng(config.seed)
                            .child(kRolloutStream)
                            .child(static_cast<uint64_t>(state.step));
  std::vector<RolloutGroup> groups;
  groups.reserve(tasks.size());

  for (size_t g = 0; g < tasks.size(); ++g) {
    const TaskInstance& task = tasks[g];
    const Rng group_rng = phase_rng.child(g);
    std::vector<Trajectory> trajectories;
    trajectories.reserve(config.group_size);
    for (int i = 0; i < config.group_size; ++i) {
      Rng sample_rng = group_rng.child(static_cast<uint64_t>(i));
      policy::SampledResponse sampled =
          policy::sample_response(state.behavior, task, sample_rng);

      Trajectory tr;
      tr.tokens = std::move(sampled.tokens);
      tr.logp_old = std::move(sampled.logp);
      tr.logp_current = policy::score_logprob(state.current, task, tr.tokens);
      tr.logp_ref = policy::score_logprob(state.reference, task, tr.tokens);

      const std::string text = tasks::detokenize(tr.tokens);
      tr.accuracy_reward = reward::check_accuracy(text, task.ground_truth);
      tr.format_reward = reward::check_format(text);
      trajectories.push_back(std::move(tr));
    }
    groups.push_back(make_group(task, std::move(trajectories), config.lambda));
  }
  return groups;
}

void refresh_current_logps(std::vector<RolloutGroup>& groups,
                           const policy::PolicySnapshot& current) {
  for (RolloutGroup& g : groups) {
    for (Trajectory& tr : g.trajectories) {
      tr.logp_current = policy::score_logprob(current, g.task, tr.tokens);
    }
  }
}

MetricRow train_step(TrainState& state, const std::vector<RolloutGroup>& groups,
                     const TrainConfig& config) {
  if (groups.empty()) {
    throw std::invalid_argument("train_step: empty batch");
  }

  MetricRow row;
  row.step = state.step;

  // Batch-level reward and length diagnostics over every trajectory.
  long n_traj = 0;
  long n_correct = 0, n_incorrect = 0;
  double acc_sum = 0.0, fmt_sum = 0.0;
  double len_correct_sum = 0.0, len_incorrect_sum = 0.0;
  double kl_sum = 0.0;
  long kl_tokens = 0;
  for (const RolloutGroup& g : groups) {
    for (const Trajectory& tr : g.trajectories) {
      ++n_traj;
      acc_sum += tr.accuracy_reward;
      fmt_sum += tr.format_reward;
      if (tr.accuracy_reward == 1) {
        ++n_correct;
        len_correct_sum += tr.length();
      } else {
        ++n_incorrect;
        len_incorrect_sum += tr.length();
      }
      for (int t = 0; t < tr.length(); ++t) {
        kl_sum += objective::token_kl(tr.logp_current[t], tr.logp_ref[t]);
        ++kl_tokens;
      }
    }
  }
  row.mean_accuracy_reward = acc_sum / n_traj;
  row.mean_format_reward = fmt_sum / n_traj;
  if (n_correct > 0) row.mean_len_correct = len_correct_sum / n_correct;
  if (n_incorrect > 0) row.mean_len_incorrect = len_incorrect_sum / n_incorrect;
  if (row.mean_len_correct && row.mean_len_incorrect) {
    row.length_gap = *row.mean_len_incorrect - *row.mean_len_correct;
  }
  row.mean_kl = kl_sum / kl_tokens;

  // Entropy over a fixed, deterministic context sample: the first trajectory
  // of each group at the start, middle, and end of decoding.
  std::vector<policy::DecodeContext> contexts;
  for (const RolloutGroup& g : groups) {
    const Trajectory& tr = g.trajectories.front();
    const int len = tr.length();
    for (int cut : {0, len / 2, len - 1}) {
      if (cut < 0) continue;
      policy::DecodeContext ctx;
      ctx.task = g.task;
      ctx.prefix.assign(tr.tokens.begin(), tr.tokens.begin() + cut);
      contexts.push_back(std::move(ctx));
    }
  }
  row.policy_entropy = policy::policy_entropy(state.current, contexts);

  const std::optional<double> batch_lmean =
      config.lmean_scope == LMeanScope::Batch
          ? batch_mean_correct_length(groups)
          : std::nullopt;

  std::vector<double> grad_acc(state.current.param_count(), 0.0);
  int contributing = 0;
  long clipped_tokens = 0;
  long surrogate_tokens = 0;

  for (const RolloutGroup& g : groups) {
    if (g.difficulty == 0.0) {
      ++row.groups_filtered_all_correct;
      continue;
    }
    const ShapedAdvantages shaped =
        config.lmean_scope == LMeanScope::Batch
            ? shaping::shape_group(g, config, batch_lmean)
            : shaping::shape_group(g, config);
    if (advantages_all_zero(shaped)) {
      ++row.groups_zero_variance;
      continue;
    }
    const objective::LossBreakdown loss =
        objective::group_loss(g, shaped, config);
    long group_tokens = 0;
    for (const Trajectory& tr : g.trajectories) group_tokens += tr.length();
    clipped_tokens += std::llround(loss.clip_fraction * group_tokens);
    surrogate_tokens += group_tokens;

    const std::vector<double> grad =
        objective::group_loss_gradient(g, shaped, state.current, config);
    for (size_t j = 0; j < grad_acc.size(); ++j) grad_acc[j] += grad[j];
    ++contributing;
  }

  if (surrogate_tokens > 0) {
    row.clip_fraction =
        static_cast<double>(clipped_tokens) / surrogate_tokens;
  }

  if (contributing > 0) {
    for (double& gj : grad_acc) gj /= contributing;
    apply_optimizer_step(state, grad_acc, config);
  }

  ++state.step;
  state.metrics_log.push_back(row);
  return row;
}

double coefficient_of_variation(std::span<const double> series) {
  if (series.empty()) {
    throw DegenerateMeanError("coefficient_of_variation: empty series");
  }
  double sum = 0.0;
  for (double v : series) sum += v;
  const double mean = sum / series.size();
  if (!(mean > 0.0)) {
    throw DegenerateMeanError("coefficient_of_variation: mean not positive");
  }
  if (series.size() < 2) return 0.0;
  double var = 0.0;
  for (double v : series) {
    const double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(series.size() - 1);
  return std::sqrt(var) / mean;
}

std::string metrics_csv_header() {
  return "step,mean_accuracy_reward,mean_format_reward,mean_len_correct,"
         "mean_len_incorrect,length_gap,policy_entropy,mean_kl,clip_fraction,"
         "groups_filtered_all_correct,groups_zero_variance";
}

std::string metrics_csv_row(const MetricRow& r) {
  std::string out = std::to_string(r.step);
  out += ',';
  out += format_double(r.mean_accuracy_reward);
  out += ',';
  out += format_double(r.mean_format_reward);
  out += ',';
  out += optional_csv(r.mean_len_correct);
  out += ',';
  out += optional_csv(r.mean_len_incorrect);
  out += ',';
  out += optional_csv(r.length_gap);
  out += ',';
  out += format_double(r.policy_entropy);
  out += ',';
  out += format_double(r.mean_kl);
  out += ',';
  out += optional_csv(r.clip_fraction);
  out += ',';
  out += std::to_string(r.groups_filtered_all_correct);
  out += ',';
  out += std::to_string(r.groups_zero_variance);
  return out;
}

std::string metrics_json_row(const MetricRow& r) {
  json j;
  j["step"] = r.step;
  j["mean_accuracy_reward"] = r.mean_accuracy_reward;
  j["mean_format_reward"] = r.mean_format_reward;
  j["mean_len_correct"] = optional_json(r.mean_len_correct);
  j["mean_len_incorrect"] = optional_json(r.mean_len_incorrect);
  j["length_gap"] = optional_json(r.length_gap);
  j["policy_entropy"] = r.policy_entropy;
  j["mean_kl"] = r.mean_kl;
  j["clip_fraction"] = optional_json(r.clip_fraction);
  j["groups_filtered_all_correct"] = r.groups_filtered_all_correct;
  j["groups_zero_variance"] = r.groups_zero_variance;
  return j.dump();
}

std::vector<MetricRow> parse_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open metrics file: " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) return {};
  if (line != metrics_csv_header()) {
    throw std::runtime_error("unexpected metrics header in " + path.string());
  }
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    // A trailing empty cell is dropped by getline; pad to column count.
    while (cells.size() < 11) cells.emplace_back();
    if (cells.size() != 11) {
      throw std::runtime_error("bad metrics row: " + line);
    }
    auto opt = [](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return std::stod(s);
    };
    MetricRow r;
    r.step = std::stoll(cells[0]);
    r.mean_accuracy_reward = std::stod(cells[1]);
    r.mean_format_reward = std::stod(cells[2]);
    r.mean_len_correct = opt(cells[3]);
    r.mean_len_incorrect = opt(cells[4]);
    r.length_gap = opt(cells[5]);
    r.policy_entropy = std::stod(cells[6]);
    r.mean_kl = std::stod(cells[7]);
    r.clip_fraction = opt(cells[8]);
    r.groups_filtered_all_correct = std::stoi(cells[9]);
    r.groups_zero_variance = std::stoi(cells[10]);
    rows.push_back(r);
  }
  return rows;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const TrainConfig& config) {
  json j;
  j["step"] = state.step;
  j["config"] = config_to_json(config);
  j["current"] = policy_to_json(state.current);
  j["behavior"] = policy_to_json(state.behavior);
  j["reference"] = policy_to_json(state.reference);
  j["optimizer"] = {{"m", state.optimizer_state.m},
                    {"v", state.optimizer_state.v},
                    {"t", state.optimizer_state.t}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint: " + path.string());
  }
  out << j.dump() << '\n';
  if (!out) {
    throw std::runtime_error("checkpoint write failed: " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint: " + path.string());
  }
  json j;
  in >> j;
  Checkpoint ck;
  ck.state.step = j.at("step").get<int64_t>();
  ck.config = config_from_json(j.at("config"));
  ck.state.current = policy_from_json(j.at("current"));
  ck.state.behavior = policy_from_json(j.at("behavior"));
  ck.state.reference = policy_from_json(j.at("reference"));
  const auto& opt = j.at("optimizer");
  ck.state.optimizer_state.m = opt.at("m").get<std::vector<double>>();
  ck.state.optimizer_state.v = opt.at("v").get<std::vector<double>>();
  ck.state.optimizer_state.t = opt.at("t").get<int64_t>();
  return ck;
}

RunResult run_training(const TrainConfig& config,
                       const std::vector<CurriculumTier>& curriculum,
                       int64_t total_steps, const RunIO& io) {
  config.validate();
  if (total_steps < 0) {
    throw std::invalid_argument("run_training: negative step count");
  }
  for (const CurriculumTier& tier : curriculum) {
    if (tier.tasks.empty() && total_steps > 0) {
      throw std::invalid_argument("run_training: empty curriculum tier");
    }
  }
  if (curriculum.empty() && total_steps > 0) {
    throw std::invalid_argument("run_training: empty curriculum");
  }

  RunResult result;
  const bool with_io = !io.out_dir.empty();
  std::ofstream csv;
  std::ofstream jsonl;
  if (with_io) {
    std::filesystem::create_directories(io.out_dir);
    result.metrics_csv = io.out_dir / "metrics.csv";
    result.metrics_jsonl = io.out_dir / "metrics.jsonl";
    result.checkpoint = io.out_dir / "checkpoint.json";
  }

  TrainState state;
  if (io.resume && with_io && std::filesystem::exists(result.checkpoint)) {
    Checkpoint ck = load_checkpoint(result.checkpoint);
    state = std::move(ck.state);
    csv.open(result.metrics_csv, std::ios::app);
    jsonl.open(result.metrics_jsonl, std::ios::app);
  } else {
    std::vector<TaskInstance> pool;
    for (const CurriculumTier& tier : curriculum) {
      pool.insert(pool.end(), tier.tasks.begin(), tier.tasks.end());
    }
    state = init_train_state(config, pool);
    if (with_io) {
      csv.open(result.metrics_csv, std::ios::trunc);
      jsonl.open(result.metrics_jsonl, std::ios::trunc);
      csv << metrics_csv_header() << '\n';
    }
  }
  if (with_io && (!csv || !jsonl)) {
    throw std::runtime_error("run_training: cannot open metrics files under " +
                             io.out_dir.string());
  }

  // Equal step budget per tier, introduced in the order given; the division
  // remainder goes to the earliest tiers.
  const auto tier_for_step = [&](int64_t step) -> const CurriculumTier& {
    const int64_t tiers = static_cast<int64_t>(curriculum.size());
    const int64_t base = total_steps / tiers;
    const int64_t extra = total_steps % tiers;
    int64_t boundary = 0;
    for (int64_t i = 0; i < tiers; ++i) {
      boundary += base + (i < extra ? 1 : 0);
      if (step < boundary) return curriculum[static_cast<size_t>(i)];
    }
    return curriculum.back();
  };

  std::vector<RolloutGroup> groups;
  while (state.step < total_steps) {
    const CurriculumTier& tier = tier_for_step(state.step);
    const bool rollout_boundary =
        groups.empty() || state.step % config.updates_per_rollout == 0;
    if (rollout_boundary) {
      state.behavior = state.current;
      const std::vector<TaskInstance> batch =
          sample_batch(tier.tasks, config, state.step);
      groups = rollout_phase(state, batch, config);
    } else {
      refresh_current_logps(groups, state.current);
    }

    const MetricRow row = train_step(state, groups, config);
    if (with_io) {
      csv << metrics_csv_row(row) << '\n';
      csv.flush();
      jsonl << metrics_json_row(row) << '\n';
      jsonl.flush();
      save_checkpoint(result.checkpoint, state, config);
    }
  }

  result.state = std::move(state);
  return result;
}

}  // namespace apo::trainer
