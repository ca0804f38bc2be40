#include "apo/core.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

namespace apo {

using nlohmann::json;

const char* to_string(ProjectionVariant v) {
  switch (v) {
    case ProjectionVariant::Exponential: return "exponential";
    case ProjectionVariant::Linear: return "linear";
    case ProjectionVariant::Cubic: return "cubic";
    case ProjectionVariant::Constant: return "constant";
  }
  return "exponential";
}

const char* to_string(LMeanScope s) {
  return s == LMeanScope::Group ? "group" : "batch";
}

const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::Sgd ? "sgd" : "adam";
}

ProjectionVariant projection_variant_from_string(const std::string& s) {
  if (s == "exponential") return ProjectionVariant::Exponential;
  if (s == "linear") return ProjectionVariant::Linear;
  if (s == "cubic") return ProjectionVariant::Cubic;
  if (s == "constant") return ProjectionVariant::Constant;
  throw std::invalid_argument("unknown projection variant: " + s);
}

LMeanScope lmean_scope_from_string(const std::string& s) {
  if (s == "group") return LMeanScope::Group;
  if (s == "batch") return LMeanScope::Batch;
  throw std::invalid_argument("unknown lmean scope: " + s);
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer: " + s);
}

void TrainConfig::validate() const {
  if (group_size < 2)
    throw std::invalid_argument("group_size must be >= 2");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");
  if (!(mu > 1.0)) throw std::invalid_argument("mu must be > 1");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0))
    throw std::invalid_argument("clip_epsilon must be in (0,1)");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("learning_rate must be > 0");
  if (!(lr_multiplier > 0.0))
    throw std::invalid_argument("lr_multiplier must be > 0");
  if (!(epsilon_std > 0.0))
    throw std::invalid_argument("epsilon_std must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (updates_per_rollout < 1)
    throw std::invalid_argument("updates_per_rollout must be >= 1");
  if (max_length < 1) throw std::invalid_argument("max_length must be >= 1");
  if (embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");
  if (warmstart_demos < 0)
    throw std::invalid_argument("warmstart_demos must be >= 0");
  if (warmstart_epochs < 0)
    throw std::invalid_argument("warmstart_epochs must be >= 0");
  if (!(warmstart_lr > 0.0))
    throw std::invalid_argument("warmstart_lr must be > 0");
}

const char* to_string(GroupError e) {
  switch (e) {
    case GroupError::None: return "None";
    case GroupError::LengthMismatch: return "LengthMismatch";
    case GroupError::NonFiniteLogProb: return "NonFiniteLogProb";
    case GroupError::DifficultyMismatch: return "DifficultyMismatch";
    case GroupError::MeanCorrectLengthMismatch:
      return "MeanCorrectLengthMismatch";
    case GroupError::EmptyTrajectory: return "EmptyTrajectory";
    case GroupError::BadRewardFlag: return "BadRewardFlag";
    case GroupError::BadTask: return "BadTask";
    case GroupError::EmptyGroup: return "EmptyGroup";
  }
  return "None";
}

ValidationResult validate_group(const RolloutGroup& group, int vocab_size) {
  if (group.trajectories.empty()) {
    return {GroupError::EmptyGroup, "group has no trajectories"};
  }
  if (group.task.prompt_tokens.empty()) {
    return {GroupError::BadTask, "prompt_tokens empty"};
  }
  if (group.task.ground_truth.empty()) {
    return {GroupError::BadTask, "ground_truth empty"};
  }
  if (vocab_size > 0) {
    for (TokenId t : group.task.prompt_tokens) {
      if (t < 0 || t >= vocab_size) {
        return {GroupError::BadTask,
                "prompt token id out of range: " + std::to_string(t)};
      }
    }
  }

  const int group_size = group.size();
  int incorrect = 0;
  double correct_length_sum = 0.0;
  int correct_count = 0;

  for (int i = 0; i < group_size; ++i) {
    const Trajectory& tr = group.trajectories[i];
    const std::string at = " (trajectory " + std::to_string(i) + ")";
    if (tr.tokens.empty()) {
      return {GroupError::EmptyTrajectory, "empty token sequence" + at};
    }
    const size_t len = tr.tokens.size();
    if (tr.logp_current.size() != len || tr.logp_old.size() != len ||
        tr.logp_ref.size() != len) {
      return {GroupError::LengthMismatch,
              "log-prob sequence length differs from token count" + at};
    }
    for (const auto* seq : {&tr.logp_current, &tr.logp_old, &tr.logp_ref}) {
      for (double lp : *seq) {
        if (!std::isfinite(lp) || lp > 0.0) {
          return {GroupError::NonFiniteLogProb,
                  "log-prob not finite and <= 0" + at};
        }
      }
    }
    if ((tr.accuracy_reward != 0 && tr.accuracy_reward != 1) ||
        (tr.format_reward != 0 && tr.format_reward != 1)) {
      return {GroupError::BadRewardFlag, "reward flag outside {0,1}" + at};
    }
    if (vocab_size > 0) {
      for (TokenId t : tr.tokens) {
        if (t < 0 || t >= vocab_size) {
          return {GroupError::BadTask, "response token id out of range" + at};
        }
      }
    }
    if (tr.accuracy_reward == 0) {
      ++incorrect;
    } else {
      correct_length_sum += tr.length();
      ++correct_count;
    }
  }

  const double expected_difficulty =
      static_cast<double>(incorrect) / static_cast<double>(group_size);
  if (group.difficulty != expected_difficulty) {
    return {GroupError::DifficultyMismatch,
            "difficulty field " + format_double(group.difficulty) +
                " != incorrect/G = " + format_double(expected_difficulty)};
  }

  if (correct_count > 0) {
    if (!group.mean_correct_length.has_value()) {
      return {GroupError::MeanCorrectLengthMismatch,
              "mean_correct_length absent despite correct trajectories"};
    }
    const double expected = correct_length_sum / correct_count;
    if (*group.mean_correct_length != expected) {
      return {GroupError::MeanCorrectLengthMismatch,
              "mean_correct_length " +
                  format_double(*group.mean_correct_length) +
                  " != " + format_double(expected)};
    }
  } else if (group.mean_correct_length.has_value()) {
    return {GroupError::MeanCorrectLengthMismatch,
            "mean_correct_length present with no correct trajectory"};
  }

  return {};
}

RolloutGroup make_group(TaskInstance task, std::vector<Trajectory> trajectories,
                        double lambda) {
  if (trajectories.empty()) {
    throw std::invalid_argument("make_group: no trajectories");
  }
  RolloutGroup g;
  g.task = std::move(task);
  g.trajectories = std::move(trajectories);

  const int group_size = g.size();
  int incorrect = 0;
  int correct_count = 0;
  double correct_length_sum = 0.0;
  double reward_sum = 0.0;
  for (const Trajectory& tr : g.trajectories) {
    if (tr.accuracy_reward == 0) {
      ++incorrect;
    } else {
      ++correct_count;
      correct_length_sum += tr.length();
    }
    reward_sum += tr.accuracy_reward + lambda * tr.format_reward;
  }
  g.difficulty =
      static_cast<double>(incorrect) / static_cast<double>(group_size);
  g.reward_mean = reward_sum / group_size;
  double var = 0.0;
  for (const Trajectory& tr : g.trajectories) {
    const double r = tr.accuracy_reward + lambda * tr.format_reward;
    const double d = r - g.reward_mean;
    var += d * d;
  }
  g.reward_std = std::sqrt(var / group_size);
  if (correct_count > 0) {
    g.mean_correct_length = correct_length_sum / correct_count;
  }
  return g;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void append_double_array(std::string& out, const std::vector<double>& xs) {
  out += '[';
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += format_double(xs[i]);
  }
  out += ']';
}

void append_token_array(std::string& out, const std::vector<TokenId>& xs) {
  out += '[';
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  out += ']';
}

std::string escape_json(const std::string& s) {
  return json(s).dump();  // includes surrounding quotes
}

void append_task(std::string& out, const TaskInstance& task) {
  out += "{\"id\":";
  out += escape_json(task.id);
  out += ",\"prompt_tokens\":";
  append_token_array(out, task.prompt_tokens);
  out += ",\"ground_truth\":";
  out += escape_json(task.ground_truth);
  out += ",\"difficulty_tier\":";
  out += std::to_string(task.difficulty_tier);
  out += '}';
}

void append_trajectory(std::string& out, const Trajectory& tr) {
  out += "{\"tokens\":";
  append_token_array(out, tr.tokens);
  out += ",\"length\":";
  out += std::to_string(tr.length());
  out += ",\"logp_current\":";
  append_double_array(out, tr.logp_current);
  out += ",\"logp_old\":";
  append_double_array(out, tr.logp_old);
  out += ",\"logp_ref\":";
  append_double_array(out, tr.logp_ref);
  out += ",\"accuracy_reward\":";
  out += std::to_string(tr.accuracy_reward);
  out += ",\"format_reward\":";
  out += std::to_string(tr.format_reward);
  out += '}';
}

std::vector<TokenId> tokens_from(const json& j) {
  std::vector<TokenId> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(v.get<TokenId>());
  return out;
}

std::vector<double> doubles_from(const json& j) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(v.get<double>());
  return out;
}

TaskInstance task_from(const json& j) {
  TaskInstance t;
  t.id = j.at("id").get<std::string>();
  t.prompt_tokens = tokens_from(j.at("prompt_tokens"));
  t.ground_truth = j.at("ground_truth").get<std::string>();
  t.difficulty_tier = j.at("difficulty_tier").get<int>();
  return t;
}

Trajectory trajectory_from(const json& j) {
  Trajectory tr;
  tr.tokens = tokens_from(j.at("tokens"));
  tr.logp_current = doubles_from(j.at("logp_current"));
  tr.logp_old = doubles_from(j.at("logp_old"));
  tr.logp_ref = doubles_from(j.at("logp_ref"));
  tr.accuracy_reward = j.at("accuracy_reward").get<int>();
  tr.format_reward = j.at("format_reward").get<int>();
  if (j.contains("length") &&
      j.at("length").get<int>() != tr.length()) {
    throw std::invalid_argument("trajectory length field mismatch");
  }
  return tr;
}

}  // namespace

std::string to_json_line(const TaskInstance& task) {
  std::string out;
  append_task(out, task);
  return out;
}

std::string to_json_line(const RolloutGroup& group) {
  std::string out = "{\"task\":";
  append_task(out, group.task);
  out += ",\"trajectories\":[";
  for (int i = 0; i < group.size(); ++i) {
    if (i) out += ',';
    append_trajectory(out, group.trajectories[i]);
  }
  out += "],\"difficulty\":";
  out += format_double(group.difficulty);
  out += ",\"reward_mean\":";
  out += format_double(group.reward_mean);
  out += ",\"reward_std\":";
  out += format_double(group.reward_std);
  out += ",\"mean_correct_length\":";
  out += group.mean_correct_length ? format_double(*group.mean_correct_length)
                                   : "null";
  out += '}';
  return out;
}

std::string to_json_line(const ShapedAdvantages& shaped) {
  std::string out = "{\"per_token_advantage\":[";
  for (size_t i = 0; i < shaped.per_token_advantage.size(); ++i) {
    if (i) out += ',';
    append_double_array(out, shaped.per_token_advantage[i]);
  }
  out += "],\"kl_weight\":";
  append_double_array(out, shaped.kl_weight);
  out += ",\"group_skipped\":";
  out += shaped.group_skipped ? "true" : "false";
  out += '}';
  return out;
}

TaskInstance task_from_json(const std::string& line) {
  return task_from(json::parse(line));
}

RolloutGroup group_from_json(const std::string& line) {
  const json j = json::parse(line);
  RolloutGroup g;
  g.task = task_from(j.at("task"));
  for (const auto& tj : j.at("trajectories")) {
    g.trajectories.push_back(trajectory_from(tj));
  }
  g.difficulty = j.at("difficulty").get<double>();
  g.reward_mean = j.at("reward_mean").get<double>();
  g.reward_std = j.at("reward_std").get<double>();
  const auto& mcl = j.at("mean_correct_length");
  if (!mcl.is_null()) g.mean_correct_length = mcl.get<double>();
  return g;
}

ShapedAdvantages shaped_from_json(const std::string& line) {
  const json j = json::parse(line);
  ShapedAdvantages s;
  for (const auto& row : j.at("per_token_advantage")) {
    s.per_token_advantage.push_back(doubles_from(row));
  }
  s.kl_weight = doubles_from(j.at("kl_weight"));
  s.group_skipped = j.at("group_skipped").get<bool>();
  return s;
}

}  // namespace apo
