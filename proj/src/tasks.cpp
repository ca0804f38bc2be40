#include "apo/tasks.hpp"

#include <array>
#include <cstdio>
#include <stdexcept>

#include "apo/prng.hpp"

namespace apo::tasks {

namespace {

constexpr std::array<std::string_view, kVocabSize> kGlyphs = {
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "+", "-", "*", "(", ")", " mod ", " xor ", "=",
    "<think>", "</think>", "<answer>", "</answer>", "", " ",
    "#", "@", "&", "%", "$", "!", "~", ".",
};

void append_number(std::vector<TokenId>& out, int64_t value) {
  if (value < 0) {
    out.push_back(kMinus);
    value = -value;
  }
  const std::string digits = std::to_string(value);
  for (char c : digits) out.push_back(static_cast<TokenId>(c - '0'));
}

int64_t apply_op(TokenId op, int64_t lhs, int64_t rhs) {
  switch (op) {
    case kPlus: return lhs + rhs;
    case kMinus: return lhs - rhs;
    case kTimes: return lhs * rhs;
    default: throw std::logic_error("apply_op: not an operator token");
  }
}

TaskInstance modular_chain(int tier, Rng rng) {
  const int op_count = tier + 1;
  constexpr std::array<TokenId, 3> kOps = {kPlus, kMinus, kTimes};
  constexpr std::array<int, 3> kModuli = {5, 7, 10};

  std::vector<int> operands(op_count + 1);
  std::vector<TokenId> ops(op_count);
  for (int& v : operands) v = static_cast<int>(rng.next_below(10));
  for (TokenId& op : ops) op = kOps[rng.next_below(kOps.size())];
  const int modulus = kModuli[rng.next_below(kModuli.size())];

  // Left-associated chain, fully parenthesized except the outermost level:
  // tier 0 "3+4 mod 10", tier 2 "((3+4)*2)-5 mod 7".
  std::vector<TokenId> prompt;
  for (int i = 0; i < op_count - 1; ++i) prompt.push_back(kLParen);
  append_number(prompt, operands[0]);
  for (int i = 0; i < op_count; ++i) {
    prompt.push_back(ops[i]);
    append_number(prompt, operands[i + 1]);
    if (i < op_count - 1) prompt.push_back(kRParen);
  }
  prompt.push_back(kMod);
  append_number(prompt, modulus);
  prompt.push_back(kEquals);

  int64_t value = operands[0];
  for (int i = 0; i < op_count; ++i) {
    value = apply_op(ops[i], value, operands[i + 1]);
  }
  const int64_t result = ((value % modulus) + modulus) % modulus;

  TaskInstance task;
  task.prompt_tokens = std::move(prompt);
  task.ground_truth = std::to_string(result);
  task.difficulty_tier = tier;
  return task;
}

TaskInstance sequence_copy(int tier, Rng rng) {
  const int count = tier + 1;
  std::vector<TokenId> prompt;
  std::string truth;
  for (int i = 0; i < count; ++i) {
    const int digit = static_cast<int>(rng.next_below(10));
    prompt.push_back(static_cast<TokenId>(digit));
    truth.push_back(static_cast<char>('0' + digit));
  }
  prompt.push_back(kEquals);

  TaskInstance task;
  task.prompt_tokens = std::move(prompt);
  task.ground_truth = std::move(truth);
  task.difficulty_tier = tier;
  return task;
}

TaskInstance parity_chain(int tier, Rng rng) {
  const int bits = tier + 1;
  std::vector<TokenId> prompt;
  int parity = 0;
  for (int i = 0; i < bits; ++i) {
    const int bit = static_cast<int>(rng.next_below(2));
    if (i > 0) prompt.push_back(kXor);
    prompt.push_back(static_cast<TokenId>(bit));
    parity ^= bit;
  }
  prompt.push_back(kEquals);

  TaskInstance task;
  task.prompt_tokens = std::move(prompt);
  task.ground_truth = std::to_string(parity);
  task.difficulty_tier = tier;
  return task;
}

}  // namespace

std::string_view token_text(TokenId id) {
  if (id < 0 || id >= kVocabSize) {
    throw std::out_of_range("token_text: id outside vocabulary");
  }
  return kGlyphs[static_cast<size_t>(id)];
}

std::string detokenize(std::span<const TokenId> tokens) {
  std::string out;
  for (TokenId id : tokens) out += token_text(id);
  return out;
}

const char* to_string(Family f) {
  switch (f) {
    case Family::ModularChain: return "modular-chain";
    case Family::SequenceCopy: return "sequence-copy";
    case Family::ParityChain: return "parity-chain";
  }
  return "modular-chain";
}

Family family_from_string(const std::string& s) {
  if (s == "modular-chain") return Family::ModularChain;
  if (s == "sequence-copy") return Family::SequenceCopy;
  if (s == "parity-chain") return Family::ParityChain;
  throw std::invalid_argument("unknown task family: " + s);
}

TaskInstance generate_task(const TaskGeneratorConfig& config) {
  if (config.tier < 0) {
    throw std::invalid_argument("generate_task: tier must be >= 0");
  }
  Rng rng = Rng(config.seed)
                .child(static_cast<uint64_t>(config.family))
                .child(static_cast<uint64_t>(config.tier));

  TaskInstance task;
  switch (config.family) {
    case Family::ModularChain: task = modular_chain(config.tier, rng); break;
    case Family::SequenceCopy: task = sequence_copy(config.tier, rng); break;
    case Family::ParityChain: task = parity_chain(config.tier, rng); break;
  }
  char id[64];
  std::snprintf(id, sizeof(id), "%s/t%d/s%016llx", to_string(config.family),
                config.tier, static_cast<unsigned long long>(config.seed));
  task.id = id;
  return task;
}

std::vector<TaskInstance> generate_corpus(Family family, int tier_lo,
                                          int tier_hi, int count_per_tier,
                                          uint64_t seed) {
  if (tier_lo < 0 || tier_hi < tier_lo) {
    throw std::invalid_argument("generate_corpus: bad tier range");
  }
  std::vector<TaskInstance> corpus;
  corpus.reserve(static_cast<size_t>(tier_hi - tier_lo + 1) *
                 static_cast<size_t>(count_per_tier));
  const Rng root(seed);
  for (int tier = tier_lo; tier <= tier_hi; ++tier) {
    const Rng tier_rng = root.child(static_cast<uint64_t>(tier));
    for (int k = 0; k < count_per_tier; ++k) {
      TaskGeneratorConfig cfg;
      cfg.family = family;
      cfg.tier = tier;
      cfg.seed = tier_rng.child(static_cast<uint64_t>(k)).state();
      corpus.push_back(generate_task(cfg));
    }
  }
  return corpus;
}

}  // namespace apo::tasks
