#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "apo/core.hpp"

namespace apo::tasks {

// Fixed 32-symbol vocabulary shared by every generator and policy.
// Detokenization is direct concatenation of the glyphs below.
inline constexpr int kVocabSize = 32;

enum Tok : TokenId {
  kDigit0 = 0,  // ids 0..9 are the digits '0'..'9'
  kPlus = 10,
  kMinus = 11,
  kTimes = 12,
  kLParen = 13,
  kRParen = 14,
  kMod = 15,  // " mod "
  kXor = 16,  // " xor "
  kEquals = 17,
  kThinkOpen = 18,
  kThinkClose = 19,
  kAnswerOpen = 20,
  kAnswerClose = 21,
  kEos = 22,  // renders as ""
  kSpace = 23,
  // ids 24..31 are filler glyphs with no task meaning
};

std::string_view token_text(TokenId id);
std::string detokenize(std::span<const TokenId> tokens);

enum class Family { ModularChain, SequenceCopy, ParityChain };

const char* to_string(Family f);
Family family_from_string(const std::string& s);

// Tier t asks for a chain of t+1 elementary steps:
//   ModularChain  — t+1 arithmetic ops over single-digit operands, then mod m
//   SequenceCopy  — copy a sequence of t+1 digits
//   ParityChain   — parity of t+1 xor-chained bits
struct TaskGeneratorConfig {
  Family family = Family::ModularChain;
  int tier = 0;
  uint64_t seed = 0;
};

// Deterministic in (family, tier, seed).
TaskInstance generate_task(const TaskGeneratorConfig& config);

// `count` tasks per tier over [tier_lo, tier_hi], task k of tier t generated
// with seed child(seed, t, k). Bit-stable across runs and platforms.
std::vector<TaskInstance> generate_corpus(Family family, int tier_lo,
                                          int tier_hi, int count_per_tier,
                                          uint64_t seed);

}  // namespace apo::tasks
