#pragma once

#include <string>
#include <string_view>

namespace apo::reward {

// Accuracy and format checks plus the composite reward
// r = accuracy + lambda * format. All functions are pure and total.

struct RewardBreakdown {
  int accuracy = 0;
  int format = 0;
  double total = 0.0;
};

// 1 iff the text is `<think>...</think><answer>...</answer>` with each tag
// exactly once, think before answer, only whitespace before, between, and
// after the two spans.
int check_format(std::string_view response_text);

// 1 iff the content between the first <answer> and the following </answer>,
// whitespace-trimmed and integer-canonicalized, equals the ground truth
// canonicalized the same way. 0 when the tags are absent. Accuracy does not
// require the format check to pass.
int check_accuracy(std::string_view response_text, std::string_view ground_truth);

double composite_reward(int accuracy, int format, double lambda);

RewardBreakdown score_response(std::string_view response_text,
                               std::string_view ground_truth, double lambda);

// Trims whitespace; pure integers lose an optional leading '+' and leading
// zeros ("042" -> "42", "-007" -> "-7", "000" -> "0"). Anything else is
// returned trimmed but otherwise untouched.
std::string canonical_answer(std::string_view raw);

}  // namespace apo::reward
