#include "apo/reward.hpp"

#include <algorithm>
#include <cctype>

namespace apo::reward {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

size_t count_occurrences(std::string_view text, std::string_view needle) {
  size_t count = 0;
  size_t pos = text.find(needle);
  while (pos != std::string_view::npos) {
    ++count;
    pos = text.find(needle, pos + 1);
  }
  return count;
}

bool whitespace_only(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

std::string_view trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

int check_format(std::string_view text) {
  // Counting <think> does not collide with </think> (and likewise for the
  // answer pair): the closing tag starts with "</".
  if (count_occurrences(text, kThinkOpen) != 1) return 0;
  if (count_occurrences(text, kThinkClose) != 1) return 0;
  if (count_occurrences(text, kAnswerOpen) != 1) return 0;
  if (count_occurrences(text, kAnswerClose) != 1) return 0;

  const size_t think_open = text.find(kThinkOpen);
  const size_t think_close = text.find(kThinkClose);
  const size_t answer_open = text.find(kAnswerOpen);
  const size_t answer_close = text.find(kAnswerClose);
  if (!(think_open < think_close && think_close < answer_open &&
        answer_open < answer_close)) {
    return 0;
  }
  if (!whitespace_only(text.substr(0, think_open))) return 0;
  const size_t between_begin = think_close + kThinkClose.size();
  if (!whitespace_only(text.substr(between_begin, answer_open - between_begin)))
    return 0;
  if (!whitespace_only(text.substr(answer_close + kAnswerClose.size())))
    return 0;
  return 1;
}

int check_accuracy(std::string_view text, std::string_view ground_truth) {
  const size_t open = text.find(kAnswerOpen);
  if (open == std::string_view::npos) return 0;
  const size_t content_begin = open + kAnswerOpen.size();
  const size_t close = text.find(kAnswerClose, content_begin);
  if (close == std::string_view::npos) return 0;
  const std::string_view content = text.substr(content_begin, close - content_begin);
  return canonical_answer(content) == canonical_answer(ground_truth) ? 1 : 0;
}

double composite_reward(int accuracy, int format, double lambda) {
  return accuracy + lambda * format;
}

RewardBreakdown score_response(std::string_view text,
                               std::string_view ground_truth, double lambda) {
  RewardBreakdown out;
  out.accuracy = check_accuracy(text, ground_truth);
  out.format = check_format(text);
  out.total = composite_reward(out.accuracy, out.format, lambda);
  return out;
}

std::string canonical_answer(std::string_view raw) {
  const std::string_view trimmed = trim(raw);
  if (trimmed.empty()) return std::string(trimmed);

  size_t i = 0;
  bool negative = false;
  if (trimmed[0] == '+' || trimmed[0] == '-') {
    negative = trimmed[0] == '-';
    i = 1;
  }
  if (i == trimmed.size()) return std::string(trimmed);  // bare sign
  for (size_t k = i; k < trimmed.size(); ++k) {
    if (!std::isdigit(static_cast<unsigned char>(trimmed[k]))) {
      return std::string(trimmed);  // not a pure integer
    }
  }
  while (i + 1 < trimmed.size() && trimmed[i] == '0') ++i;
  std::string digits(trimmed.substr(i));
  if (digits == "0") return digits;  // never "-0"
  return negative ? "-" + digits : digits;
}

}  // namespace apo::reward
