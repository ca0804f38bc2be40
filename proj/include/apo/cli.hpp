#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace apo::cli {

// Stable exit-code contract for scripting.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitWriteIO = 3;
inline constexpr int kExitMissingInput = 4;

struct GenCorpusOptions {
  std::string family = "modular-chain";
  std::string tiers = "0..2";  // "lo..hi" or a single tier
  int per_tier = 100;
  uint64_t seed = 7;
  std::filesystem::path out_dir = ".";
  std::string out_name = "corpus.jsonl";
};

struct TrainOptions {
  std::filesystem::path config_path;
  std::filesystem::path corpus;
  int64_t steps = 0;
  std::filesystem::path out_dir = ".";
  std::string ablation;             // "table2" expands the variant grid
  std::filesystem::path resume;     // checkpoint to continue from
  bool parallel = false;            // run ablation entries concurrently
};

struct PlotOptions {
  std::filesystem::path metrics;
  std::filesystem::path compare;  // optional second run to overlay
  std::filesystem::path out_dir = ".";
};

int cmd_gen_corpus(const GenCorpusOptions& options, std::ostream& log);
int cmd_train(const TrainOptions& options, std::ostream& log);
int cmd_plot(const PlotOptions& options, std::ostream& log);

// Full argv entry point used by the binary.
int run_main(int argc, const char* const* argv);

}  // namespace apo::cli
