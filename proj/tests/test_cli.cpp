#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "apo/cli.hpp"
#include "apo/trainer.hpp"
#include "apo/configfile.hpp"
#include "apo/digest.hpp"
#include "apo/tasks.hpp"

using namespace apo;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

void write_desk_config(const fs::path& path, uint64_t seed) {
  TrainConfig config;
  config.group_size = 4;
  config.batch_size = 4;
  config.max_length = 24;
  config.embed_dim = 8;
  config.warmstart_demos = 64;
  config.warmstart_epochs = 1;
  config.lr_multiplier = 1e4;
  config.seed = seed;
  configfile::write_file(path, config);
}

}  // namespace

TEST_CASE("sha1 digests match the published vectors") {
  CHECK(digest::sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  CHECK(digest::sha1_hex("") == "da39a3ee5e6b4b0d3255bfef95601890afd80709");
  CHECK(digest::git_blob_sha1_hex("") ==
        "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(digest::git_blob_sha1_hex("hello\n") ==
        "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("config files round-trip and hash every field") {
  const fs::path dir = fresh_dir("apo_cli_config");
  TrainConfig config;
  configfile::write_file(dir / "run.cfg", config);
  const TrainConfig back = configfile::parse_file(dir / "run.cfg");
  CHECK(configfile::canonical_text(back) == configfile::canonical_text(config));

  const std::string base_hash = configfile::config_hash(config);
  TrainConfig changed = config;
  changed.enable_stcr = !changed.enable_stcr;
  CHECK(configfile::config_hash(changed) != base_hash);
  changed = config;
  changed.warmstart_lr *= 2.0;
  CHECK(configfile::config_hash(changed) != base_hash);
  changed = config;
  CHECK(configfile::config_hash(changed) == base_hash);
}

TEST_CASE("config parsing rejects malformed input") {
  CHECK_THROWS_AS(configfile::parse_text("group_size = 8\n"),
                  configfile::ConfigError);  // missing schema_version
  CHECK_THROWS_AS(
      configfile::parse_text("schema_version = 1\nnot_a_key = 3\n"),
      configfile::ConfigError);
  CHECK_THROWS_AS(configfile::parse_text("schema_version = 1\nmu = banana\n"),
                  configfile::ConfigError);
  CHECK_THROWS_AS(configfile::parse_text("schema_version = 1\nmu = 1.0\n"),
                  std::invalid_argument);  // semantic validation
  CHECK_THROWS_AS(configfile::parse_text("schema_version = 2\n"),
                  configfile::ConfigError);
}

TEST_CASE("environment overrides take effect and change the hash") {
  TrainConfig config;
  const std::string before = configfile::config_hash(config);
  setenv("APO_SEED", "777", 1);
  configfile::apply_env_overrides(config);
  unsetenv("APO_SEED");
  CHECK(config.seed == 777);
  CHECK(configfile::config_hash(config) != before);
}

TEST_CASE("gen-corpus writes the promised line count, deterministically") {
  const fs::path dir = fresh_dir("apo_cli_gen");
  cli::GenCorpusOptions options;
  options.family = "modular-chain";
  options.tiers = "0..4";
  options.per_tier = 50;
  options.seed = 7;
  options.out_dir = dir;
  std::ostringstream log;
  REQUIRE(cli::cmd_gen_corpus(options, log) == cli::kExitOk);
  CHECK(line_count(dir / "corpus.jsonl") == 250);

  const std::string first = slurp(dir / "corpus.jsonl");
  REQUIRE(cli::cmd_gen_corpus(options, log) == cli::kExitOk);
  CHECK(slurp(dir / "corpus.jsonl") == first);  // byte-identical rerun
}

TEST_CASE("gen-corpus edge cases") {
  const fs::path dir = fresh_dir("apo_cli_gen_edge");
  cli::GenCorpusOptions options;
  options.out_dir = dir;
  options.per_tier = 0;
  std::ostringstream log;
  CHECK(cli::cmd_gen_corpus(options, log) == cli::kExitOk);
  CHECK(line_count(dir / "corpus.jsonl") == 0);

  options.tiers = "4..2";
  CHECK(cli::cmd_gen_corpus(options, log) == cli::kExitUsage);
  options.tiers = "x";
  CHECK(cli::cmd_gen_corpus(options, log) == cli::kExitUsage);
  options.tiers = "0..1";
  options.family = "unknown-family";
  CHECK(cli::cmd_gen_corpus(options, log) == cli::kExitUsage);
}

TEST_CASE("train command end to end, with resume and idempotent outputs") {
  const fs::path dir = fresh_dir("apo_cli_train");
  std::ostringstream log;

  cli::GenCorpusOptions gen;
  gen.tiers = "0..0";
  gen.per_tier = 12;
  gen.out_dir = dir;
  REQUIRE(cli::cmd_gen_corpus(gen, log) == cli::kExitOk);
  write_desk_config(dir / "run.cfg", 21);

  cli::TrainOptions train;
  train.config_path = dir / "run.cfg";
  train.corpus = dir / "corpus.jsonl";
  train.steps = 4;
  train.out_dir = dir / "runA";
  REQUIRE(cli::cmd_train(train, log) == cli::kExitOk);
  CHECK(line_count(dir / "runA" / "metrics.csv") == 5);  // header + 4 rows
  CHECK(fs::exists(dir / "runA" / "manifest.json"));
  CHECK(fs::exists(dir / "runA" / "checkpoint.json"));

  train.out_dir = dir / "runB";
  REQUIRE(cli::cmd_train(train, log) == cli::kExitOk);
  CHECK(slurp(dir / "runA" / "metrics.csv") ==
        slurp(dir / "runB" / "metrics.csv"));

  // Interrupted run: 2 steps, then resume to 4; metrics must line up.
  train.out_dir = dir / "runC";
  train.steps = 2;
  REQUIRE(cli::cmd_train(train, log) == cli::kExitOk);
  cli::TrainOptions resume;
  resume.resume = dir / "runC" / "checkpoint.json";
  resume.corpus = dir / "corpus.jsonl";
  resume.steps = 4;
  REQUIRE(cli::cmd_train(resume, log) == cli::kExitOk);
  CHECK(slurp(dir / "runC" / "metrics.csv") ==
        slurp(dir / "runA" / "metrics.csv"));
}

TEST_CASE("train command error codes") {
  const fs::path dir = fresh_dir("apo_cli_train_err");
  std::ostringstream log;

  cli::TrainOptions train;
  train.config_path = dir / "missing.cfg";
  train.corpus = dir / "corpus.jsonl";
  train.steps = 2;
  train.out_dir = dir / "out";
  CHECK(cli::cmd_train(train, log) == cli::kExitUsage);  // config unreadable

  write_desk_config(dir / "run.cfg", 3);
  train.config_path = dir / "run.cfg";
  CHECK(cli::cmd_train(train, log) == cli::kExitMissingInput);  // no corpus

  std::ofstream bad(dir / "run_bad.cfg");
  bad << "schema_version = 1\nmu = 0.5\n";
  bad.close();
  train.config_path = dir / "run_bad.cfg";
  CHECK(cli::cmd_train(train, log) == cli::kExitUsage);

  train.config_path.clear();
  CHECK(cli::cmd_train(train, log) == cli::kExitUsage);
}

TEST_CASE("ablation grid expands into the five variants") {
  const fs::path dir = fresh_dir("apo_cli_ablation");
  std::ostringstream log;
  cli::GenCorpusOptions gen;
  gen.tiers = "0..0";
  gen.per_tier = 8;
  gen.out_dir = dir;
  REQUIRE(cli::cmd_gen_corpus(gen, log) == cli::kExitOk);
  write_desk_config(dir / "run.cfg", 5);

  cli::TrainOptions train;
  train.config_path = dir / "run.cfg";
  train.corpus = dir / "corpus.jsonl";
  train.steps = 2;
  train.out_dir = dir / "grid";
  train.ablation = "table2";
  REQUIRE(cli::cmd_train(train, log) == cli::kExitOk);
  for (const char* name :
       {"grpo", "grpo_kl", "grpo_stcr", "grpo_kl_dads", "apo_full"}) {
    CHECK(fs::exists(dir / "grid" / name / "metrics.csv"));
    CHECK(fs::exists(dir / "grid" / name / "manifest.json"));
  }

  train.ablation = "nonsense";
  CHECK(cli::cmd_train(train, log) == cli::kExitUsage);
}

TEST_CASE("plot emits csv and svg per series and honors exit codes") {
  const fs::path dir = fresh_dir("apo_cli_plot");
  std::ostringstream log;
  cli::GenCorpusOptions gen;
  gen.tiers = "0..0";
  gen.per_tier = 8;
  gen.out_dir = dir;
  REQUIRE(cli::cmd_gen_corpus(gen, log) == cli::kExitOk);
  write_desk_config(dir / "run.cfg", 6);
  cli::TrainOptions train;
  train.config_path = dir / "run.cfg";
  train.corpus = dir / "corpus.jsonl";
  train.steps = 3;
  train.out_dir = dir / "run";
  REQUIRE(cli::cmd_train(train, log) == cli::kExitOk);

  cli::PlotOptions plot;
  plot.metrics = dir / "run" / "metrics.csv";
  plot.out_dir = dir / "plots";
  REQUIRE(cli::cmd_plot(plot, log) == cli::kExitOk);
  for (const char* series : {"length_gap", "policy_entropy",
                             "mean_accuracy_reward", "mean_kl"}) {
    CHECK(fs::exists(dir / "plots" / (std::string(series) + ".csv")));
    CHECK(fs::exists(dir / "plots" / (std::string(series) + ".svg")));
  }
  const std::string svg = slurp(dir / "plots" / "length_gap.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("running max") != std::string::npos);

  // Compare overlay mode reuses the same series files.
  plot.compare = dir / "run" / "metrics.csv";
  plot.out_dir = dir / "plots_cmp";
  CHECK(cli::cmd_plot(plot, log) == cli::kExitOk);

  plot.compare.clear();
  plot.metrics = dir / "does_not_exist.csv";
  CHECK(cli::cmd_plot(plot, log) == cli::kExitMissingInput);

  std::ofstream empty(dir / "empty.csv");
  empty << apo::trainer::metrics_csv_header() << '\n';
  empty.close();
  plot.metrics = dir / "empty.csv";
  CHECK(cli::cmd_plot(plot, log) == cli::kExitMissingInput);
}

TEST_CASE("run_main routes subcommands and rejects bad usage") {
  const fs::path dir = fresh_dir("apo_cli_main");
  const std::string out_dir = dir.string();
  const char* argv_ok[] = {"apo",        "gen-corpus", "--tiers", "0..1",
                           "--per-tier", "3",          "--out-dir",
                           out_dir.c_str()};
  CHECK(cli::run_main(8, argv_ok) == cli::kExitOk);
  CHECK(line_count(dir / "corpus.jsonl") == 6);

  const char* argv_bad[] = {"apo", "frobnicate"};
  CHECK(cli::run_main(2, argv_bad) == cli::kExitUsage);

  const char* argv_badflag[] = {"apo", "train", "--no-such-flag"};
  CHECK(cli::run_main(3, argv_badflag) == cli::kExitUsage);
}
