#include "apo/cli.hpp"

#include <chrono>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "apo/configfile.hpp"
#include "apo/core.hpp"
#include "apo/digest.hpp"
#include "apo/svgplot.hpp"
#include "apo/tasks.hpp"
#include "apo/trainer.hpp"

namespace apo::cli {

namespace {

using nlohmann::json;

struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

bool parse_tier_range(const std::string& spec, int& lo, int& hi) {
  const size_t dots = spec.find("..");
  try {
    size_t used = 0;
    if (dots == std::string::npos) {
      lo = hi = std::stoi(spec, &used);
      return used == spec.size();
    }
    const std::string a = spec.substr(0, dots);
    const std::string b = spec.substr(dots + 2);
    lo = std::stoi(a, &used);
    if (used != a.size()) return false;
    hi = std::stoi(b, &used);
    if (used != b.size()) return false;
  } catch (const std::exception&) {
    return false;
  }
  return lo >= 0 && hi >= lo;
}

std::vector<trainer::CurriculumTier> curriculum_from_corpus(
    const std::filesystem::path& corpus_path) {
  std::ifstream in(corpus_path);
  if (!in) {
    throw MissingInputError("corpus not found: " + corpus_path.string());
  }
  std::map<int, std::vector<TaskInstance>> by_tier;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      TaskInstance task = task_from_json(line);
      by_tier[task.difficulty_tier].push_back(std::move(task));
    } catch (const std::exception& e) {
      throw MissingInputError("corpus line " + std::to_string(lineno) +
                              " unparseable: " + e.what());
    }
  }
  if (by_tier.empty()) {
    throw MissingInputError("corpus is empty: " + corpus_path.string());
  }
  std::vector<trainer::CurriculumTier> curriculum;
  for (auto& [tier, tasks] : by_tier) {
    curriculum.push_back({tier, std::move(tasks)});
  }
  return curriculum;
}

struct VariantSpec {
  std::string name;
  bool enable_kl;
  bool enable_dads;
  bool enable_stcr;
};

// Mirrors the ablation grid: plain GRPO, +KL, +STCR, KL+DADS, and the full
// asymmetric configuration.
const std::vector<VariantSpec>& table2_variants() {
  static const std::vector<VariantSpec> v = {
      {"grpo", false, false, false},
      {"grpo_kl", true, false, false},
      {"grpo_stcr", false, false, true},
      {"grpo_kl_dads", true, true, false},
      {"apo_full", true, true, true},
  };
  return v;
}

void write_manifest(const std::filesystem::path& path, const TrainConfig& config,
                    const std::string& corpus_hash,
                    const trainer::RunResult& result, double wall_seconds,
                    int64_t steps) {
  json j;
  j["config_hash"] = configfile::config_hash(config);
  j["seed"] = config.seed;
  j["corpus_git_sha1"] = corpus_hash;
  j["steps"] = steps;
  j["outputs"] = {{"metrics_csv", result.metrics_csv.string()},
                  {"metrics_jsonl", result.metrics_jsonl.string()},
                  {"checkpoint", result.checkpoint.string()}};
  j["timings"] = {
      {"total_seconds", wall_seconds},
      {"steps_per_second", wall_seconds > 0.0 ? steps / wall_seconds : 0.0}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("manifest write failed: " + path.string());
}

int run_single_training(const TrainConfig& config,
                        const std::vector<trainer::CurriculumTier>& curriculum,
                        int64_t steps, const std::filesystem::path& out_dir,
                        const std::string& corpus_hash, bool resume,
                        std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  trainer::RunIO io;
  io.out_dir = out_dir;
  io.resume = resume;
  trainer::RunResult result = trainer::run_training(config, curriculum, steps, io);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_manifest(out_dir / "manifest.json", config, corpus_hash, result, wall,
                 steps);
  log << "run complete: " << result.metrics_csv.string() << " ("
      << result.state.step << " steps)\n";
  return kExitOk;
}

}  // namespace

int cmd_gen_corpus(const GenCorpusOptions& options, std::ostream& log) {
  int lo = 0, hi = 0;
  if (!parse_tier_range(options.tiers, lo, hi)) {
    log << "error: bad --tiers spec '" << options.tiers << "'\n";
    return kExitUsage;
  }
  if (options.per_tier < 0) {
    log << "error: --per-tier must be >= 0\n";
    return kExitUsage;
  }
  tasks::Family family;
  try {
    family = tasks::family_from_string(options.family);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const std::vector<TaskInstance> corpus = tasks::generate_corpus(
        family, lo, hi, options.per_tier, options.seed);
    std::filesystem::create_directories(options.out_dir);
    const std::filesystem::path out_path = options.out_dir / options.out_name;
    std::ofstream out(out_path, std::ios::trunc | std::ios::binary);
    if (!out) {
      log << "error: cannot write " << out_path.string() << '\n';
      return kExitWriteIO;
    }
    for (const TaskInstance& task : corpus) {
      out << to_json_line(task) << '\n';
    }
    out.flush();
    if (!out) {
      log << "error: write failed for " << out_path.string() << '\n';
      return kExitWriteIO;
    }
    for (int tier = lo; tier <= hi; ++tier) {
      log << "tier " << tier << ": " << options.per_tier << " tasks\n";
    }
    log << "wrote " << corpus.size() << " tasks to " << out_path.string()
        << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitWriteIO;
  }
}

int cmd_train(const TrainOptions& options, std::ostream& log) {
  TrainConfig config;
  bool resume = false;
  try {
    if (!options.resume.empty()) {
      if (!std::filesystem::exists(options.resume)) {
        log << "error: checkpoint not found: " << options.resume.string()
            << '\n';
        return kExitMissingInput;
      }
      config = trainer::load_checkpoint(options.resume).config;
      resume = true;
    } else {
      if (options.config_path.empty()) {
        log << "error: --config is required (or --resume)\n";
        return kExitUsage;
      }
      config = configfile::parse_file(options.config_path);
    }
    configfile::apply_env_overrides(config);
  } catch (const configfile::ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << '\n';
    return kExitUsage;
  }
  if (options.steps <= 0) {
    log << "error: --steps must be > 0\n";
    return kExitUsage;
  }

  try {
    const std::string corpus_bytes = read_file(options.corpus);
    const std::string corpus_hash = digest::git_blob_sha1_hex(corpus_bytes);
    const std::vector<trainer::CurriculumTier> curriculum =
        curriculum_from_corpus(options.corpus);

    std::filesystem::create_directories(options.out_dir);
    if (options.ablation.empty()) {
      if (resume) {
        // Continue in place: the checkpoint lives in the output directory.
        const std::filesystem::path run_dir = options.resume.parent_path();
        return run_single_training(config, curriculum, options.steps, run_dir,
                                   corpus_hash, /*resume=*/true, log);
      }
      return run_single_training(config, curriculum, options.steps,
                                 options.out_dir, corpus_hash,
                                 /*resume=*/false, log);
    }

    if (options.ablation != "table2") {
      log << "error: unknown ablation grid '" << options.ablation << "'\n";
      return kExitUsage;
    }
    const auto& variants = table2_variants();
    std::vector<int> codes(variants.size(), kExitOk);
    std::vector<std::exception_ptr> errors(variants.size());
    std::vector<std::ostringstream> logs(variants.size());

    auto run_variant = [&](size_t idx) {
      try {
        TrainConfig vc = config;
        vc.enable_kl = variants[idx].enable_kl;
        vc.enable_dads = variants[idx].enable_dads;
        vc.enable_stcr = variants[idx].enable_stcr;
        const std::filesystem::path dir = options.out_dir / variants[idx].name;
        std::filesystem::create_directories(dir);
        codes[idx] = run_single_training(vc, curriculum, options.steps, dir,
                                         corpus_hash, false, logs[idx]);
      } catch (...) {
        errors[idx] = std::current_exception();
      }
    };

    if (options.parallel) {
      std::vector<std::thread> threads;
      threads.reserve(variants.size());
      for (size_t i = 0; i < variants.size(); ++i) {
        threads.emplace_back(run_variant, i);
      }
      for (std::thread& t : threads) t.join();
    } else {
      for (size_t i = 0; i < variants.size(); ++i) run_variant(i);
    }
    for (size_t i = 0; i < variants.size(); ++i) {
      log << "[" << variants[i].name << "] " << logs[i].str();
      if (errors[i]) std::rethrow_exception(errors[i]);
      if (codes[i] != kExitOk) return codes[i];
    }
    return kExitOk;
  } catch (const MissingInputError& e) {
    log << "error: " << e.what() << '\n';
    return kExitMissingInput;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitWriteIO;
  }
}

int cmd_plot(const PlotOptions& options, std::ostream& log) {
  struct SeriesSpec {
    const char* column;
    const char* title;
  };
  static constexpr SeriesSpec kSeries[] = {
      {"length_gap", "Response length gap (incorrect - correct)"},
      {"policy_entropy", "Policy entropy"},
      {"mean_accuracy_reward", "Mean accuracy reward"},
      {"mean_kl", "Mean KL to reference"},
  };

  auto load_rows = [&](const std::filesystem::path& path)
      -> std::vector<trainer::MetricRow> {
    if (!std::filesystem::exists(path)) {
      throw MissingInputError("metrics not found: " + path.string());
    }
    std::vector<trainer::MetricRow> rows = trainer::parse_metrics_csv(path);
    if (rows.empty()) {
      throw MissingInputError("metrics file has no rows: " + path.string());
    }
    return rows;
  };

  try {
    const std::vector<trainer::MetricRow> rows = load_rows(options.metrics);
    std::vector<trainer::MetricRow> compare_rows;
    if (!options.compare.empty()) {
      compare_rows = load_rows(options.compare);
    }

    auto extract = [](const std::vector<trainer::MetricRow>& rs,
                      const std::string& column) {
      std::vector<std::pair<double, double>> pts;
      for (const trainer::MetricRow& r : rs) {
        std::optional<double> v;
        if (column == "length_gap") v = r.length_gap;
        else if (column == "policy_entropy") v = r.policy_entropy;
        else if (column == "mean_accuracy_reward") v = r.mean_accuracy_reward;
        else if (column == "mean_kl") v = r.mean_kl;
        if (v) pts.emplace_back(static_cast<double>(r.step), *v);
      }
      return pts;
    };

    std::filesystem::create_directories(options.out_dir);
    for (const SeriesSpec& spec : kSeries) {
      const auto pts = extract(rows, spec.column);
      const std::filesystem::path csv_path =
          options.out_dir / (std::string(spec.column) + ".csv");
      std::ofstream csv(csv_path, std::ios::trunc);
      if (!csv) {
        throw std::runtime_error("cannot write " + csv_path.string());
      }
      csv << "step," << spec.column << '\n';
      for (const auto& [x, y] : pts) {
        csv << static_cast<int64_t>(x) << ',' << format_double(y) << '\n';
      }

      std::vector<svgplot::Series> chart;
      chart.push_back({spec.column, "#1f77b4", pts});
      if (std::string(spec.column) == "length_gap" && !pts.empty()) {
        std::vector<std::pair<double, double>> running_max = pts;
        for (size_t i = 1; i < running_max.size(); ++i) {
          running_max[i].second =
              std::max(running_max[i].second, running_max[i - 1].second);
        }
        chart.push_back({"running max", "#d62728", std::move(running_max)});
      }
      if (!compare_rows.empty()) {
        chart.push_back(
            {"compare", "#2ca02c", extract(compare_rows, spec.column)});
      }
      svgplot::write_line_chart(
          options.out_dir / (std::string(spec.column) + ".svg"), spec.title,
          "step", spec.column, chart);
    }
    log << "wrote " << std::size(kSeries) << " series to "
        << options.out_dir.string() << '\n';
    return kExitOk;
  } catch (const MissingInputError& e) {
    log << "error: " << e.what() << '\n';
    return kExitMissingInput;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitWriteIO;
  }
}

int run_main(int argc, const char* const* argv) {
  CLI::App app{"Asymmetric policy optimization trainer for synthetic verifiable tasks"};
  app.require_subcommand(1);

  GenCorpusOptions gen;
  CLI::App* gen_cmd =
      app.add_subcommand("gen-corpus", "Generate a task corpus as JSONL");
  gen_cmd->add_option("--family", gen.family,
                      "modular-chain | sequence-copy | parity-chain");
  gen_cmd->add_option("--tiers", gen.tiers, "Tier range, e.g. 0..4");
  gen_cmd->add_option("--per-tier", gen.per_tier, "Tasks per tier");
  gen_cmd->add_option("--seed", gen.seed, "Corpus seed");
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory");
  gen_cmd->add_option("--out", gen.out_name, "Corpus file name");

  TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "Run RL training");
  train_cmd->add_option("--config", train.config_path, "Run config file");
  train_cmd->add_option("--corpus", train.corpus, "Task corpus JSONL");
  train_cmd->add_option("--steps", train.steps, "Total optimizer steps");
  train_cmd->add_option("--out-dir", train.out_dir, "Output directory");
  train_cmd->add_option("--ablation", train.ablation,
                        "Variant grid name (table2)");
  train_cmd->add_option("--resume", train.resume, "Checkpoint to resume from");
  train_cmd->add_flag("--parallel", train.parallel,
                      "Run ablation variants concurrently");

  PlotOptions plot;
  CLI::App* plot_cmd =
      app.add_subcommand("plot", "Emit per-series CSV and SVG charts");
  plot_cmd->add_option("--metrics", plot.metrics, "metrics.csv of a run");
  plot_cmd->add_option("--compare", plot.compare, "Second run to overlay");
  plot_cmd->add_option("--out-dir", plot.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (gen_cmd->parsed()) return cmd_gen_corpus(gen, std::cout);
  if (train_cmd->parsed()) return cmd_train(train, std::cout);
  if (plot_cmd->parsed()) return cmd_plot(plot, std::cout);
  return kExitUsage;
}

}  // namespace apo::cli
