#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "meow/expert.hpp"
#include "meow/graph.hpp"
#include "meow/judge.hpp"
#include "meow/metrics.hpp"
#include "meow/simulate.hpp"

namespace meow {

// A stage failed after configuration passed validation (CLI exit code 3).
struct StageFailure : std::runtime_error {
  StageFailure(std::string stage_name, const std::string& what)
      : std::runtime_error(stage_name + ": " + what), stage(std::move(stage_name)) {}
  std::string stage;
};

struct PipelineConfig {
  std::filesystem::path out_dir = "out";
  std::vector<WordPair> word_pairs;

  // simulate
  int n_games = 260;
  std::uint64_t base_seed = 1234;
  SpyAssignment spy_assignment = SpyAssignment::RoundRobin;
  std::string policy_kind = "scripted";  // or "chat"
  ScriptedPolicyParams scripted;
  ChatClientConfig agent_chat;
  std::filesystem::path prompts_dir;

  // graphs + splits
  bool merged_relations = false;
  int n_splits = 10;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 7;

  // training
  ModelConfig model_round1 = ModelConfig::round1();
  ModelConfig model_round2 = ModelConfig::round2();
  std::uint64_t train_seed = 42;

  // judging / ablation
  JudgeClientConfig judge;
  std::vector<JudgeMethod> methods = {JudgeMethod::CoT, JudgeMethod::Expert, JudgeMethod::CoT_EO};
  Aggregation agg = Aggregation::Median8;
  std::uint64_t resolution_seed = 0x5eed;

  int workers = 1;

  // Parses and validates the config document; referenced files must exist.
  // Throws InvalidConfig on any defect (CLI exit code 2).
  static PipelineConfig load(const std::filesystem::path& config_file);

  BatchSpec to_batch_spec() const;

  std::filesystem::path records_path() const { return out_dir / "records.jsonl"; }
  std::filesystem::path d1_path() const { return out_dir / "d1.json"; }
  std::filesystem::path d2_path() const { return out_dir / "d2.json"; }
  std::filesystem::path splits_path(int round) const {
    return out_dir / ("splits_d" + std::to_string(round) + ".json");
  }
  std::filesystem::path checkpoint_dir() const { return out_dir / "ck"; }
  std::filesystem::path checkpoint_path(const std::string& round_name, int split_id) const {
    return checkpoint_dir() / ("ck_" + round_name + "_s" + std::to_string(split_id) + ".json");
  }
  std::filesystem::path table_md_path() const { return out_dir / "table.md"; }
  std::filesystem::path table_csv_path() const { return out_dir / "table.csv"; }
  std::filesystem::path stats_path() const { return out_dir / "stats.json"; }
};

std::vector<WordPair> load_word_pairs(const std::filesystem::path& path);

// Each stage skips itself when its outputs exist and were produced from
// inputs with the same digest (recorded in <stage>.meta.json next to the
// outputs). Returns true when work was done, false on a cache hit.
bool stage_simulate(const PipelineConfig& config);
bool stage_build_graphs(const PipelineConfig& config);
bool stage_split(const PipelineConfig& config);
bool stage_train(const PipelineConfig& config);
bool stage_ablate(const PipelineConfig& config);
bool stage_stats(const PipelineConfig& config);

// simulate -> build-graphs -> split -> train -> ablate -> stats.
void run_pipeline(const PipelineConfig& config);

}  // namespace meow
