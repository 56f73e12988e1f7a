#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "meow/chat.hpp"
#include "meow/expert.hpp"
#include "meow/graph.hpp"
#include "meow/judge.hpp"

namespace meow {

struct MissingCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PredictionSet {
  struct Pair {
    int predicted = 0;
    int truth = 0;
    std::uint64_t game_index = 0;
  };

  std::string method;
  int round_scope = 1;
  std::vector<Pair> pairs;
};

double accuracy(const PredictionSet& predictions);

// Weighted-average F1 over the four seat classes: per-class F1 (zero when
// precision + recall is zero) weighted by true-label support.
double weighted_average_f1(const PredictionSet& predictions);

enum class Aggregation { Median8, Mean };

std::string to_string(Aggregation agg);

// Drop the best- and worst-scoring splits by WA-F1 and average the remaining
// eight (requires >= 3 scores); Mean averages everything.
double aggregate(std::vector<double> scores, Aggregation agg);

double population_stdev(const std::vector<double>& scores);

struct AblationTable {
  struct Row {
    std::string method;
    int round = 1;
    double acc = 0.0;    // percent
    double wa_f1 = 0.0;  // percent
  };
  struct StdevRow {
    std::string method;
    double round1 = 0.0;  // stdev of WA-F1 fractions across splits
    double round2 = 0.0;
  };
  struct SplitScore {
    std::string method;
    int round = 1;
    int split_id = 0;
    double acc = 0.0;    // fraction
    double wa_f1 = 0.0;  // fraction
    std::vector<std::uint64_t> evaluated_games;
  };

  std::vector<Row> rows;
  std::vector<StdevRow> stdev_rows;
  std::vector<SplitScore> split_scores;
  Aggregation agg = Aggregation::Median8;
};

// One evaluation universe: a dataset, its splits, and one trained checkpoint
// per split for the matching round scope.
struct RoundInputsForAblation {
  const Dataset* dataset = nullptr;
  const std::vector<SplitConfig>* splits = nullptr;
  const std::vector<Checkpoint>* checkpoints = nullptr;  // indexed by split id
};

struct AblationSpec {
  const std::vector<GameRecord>* records = nullptr;
  RoundInputsForAblation round1;
  RoundInputsForAblation round2;  // dataset null -> round 2 skipped
  ChatClient* client = nullptr;   // required for cot / cot_eo
  std::vector<JudgeMethod> methods;
  Aggregation agg = Aggregation::Median8;
  std::uint64_t resolution_seed = 0x5eed;
};

// Evaluates every method on every split's test set only, then aggregates to
// the Table-2 layout plus the Table-3 stdev companion.
AblationTable run_ablation(const AblationSpec& spec);

std::string render_markdown(const AblationTable& table);
std::string render_csv(const AblationTable& table);
// Parses render_csv output back into rows/stdev (round-trip checked in tests).
AblationTable parse_csv(const std::string& text);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace meow
