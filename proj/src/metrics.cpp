#include "meow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "meow/rng.hpp"

namespace meow {

namespace {

std::string display_name(JudgeMethod method) {
  switch (method) {
    case JudgeMethod::CoT: return "CoT";
    case JudgeMethod::Expert: return "Expert";
    case JudgeMethod::CoT_EO: return "CoT & EO";
  }
  return "?";
}

std::string fixed(double value, int decimals) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.*f", decimals, value);
  return buffer;
}

}  // namespace

double accuracy(const PredictionSet& predictions) {
  if (predictions.pairs.empty()) throw InvalidConfig("accuracy of an empty prediction set");
  int hits = 0;
  for (const auto& pair : predictions.pairs) {
    if (pair.predicted == pair.truth) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.pairs.size());
}

double weighted_average_f1(const PredictionSet& predictions) {
  if (predictions.pairs.empty()) throw InvalidConfig("WA-F1 of an empty prediction set");
  double weighted = 0.0;
  double support_total = 0.0;
  for (int c = 0; c < kNumSeats; ++c) {
    long tp = 0, fp = 0, fn = 0, support = 0;
    for (const auto& pair : predictions.pairs) {
      if (pair.truth == c) {
        ++support;
        if (pair.predicted == c) ++tp;
        else ++fn;
      } else if (pair.predicted == c) {
        ++fp;
      }
    }
    const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    const double f1 =
        precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    weighted += static_cast<double>(support) * f1;
    support_total += static_cast<double>(support);
  }
  return support_total == 0.0 ? 0.0 : weighted / support_total;
}

std::string to_string(Aggregation agg) { return agg == Aggregation::Median8 ? "median8" : "mean"; }

double aggregate(std::vector<double> scores, Aggregation agg) {
  if (scores.empty()) throw InvalidConfig("aggregate of no scores");
  if (agg == Aggregation::Median8 && scores.size() >= 3) {
    std::sort(scores.begin(), scores.end());
    scores.erase(scores.begin());
    scores.pop_back();
  }
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

double population_stdev(const std::vector<double>& scores) {
  if (scores.empty()) return 0.0;
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  return std::sqrt(ss / static_cast<double>(scores.size()));
}

namespace {

struct RoundEvaluation {
  std::map<JudgeMethod, std::vector<double>> acc_by_split;
  std::map<JudgeMethod, std::vector<double>> waf1_by_split;
};

RoundEvaluation evaluate_round(const AblationSpec& spec, const RoundInputsForAblation& inputs,
                               int round_scope, AblationTable& table) {
  RoundEvaluation eval;
  const Dataset& dataset = *inputs.dataset;
  const auto& splits = *inputs.splits;
  const auto& checkpoints = *inputs.checkpoints;
  if (checkpoints.size() < splits.size())
    throw MissingCheckpoint("round " + std::to_string(round_scope) + " has " +
                            std::to_string(checkpoints.size()) + " checkpoints for " +
                            std::to_string(splits.size()) + " splits");

  std::map<std::uint64_t, const GameRecord*> by_index;
  for (const GameRecord& record : *spec.records) by_index[record.game_index] = &record;

  for (const SplitConfig& split : splits) {
    const Checkpoint& ck = checkpoints[static_cast<std::size_t>(split.split_id)];
    for (JudgeMethod method : spec.methods) {
      PredictionSet predictions;
      predictions.method = to_string(method);
      predictions.round_scope = round_scope;

      AblationTable::SplitScore score;
      score.method = display_name(method);
      score.round = round_scope;
      score.split_id = split.split_id;

      for (int graph_idx : split.test_indices) {
        const HeteroGraph& graph = dataset.graphs[static_cast<std::size_t>(graph_idx)];
        const auto it = by_index.find(graph.game_index);
        if (it == by_index.end())
          throw InvalidConfig("test graph references unknown game " +
                              std::to_string(graph.game_index));
        const GameRecord& record = *it->second;

        const std::uint64_t resolution =
            mix_seed(spec.resolution_seed, graph.game_index,
                     static_cast<std::uint64_t>(round_scope * 8 + static_cast<int>(method)));
        const JudgeResult result =
            judge(method == JudgeMethod::Expert ? nullptr : spec.client, method, record,
                  round_scope, &ck, resolution, dataset.merged_relations);
        const std::optional<int>& parsed =
            method == JudgeMethod::CoT ? result.y_raw : result.y_eo;
        const int predicted = resolve_prediction(parsed, result.alive_after_scope, resolution);
        predictions.pairs.push_back({predicted, record.spy_seat(), graph.game_index});
        score.evaluated_games.push_back(graph.game_index);
      }

      score.acc = accuracy(predictions);
      score.wa_f1 = weighted_average_f1(predictions);
      eval.acc_by_split[method].push_back(score.acc);
      eval.waf1_by_split[method].push_back(score.wa_f1);
      table.split_scores.push_back(std::move(score));
    }
  }
  return eval;
}

}  // namespace

AblationTable run_ablation(const AblationSpec& spec) {
  if (!spec.records) throw InvalidConfig("ablation needs records");
  if (spec.methods.empty()) throw InvalidConfig("ablation needs at least one method");
  const bool needs_client = std::any_of(spec.methods.begin(), spec.methods.end(),
                                        [](JudgeMethod m) { return m != JudgeMethod::Expert; });
  if (needs_client && !spec.client) throw InvalidConfig("cot methods need a chat client");

  AblationTable table;
  table.agg = spec.agg;

  std::map<int, RoundEvaluation> evals;
  if (spec.round1.dataset) evals[1] = evaluate_round(spec, spec.round1, 1, table);
  if (spec.round2.dataset) evals[2] = evaluate_round(spec, spec.round2, 2, table);

  for (const auto& [round, eval] : evals) {
    for (JudgeMethod method : spec.methods) {
      AblationTable::Row row;
      row.method = display_name(method);
      row.round = round;
      row.acc = 100.0 * aggregate(eval.acc_by_split.at(method), spec.agg);
      row.wa_f1 = 100.0 * aggregate(eval.waf1_by_split.at(method), spec.agg);
      table.rows.push_back(std::move(row));
    }
  }

  for (JudgeMethod method : spec.methods) {
    AblationTable::StdevRow row;
    row.method = display_name(method);
    if (evals.contains(1)) row.round1 = population_stdev(evals.at(1).waf1_by_split.at(method));
    if (evals.contains(2)) row.round2 = population_stdev(evals.at(2).waf1_by_split.at(method));
    table.stdev_rows.push_back(std::move(row));
  }
  return table;
}

std::string render_markdown(const AblationTable& table) {
  std::string text;
  text += "| Method | Round | Acc. | WA-F1 |\n";
  text += "|---|---|---|---|\n";
  for (const auto& row : table.rows) {
    text += "| " + row.method + " | " + std::to_string(row.round) + " | " + fixed(row.acc, 2) +
            " | " + fixed(row.wa_f1, 2) + " |\n";
  }
  text += "\nAggregation: " + to_string(table.agg) + "\n";
  text += "\nStandard deviation of WA-F1 across splits:\n\n";
  text += "| Method | Round 1 | Round 2 |\n";
  text += "|---|---|---|\n";
  for (const auto& row : table.stdev_rows) {
    text += "| " + row.method + " | " + fixed(row.round1, 4) + " | " + fixed(row.round2, 4) + " |\n";
  }
  return text;
}

std::string render_csv(const AblationTable& table) {
  std::string text = "method,round,acc,wa_f1,agg_mode\n";
  for (const auto& row : table.rows) {
    text += row.method + "," + std::to_string(row.round) + "," + fixed(row.acc, 2) + "," +
            fixed(row.wa_f1, 2) + "," + to_string(table.agg) + "\n";
  }
  return text;
}

AblationTable parse_csv(const std::string& text) {
  AblationTable table;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream fields(line);
    std::string method, round, acc, waf1, agg;
    std::getline(fields, method, ',');
    std::getline(fields, round, ',');
    std::getline(fields, acc, ',');
    std::getline(fields, waf1, ',');
    std::getline(fields, agg, ',');
    table.rows.push_back({method, std::stoi(round), std::stod(acc), std::stod(waf1)});
    table.agg = agg == "mean" ? Aggregation::Mean : Aggregation::Median8;
  }
  return table;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
}

}  // namespace meow
