#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "meow/game.hpp"

namespace meow {

struct NotTwoRound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RelationKind { For, Against, Vote };

// Relation type of an edge set: interaction kind plus the round it happened
// in. With merged relations the round tag collapses to 1.
struct RelationKey {
  RelationKind kind = RelationKind::For;
  int round = 1;

  auto operator<=>(const RelationKey&) const = default;

  std::string str() const;                        // "for@1", "vote@2", ...
  static RelationKey parse(const std::string&);   // throws InvalidConfig
};

// Canonical key order for a graph covering `rounds` rounds: round-major,
// for/against/vote within a round.
std::vector<RelationKey> relation_keys_for_rounds(int rounds);

struct HeteroGraph {
  std::uint64_t game_index = 0;
  int num_nodes = kNumSeats;
  int spy_seat = 0;  // label; one-hot over seats
  std::map<RelationKey, std::vector<std::pair<int, int>>> edges;

  // Row i is the one-hot feature of seat i; features never encode the label.
  Eigen::MatrixXd node_features() const;
  std::vector<int> label_one_hot() const;
  std::size_t edge_count() const;
};

enum class DatasetKind { D1, D2 };

struct Dataset {
  DatasetKind which = DatasetKind::D1;
  bool merged_relations = false;
  std::string source_digest;  // digest of the generating records/spec
  std::vector<HeteroGraph> graphs;
};

struct SplitConfig {
  int split_id = 0;
  std::vector<int> train_indices;
  std::vector<int> test_indices;
  double ratio = 0.8;
  std::uint64_t seed = 0;
};

struct DatasetStats {
  int graphs = 0;
  int nodes = 0;
  long edges = 0;
};

struct RejectedGame {
  std::uint64_t game_index;
  std::string reason;
};

// One direction-typed edge per tendency and vote of the included rounds.
// rounds=2 requires the record to have survived into a second round.
HeteroGraph game_to_graph(const GameRecord& record, int rounds, bool merged_relations = false);

// D1: round-1 graphs of every valid game. D2: two-round graphs of the games
// whose spy survived round 1. Invalid games land in `rejected` when provided.
std::pair<Dataset, Dataset> build_datasets(const std::vector<GameRecord>& records,
                                           bool merged_relations = false,
                                           std::vector<RejectedGame>* rejected = nullptr);

std::vector<SplitConfig> make_splits(const Dataset& dataset, int n_splits, double ratio,
                                     std::uint64_t seed);

DatasetStats dataset_stats(const Dataset& dataset);

nlohmann::json graph_to_json(const HeteroGraph& graph);
HeteroGraph graph_from_json(const nlohmann::json& j);

nlohmann::json dataset_to_json(const Dataset& dataset);
Dataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);  // schema-checked

nlohmann::json splits_to_json(const std::vector<SplitConfig>& splits, const std::string& dataset_digest);
std::vector<SplitConfig> splits_from_json(const nlohmann::json& j);
void save_splits(const std::filesystem::path& path, const std::vector<SplitConfig>& splits,
                 const std::string& dataset_digest);
std::vector<SplitConfig> load_splits(const std::filesystem::path& path,
                                     std::string* dataset_digest = nullptr);

}  // namespace meow
