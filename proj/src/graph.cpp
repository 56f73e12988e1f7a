#include "meow/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "meow/digest.hpp"
#include "meow/rng.hpp"

namespace meow {

std::string RelationKey::str() const {
  std::string name;
  switch (kind) {
    case RelationKind::For: name = "for"; break;
    case RelationKind::Against: name = "against"; break;
    case RelationKind::Vote: name = "vote"; break;
  }
  return name + "@" + std::to_string(round);
}

RelationKey RelationKey::parse(const std::string& text) {
  const auto at = text.find('@');
  if (at == std::string::npos) throw InvalidConfig("malformed relation key: " + text);
  const std::string name = text.substr(0, at);
  RelationKey key;
  if (name == "for") key.kind = RelationKind::For;
  else if (name == "against") key.kind = RelationKind::Against;
  else if (name == "vote") key.kind = RelationKind::Vote;
  else throw InvalidConfig("unknown relation kind: " + name);
  key.round = std::stoi(text.substr(at + 1));
  if (key.round < 1) throw InvalidConfig("relation round must be positive: " + text);
  return key;
}

std::vector<RelationKey> relation_keys_for_rounds(int rounds) {
  std::vector<RelationKey> keys;
  for (int r = 1; r <= rounds; ++r) {
    keys.push_back({RelationKind::For, r});
    keys.push_back({RelationKind::Against, r});
    keys.push_back({RelationKind::Vote, r});
  }
  return keys;
}

Eigen::MatrixXd HeteroGraph::node_features() const {
  return Eigen::MatrixXd::Identity(num_nodes, num_nodes);
}

std::vector<int> HeteroGraph::label_one_hot() const {
  std::vector<int> label(static_cast<std::size_t>(num_nodes), 0);
  label[static_cast<std::size_t>(spy_seat)] = 1;
  return label;
}

std::size_t HeteroGraph::edge_count() const {
  std::size_t total = 0;
  for (const auto& [key, list] : edges) total += list.size();
  return total;
}

HeteroGraph game_to_graph(const GameRecord& record, int rounds, bool merged_relations) {
  if (rounds != 1 && rounds != 2) throw InvalidConfig("rounds must be 1 or 2");
  if (rounds == 2 && record.rounds.size() < 2)
    throw NotTwoRound("game " + std::to_string(record.game_index) + " ended in round 1");

  HeteroGraph graph;
  graph.game_index = record.game_index;
  graph.spy_seat = record.config.spy_seat;

  // All keys of the covered rounds are present, empty or not, so serialized
  // graphs have a fixed schema.
  for (const RelationKey& key : relation_keys_for_rounds(merged_relations ? 1 : rounds))
    graph.edges[key];

  for (const RoundRecord& round : record.rounds) {
    if (round.round_index > rounds) break;
    const int tag = merged_relations ? 1 : round.round_index;
    for (const Tendency& t : round.tendencies) {
      const RelationKind kind =
          t.polarity == Polarity::For ? RelationKind::For : RelationKind::Against;
      graph.edges[{kind, tag}].emplace_back(t.source, t.target);
    }
    for (const Vote& v : round.votes) {
      graph.edges[{RelationKind::Vote, tag}].emplace_back(v.voter, v.target);
    }
  }
  return graph;
}

namespace {

// A game is valid when every alive seat of every round produced a
// description, a statement, and a vote. Fallback events do not invalidate.
std::optional<std::string> validity_flaw(const GameRecord& record) {
  if (record.rounds.empty()) return "no rounds";
  std::vector<bool> alive(static_cast<std::size_t>(kNumSeats), true);
  for (const RoundRecord& round : record.rounds) {
    std::size_t alive_count = 0;
    for (int seat = 0; seat < kNumSeats; ++seat) {
      if (!alive[static_cast<std::size_t>(seat)]) continue;
      ++alive_count;
      if (!round.descriptions.contains(seat))
        return "seat " + std::to_string(seat) + " missing description in round " +
               std::to_string(round.round_index);
      if (!round.statements.contains(seat))
        return "seat " + std::to_string(seat) + " missing statement in round " +
               std::to_string(round.round_index);
      const bool voted = std::any_of(round.votes.begin(), round.votes.end(),
                                     [&](const Vote& v) { return v.voter == seat; });
      if (!voted)
        return "seat " + std::to_string(seat) + " missing vote in round " +
               std::to_string(round.round_index);
    }
    if (round.votes.size() != alive_count) return "vote count mismatch";
    if (round.eliminated < 0 || round.eliminated >= kNumSeats ||
        !alive[static_cast<std::size_t>(round.eliminated)])
      return "invalid elimination";
    alive[static_cast<std::size_t>(round.eliminated)] = false;
  }
  return std::nullopt;
}

}  // namespace

std::pair<Dataset, Dataset> build_datasets(const std::vector<GameRecord>& records,
                                           bool merged_relations,
                                           std::vector<RejectedGame>* rejected) {
  Dataset d1{DatasetKind::D1, merged_relations, "", {}};
  Dataset d2{DatasetKind::D2, merged_relations, "", {}};
  for (const GameRecord& record : records) {
    if (auto flaw = validity_flaw(record)) {
      if (rejected) rejected->push_back({record.game_index, *flaw});
      continue;
    }
    d1.graphs.push_back(game_to_graph(record, 1, merged_relations));
    if (record.rounds.size() == 2) d2.graphs.push_back(game_to_graph(record, 2, merged_relations));
  }
  return {std::move(d1), std::move(d2)};
}

std::vector<SplitConfig> make_splits(const Dataset& dataset, int n_splits, double ratio,
                                     std::uint64_t seed) {
  const int n = static_cast<int>(dataset.graphs.size());
  if (n < 10) throw TooSmall("dataset has " + std::to_string(n) + " graphs; need at least 10");
  if (n_splits < 1) throw InvalidConfig("n_splits must be positive");
  if (ratio <= 0.0 || ratio >= 1.0) throw InvalidConfig("split ratio must lie in (0, 1)");

  std::vector<SplitConfig> splits;
  splits.reserve(static_cast<std::size_t>(n_splits));
  const int n_train = static_cast<int>(std::ceil(ratio * n));
  for (int s = 0; s < n_splits; ++s) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(s)));
    rng.shuffle(order);
    SplitConfig split;
    split.split_id = s;
    split.ratio = ratio;
    split.seed = seed;
    split.train_indices.assign(order.begin(), order.begin() + n_train);
    split.test_indices.assign(order.begin() + n_train, order.end());
    splits.push_back(std::move(split));
  }
  return splits;
}

DatasetStats dataset_stats(const Dataset& dataset) {
  DatasetStats stats;
  stats.graphs = static_cast<int>(dataset.graphs.size());
  for (const HeteroGraph& graph : dataset.graphs) {
    stats.nodes += graph.num_nodes;
    stats.edges += static_cast<long>(graph.edge_count());
  }
  return stats;
}

nlohmann::json graph_to_json(const HeteroGraph& graph) {
  nlohmann::json x = nlohmann::json::array();
  const Eigen::MatrixXd features = graph.node_features();
  for (int i = 0; i < graph.num_nodes; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < graph.num_nodes; ++j) row.push_back(static_cast<int>(features(i, j)));
    x.push_back(std::move(row));
  }
  nlohmann::json edges = nlohmann::json::object();
  for (const auto& [key, list] : graph.edges) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [src, dst] : list) pairs.push_back({src, dst});
    edges[key.str()] = std::move(pairs);
  }
  return nlohmann::json{{"game_index", graph.game_index},
                        {"x", std::move(x)},
                        {"y", graph.label_one_hot()},
                        {"edges", std::move(edges)}};
}

HeteroGraph graph_from_json(const nlohmann::json& j) {
  HeteroGraph graph;
  graph.game_index = j.at("game_index").get<std::uint64_t>();
  const auto& y = j.at("y");
  graph.num_nodes = static_cast<int>(y.size());
  int positives = 0;
  for (int i = 0; i < graph.num_nodes; ++i) {
    if (y[static_cast<std::size_t>(i)].get<int>() == 1) {
      graph.spy_seat = i;
      ++positives;
    }
  }
  if (positives != 1) throw std::runtime_error("graph label must be one-hot");
  for (const auto& [key_text, pairs] : j.at("edges").items()) {
    auto& list = graph.edges[RelationKey::parse(key_text)];
    for (const auto& pair : pairs) {
      list.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
    }
  }
  return graph;
}

nlohmann::json dataset_to_json(const Dataset& dataset) {
  nlohmann::json graphs = nlohmann::json::array();
  for (const HeteroGraph& graph : dataset.graphs) graphs.push_back(graph_to_json(graph));
  return nlohmann::json{{"which", dataset.which == DatasetKind::D1 ? "D1" : "D2"},
                        {"merged_relations", dataset.merged_relations},
                        {"source_digest", dataset.source_digest},
                        {"graphs", std::move(graphs)}};
}

Dataset dataset_from_json(const nlohmann::json& j) {
  Dataset dataset;
  dataset.which = j.at("which").get<std::string>() == "D2" ? DatasetKind::D2 : DatasetKind::D1;
  dataset.merged_relations = j.at("merged_relations").get<bool>();
  dataset.source_digest = j.at("source_digest").get<std::string>();
  for (const auto& graph_json : j.at("graphs")) dataset.graphs.push_back(graph_from_json(graph_json));
  return dataset;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path.string());
  out << dataset_to_json(dataset).dump() << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset file: " + path.string());
  auto parsed = nlohmann::json::parse(in, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("graphs"))
    throw std::runtime_error("dataset schema error in " + path.string());
  try {
    return dataset_from_json(parsed);
  } catch (const std::exception& e) {
    throw std::runtime_error("dataset schema error in " + path.string() + ": " + e.what());
  }
}

nlohmann::json splits_to_json(const std::vector<SplitConfig>& splits,
                              const std::string& dataset_digest) {
  nlohmann::json list = nlohmann::json::array();
  for (const SplitConfig& split : splits) {
    list.push_back({{"split_id", split.split_id},
                    {"train", split.train_indices},
                    {"test", split.test_indices},
                    {"ratio", split.ratio},
                    {"seed", split.seed}});
  }
  return nlohmann::json{{"dataset_digest", dataset_digest}, {"splits", std::move(list)}};
}

std::vector<SplitConfig> splits_from_json(const nlohmann::json& j) {
  std::vector<SplitConfig> splits;
  for (const auto& item : j.at("splits")) {
    SplitConfig split;
    split.split_id = item.at("split_id").get<int>();
    split.train_indices = item.at("train").get<std::vector<int>>();
    split.test_indices = item.at("test").get<std::vector<int>>();
    split.ratio = item.at("ratio").get<double>();
    split.seed = item.at("seed").get<std::uint64_t>();
    splits.push_back(std::move(split));
  }
  return splits;
}

void save_splits(const std::filesystem::path& path, const std::vector<SplitConfig>& splits,
                 const std::string& dataset_digest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write splits file: " + path.string());
  out << splits_to_json(splits, dataset_digest).dump() << '\n';
}

std::vector<SplitConfig> load_splits(const std::filesystem::path& path, std::string* dataset_digest) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read splits file: " + path.string());
  auto parsed = nlohmann::json::parse(in, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("splits"))
    throw std::runtime_error("splits schema error in " + path.string());
  if (dataset_digest) *dataset_digest = parsed.value("dataset_digest", "");
  return splits_from_json(parsed);
}

}  // namespace meow
