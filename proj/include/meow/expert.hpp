#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "meow/graph.hpp"
#include "meow/rng.hpp"

namespace meow {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int in_dim = 4;
  int num_seats = 4;
  int heads1 = 6;
  int channels1 = 32;
  int heads2 = 6;
  int channels2 = 16;
  double lr = 1e-4;
  double weight_decay = 5e-4;  // decoupled, applied by the optimizer
  double dropout = 0.5;
  int patience = 30;
  int max_epochs = 1000;
  int batch_size = 32;
  std::vector<RelationKey> relation_keys;

  static ModelConfig round1();  // (6,32,6,16,sum,1e-4,5e-4,0.5,30), 3 relations
  static ModelConfig round2();  // (6,32,6,18,sum,1e-4,5e-4,0.5,50), 6 relations

  int layer1_out() const { return heads1 * channels1; }
  int layer2_out() const { return heads2 * channels2; }
  int concat_dim() const { return num_seats * layer2_out(); }

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  std::string digest() const;
};

// All trainable tensors in one flat buffer. Per layer and relation the block
// is W (heads*channels x in, stored row-major) followed by the stacked
// attention vectors a (heads*channels); the readout W_out (seats x concat,
// row-major) and b_out close the buffer. The fixed order keeps checkpoints,
// the optimizer, and finite differences aligned.
class Parameters {
 public:
  struct Entry {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::ptrdiff_t offset = 0;
  };

  Parameters() = default;
  explicit Parameters(const ModelConfig& config);

  static Parameters zeros_like(const Parameters& other);
  static Parameters glorot(const ModelConfig& config, std::uint64_t seed);

  std::size_t size() const { return data_.size(); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& flat() { return data_; }
  const std::vector<double>& flat() const { return data_; }

  using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

  MatMap weight(int layer, int relation);
  ConstMatMap weight(int layer, int relation) const;
  VecMap attention(int layer, int relation);
  ConstVecMap attention(int layer, int relation) const;
  MatMap readout_weight();
  ConstMatMap readout_weight() const;
  VecMap readout_bias();
  ConstVecMap readout_bias() const;

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  const Entry& entry(const std::string& name) const;

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::vector<double> data_;
  int relations_ = 0;
};

// Everything the backward pass needs from one forward evaluation.
struct LayerTrace {
  Eigen::MatrixXd input;                                  // n x in
  std::vector<Eigen::MatrixXd> transformed;               // per relation: n x (H*O); empty if no edges
  std::vector<std::vector<std::vector<int>>> neighbors;   // relation -> target -> in-neighbor srcs
  std::vector<std::map<int, Eigen::MatrixXd>> attention;  // relation -> target -> (H x deg)
  std::vector<Eigen::MatrixXd> message_pre;               // per relation: n x (H*O), pre-ELU
  Eigen::MatrixXd output;                                 // n x (H*O)
};

struct ForwardTrace {
  LayerTrace layer1;
  LayerTrace layer2;
  Eigen::VectorXd concat;        // node rows in seat order, pre-ReLU
  Eigen::VectorXd relu_out;
  Eigen::VectorXd dropout_mask;  // multiplicative; all ones in eval mode
  Eigen::VectorXd dropped;
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;
};

enum class RunMode { Train, Eval };

// Graph edges re-indexed against a model's relation key list.
std::vector<std::vector<std::pair<int, int>>> index_edges(const HeteroGraph& graph,
                                                          const ModelConfig& config);

// One relation-typed GATv2 layer with sum aggregation across relations.
// Scores use the shared-weight form a^T LeakyReLU(W x_i + W x_j); messages
// are ELU(sum_j alpha W x_j) per head, heads concatenated. Targets with no
// in-neighbors under a relation contribute zero for it.
Eigen::MatrixXd layer_forward(const Eigen::MatrixXd& X,
                              const std::vector<std::vector<std::pair<int, int>>>& edges,
                              const Parameters& params, const ModelConfig& config, int layer,
                              LayerTrace* trace);

ForwardTrace model_forward(const HeteroGraph& graph, const Parameters& params,
                           const ModelConfig& config, RunMode mode, Rng* dropout_rng = nullptr);

// Cross-entropy against the one-hot spy label; probabilities are clamped at
// 1e-12 before the log. Weight decay is the optimizer's business, not the
// loss's.
double cross_entropy(const Eigen::VectorXd& probs, int label);

// Exact reverse-mode gradients for every tensor, from a train-mode trace.
Parameters backward(const HeteroGraph& graph, const Parameters& params, const ModelConfig& config,
                    const ForwardTrace& trace, int label);

struct ExpertObservation {
  std::array<double, 4> probs{};
  int argmax = 0;
};

struct Checkpoint {
  ModelConfig config;
  std::string config_digest;
  std::string round_name;  // "round1" or "round2"
  std::uint64_t seed = 0;
  double best_val_loss = 0.0;
  int best_epoch = 0;
  int fold = 0;
  std::vector<double> params;

  std::string digest() const;
  nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json& j);
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainingLog {
  struct FoldLog {
    int fold = 0;
    int epochs_run = 0;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    std::vector<double> val_losses;
  };
  std::vector<FoldLog> folds;
  int chosen_fold = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainingLog log;
};

// Four-fold cross-validation over the split's train set with patience-K early
// stopping per fold; the returned checkpoint is the fold with the lowest best
// validation loss. AdamW-style updates: adaptive step plus decoupled decay.
TrainResult train_model(const Dataset& dataset, const SplitConfig& split, const ModelConfig& config,
                        std::uint64_t seed, const std::string& round_name);

ExpertObservation predict(const Checkpoint& checkpoint, const HeteroGraph& graph);

double accuracy_on(const Checkpoint& checkpoint, const Dataset& dataset,
                   const std::vector<int>& indices);

}  // namespace meow
