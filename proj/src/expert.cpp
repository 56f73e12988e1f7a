#include "meow/expert.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "meow/digest.hpp"

namespace meow {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kProbFloor = 1e-12;
constexpr double kLeakySlope = 0.2;

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }
inline double lrelu(double x) { return x > 0.0 ? x : kLeakySlope * x; }
inline double lrelu_grad(double x) { return x > 0.0 ? 1.0 : kLeakySlope; }

}  // namespace

ModelConfig ModelConfig::round1() {
  ModelConfig config;
  config.relation_keys = relation_keys_for_rounds(1);
  return config;
}

ModelConfig ModelConfig::round2() {
  ModelConfig config;
  config.channels2 = 18;
  config.patience = 50;
  config.relation_keys = relation_keys_for_rounds(2);
  return config;
}

void ModelConfig::validate() const {
  if (in_dim <= 0 || num_seats <= 0 || heads1 <= 0 || channels1 <= 0 || heads2 <= 0 ||
      channels2 <= 0 || lr <= 0.0 || patience <= 0 || max_epochs <= 0 || batch_size <= 0)
    throw InvalidConfig("model config values must be positive");
  if (weight_decay < 0.0) throw InvalidConfig("weight decay must be non-negative");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidConfig("dropout must lie in [0, 1)");
  if (relation_keys.empty()) throw InvalidConfig("model needs at least one relation key");
}

nlohmann::json ModelConfig::to_json() const {
  std::vector<std::string> keys;
  for (const RelationKey& key : relation_keys) keys.push_back(key.str());
  return nlohmann::json{{"in_dim", in_dim},           {"num_seats", num_seats},
                        {"heads1", heads1},           {"channels1", channels1},
                        {"heads2", heads2},           {"channels2", channels2},
                        {"lr", lr},                   {"weight_decay", weight_decay},
                        {"dropout", dropout},         {"patience", patience},
                        {"max_epochs", max_epochs},   {"batch_size", batch_size},
                        {"relation_keys", keys}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig config;
  config.in_dim = j.at("in_dim").get<int>();
  config.num_seats = j.at("num_seats").get<int>();
  config.heads1 = j.at("heads1").get<int>();
  config.channels1 = j.at("channels1").get<int>();
  config.heads2 = j.at("heads2").get<int>();
  config.channels2 = j.at("channels2").get<int>();
  config.lr = j.at("lr").get<double>();
  config.weight_decay = j.at("weight_decay").get<double>();
  config.dropout = j.at("dropout").get<double>();
  config.patience = j.at("patience").get<int>();
  config.max_epochs = j.at("max_epochs").get<int>();
  config.batch_size = j.at("batch_size").get<int>();
  config.relation_keys.clear();
  for (const auto& key : j.at("relation_keys"))
    config.relation_keys.push_back(RelationKey::parse(key.get<std::string>()));
  return config;
}

std::string ModelConfig::digest() const { return digest_string(to_json().dump()); }

Parameters::Parameters(const ModelConfig& config) {
  relations_ = static_cast<int>(config.relation_keys.size());
  std::ptrdiff_t offset = 0;
  auto add = [&](const std::string& name, int rows, int cols) {
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, rows, cols, offset});
    offset += static_cast<std::ptrdiff_t>(rows) * cols;
  };
  for (int layer = 1; layer <= 2; ++layer) {
    const int heads = layer == 1 ? config.heads1 : config.heads2;
    const int channels = layer == 1 ? config.channels1 : config.channels2;
    const int in = layer == 1 ? config.in_dim : config.layer1_out();
    for (int r = 0; r < relations_; ++r) {
      const std::string base = "l" + std::to_string(layer) + "." + config.relation_keys[static_cast<std::size_t>(r)].str();
      add(base + ".W", heads * channels, in);
      add(base + ".a", heads * channels, 1);
    }
  }
  add("readout.W", config.num_seats, config.concat_dim());
  add("readout.b", config.num_seats, 1);
  data_.assign(static_cast<std::size_t>(offset), 0.0);
}

Parameters Parameters::zeros_like(const Parameters& other) {
  Parameters out = other;
  std::fill(out.data_.begin(), out.data_.end(), 0.0);
  return out;
}

Parameters Parameters::glorot(const ModelConfig& config, std::uint64_t seed) {
  Parameters params(config);
  Rng rng(seed);
  for (const Entry& entry : params.entries_) {
    double fan_in = entry.cols;
    double fan_out = entry.rows;
    if (entry.name.ends_with(".a")) {
      fan_in = entry.rows;  // attention vectors contract over the head channels
      fan_out = 1.0;
    } else if (entry.name.ends_with(".W") && entry.name[0] == 'l') {
      // Per-head fan-out: the stacked rows hold `heads` independent maps.
      const int heads = entry.name[1] == '1' ? config.heads1 : config.heads2;
      fan_out = static_cast<double>(entry.rows) / heads;
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    double* block = params.data_.data() + entry.offset;
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(entry.rows) * entry.cols;
    for (std::ptrdiff_t i = 0; i < count; ++i) block[i] = (2.0 * rng.real() - 1.0) * limit;
  }
  return params;
}

const Parameters::Entry& Parameters::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeMismatch("unknown parameter tensor: " + name);
  return entries_[it->second];
}

Parameters::MatMap Parameters::weight(int layer, int relation) {
  const Entry& e = entries_[static_cast<std::size_t>((layer - 1) * relations_ + relation) * 2];
  return MatMap(data_.data() + e.offset, e.rows, e.cols);
}

Parameters::ConstMatMap Parameters::weight(int layer, int relation) const {
  const Entry& e = entries_[static_cast<std::size_t>((layer - 1) * relations_ + relation) * 2];
  return ConstMatMap(data_.data() + e.offset, e.rows, e.cols);
}

Parameters::VecMap Parameters::attention(int layer, int relation) {
  const Entry& e = entries_[static_cast<std::size_t>((layer - 1) * relations_ + relation) * 2 + 1];
  return VecMap(data_.data() + e.offset, e.rows);
}

Parameters::ConstVecMap Parameters::attention(int layer, int relation) const {
  const Entry& e = entries_[static_cast<std::size_t>((layer - 1) * relations_ + relation) * 2 + 1];
  return ConstVecMap(data_.data() + e.offset, e.rows);
}

Parameters::MatMap Parameters::readout_weight() {
  const Entry& e = entry("readout.W");
  return MatMap(data_.data() + e.offset, e.rows, e.cols);
}

Parameters::ConstMatMap Parameters::readout_weight() const {
  const Entry& e = entry("readout.W");
  return ConstMatMap(data_.data() + e.offset, e.rows, e.cols);
}

Parameters::VecMap Parameters::readout_bias() {
  const Entry& e = entry("readout.b");
  return VecMap(data_.data() + e.offset, e.rows);
}

Parameters::ConstVecMap Parameters::readout_bias() const {
  const Entry& e = entry("readout.b");
  return ConstVecMap(data_.data() + e.offset, e.rows);
}

std::vector<std::vector<std::pair<int, int>>> index_edges(const HeteroGraph& graph,
                                                          const ModelConfig& config) {
  std::vector<std::vector<std::pair<int, int>>> indexed(config.relation_keys.size());
  for (const auto& [key, list] : graph.edges) {
    const auto it = std::find(config.relation_keys.begin(), config.relation_keys.end(), key);
    if (it == config.relation_keys.end()) {
      if (list.empty()) continue;  // an empty foreign relation carries no information
      throw SchemaMismatch("graph relation " + key.str() + " is not part of the model schema");
    }
    indexed[static_cast<std::size_t>(it - config.relation_keys.begin())] = list;
  }
  return indexed;
}

Eigen::MatrixXd layer_forward(const Eigen::MatrixXd& X,
                              const std::vector<std::vector<std::pair<int, int>>>& edges,
                              const Parameters& params, const ModelConfig& config, int layer,
                              LayerTrace* trace) {
  const int n = static_cast<int>(X.rows());
  const int heads = layer == 1 ? config.heads1 : config.heads2;
  const int channels = layer == 1 ? config.channels1 : config.channels2;
  const int in = layer == 1 ? config.in_dim : config.layer1_out();
  const int width = heads * channels;
  const int relations = static_cast<int>(config.relation_keys.size());
  if (X.cols() != in) throw ShapeMismatch("layer input has wrong width");
  if (static_cast<int>(edges.size()) != relations) throw ShapeMismatch("edge list count mismatch");

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, width);
  if (trace) {
    trace->input = X;
    trace->transformed.assign(static_cast<std::size_t>(relations), Eigen::MatrixXd());
    trace->neighbors.assign(static_cast<std::size_t>(relations), {});
    trace->attention.assign(static_cast<std::size_t>(relations), {});
    trace->message_pre.assign(static_cast<std::size_t>(relations), Eigen::MatrixXd());
  }

  for (int r = 0; r < relations; ++r) {
    const auto& list = edges[static_cast<std::size_t>(r)];
    if (list.empty()) continue;

    std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
    for (const auto& [src, dst] : list) {
      if (src < 0 || src >= n || dst < 0 || dst >= n)
        throw ShapeMismatch("edge endpoint out of node range");
      nbrs[static_cast<std::size_t>(dst)].push_back(src);
    }

    const Eigen::MatrixXd U = X * params.weight(layer, r).transpose();  // n x width
    Eigen::MatrixXd message_pre = Eigen::MatrixXd::Zero(n, width);
    const auto a_full = params.attention(layer, r);

    std::map<int, Eigen::MatrixXd> attn;
    for (int i = 0; i < n; ++i) {
      const auto& in_nbrs = nbrs[static_cast<std::size_t>(i)];
      if (in_nbrs.empty()) continue;
      const int deg = static_cast<int>(in_nbrs.size());
      Eigen::MatrixXd alpha(heads, deg);
      for (int h = 0; h < heads; ++h) {
        const auto a_h = a_full.segment(h * channels, channels);
        const auto u_i = U.row(i).segment(h * channels, channels);

        Eigen::VectorXd scores(deg);
        for (int k = 0; k < deg; ++k) {
          const auto u_j = U.row(in_nbrs[static_cast<std::size_t>(k)]).segment(h * channels, channels);
          double score = 0.0;
          for (int c = 0; c < channels; ++c) score += a_h(c) * lrelu(u_i(c) + u_j(c));
          scores(k) = score;
        }
        const double peak = scores.maxCoeff();
        Eigen::VectorXd weights = (scores.array() - peak).exp();
        weights /= weights.sum();
        alpha.row(h) = weights.transpose();

        auto msg = message_pre.row(i).segment(h * channels, channels);
        for (int k = 0; k < deg; ++k) {
          msg += weights(k) * U.row(in_nbrs[static_cast<std::size_t>(k)]).segment(h * channels, channels);
        }
        auto out_seg = out.row(i).segment(h * channels, channels);
        for (int c = 0; c < channels; ++c) out_seg(c) += elu(msg(c));
      }
      attn.emplace(i, std::move(alpha));
    }

    if (trace) {
      trace->transformed[static_cast<std::size_t>(r)] = U;
      trace->neighbors[static_cast<std::size_t>(r)] = std::move(nbrs);
      trace->attention[static_cast<std::size_t>(r)] = std::move(attn);
      trace->message_pre[static_cast<std::size_t>(r)] = std::move(message_pre);
    }
  }

  if (trace) trace->output = out;
  return out;
}

ForwardTrace model_forward(const HeteroGraph& graph, const Parameters& params,
                           const ModelConfig& config, RunMode mode, Rng* dropout_rng) {
  if (graph.num_nodes != config.num_seats) throw ShapeMismatch("graph node count mismatch");
  const auto edges = index_edges(graph, config);

  ForwardTrace trace;
  const Eigen::MatrixXd X = graph.node_features();
  const Eigen::MatrixXd X1 = layer_forward(X, edges, params, config, 1, &trace.layer1);
  const Eigen::MatrixXd X2 = layer_forward(X1, edges, params, config, 2, &trace.layer2);

  const int width = config.layer2_out();
  trace.concat.resize(config.concat_dim());
  for (int i = 0; i < config.num_seats; ++i) trace.concat.segment(i * width, width) = X2.row(i);

  trace.relu_out = trace.concat.cwiseMax(0.0);

  trace.dropout_mask = Eigen::VectorXd::Ones(config.concat_dim());
  if (mode == RunMode::Train && config.dropout > 0.0) {
    if (!dropout_rng) throw std::logic_error("train-mode forward needs a dropout rng");
    const double keep = 1.0 - config.dropout;
    for (int i = 0; i < trace.dropout_mask.size(); ++i) {
      trace.dropout_mask(i) = dropout_rng->real() < keep ? 1.0 / keep : 0.0;
    }
  }
  trace.dropped = trace.relu_out.cwiseProduct(trace.dropout_mask);

  trace.logits = params.readout_weight() * trace.dropped + params.readout_bias();
  const double peak = trace.logits.maxCoeff();
  Eigen::VectorXd exps = (trace.logits.array() - peak).exp();
  trace.probs = exps / exps.sum();
  return trace;
}

double cross_entropy(const Eigen::VectorXd& probs, int label) {
  if (label < 0 || label >= probs.size()) throw ShapeMismatch("label out of range");
  return -std::log(std::max(probs(label), kProbFloor));
}

namespace {

// Reverse pass of one layer. G is dL/d(layer output); returns dL/d(layer
// input) and accumulates parameter gradients.
Eigen::MatrixXd layer_backward(const LayerTrace& tr, const Parameters& params, Parameters& grads,
                               const ModelConfig& config, int layer, const Eigen::MatrixXd& G) {
  const int n = static_cast<int>(tr.input.rows());
  const int heads = layer == 1 ? config.heads1 : config.heads2;
  const int channels = layer == 1 ? config.channels1 : config.channels2;
  const int relations = static_cast<int>(config.relation_keys.size());

  Eigen::MatrixXd dX = Eigen::MatrixXd::Zero(n, tr.input.cols());

  for (int r = 0; r < relations; ++r) {
    const Eigen::MatrixXd& U = tr.transformed[static_cast<std::size_t>(r)];
    if (U.size() == 0) continue;  // relation had no edges; it contributed zero

    Eigen::MatrixXd dU = Eigen::MatrixXd::Zero(U.rows(), U.cols());
    const auto a_full = params.attention(layer, r);
    auto da_full = grads.attention(layer, r);

    for (const auto& [i, alpha] : tr.attention[static_cast<std::size_t>(r)]) {
      const auto& in_nbrs = tr.neighbors[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)];
      const int deg = static_cast<int>(in_nbrs.size());

      for (int h = 0; h < heads; ++h) {
        const auto g = G.row(i).segment(h * channels, channels);
        const auto m = tr.message_pre[static_cast<std::size_t>(r)].row(i).segment(h * channels, channels);

        Eigen::VectorXd dm(channels);
        for (int c = 0; c < channels; ++c) dm(c) = g(c) * elu_grad(m(c));

        // Message path: m = sum_k alpha_k u_k.
        Eigen::VectorXd dalpha(deg);
        for (int k = 0; k < deg; ++k) {
          const auto u_k = U.row(in_nbrs[static_cast<std::size_t>(k)]).segment(h * channels, channels);
          dalpha(k) = dm.dot(u_k.transpose());
        }

        // Softmax over the in-neighborhood.
        const double pull = alpha.row(h).dot(dalpha.transpose());
        const auto a_h = a_full.segment(h * channels, channels);
        const auto u_i = U.row(i).segment(h * channels, channels);

        for (int k = 0; k < deg; ++k) {
          const int j = in_nbrs[static_cast<std::size_t>(k)];
          const double alpha_k = alpha(h, k);
          const double dscore = alpha_k * (dalpha(k) - pull);
          const auto u_j = U.row(j).segment(h * channels, channels);

          auto da_seg = da_full.segment(h * channels, channels);
          auto dU_i = dU.row(i).segment(h * channels, channels);
          auto dU_j = dU.row(j).segment(h * channels, channels);
          for (int c = 0; c < channels; ++c) {
            const double s = u_i(c) + u_j(c);
            da_seg(c) += dscore * lrelu(s);
            const double ds = dscore * a_h(c) * lrelu_grad(s);
            dU_i(c) += ds;
            dU_j(c) += ds + alpha_k * dm(c);
          }
        }
      }
    }

    grads.weight(layer, r) += dU.transpose() * tr.input;
    dX += dU * params.weight(layer, r);
  }
  return dX;
}

}  // namespace

Parameters backward(const HeteroGraph& graph, const Parameters& params, const ModelConfig& config,
                    const ForwardTrace& trace, int label) {
  Parameters grads = Parameters::zeros_like(params);

  // Softmax + cross-entropy collapse to probs - onehot(label).
  Eigen::VectorXd dlogits = trace.probs;
  dlogits(label) -= 1.0;

  grads.readout_bias() += dlogits;
  grads.readout_weight() += dlogits * trace.dropped.transpose();

  Eigen::VectorXd ddropped = params.readout_weight().transpose() * dlogits;
  Eigen::VectorXd dconcat = ddropped.cwiseProduct(trace.dropout_mask);
  for (int i = 0; i < dconcat.size(); ++i) {
    if (trace.concat(i) <= 0.0) dconcat(i) = 0.0;  // ReLU gate
  }

  const int width = config.layer2_out();
  Eigen::MatrixXd G2(config.num_seats, width);
  for (int i = 0; i < config.num_seats; ++i) G2.row(i) = dconcat.segment(i * width, width);

  const Eigen::MatrixXd G1 = layer_backward(trace.layer2, params, grads, config, 2, G2);
  layer_backward(trace.layer1, params, grads, config, 1, G1);
  (void)graph;
  return grads;
}

std::string Checkpoint::digest() const { return digest_string(to_json().dump()); }

nlohmann::json Checkpoint::to_json() const {
  return nlohmann::json{{"version", 1},
                        {"round", round_name},
                        {"config", config.to_json()},
                        {"config_digest", config_digest},
                        {"seed", seed},
                        {"best_val_loss", best_val_loss},
                        {"best_epoch", best_epoch},
                        {"fold", fold},
                        {"params", params}};
}

Checkpoint Checkpoint::from_json(const nlohmann::json& j) {
  Checkpoint ck;
  ck.round_name = j.at("round").get<std::string>();
  ck.config = ModelConfig::from_json(j.at("config"));
  ck.config_digest = j.at("config_digest").get<std::string>();
  ck.seed = j.at("seed").get<std::uint64_t>();
  ck.best_val_loss = j.at("best_val_loss").get<double>();
  ck.best_epoch = j.at("best_epoch").get<int>();
  ck.fold = j.at("fold").get<int>();
  ck.params = j.at("params").get<std::vector<double>>();
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << ck.to_json().dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  auto parsed = nlohmann::json::parse(in, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("params"))
    throw std::runtime_error("checkpoint schema error in " + path.string());
  Checkpoint ck = Checkpoint::from_json(parsed);
  Parameters shape(ck.config);
  if (ck.params.size() != shape.size())
    throw std::runtime_error("checkpoint parameter count mismatch in " + path.string());
  return ck;
}

namespace {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
};

void adam_step(Parameters& params, const Parameters& grads, AdamState& state,
               const ModelConfig& config) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  double* p = params.data();
  const double* g = grads.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * g[i];
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    p[i] -= config.lr * (m_hat / (std::sqrt(v_hat) + kAdamEps) + config.weight_decay * p[i]);
  }
}

double mean_loss(const Dataset& dataset, const std::vector<int>& indices, const Parameters& params,
                 const ModelConfig& config) {
  double total = 0.0;
  for (int idx : indices) {
    const HeteroGraph& graph = dataset.graphs[static_cast<std::size_t>(idx)];
    const ForwardTrace trace = model_forward(graph, params, config, RunMode::Eval);
    total += cross_entropy(trace.probs, graph.spy_seat);
  }
  return indices.empty() ? 0.0 : total / static_cast<double>(indices.size());
}

}  // namespace

TrainResult train_model(const Dataset& dataset, const SplitConfig& split, const ModelConfig& config,
                        std::uint64_t seed, const std::string& round_name) {
  config.validate();
  if (split.train_indices.size() < 8)
    throw TooSmall("need at least 8 training graphs for four folds");

  std::vector<int> shuffled = split.train_indices;
  Rng fold_rng(mix_seed(seed, 0xf01d));
  fold_rng.shuffle(shuffled);

  constexpr int kFolds = 4;
  TrainResult result;
  std::optional<Parameters> best_overall;
  double best_overall_loss = std::numeric_limits<double>::infinity();

  for (int fold = 0; fold < kFolds; ++fold) {
    const std::size_t lo = shuffled.size() * static_cast<std::size_t>(fold) / kFolds;
    const std::size_t hi = shuffled.size() * static_cast<std::size_t>(fold + 1) / kFolds;
    std::vector<int> val(shuffled.begin() + static_cast<std::ptrdiff_t>(lo),
                         shuffled.begin() + static_cast<std::ptrdiff_t>(hi));
    std::vector<int> train;
    train.reserve(shuffled.size() - val.size());
    train.insert(train.end(), shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(lo));
    train.insert(train.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(hi), shuffled.end());

    Parameters params = Parameters::glorot(config, mix_seed(seed, 0x1417, static_cast<std::uint64_t>(fold)));
    AdamState adam;
    adam.m.assign(params.size(), 0.0);
    adam.v.assign(params.size(), 0.0);

    Rng epoch_rng(mix_seed(seed, 0xe90c, static_cast<std::uint64_t>(fold)));
    Rng dropout_rng(mix_seed(seed, 0xd709, static_cast<std::uint64_t>(fold)));

    TrainingLog::FoldLog log;
    log.fold = fold;
    double best_val = std::numeric_limits<double>::infinity();
    Parameters best_params = params;
    int best_epoch = 0;
    int stale = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
      epoch_rng.shuffle(train);
      for (std::size_t start = 0; start < train.size(); start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t stop = std::min(train.size(), start + static_cast<std::size_t>(config.batch_size));
        Parameters grads = Parameters::zeros_like(params);
        for (std::size_t k = start; k < stop; ++k) {
          const HeteroGraph& graph = dataset.graphs[static_cast<std::size_t>(train[k])];
          const ForwardTrace trace =
              model_forward(graph, params, config, RunMode::Train, &dropout_rng);
          const Parameters g = backward(graph, params, config, trace, graph.spy_seat);
          const double scale = 1.0 / static_cast<double>(stop - start);
          for (std::size_t i = 0; i < grads.size(); ++i) grads.data()[i] += scale * g.data()[i];
        }
        adam_step(params, grads, adam, config);
      }

      const double val_loss = mean_loss(dataset, val, params, config);
      log.val_losses.push_back(val_loss);
      log.epochs_run = epoch;
      if (val_loss < best_val) {
        best_val = val_loss;
        best_params = params;
        best_epoch = epoch;
        stale = 0;
      } else {
        stale += 1;
        if (stale >= config.patience) break;
      }
    }

    log.best_epoch = best_epoch;
    log.best_val_loss = best_val;
    result.log.folds.push_back(std::move(log));

    if (best_val < best_overall_loss) {
      best_overall_loss = best_val;
      best_overall = best_params;
      result.checkpoint.fold = fold;
      result.checkpoint.best_epoch = best_epoch;
    }
  }

  result.log.chosen_fold = result.checkpoint.fold;
  result.checkpoint.config = config;
  result.checkpoint.config_digest = config.digest();
  result.checkpoint.round_name = round_name;
  result.checkpoint.seed = seed;
  result.checkpoint.best_val_loss = best_overall_loss;
  result.checkpoint.params = best_overall->flat();
  return result;
}

ExpertObservation predict(const Checkpoint& checkpoint, const HeteroGraph& graph) {
  Parameters params(checkpoint.config);
  if (params.size() != checkpoint.params.size())
    throw SchemaMismatch("checkpoint does not match its own config");
  std::copy(checkpoint.params.begin(), checkpoint.params.end(), params.data());

  const ForwardTrace trace = model_forward(graph, params, checkpoint.config, RunMode::Eval);
  ExpertObservation obs;
  for (int i = 0; i < 4; ++i) obs.probs[static_cast<std::size_t>(i)] = trace.probs(i);
  obs.argmax = 0;
  for (int i = 1; i < 4; ++i) {
    if (obs.probs[static_cast<std::size_t>(i)] > obs.probs[static_cast<std::size_t>(obs.argmax)])
      obs.argmax = i;
  }
  return obs;
}

double accuracy_on(const Checkpoint& checkpoint, const Dataset& dataset,
                   const std::vector<int>& indices) {
  if (indices.empty()) return 0.0;
  int hits = 0;
  for (int idx : indices) {
    const HeteroGraph& graph = dataset.graphs[static_cast<std::size_t>(idx)];
    if (predict(checkpoint, graph).argmax == graph.spy_seat) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

}  // namespace meow
