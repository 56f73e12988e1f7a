#include "meow/pipeline.hpp"

#include <atomic>
#include <fstream>
#include <iostream>
#include <thread>

#include "meow/digest.hpp"
#include "meow/rng.hpp"

namespace meow {

namespace {

nlohmann::json read_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig(std::string(what) + " not readable: " + path.string());
  auto parsed = nlohmann::json::parse(in, nullptr, false);
  if (parsed.is_discarded())
    throw InvalidConfig(std::string(what) + " is not valid JSON: " + path.string());
  return parsed;
}

ModelConfig model_overrides(ModelConfig base, const nlohmann::json& j) {
  base.heads1 = j.value("heads1", base.heads1);
  base.channels1 = j.value("channels1", base.channels1);
  base.heads2 = j.value("heads2", base.heads2);
  base.channels2 = j.value("channels2", base.channels2);
  base.lr = j.value("lr", base.lr);
  base.weight_decay = j.value("weight_decay", base.weight_decay);
  base.dropout = j.value("dropout", base.dropout);
  base.patience = j.value("patience", base.patience);
  base.max_epochs = j.value("max_epochs", base.max_epochs);
  base.batch_size = j.value("batch_size", base.batch_size);
  return base;
}

// <stage>.meta.json cache marker: outputs listed exist and inputs_digest matches.
bool cache_hit(const std::filesystem::path& meta_path, const std::string& inputs_digest,
               const std::vector<std::filesystem::path>& outputs) {
  std::ifstream in(meta_path);
  if (!in) return false;
  auto parsed = nlohmann::json::parse(in, nullptr, false);
  if (parsed.is_discarded() || parsed.value("inputs_digest", "") != inputs_digest) return false;
  for (const auto& path : outputs) {
    if (!std::filesystem::exists(path)) return false;
  }
  return true;
}

void write_meta(const std::filesystem::path& meta_path, const std::string& inputs_digest) {
  std::ofstream out(meta_path, std::ios::binary);
  out << nlohmann::json{{"inputs_digest", inputs_digest}}.dump() << '\n';
}

}  // namespace

std::vector<WordPair> load_word_pairs(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path, "word pairs file");
  if (!j.is_array() || j.empty()) throw InvalidConfig("word pairs file must be a non-empty array");
  std::vector<WordPair> pairs;
  for (const auto& item : j) {
    WordPair pair;
    pair.folk_word = item.at("folk_word").get<std::string>();
    pair.spy_word = item.at("spy_word").get<std::string>();
    pair.category = item.value("category", "");
    pair.validate();
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& config_file) {
  const nlohmann::json j = read_json_file(config_file, "pipeline config");
  PipelineConfig config;
  try {
    config.out_dir = j.value("out_dir", std::string("out"));

    std::filesystem::path pairs_path = j.at("word_pairs").get<std::string>();
    if (pairs_path.is_relative()) pairs_path = config_file.parent_path() / pairs_path;
    config.word_pairs = load_word_pairs(pairs_path);

    if (j.contains("scripted")) {
      const auto& s = j["scripted"];
      config.scripted.detect_rate = s.value("detect_rate", config.scripted.detect_rate);
      config.scripted.false_alarm = s.value("false_alarm", config.scripted.false_alarm);
      config.scripted.deception = s.value("deception", config.scripted.deception);
      if (s.contains("tendency_weights")) {
        const auto w = s["tendency_weights"].get<std::vector<double>>();
        if (w.size() != 3) throw InvalidConfig("tendency_weights must have 3 entries");
        std::copy(w.begin(), w.end(), config.scripted.tendency_weights.begin());
      }
      config.scripted.vocab_size = s.value("vocab_size", config.scripted.vocab_size);
      config.scripted.validate();
    }

    if (j.contains("batch")) {
      const auto& b = j["batch"];
      config.n_games = b.value("n_games", config.n_games);
      config.base_seed = b.value("base_seed", config.base_seed);
      config.policy_kind = b.value("policy", config.policy_kind);
      const std::string assignment = b.value("spy_assignment", std::string("round_robin"));
      if (assignment == "round_robin") config.spy_assignment = SpyAssignment::RoundRobin;
      else if (assignment == "seeded_uniform") config.spy_assignment = SpyAssignment::SeededUniform;
      else throw InvalidConfig("unknown spy_assignment: " + assignment);
    }
    if (config.policy_kind != "scripted" && config.policy_kind != "chat")
      throw InvalidConfig("batch policy must be scripted or chat");

    if (j.contains("chat")) {
      const auto& c = j["chat"];
      config.agent_chat.endpoint = c.value("endpoint", std::string());
      config.agent_chat.model = c.value("model", std::string());
      config.agent_chat.api_key = c.value("api_key", std::string());
      config.agent_chat.temperature = c.value("temperature", config.agent_chat.temperature);
      config.agent_chat.top_p = c.value("top_p", config.agent_chat.top_p);
      config.agent_chat.max_inflight = c.value("max_inflight", config.agent_chat.max_inflight);
      if (c.contains("prompts_dir")) {
        config.prompts_dir = c["prompts_dir"].get<std::string>();
        if (config.prompts_dir.is_relative())
          config.prompts_dir = config_file.parent_path() / config.prompts_dir;
        if (!std::filesystem::is_directory(config.prompts_dir))
          throw InvalidConfig("prompts_dir does not exist: " + config.prompts_dir.string());
      }
    }
    if (config.policy_kind == "chat" && config.agent_chat.endpoint.empty())
      throw InvalidConfig("chat policy requires chat.endpoint");

    if (j.contains("graphs")) config.merged_relations = j["graphs"].value("merged_relations", false);

    if (j.contains("split")) {
      const auto& s = j["split"];
      config.n_splits = s.value("n_splits", config.n_splits);
      config.split_ratio = s.value("ratio", config.split_ratio);
      config.split_seed = s.value("seed", config.split_seed);
      if (config.n_splits < 1) throw InvalidConfig("n_splits must be positive");
      if (config.split_ratio <= 0.0 || config.split_ratio >= 1.0)
        throw InvalidConfig("split ratio must lie in (0, 1)");
    }

    if (j.contains("models")) {
      const auto& m = j["models"];
      if (m.contains("round1")) config.model_round1 = model_overrides(config.model_round1, m["round1"]);
      if (m.contains("round2")) config.model_round2 = model_overrides(config.model_round2, m["round2"]);
    }
    if (config.merged_relations) config.model_round2.relation_keys = relation_keys_for_rounds(1);
    config.model_round1.validate();
    config.model_round2.validate();
    if (j.contains("train")) config.train_seed = j["train"].value("seed", config.train_seed);

    if (j.contains("judge")) {
      const auto& jc = j["judge"];
      config.judge.endpoint = jc.value("endpoint", std::string());
      config.judge.model = jc.value("model", std::string());
      config.judge.top_p = jc.value("top_p", config.judge.top_p);
      config.judge.temperature = jc.value("temperature", config.judge.temperature);
    }

    if (j.contains("ablation")) {
      const auto& a = j["ablation"];
      if (a.contains("methods")) {
        config.methods.clear();
        for (const auto& name : a["methods"])
          config.methods.push_back(judge_method_from_string(name.get<std::string>()));
      }
      const std::string agg = a.value("aggregation", std::string("median8"));
      if (agg == "median8") config.agg = Aggregation::Median8;
      else if (agg == "mean") config.agg = Aggregation::Mean;
      else throw InvalidConfig("unknown aggregation: " + agg);
      config.resolution_seed = a.value("resolution_seed", config.resolution_seed);
    }
    const bool chat_methods =
        std::any_of(config.methods.begin(), config.methods.end(),
                    [](JudgeMethod m) { return m != JudgeMethod::Expert; });
    if (chat_methods && config.judge.endpoint.empty())
      throw InvalidConfig("ablation with cot methods requires judge.endpoint");

    config.workers = j.value("workers", config.workers);
    if (config.workers < 1) throw InvalidConfig("workers must be positive");
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("pipeline config: ") + e.what());
  }
  return config;
}

BatchSpec PipelineConfig::to_batch_spec() const {
  BatchSpec spec;
  spec.n_games = n_games;
  spec.base_seed = base_seed;
  spec.word_pairs = word_pairs;
  spec.spy_assignment = spy_assignment;
  spec.workers = workers;
  if (policy_kind == "chat") {
    ChatPolicySpec chat;
    chat.client = agent_chat;
    chat.prompts_dir = prompts_dir;
    chat.fallback = scripted;
    spec.policy = std::move(chat);
  } else {
    spec.policy = scripted;
  }
  return spec;
}

bool stage_simulate(const PipelineConfig& config) {
  std::filesystem::create_directories(config.out_dir);
  const BatchSpec spec = config.to_batch_spec();
  const std::string inputs_digest = digest_string(batch_spec_to_json(spec).dump());
  const auto meta = config.out_dir / "simulate.meta.json";
  if (cache_hit(meta, inputs_digest, {config.records_path()})) return false;

  try {
    const BatchResult result = run_batch(spec);
    write_records_jsonl(config.records_path(), result.records);
    if (!result.failures.empty()) {
      nlohmann::json failures = nlohmann::json::array();
      for (const GameFailure& f : result.failures)
        failures.push_back({{"game_index", f.game_index}, {"error", f.error}});
      std::ofstream out(config.out_dir / "records.failures.json", std::ios::binary);
      out << failures.dump(2) << '\n';
    }
    write_meta(meta, inputs_digest);
  } catch (const std::exception& e) {
    throw StageFailure("simulate", e.what());
  }
  return true;
}

bool stage_build_graphs(const PipelineConfig& config) {
  const std::string records_digest = digest_file(config.records_path().string());
  const std::string inputs_digest =
      digest_string(records_digest + (config.merged_relations ? ":merged" : ":tagged"));
  const auto meta = config.out_dir / "build-graphs.meta.json";
  if (cache_hit(meta, inputs_digest, {config.d1_path(), config.d2_path()})) return false;

  try {
    const std::vector<GameRecord> records = read_records_jsonl(config.records_path());
    std::vector<RejectedGame> rejected;
    auto [d1, d2] = build_datasets(records, config.merged_relations, &rejected);
    d1.source_digest = records_digest;
    d2.source_digest = records_digest;
    save_dataset(config.d1_path(), d1);
    save_dataset(config.d2_path(), d2);
    if (!rejected.empty()) {
      nlohmann::json manifest = nlohmann::json::array();
      for (const RejectedGame& r : rejected)
        manifest.push_back({{"game_index", r.game_index}, {"reason", r.reason}});
      std::ofstream out(config.out_dir / "rejected_games.json", std::ios::binary);
      out << manifest.dump(2) << '\n';
    }
    write_meta(meta, inputs_digest);
  } catch (const StageFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw StageFailure("build-graphs", e.what());
  }
  return true;
}

bool stage_split(const PipelineConfig& config) {
  const std::string inputs_digest = digest_string(
      digest_file(config.d1_path().string()) + ":" + digest_file(config.d2_path().string()) + ":" +
      std::to_string(config.n_splits) + ":" + std::to_string(config.split_ratio) + ":" +
      std::to_string(config.split_seed));
  const auto meta = config.out_dir / "split.meta.json";

  const Dataset d2 = load_dataset(config.d2_path());
  const bool split_d2 = d2.graphs.size() >= 10;
  std::vector<std::filesystem::path> outputs = {config.splits_path(1)};
  if (split_d2) outputs.push_back(config.splits_path(2));
  if (cache_hit(meta, inputs_digest, outputs)) return false;

  try {
    const Dataset d1 = load_dataset(config.d1_path());
    const auto splits1 = make_splits(d1, config.n_splits, config.split_ratio, config.split_seed);
    save_splits(config.splits_path(1), splits1, digest_file(config.d1_path().string()));
    if (split_d2) {
      const auto splits2 = make_splits(d2, config.n_splits, config.split_ratio, config.split_seed);
      save_splits(config.splits_path(2), splits2, digest_file(config.d2_path().string()));
    } else {
      std::filesystem::remove(config.splits_path(2));
    }
    write_meta(meta, inputs_digest);
  } catch (const std::exception& e) {
    throw StageFailure("split", e.what());
  }
  return true;
}

namespace {

struct TrainJob {
  std::string round_name;
  const Dataset* dataset;
  SplitConfig split;
  ModelConfig model;
  std::filesystem::path out;
  std::uint64_t seed;
};

void run_train_jobs(const std::vector<TrainJob>& jobs, int workers) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      if (failed.load()) return;
      const TrainJob& job = jobs[i];
      try {
        const TrainResult result = train_model(*job.dataset, job.split, job.model, job.seed, job.round_name);
        save_checkpoint(job.out, result.checkpoint);
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mutex);
        if (!failed.exchange(true)) first_error = job.out.string() + ": " + e.what();
      }
    }
  };

  if (workers <= 1 || jobs.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int count = std::min<int>(workers, static_cast<int>(jobs.size()));
    for (int w = 0; w < count; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load()) throw StageFailure("train", first_error);
}

}  // namespace

bool stage_train(const PipelineConfig& config) {
  const std::string inputs_digest = digest_string(
      digest_file(config.splits_path(1).string()) +
      (std::filesystem::exists(config.splits_path(2)) ? digest_file(config.splits_path(2).string())
                                                      : std::string("-")) +
      config.model_round1.digest() + config.model_round2.digest() +
      std::to_string(config.train_seed));
  const auto meta = config.out_dir / "train.meta.json";

  Dataset d1, d2;
  std::vector<SplitConfig> splits1, splits2;
  try {
    d1 = load_dataset(config.d1_path());
    std::string expect_digest;
    splits1 = load_splits(config.splits_path(1), &expect_digest);
    if (!expect_digest.empty() && expect_digest != digest_file(config.d1_path().string()))
      throw std::runtime_error("splits_d1.json was built from a different d1.json");
    if (std::filesystem::exists(config.splits_path(2))) {
      d2 = load_dataset(config.d2_path());
      splits2 = load_splits(config.splits_path(2), &expect_digest);
      if (!expect_digest.empty() && expect_digest != digest_file(config.d2_path().string()))
        throw std::runtime_error("splits_d2.json was built from a different d2.json");
    }
  } catch (const std::exception& e) {
    throw StageFailure("train", e.what());
  }

  std::vector<std::filesystem::path> outputs;
  std::vector<TrainJob> jobs;
  for (const SplitConfig& split : splits1) {
    TrainJob job{"round1", &d1, split, config.model_round1,
                 config.checkpoint_path("round1", split.split_id),
                 mix_seed(config.train_seed, 1, static_cast<std::uint64_t>(split.split_id))};
    outputs.push_back(job.out);
    jobs.push_back(std::move(job));
  }
  for (const SplitConfig& split : splits2) {
    TrainJob job{"round2", &d2, split, config.model_round2,
                 config.checkpoint_path("round2", split.split_id),
                 mix_seed(config.train_seed, 2, static_cast<std::uint64_t>(split.split_id))};
    outputs.push_back(job.out);
    jobs.push_back(std::move(job));
  }

  if (cache_hit(meta, inputs_digest, outputs)) return false;
  std::filesystem::create_directories(config.checkpoint_dir());
  run_train_jobs(jobs, config.workers);
  write_meta(meta, inputs_digest);
  return true;
}

bool stage_ablate(const PipelineConfig& config) {
  const std::string inputs_digest = digest_string(
      digest_file(config.records_path().string()) + ":" +
      (std::filesystem::exists(config.out_dir / "train.meta.json")
           ? read_json_file(config.out_dir / "train.meta.json", "train meta").value("inputs_digest", "")
           : "") +
      ":" + config.judge.endpoint + ":" + to_string(config.agg) + ":" +
      std::to_string(config.resolution_seed));
  const auto meta = config.out_dir / "ablate.meta.json";
  if (cache_hit(meta, inputs_digest, {config.table_md_path(), config.table_csv_path()})) return false;

  try {
    const std::vector<GameRecord> records = read_records_jsonl(config.records_path());
    const Dataset d1 = load_dataset(config.d1_path());
    const std::vector<SplitConfig> splits1 = load_splits(config.splits_path(1));
    std::vector<Checkpoint> cks1;
    for (const SplitConfig& split : splits1) {
      Checkpoint ck = load_checkpoint(config.checkpoint_path("round1", split.split_id));
      if (ck.config_digest != config.model_round1.digest())
        throw std::runtime_error("round1 checkpoint was trained under a different model config");
      cks1.push_back(std::move(ck));
    }

    AblationSpec spec;
    spec.records = &records;
    spec.round1 = {&d1, &splits1, &cks1};
    spec.methods = config.methods;
    spec.agg = config.agg;
    spec.resolution_seed = config.resolution_seed;

    Dataset d2;
    std::vector<SplitConfig> splits2;
    std::vector<Checkpoint> cks2;
    if (std::filesystem::exists(config.splits_path(2))) {
      d2 = load_dataset(config.d2_path());
      splits2 = load_splits(config.splits_path(2));
      for (const SplitConfig& split : splits2)
        cks2.push_back(load_checkpoint(config.checkpoint_path("round2", split.split_id)));
      spec.round2 = {&d2, &splits2, &cks2};
    }

    std::unique_ptr<ChatClient> client;
    const bool chat_methods = std::any_of(config.methods.begin(), config.methods.end(),
                                          [](JudgeMethod m) { return m != JudgeMethod::Expert; });
    if (chat_methods) {
      ChatClientConfig cc;
      cc.endpoint = config.judge.endpoint;
      cc.model = config.judge.model;
      cc.temperature = config.judge.temperature;
      cc.top_p = config.judge.top_p;
      client = make_client(cc);
      spec.client = client.get();
    }

    const AblationTable table = run_ablation(spec);
    write_text_file(config.table_md_path(), render_markdown(table));
    write_text_file(config.table_csv_path(), render_csv(table));
    write_meta(meta, inputs_digest);
  } catch (const StageFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw StageFailure("ablate", e.what());
  }
  return true;
}

bool stage_stats(const PipelineConfig& config) {
  try {
    const std::vector<GameRecord> records = read_records_jsonl(config.records_path());
    int folk = 0, two_round = 0;
    for (const GameRecord& r : records) {
      if (r.winner == Winner::Folk) ++folk;
      if (r.rounds.size() == 2) ++two_round;
    }
    const Dataset d1 = load_dataset(config.d1_path());
    const Dataset d2 = load_dataset(config.d2_path());
    const DatasetStats s1 = dataset_stats(d1);
    const DatasetStats s2 = dataset_stats(d2);
    nlohmann::json out = {
        {"games", records.size()},
        {"folk_wins", folk},
        {"spies_wins", records.size() - static_cast<std::size_t>(folk)},
        {"two_round_fraction", records.empty() ? 0.0 : static_cast<double>(two_round) / records.size()},
        {"d1", {{"graphs", s1.graphs}, {"nodes", s1.nodes}, {"edges", s1.edges}}},
        {"d2", {{"graphs", s2.graphs}, {"nodes", s2.nodes}, {"edges", s2.edges}}},
    };
    std::ofstream file(config.stats_path(), std::ios::binary);
    file << out.dump(2) << '\n';
  } catch (const std::exception& e) {
    throw StageFailure("stats", e.what());
  }
  return true;
}

void run_pipeline(const PipelineConfig& config) {
  struct Stage {
    const char* name;
    bool (*run)(const PipelineConfig&);
  };
  const Stage stages[] = {
      {"simulate", stage_simulate}, {"build-graphs", stage_build_graphs},
      {"split", stage_split},       {"train", stage_train},
      {"ablate", stage_ablate},     {"stats", stage_stats},
  };
  for (const Stage& stage : stages) {
    const bool ran = stage.run(config);
    std::cout << "[" << stage.name << "] " << (ran ? "done" : "cached") << "\n";
  }
}

}  // namespace meow
