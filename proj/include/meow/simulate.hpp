#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <variant>
#include <vector>

#include <json.hpp>

#include "meow/chat.hpp"
#include "meow/game.hpp"
#include "meow/llm_policy.hpp"
#include "meow/policy.hpp"

namespace meow {

enum class BroadcastKind { Description, Statement, VoteResult, Elimination };

struct BroadcastEvent {
  BroadcastKind kind;
  std::string payload;
  int round = 1;
};

enum class SpyAssignment { RoundRobin, SeededUniform };

struct ChatPolicySpec {
  ChatClientConfig client;
  std::filesystem::path prompts_dir;  // empty -> builtin templates
  ScriptedPolicyParams fallback;
};

struct BatchSpec {
  int n_games = 1;
  std::uint64_t base_seed = 0;
  std::vector<WordPair> word_pairs;  // cycled over game indices
  std::variant<ScriptedPolicyParams, ChatPolicySpec> policy = ScriptedPolicyParams{};
  SpyAssignment spy_assignment = SpyAssignment::RoundRobin;
  int workers = 1;

  void validate() const;
};

struct BatchStats {
  int games = 0;
  int folk_wins = 0;
  int spies_wins = 0;
  double two_round_fraction = 0.0;
};

struct GameFailure {
  std::uint64_t game_index;
  std::string error;
};

struct BatchResult {
  std::vector<GameRecord> records;  // ordered by game_index
  BatchStats stats;
  std::vector<GameFailure> failures;
};

struct RunGameResult {
  GameRecord record;
  std::vector<BroadcastEvent> broadcasts;
  std::map<int, std::vector<ChatTurn>> transcripts;  // chat policies only
};

using PolicyFactory = std::function<std::unique_ptr<PlayerPolicy>(
    const GameConfig& config, int seat, Role role, const std::string& word,
    const GameVocabulary& vocab, std::uint64_t stream_seed)>;

// Drives one game phase by phase. Throws ProtocolViolation / TransportError;
// the partial record travels on GameAborted.
RunGameResult run_game(const GameConfig& config, const PolicyFactory& factory,
                       std::string policy_kind, int vocab_size);

struct GameAborted : std::runtime_error {
  GameAborted(const std::string& what, GameRecord partial)
      : std::runtime_error(what), partial_record(std::move(partial)) {}
  GameRecord partial_record;
};

// Derives the per-game configuration (seed, word pair, spy seat, speaking
// order) from the batch spec. Pure.
GameConfig make_game_config(const BatchSpec& spec, std::uint64_t game_index);

// Runs spec.n_games games, concurrently up to spec.workers, deterministically
// for scripted policies regardless of worker count.
BatchResult run_batch(const BatchSpec& spec);

nlohmann::json record_to_json(const GameRecord& record);
GameRecord record_from_json(const nlohmann::json& j);

void write_records_jsonl(const std::filesystem::path& path, const std::vector<GameRecord>& records);
std::vector<GameRecord> read_records_jsonl(const std::filesystem::path& path);

nlohmann::json batch_spec_to_json(const BatchSpec& spec);  // for digests and manifests

}  // namespace meow
