#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "meow/game.hpp"
#include "meow/rng.hpp"

namespace meow {

enum class PhaseKind {
  GameInit,
  IdentityInference,
  WordDescription,
  DescriptionAnalysis,
  StatementDiscussion,
  Vote,
};

std::string to_string(PhaseKind phase);

struct ScriptedPolicyParams {
  double detect_rate = 0.9;   // chance a folk observer flags the spy's description
  double false_alarm = 0.1;   // chance a folk observer flags another folk's description
  double deception = 0.3;     // chance the spy commits to a fixed deflection target
  std::array<double, 3> tendency_weights = {0.2, 0.2, 0.6};  // P(k = 1, 2, 3)
  int vocab_size = 10;        // legal description tokens per word

  void validate() const;  // throws InvalidConfig
};

struct SuspicionState {
  enum class Belief { Folk, Spy, Unknown };

  int owner = 0;
  std::map<int, double> scores;  // other alive seats -> accumulated suspicion
  Belief believed_role = Belief::Unknown;
};

// Per-game description vocabulary. Each word of the pair owns a disjoint set
// of neutral tokens; which token belongs to which word is the hidden cluster
// tag used by the scripted observers' detectors. The assignment is a seeded
// shuffle of a shared pool, so serialized tokens carry no readable trace of
// the word they describe.
class GameVocabulary {
 public:
  GameVocabulary(const WordPair& pair, int vocab_size, std::uint64_t seed);

  const std::vector<std::string>& tokens_for(const std::string& word) const;
  // The describer's word behind a token (the hidden cluster tag).
  const std::string& cluster_of(const std::string& token) const;

 private:
  std::map<std::string, std::vector<std::string>> by_word_;
  std::map<std::string, std::string> cluster_;
};

// Read-only view of the game handed to a policy when it must act.
struct PolicyView {
  const GameState* state = nullptr;
  int self = 0;
  int round = 1;
  std::vector<int> alive;
  const std::vector<std::string>* round_tokens = nullptr;  // descriptions so far this round
};

class PlayerPolicy {
 public:
  virtual ~PlayerPolicy() = default;

  virtual void game_init(const PolicyView& view) = 0;
  virtual void identity_inference(const PolicyView& view) = 0;
  virtual std::string describe(const PolicyView& view) = 0;
  virtual void observe_description(const PolicyView& view, int described, const std::string& token) = 0;
  // Discussion phase: declared tendencies plus the public statement text.
  virtual std::pair<std::vector<Tendency>, std::string> discuss(const PolicyView& view) = 0;
  virtual int vote(const PolicyView& view) = 0;
  virtual void on_broadcast(const std::string& payload) = 0;

  virtual std::string kind() const = 0;
};

class ScriptedPolicy : public PlayerPolicy {
 public:
  ScriptedPolicy(int seat, Role role, std::string word, ScriptedPolicyParams params,
                 const GameVocabulary* vocab, std::uint64_t stream_seed);

  void game_init(const PolicyView& view) override;
  void identity_inference(const PolicyView& view) override;
  std::string describe(const PolicyView& view) override;
  void observe_description(const PolicyView& view, int described, const std::string& token) override;
  std::pair<std::vector<Tendency>, std::string> discuss(const PolicyView& view) override;
  int vote(const PolicyView& view) override;
  void on_broadcast(const std::string&) override {}

  std::string kind() const override { return "scripted"; }

  const SuspicionState& suspicion() const { return suspicion_; }
  std::optional<int> deflection_target() const { return deflection_; }

 private:
  // Alive seats other than the owner, ranked most-suspect first; equal scores
  // fall back to a per-call seeded shuffle.
  std::vector<int> rank_suspects(const PolicyView& view);

  int seat_;
  Role role_;
  std::string word_;
  ScriptedPolicyParams params_;
  const GameVocabulary* vocab_;
  Rng rng_;
  SuspicionState suspicion_;
  std::optional<int> deflection_;
  int flags_this_round_ = 0;
};

// Statement text for the judge prompts, composed from a fixed phrase bank.
std::string render_statement(const std::vector<Tendency>& tendencies, Rng& rng);

}  // namespace meow
