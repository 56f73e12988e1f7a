#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meow/chat.hpp"
#include "meow/expert.hpp"
#include "meow/game.hpp"

namespace meow {

struct JudgeClientConfig {
  std::string endpoint;
  std::string model;
  double top_p = 0.85;
  double temperature = 0.8;
};

enum class JudgeMethod { CoT, Expert, CoT_EO };

std::string to_string(JudgeMethod method);
JudgeMethod judge_method_from_string(const std::string& name);

// The judge's initial prompt: rules, the (alphabetically ordered) word-pair
// hint, the broadcast stream of rounds <= round_scope, and the chain-of-
// thought step list. Elimination lines name the player but never the revealed
// role, and no ground-truth label or cluster tag ever enters the text.
std::string assemble_p_raw(const GameRecord& record, int round_scope);

// Graph path: same transformation as the dataset builder, then the expert.
ExpertObservation expert_observe(const GameRecord& record, int round_scope,
                                 const Checkpoint& checkpoint, bool merged_relations = false);

// Expert-observation prompt with probabilities printed to two decimals; ties
// resolve to the lowest seat index.
std::string assemble_p_eo(const ExpertObservation& obs);

struct JudgeResult {
  std::optional<int> y_raw;  // empty = Uncertain
  std::optional<int> y_eo;
  std::string rationale_raw;
  std::string rationale_eo;
  std::uint64_t resolution_seed = 0;
  std::vector<int> alive_after_scope;  // the pool an Uncertain answer resolves over
  std::vector<ChatMessage> transcript; // CoT / CoT_EO conversation as sent
};

// Final-answer extraction: last player name in the reply's final sentence,
// else the last name anywhere in the reply, else Uncertain. Names of
// eliminated players are accepted verbatim.
std::optional<int> parse_named_seat(const std::string& reply);

// method=CoT: one exchange on p_raw. method=Expert: observation argmax, no
// client involved. method=CoT_EO: the p_raw exchange, then p_EO appended to
// the same transcript. Unparseable replies become Uncertain.
JudgeResult judge(ChatClient* client, JudgeMethod method, const GameRecord& record, int round_scope,
                  const Checkpoint* checkpoint, std::uint64_t resolution_seed,
                  bool merged_relations = false);

// The seat a result counts as at scoring time: the parsed seat, or a
// seeded-uniform draw over the seats still in the game after round_scope.
int resolve_prediction(const std::optional<int>& parsed, const std::vector<int>& alive,
                       std::uint64_t resolution_seed);

std::vector<int> seats_alive_after(const GameRecord& record, int round_scope);

}  // namespace meow
