#include "meow/judge.hpp"

#include <algorithm>
#include <cstdio>

#include "meow/rng.hpp"

namespace meow {

namespace {

constexpr const char* kJudgeRules =
    "Four players play \"Find The Spy\". Three of them (the folk) share one secret word; "
    "one (the spy) holds a different but related word. Each round every living player "
    "describes their own word without saying it, players discuss, and then everyone votes; "
    "the most-voted player is eliminated. The folk win when the spy is eliminated; the spy "
    "wins by surviving to the final two.";

constexpr const char* kCoTSteps =
    "Think step by step before answering:\n"
    "1. Review each player's strategy across the rounds.\n"
    "2. Analyze the utterances: which descriptions fit together, which stand apart?\n"
    "3. Infer each player's motivation from their stances and votes.\n"
    "Finally, state your final identity judgment, naming exactly one player as the spy.";

std::string format_prob(double p) {
  char buffer[16];
  std::snprintf(buffer, sizeof(buffer), "%.2f", p);
  return buffer;
}

}  // namespace

std::string to_string(JudgeMethod method) {
  switch (method) {
    case JudgeMethod::CoT: return "cot";
    case JudgeMethod::Expert: return "expert";
    case JudgeMethod::CoT_EO: return "cot_eo";
  }
  return "cot";
}

JudgeMethod judge_method_from_string(const std::string& name) {
  if (name == "cot") return JudgeMethod::CoT;
  if (name == "expert") return JudgeMethod::Expert;
  if (name == "cot_eo") return JudgeMethod::CoT_EO;
  throw InvalidConfig("unknown judge method: " + name);
}

std::string assemble_p_raw(const GameRecord& record, int round_scope) {
  if (round_scope < 1 || static_cast<std::size_t>(round_scope) > record.rounds.size())
    throw InvalidConfig("round scope exceeds the record");

  // The hint names both words without revealing which side holds which.
  std::string first = record.config.word_pair.folk_word;
  std::string second = record.config.word_pair.spy_word;
  if (second < first) std::swap(first, second);

  std::string text = std::string(kJudgeRules) + "\n\nHint: the two words in play are \"" + first +
                     "\" and \"" + second +
                     "\"; one of them is shared by three players, the other belongs to the spy.\n";

  for (const RoundRecord& round : record.rounds) {
    if (round.round_index > round_scope) break;
    text += "\nRound " + std::to_string(round.round_index) + " begins.\n";
    for (const auto& [seat, token] : round.descriptions) {
      text += seat_name(seat) + " describes their word as \"" + token + "\".\n";
    }
    for (const auto& [seat, statement] : round.statements) {
      text += seat_name(seat) + " says: \"" + statement + "\"\n";
    }
    for (const Vote& vote : round.votes) {
      text += seat_name(vote.voter) + " votes for " + seat_name(vote.target) + ".\n";
    }
    text += "Thus, " + seat_name(round.eliminated) + " is eliminated.\n";
  }

  text += "\n";
  text += kCoTSteps;
  return text;
}

ExpertObservation expert_observe(const GameRecord& record, int round_scope,
                                 const Checkpoint& checkpoint, bool merged_relations) {
  const std::string expected = round_scope == 1 ? "round1" : "round2";
  if (checkpoint.round_name != expected)
    throw SchemaMismatch("checkpoint " + checkpoint.round_name + " cannot judge round scope " +
                         std::to_string(round_scope));
  const HeteroGraph graph = game_to_graph(record, round_scope, merged_relations);
  return predict(checkpoint, graph);
}

std::string assemble_p_eo(const ExpertObservation& obs) {
  int named = 0;
  for (int i = 1; i < 4; ++i) {
    if (obs.probs[static_cast<std::size_t>(i)] > obs.probs[static_cast<std::size_t>(named)]) named = i;
  }
  std::string text = "According to the judgment of game experts, " + seat_name(named) +
                     " is likely to be the spy (probabilities: ";
  for (int i = 0; i < 4; ++i) {
    if (i > 0) text += ", ";
    text += seat_name(i) + ": " + format_prob(obs.probs[static_cast<std::size_t>(i)]);
  }
  text += "). Re-infer the game situation and state whether you adjust your final judgment.";
  return text;
}

std::optional<int> parse_named_seat(const std::string& reply) {
  auto last_name_in = [](const std::string& text) -> std::optional<int> {
    std::optional<int> found;
    std::size_t best = std::string::npos;
    for (int seat = 0; seat < kNumSeats; ++seat) {
      const std::string name = seat_name(seat);
      std::size_t pos = text.rfind(name);
      if (pos != std::string::npos && (best == std::string::npos || pos > best)) {
        best = pos;
        found = seat;
      }
    }
    return found;
  };

  // Final sentence: text after the last terminator that still contains words.
  const std::string terminators = ".!?";
  std::size_t cut = reply.find_last_not_of(" \t\n\r");
  if (cut == std::string::npos) return std::nullopt;
  std::size_t sentence_start = reply.find_last_of(terminators, cut == 0 ? 0 : cut - 1);
  const std::string final_sentence =
      sentence_start == std::string::npos ? reply : reply.substr(sentence_start + 1);
  if (auto seat = last_name_in(final_sentence)) return seat;
  return last_name_in(reply);
}

std::vector<int> seats_alive_after(const GameRecord& record, int round_scope) {
  std::vector<int> alive;
  for (int seat = 0; seat < kNumSeats; ++seat) alive.push_back(seat);
  for (const RoundRecord& round : record.rounds) {
    if (round.round_index > round_scope) break;
    std::erase(alive, round.eliminated);
  }
  return alive;
}

int resolve_prediction(const std::optional<int>& parsed, const std::vector<int>& alive,
                       std::uint64_t resolution_seed) {
  if (parsed) return *parsed;
  Rng rng(resolution_seed);
  return alive[rng.below(alive.size())];
}

JudgeResult judge(ChatClient* client, JudgeMethod method, const GameRecord& record, int round_scope,
                  const Checkpoint* checkpoint, std::uint64_t resolution_seed,
                  bool merged_relations) {
  JudgeResult result;
  result.resolution_seed = resolution_seed;
  result.alive_after_scope = seats_alive_after(record, round_scope);

  if (method == JudgeMethod::Expert) {
    if (!checkpoint) throw InvalidConfig("expert method requires a checkpoint");
    const ExpertObservation obs = expert_observe(record, round_scope, *checkpoint, merged_relations);
    result.y_raw = obs.argmax;
    result.y_eo = obs.argmax;
    result.rationale_raw = assemble_p_eo(obs);
    return result;
  }

  if (!client) throw InvalidConfig("chat-based judging requires a client");
  result.transcript.push_back({"user", assemble_p_raw(record, round_scope)});
  result.rationale_raw = client->complete(result.transcript);
  result.transcript.push_back({"assistant", result.rationale_raw});
  result.y_raw = parse_named_seat(result.rationale_raw);

  if (method == JudgeMethod::CoT) {
    result.y_eo = result.y_raw;
    return result;
  }

  if (!checkpoint) throw InvalidConfig("cot_eo requires a checkpoint");
  const ExpertObservation obs = expert_observe(record, round_scope, *checkpoint, merged_relations);
  result.transcript.push_back({"user", assemble_p_eo(obs)});
  result.rationale_eo = client->complete(result.transcript);
  result.transcript.push_back({"assistant", result.rationale_eo});
  result.y_eo = parse_named_seat(result.rationale_eo);
  return result;
}

}  // namespace meow
