#include "meow/llm_policy.hpp"

#include <fstream>
#include <sstream>

namespace meow {

namespace {

constexpr const char* kGameRules =
    "Four players each receive a secret word. Three of you (the folk) share one word; "
    "one of you (the spy) holds a different but related word. Each round every living "
    "player describes their word with a single expression, never the word itself and "
    "never an expression any player used before. After a discussion, everyone votes; "
    "the player with the most votes is eliminated (earliest first vote breaks ties). "
    "The folk win when the spy is eliminated; the spy wins by surviving to the final two.";

const std::map<PhaseKind, std::string>& builtin_templates() {
  static const std::map<PhaseKind, std::string> templates = {
      {PhaseKind::GameInit,
       "You are {player}, a player in the game \"Find The Spy\".\n"
       "Rules: {rules}\n"
       "Players in this game: {alive_players}.\n"
       "Your secret word is \"{own_word}\". You do not know whether it is the folk word "
       "or the spy word.\n"
       "Reply briefly to confirm that you understand the rules and your word."},
      {PhaseKind::IdentityInference,
       "Round {round}. Based on everything said so far:\n{history}\n"
       "Think about whether your own word matches what the others are describing. "
       "Privately infer whether you are folk or the spy, and guess what the other "
       "word might be. Reply with your reasoning."},
      {PhaseKind::WordDescription,
       "Round {round}. Recall your word \"{own_word}\" and the rules: {rules}\n"
       "Decide whether to describe honestly or to blend in. Then give your description "
       "as JSON on its own line, exactly like {\"description\": \"<one short expression>\"}. "
       "It must not be your word and must not repeat any description already used."},
      {PhaseKind::DescriptionAnalysis,
       "Round {round}. {history}\n"
       "Judge whether that description fits the word you hold. Does it feel like your "
       "word, or like a different one? Reply with your analysis."},
      {PhaseKind::StatementDiscussion,
       "Round {round}. Review the descriptions and statements so far:\n{history}\n"
       "Living players: {alive_players}. Choose whom you are for and whom you are "
       "against, then confirm your tendency as JSON, exactly like "
       "{\"for\": [\"<player>\"], \"against\": [\"<player>\"]} (either list may be empty)."},
      {PhaseKind::Vote,
       "Round {round}. Voting rules: every living player must vote for one other living "
       "player; the most-voted player is eliminated. Living players: {alive_players}.\n"
       "Rethink the situation:\n{history}\n"
       "Cast your vote as JSON, exactly like {\"vote\": \"<player>\"}."},
  };
  return templates;
}

std::string phase_file_name(PhaseKind phase) { return to_string(phase) + ".txt"; }

}  // namespace

std::string to_string(ChatTurn::Speaker speaker) {
  switch (speaker) {
    case ChatTurn::Speaker::System: return "system";
    case ChatTurn::Speaker::User: return "user";
    case ChatTurn::Speaker::Assistant: return "assistant";
  }
  return "user";
}

PromptTemplateSet PromptTemplateSet::builtin() {
  PromptTemplateSet set;
  set.templates_ = builtin_templates();
  return set;
}

PromptTemplateSet PromptTemplateSet::load_dir(const std::filesystem::path& dir) {
  PromptTemplateSet set;
  for (const auto& [phase, fallback] : builtin_templates()) {
    const std::filesystem::path file = dir / phase_file_name(phase);
    std::ifstream in(file);
    if (!in) throw InvalidConfig("missing prompt template: " + file.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    set.templates_[phase] = std::move(text);
  }
  return set;
}

const std::string& PromptTemplateSet::raw(PhaseKind phase) const {
  auto it = templates_.find(phase);
  if (it == templates_.end()) throw InvalidConfig("no template for phase " + to_string(phase));
  return it->second;
}

std::string PromptTemplateSet::render(PhaseKind phase,
                                      const std::map<std::string, std::string>& values) const {
  std::string text = raw(phase);
  for (const auto& [name, value] : values) {
    const std::string slot = "{" + name + "}";
    std::size_t pos = 0;
    while ((pos = text.find(slot, pos)) != std::string::npos) {
      text.replace(pos, slot.size(), value);
      pos += value.size();
    }
  }
  // Placeholders use lowercase identifiers; JSON examples in the templates use
  // quotes right after the brace, so a surviving {identifier} is a real leak.
  std::size_t open = 0;
  while ((open = text.find('{', open)) != std::string::npos) {
    const std::size_t close = text.find('}', open);
    if (close == std::string::npos) break;
    const std::string inner = text.substr(open + 1, close - open - 1);
    if (!inner.empty() && inner.find_first_not_of("abcdefghijklmnopqrstuvwxyz_") == std::string::npos)
      throw InvalidConfig("unfilled placeholder {" + inner + "} in phase " + to_string(phase));
    open += 1;
  }
  return text;
}

std::optional<nlohmann::json> extract_first_json(const std::string& text) {
  for (std::size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (c == '\\') {
          ++i;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        --depth;
        if (depth == 0) {
          auto parsed = nlohmann::json::parse(text.substr(start, i - start + 1), nullptr, false);
          if (!parsed.is_discarded()) return parsed;
          break;  // balanced but unparseable; try the next opening brace
        }
      }
    }
  }
  return std::nullopt;
}

namespace {

bool phase_needs_json(PhaseKind phase) {
  return phase == PhaseKind::WordDescription || phase == PhaseKind::StatementDiscussion ||
         phase == PhaseKind::Vote;
}

}  // namespace

LlmAction llm_phase(ChatClient& client, const PromptTemplateSet& templates, PhaseKind phase,
                    std::vector<ChatTurn>& transcript,
                    const std::map<std::string, std::string>& values, int max_retries,
                    const std::string& prompt_prefix) {
  LlmAction action;
  std::string prompt = prompt_prefix + templates.render(phase, values);
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    transcript.push_back({ChatTurn::Speaker::User, prompt});
    std::vector<ChatMessage> wire;
    wire.reserve(transcript.size());
    for (const ChatTurn& turn : transcript) wire.push_back({to_string(turn.speaker), turn.content});
    action.reply = client.complete(wire);
    action.attempts = attempt + 1;
    transcript.push_back({ChatTurn::Speaker::Assistant, action.reply});

    if (!phase_needs_json(phase)) return action;
    if (auto parsed = extract_first_json(action.reply)) {
      action.parsed = *parsed;
      return action;
    }
    prompt = "Your reply did not contain the required JSON object. " +
             templates.render(phase, values);
  }
  action.parse_exhausted = true;
  return action;
}

ChatPolicy::ChatPolicy(int seat, Role role, std::string word, ChatClient* client,
                       const PromptTemplateSet* templates, ScriptedPolicyParams fallback_params,
                       const GameVocabulary* vocab, std::uint64_t stream_seed)
    : seat_(seat),
      word_(std::move(word)),
      client_(client),
      templates_(templates),
      fallback_(seat, role, word_, fallback_params, vocab, stream_seed) {}

std::map<std::string, std::string> ChatPolicy::base_values(const PolicyView& view) const {
  std::string alive;
  for (int seat : view.alive) {
    if (!alive.empty()) alive += ", ";
    alive += seat_name(seat);
  }
  std::string history;
  for (const ChatTurn& turn : transcript_) {
    if (turn.speaker == ChatTurn::Speaker::User && turn.content.rfind("(system)", 0) == 0) {
      history += turn.content.substr(8);
      history += '\n';
    }
  }
  if (history.empty()) history = "(nothing yet)";
  return {
      {"rules", kGameRules},
      {"own_word", word_},
      {"player", seat_name(seat_)},
      {"alive_players", alive},
      {"round", std::to_string(view.round)},
      {"history", history},
  };
}

void ChatPolicy::note_fallback(PhaseKind phase, const std::string& reason) {
  fallbacks_.push_back(seat_name(seat_) + ":" + to_string(phase) + ":" + reason);
}

void ChatPolicy::game_init(const PolicyView& view) {
  fallback_.game_init(view);
  llm_phase(*client_, *templates_, PhaseKind::GameInit, transcript_, base_values(view));
}

void ChatPolicy::identity_inference(const PolicyView& view) {
  fallback_.identity_inference(view);
  llm_phase(*client_, *templates_, PhaseKind::IdentityInference, transcript_, base_values(view));
}

std::string ChatPolicy::describe(const PolicyView& view) {
  const auto values = base_values(view);
  std::string prefix;
  for (int attempt = 0; attempt < 4; ++attempt) {
    LlmAction action = llm_phase(*client_, *templates_, PhaseKind::WordDescription, transcript_,
                                 values, 3, prefix);
    if (action.parse_exhausted) break;
    if (action.parsed.contains("description") && action.parsed["description"].is_string()) {
      const std::string token = action.parsed["description"].get<std::string>();
      const DescriptionCheck check =
          view.state->validate_description(seat_, token, *view.round_tokens);
      if (check == DescriptionCheck::Ok) return token;
      prefix = (check == DescriptionCheck::OwnWord)
                   ? "Your description was your own word, which is not allowed. "
                   : "Your description was already used before, which is not allowed. ";
    }
  }
  note_fallback(PhaseKind::WordDescription, "parse_exhausted");
  return fallback_.describe(view);
}

void ChatPolicy::observe_description(const PolicyView& view, int described, const std::string& token) {
  fallback_.observe_description(view, described, token);
  if (described == seat_) return;
  auto values = base_values(view);
  values["history"] = seat_name(described) + " described their word as \"" + token + "\".";
  llm_phase(*client_, *templates_, PhaseKind::DescriptionAnalysis, transcript_, values);
}

std::pair<std::vector<Tendency>, std::string> ChatPolicy::discuss(const PolicyView& view) {
  LlmAction action = llm_phase(*client_, *templates_, PhaseKind::StatementDiscussion, transcript_,
                               base_values(view));
  std::vector<Tendency> tendencies;
  bool parsed_any = false;
  if (!action.parse_exhausted && action.parsed.is_object()) {
    auto collect = [&](const char* key, Polarity polarity) {
      if (!action.parsed.contains(key) || !action.parsed[key].is_array()) return;
      for (const auto& entry : action.parsed[key]) {
        if (!entry.is_string()) continue;
        const auto target = seat_from_name(entry.get<std::string>());
        if (!target || *target == seat_) continue;
        if (std::find(view.alive.begin(), view.alive.end(), *target) == view.alive.end()) continue;
        const Tendency t{seat_, *target, polarity};
        if (std::find(tendencies.begin(), tendencies.end(), t) == tendencies.end()) {
          tendencies.push_back(t);
          parsed_any = true;
        }
      }
    };
    collect("for", Polarity::For);
    collect("against", Polarity::Against);
  }
  if (!parsed_any) {
    note_fallback(PhaseKind::StatementDiscussion, "parse_exhausted");
    return fallback_.discuss(view);
  }
  // The statement itself is the reply text minus nothing: the model speaks in
  // public; the JSON block is tolerated by downstream consumers.
  return {tendencies, action.reply};
}

int ChatPolicy::vote(const PolicyView& view) {
  LlmAction action =
      llm_phase(*client_, *templates_, PhaseKind::Vote, transcript_, base_values(view));
  if (!action.parse_exhausted && action.parsed.is_object() && action.parsed.contains("vote") &&
      action.parsed["vote"].is_string()) {
    const auto target = seat_from_name(action.parsed["vote"].get<std::string>());
    if (target && *target != seat_ &&
        std::find(view.alive.begin(), view.alive.end(), *target) != view.alive.end()) {
      return *target;
    }
  }
  note_fallback(PhaseKind::Vote, "parse_exhausted");
  return fallback_.vote(view);
}

void ChatPolicy::on_broadcast(const std::string& payload) {
  // Broadcast plus the fixed confirmation, added manually, never generated.
  transcript_.push_back({ChatTurn::Speaker::User, "(system)(" + payload + ")"});
  transcript_.push_back({ChatTurn::Speaker::Assistant, "Okay, I see."});
}

}  // namespace meow
