#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meow/chat.hpp"
#include "meow/policy.hpp"

namespace meow {

struct ChatTurn {
  enum class Speaker { System, User, Assistant };
  Speaker speaker;
  std::string content;
};

std::string to_string(ChatTurn::Speaker speaker);

struct ParseExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One plain-text template per game phase, with {placeholder} slots.
class PromptTemplateSet {
 public:
  static PromptTemplateSet builtin();
  // Reads <phase>.txt files (game_init.txt, identity_inference.txt, ...).
  static PromptTemplateSet load_dir(const std::filesystem::path& dir);

  const std::string& raw(PhaseKind phase) const;
  // Substitutes every {name} from values; throws InvalidConfig if a
  // placeholder would survive rendering.
  std::string render(PhaseKind phase, const std::map<std::string, std::string>& values) const;

 private:
  std::map<PhaseKind, std::string> templates_;
};

// First balanced {...} block that parses as JSON, if any.
std::optional<nlohmann::json> extract_first_json(const std::string& text);

struct LlmAction {
  nlohmann::json parsed;      // null for phases without a structured field
  std::string reply;          // raw assistant text
  int attempts = 1;
  bool parse_exhausted = false;
};

// Renders the phase template, runs one (or, on parse failures, up to
// 1 + max_retries) chat exchanges, and extracts the structured field for
// action phases. The transcript is extended in place; failed attempts stay in
// it, mirroring a real multi-turn session.
LlmAction llm_phase(ChatClient& client, const PromptTemplateSet& templates, PhaseKind phase,
                    std::vector<ChatTurn>& transcript,
                    const std::map<std::string, std::string>& values, int max_retries = 3,
                    const std::string& prompt_prefix = {});

// Chat-completion-backed player. Parse or legality failures fall back to an
// embedded scripted policy fed with the same observations, and the fallback
// is reported so the runner can flag the game record.
class ChatPolicy : public PlayerPolicy {
 public:
  ChatPolicy(int seat, Role role, std::string word, ChatClient* client,
             const PromptTemplateSet* templates, ScriptedPolicyParams fallback_params,
             const GameVocabulary* vocab, std::uint64_t stream_seed);

  void game_init(const PolicyView& view) override;
  void identity_inference(const PolicyView& view) override;
  std::string describe(const PolicyView& view) override;
  void observe_description(const PolicyView& view, int described, const std::string& token) override;
  std::pair<std::vector<Tendency>, std::string> discuss(const PolicyView& view) override;
  int vote(const PolicyView& view) override;
  void on_broadcast(const std::string& payload) override;

  std::string kind() const override { return "chat"; }

  const std::vector<ChatTurn>& transcript() const { return transcript_; }
  const std::vector<std::string>& fallback_events() const { return fallbacks_; }

 private:
  std::map<std::string, std::string> base_values(const PolicyView& view) const;
  void note_fallback(PhaseKind phase, const std::string& reason);

  int seat_;
  std::string word_;
  ChatClient* client_;
  const PromptTemplateSet* templates_;
  ScriptedPolicy fallback_;
  std::vector<ChatTurn> transcript_;
  std::vector<std::string> fallbacks_;
};

}  // namespace meow
