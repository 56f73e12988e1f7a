#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace meow {

// Number of players in the game variant implemented here. Kept as a named
// constant; engine arithmetic derives counts from the live seat lists.
inline constexpr int kNumSeats = 4;

std::string seat_name(int seat);
std::optional<int> seat_from_name(std::string_view name);

enum class Role { Folk, Spy };
enum class Winner { Folk, Spies };
enum class Polarity { For, Against };

std::string to_string(Role role);
std::string to_string(Winner winner);
std::string to_string(Polarity polarity);

struct InvalidConfig : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProtocolViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct WordPair {
  std::string folk_word;
  std::string spy_word;
  std::string category;

  void validate() const;  // throws InvalidConfig
};

struct GameConfig {
  WordPair word_pair;
  int spy_seat = 0;
  std::uint64_t rng_seed = 0;
  std::vector<int> speaking_order;  // permutation of all seats

  void validate() const;  // throws InvalidConfig
};

struct PlayerState {
  int seat = 0;
  Role role = Role::Folk;
  std::string word;
  bool alive = true;
};

struct Tendency {
  int source = 0;
  int target = 0;
  Polarity polarity = Polarity::For;

  friend bool operator==(const Tendency&, const Tendency&) = default;
};

struct Vote {
  int voter = 0;
  int target = 0;
  int arrival_rank = 0;  // order in which the vote was cast within its round
};

struct RoundRecord {
  int round_index = 1;
  std::map<int, std::string> descriptions;  // alive seat -> token
  std::map<int, std::string> statements;    // alive seat -> utterance
  std::vector<Tendency> tendencies;
  std::vector<Vote> votes;
  int eliminated = -1;
  Role revealed_role = Role::Folk;
};

struct GameRecord {
  GameConfig config;
  std::vector<RoundRecord> rounds;
  Winner winner = Winner::Folk;
  std::uint64_t game_index = 0;
  std::string policy_kind = "scripted";
  std::vector<std::string> fallback_events;

  int spy_seat() const { return config.spy_seat; }
};

enum class DescriptionCheck { Ok, OwnWord, Reused };

// One round's worth of agent decisions, harvested by the runner and applied
// atomically by GameState::advance. Votes are listed in casting order; the
// engine stamps arrival ranks.
struct RoundInputs {
  std::map<int, std::string> descriptions;
  std::map<int, std::string> statements;
  std::vector<Tendency> tendencies;
  std::vector<std::pair<int, int>> votes;  // (voter, target) in casting order
};

// Returns the eliminated seat: strictly most votes, ties going to the seat
// whose earliest vote carries the smallest arrival rank.
int tally_votes(const std::vector<Vote>& votes);

class GameState {
 public:
  explicit GameState(GameConfig config);  // validates; deals words and roles

  const GameConfig& config() const { return config_; }
  const std::vector<PlayerState>& players() const { return players_; }
  const PlayerState& player(int seat) const { return players_.at(static_cast<std::size_t>(seat)); }
  int round_index() const { return round_index_; }
  bool terminal() const { return winner_.has_value(); }
  std::optional<Winner> winner() const { return winner_; }
  const std::vector<RoundRecord>& rounds() const { return rounds_; }

  std::vector<int> alive_seats() const;
  // Configured speaking order rotated once per round, restricted to alive seats.
  std::vector<int> speaking_order_for_round(int round) const;

  // Legality of a would-be description. extra_used covers tokens accepted
  // earlier in the round currently being assembled; committed rounds are
  // always consulted. Matching is case-folded exact equality.
  DescriptionCheck validate_description(int seat, std::string_view token,
                                        std::span<const std::string> extra_used = {}) const;

  // Runs description -> discussion -> voting for the alive seats, applies the
  // elimination and win check, and appends the round record. Throws
  // ProtocolViolation when inputs are missing, reference dead seats, or carry
  // an illegal description.
  const RoundRecord& advance(const RoundInputs& inputs);

  GameRecord to_record() const;  // requires terminal()

 private:
  GameConfig config_;
  std::vector<PlayerState> players_;
  std::vector<std::string> used_descriptions_;  // case-folded, committed rounds
  std::vector<RoundRecord> rounds_;
  int round_index_ = 1;
  std::optional<Winner> winner_;
};

inline GameState new_game(GameConfig config) { return GameState(std::move(config)); }

// Folk once the spy is eliminated; Spies once two players remain with the spy
// among them; nothing while the game continues.
std::optional<Winner> check_win(const GameState& state);

std::string fold_case(std::string_view text);

}  // namespace meow
