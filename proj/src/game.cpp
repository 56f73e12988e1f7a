#include "meow/game.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace meow {

namespace {
const char* kSeatNames[] = {"Alice", "Bob", "Carol", "Daniel"};
}

std::string seat_name(int seat) {
  if (seat < 0 || seat >= kNumSeats) throw std::out_of_range("seat index out of range");
  return kSeatNames[seat];
}

std::optional<int> seat_from_name(std::string_view name) {
  for (int i = 0; i < kNumSeats; ++i) {
    if (name == kSeatNames[i]) return i;
  }
  return std::nullopt;
}

std::string to_string(Role role) { return role == Role::Folk ? "Folk" : "Spy"; }
std::string to_string(Winner winner) { return winner == Winner::Folk ? "Folk" : "Spies"; }
std::string to_string(Polarity polarity) { return polarity == Polarity::For ? "for" : "against"; }

std::string fold_case(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void WordPair::validate() const {
  if (folk_word.empty() || spy_word.empty()) throw InvalidConfig("word pair has an empty word");
  if (fold_case(folk_word) == fold_case(spy_word)) throw InvalidConfig("folk and spy words must differ");
}

void GameConfig::validate() const {
  word_pair.validate();
  if (spy_seat < 0 || spy_seat >= kNumSeats) throw InvalidConfig("spy seat out of range");
  if (speaking_order.size() != static_cast<std::size_t>(kNumSeats))
    throw InvalidConfig("speaking order must cover every seat");
  std::set<int> seen(speaking_order.begin(), speaking_order.end());
  if (seen.size() != speaking_order.size() || *seen.begin() != 0 || *seen.rbegin() != kNumSeats - 1)
    throw InvalidConfig("speaking order must be a permutation of the seats");
}

int tally_votes(const std::vector<Vote>& votes) {
  if (votes.empty()) throw std::logic_error("tally_votes: empty vote list");
  std::map<int, int> counts;
  std::map<int, int> earliest;  // target -> smallest arrival rank among its votes
  for (const Vote& v : votes) {
    counts[v.target] += 1;
    auto it = earliest.find(v.target);
    if (it == earliest.end() || v.arrival_rank < it->second) earliest[v.target] = v.arrival_rank;
  }
  int best = -1;
  for (const auto& [target, count] : counts) {
    if (best == -1 || count > counts[best] ||
        (count == counts[best] && earliest[target] < earliest[best])) {
      best = target;
    }
  }
  return best;
}

GameState::GameState(GameConfig config) : config_(std::move(config)) {
  config_.validate();
  players_.reserve(kNumSeats);
  for (int seat = 0; seat < kNumSeats; ++seat) {
    const bool is_spy = seat == config_.spy_seat;
    players_.push_back(PlayerState{
        .seat = seat,
        .role = is_spy ? Role::Spy : Role::Folk,
        .word = is_spy ? config_.word_pair.spy_word : config_.word_pair.folk_word,
        .alive = true,
    });
  }
}

std::vector<int> GameState::alive_seats() const {
  std::vector<int> alive;
  for (const PlayerState& p : players_) {
    if (p.alive) alive.push_back(p.seat);
  }
  return alive;
}

std::vector<int> GameState::speaking_order_for_round(int round) const {
  std::vector<int> order = config_.speaking_order;
  const int shift = (round - 1) % static_cast<int>(order.size());
  std::rotate(order.begin(), order.begin() + shift, order.end());
  std::erase_if(order, [&](int seat) { return !players_[static_cast<std::size_t>(seat)].alive; });
  return order;
}

DescriptionCheck GameState::validate_description(int seat, std::string_view token,
                                                 std::span<const std::string> extra_used) const {
  const std::string folded = fold_case(token);
  if (folded == fold_case(player(seat).word)) return DescriptionCheck::OwnWord;
  if (std::find(used_descriptions_.begin(), used_descriptions_.end(), folded) != used_descriptions_.end())
    return DescriptionCheck::Reused;
  for (const std::string& prior : extra_used) {
    if (folded == fold_case(prior)) return DescriptionCheck::Reused;
  }
  return DescriptionCheck::Ok;
}

const RoundRecord& GameState::advance(const RoundInputs& inputs) {
  if (terminal()) throw ProtocolViolation("advance called on a finished game");

  const std::vector<int> alive = alive_seats();
  auto require_alive = [&](int seat, const char* what) {
    if (seat < 0 || seat >= kNumSeats || !players_[static_cast<std::size_t>(seat)].alive)
      throw ProtocolViolation(std::string(what) + " references seat " + std::to_string(seat) +
                              ", which is not alive in round " + std::to_string(round_index_));
  };

  for (int seat : alive) {
    if (!inputs.descriptions.contains(seat))
      throw ProtocolViolation("missing description for seat " + std::to_string(seat));
    if (!inputs.statements.contains(seat))
      throw ProtocolViolation("missing statement for seat " + std::to_string(seat));
  }
  if (inputs.descriptions.size() != alive.size())
    throw ProtocolViolation("descriptions must cover exactly the alive seats");
  if (inputs.statements.size() != alive.size())
    throw ProtocolViolation("statements must cover exactly the alive seats");

  for (const Tendency& t : inputs.tendencies) {
    require_alive(t.source, "tendency source");
    require_alive(t.target, "tendency target");
    if (t.source == t.target) throw ProtocolViolation("tendency may not target its source");
  }
  std::set<std::tuple<int, int, int>> tendency_keys;
  for (const Tendency& t : inputs.tendencies) {
    if (!tendency_keys.insert({t.source, t.target, static_cast<int>(t.polarity)}).second)
      throw ProtocolViolation("duplicate tendency within a round");
  }

  if (inputs.votes.size() != alive.size())
    throw ProtocolViolation("one vote per alive seat required");
  std::set<int> voters;
  for (const auto& [voter, target] : inputs.votes) {
    require_alive(voter, "vote");
    require_alive(target, "vote target");
    if (voter == target) throw ProtocolViolation("a player may not vote for itself");
    if (!voters.insert(voter).second) throw ProtocolViolation("duplicate voter in round");
  }

  RoundRecord record;
  record.round_index = round_index_;

  // Descriptions are validated in speaking order, treating earlier tokens in
  // this round as used (rule b applies within the round as well).
  std::vector<std::string> round_tokens;
  for (int seat : speaking_order_for_round(round_index_)) {
    const std::string& token = inputs.descriptions.at(seat);
    const DescriptionCheck check = validate_description(seat, token, round_tokens);
    if (check != DescriptionCheck::Ok)
      throw ProtocolViolation("illegal description from seat " + std::to_string(seat) + ": " + token);
    round_tokens.push_back(token);
    record.descriptions[seat] = token;
  }

  record.statements = inputs.statements;
  record.tendencies = inputs.tendencies;
  record.votes.reserve(inputs.votes.size());
  for (std::size_t i = 0; i < inputs.votes.size(); ++i) {
    record.votes.push_back(Vote{.voter = inputs.votes[i].first,
                                .target = inputs.votes[i].second,
                                .arrival_rank = static_cast<int>(i)});
  }

  const int eliminated = tally_votes(record.votes);
  record.eliminated = eliminated;
  record.revealed_role = player(eliminated).role;
  players_[static_cast<std::size_t>(eliminated)].alive = false;

  for (const std::string& token : round_tokens) used_descriptions_.push_back(fold_case(token));

  rounds_.push_back(std::move(record));
  winner_ = check_win(*this);
  round_index_ += 1;
  return rounds_.back();
}

GameRecord GameState::to_record() const {
  if (!terminal()) throw std::logic_error("to_record requires a finished game");
  GameRecord record;
  record.config = config_;
  record.rounds = rounds_;
  record.winner = *winner_;
  return record;
}

std::optional<Winner> check_win(const GameState& state) {
  const PlayerState& spy = state.player(state.config().spy_seat);
  if (!spy.alive) return Winner::Folk;
  if (state.alive_seats().size() == 2) return Winner::Spies;
  return std::nullopt;
}

}  // namespace meow
