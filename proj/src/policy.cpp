#include "meow/policy.hpp"

#include <algorithm>
#include <cmath>

namespace meow {

namespace {

// Neutral token pool. Tokens never equal a game word and carry no hint of
// which word they belong to; the seeded shuffle below decides ownership.
const std::vector<std::string>& token_pool() {
  static const std::vector<std::string> pool = {
      "amber",  "breeze", "cobble", "dapple", "ember",  "fathom", "gleam",  "hollow",
      "indigo", "jumble", "kindle", "lumen",  "mellow", "nimble", "opal",   "pebble",
      "quiver", "russet", "sable",  "tawny",  "umber",  "velvet", "willow", "zephyr",
      "arbor",  "bramble", "cinder", "drift",  "eddy",   "fable",  "garnet", "haze",
      "inlet",  "jasper", "knoll",  "lattice", "mosaic", "nectar", "orchid", "prism",
      "quartz", "ripple", "sprig",  "thicket", "updraft", "vessel", "wisp",  "yonder",
      "basalt", "crest",  "dune",   "fern",    "grove",  "hearth", "isle",   "juniper",
      "kelp",   "lichen", "marsh",  "nook",    "onyx",   "pine",   "reef",   "shale",
  };
  return pool;
}

}  // namespace

std::string to_string(PhaseKind phase) {
  switch (phase) {
    case PhaseKind::GameInit: return "game_init";
    case PhaseKind::IdentityInference: return "identity_inference";
    case PhaseKind::WordDescription: return "word_description";
    case PhaseKind::DescriptionAnalysis: return "description_analysis";
    case PhaseKind::StatementDiscussion: return "statement_discussion";
    case PhaseKind::Vote: return "vote";
  }
  return "unknown";
}

void ScriptedPolicyParams::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(detect_rate) || !in_unit(false_alarm) || !in_unit(deception))
    throw InvalidConfig("scripted policy probabilities must lie in [0, 1]");
  double total = 0.0;
  for (double w : tendency_weights) {
    if (w < 0.0) throw InvalidConfig("tendency weights must be non-negative");
    total += w;
  }
  if (total <= 0.0) throw InvalidConfig("tendency weights must not all be zero");
  if (vocab_size < 8) throw InvalidConfig("vocab_size must be at least 8");
}

GameVocabulary::GameVocabulary(const WordPair& pair, int vocab_size, std::uint64_t seed) {
  const std::size_t need = 2 * static_cast<std::size_t>(vocab_size);
  std::vector<std::string> pool = token_pool();
  for (std::size_t i = pool.size(); i < need; ++i) pool.push_back("token" + std::to_string(i));
  Rng rng(seed);
  rng.shuffle(pool);
  pool.resize(need);

  auto& folk = by_word_[pair.folk_word];
  auto& spy = by_word_[pair.spy_word];
  folk.assign(pool.begin(), pool.begin() + vocab_size);
  spy.assign(pool.begin() + vocab_size, pool.end());
  for (const std::string& t : folk) cluster_[t] = pair.folk_word;
  for (const std::string& t : spy) cluster_[t] = pair.spy_word;
}

const std::vector<std::string>& GameVocabulary::tokens_for(const std::string& word) const {
  auto it = by_word_.find(word);
  if (it == by_word_.end()) throw std::logic_error("no vocabulary for word: " + word);
  return it->second;
}

const std::string& GameVocabulary::cluster_of(const std::string& token) const {
  auto it = cluster_.find(token);
  if (it == cluster_.end()) throw std::logic_error("token has no cluster tag: " + token);
  return it->second;
}

ScriptedPolicy::ScriptedPolicy(int seat, Role role, std::string word, ScriptedPolicyParams params,
                               const GameVocabulary* vocab, std::uint64_t stream_seed)
    : seat_(seat),
      role_(role),
      word_(std::move(word)),
      params_(params),
      vocab_(vocab),
      rng_(stream_seed) {
  params_.validate();
  suspicion_.owner = seat;
}

void ScriptedPolicy::game_init(const PolicyView& view) {
  for (int other : view.alive) {
    if (other != seat_) suspicion_.scores.emplace(other, 0.0);
  }
  if (role_ == Role::Spy) {
    suspicion_.believed_role = SuspicionState::Belief::Spy;
    if (rng_.bernoulli(params_.deception)) {
      std::vector<int> targets;
      for (int other : view.alive) {
        if (other != seat_) targets.push_back(other);
      }
      deflection_ = targets[rng_.below(targets.size())];
      suspicion_.scores[*deflection_] += 2.0;
    }
  }
}

void ScriptedPolicy::identity_inference(const PolicyView& view) {
  std::erase_if(suspicion_.scores, [&](const auto& entry) {
    return std::find(view.alive.begin(), view.alive.end(), entry.first) == view.alive.end();
  });
  if (role_ == Role::Spy) return;
  // Folk majority rule: flagged most of the round's descriptions -> believe
  // the odd word is ours.
  const int others = static_cast<int>(suspicion_.scores.size());
  suspicion_.believed_role = (2 * flags_this_round_ > others) ? SuspicionState::Belief::Spy
                                                              : SuspicionState::Belief::Folk;
  flags_this_round_ = 0;
}

std::string ScriptedPolicy::describe(const PolicyView& view) {
  std::vector<std::string> candidates;
  for (const std::string& token : vocab_->tokens_for(word_)) {
    if (view.state->validate_description(seat_, token, *view.round_tokens) == DescriptionCheck::Ok)
      candidates.push_back(token);
  }
  if (candidates.empty()) throw std::logic_error("description vocabulary exhausted");
  return candidates[rng_.below(candidates.size())];
}

void ScriptedPolicy::observe_description(const PolicyView&, int described, const std::string& token) {
  if (described == seat_) return;
  const std::string& cluster = vocab_->cluster_of(token);
  if (role_ == Role::Spy) {
    // The spy holds the odd word: everyone else is folk.
    suspicion_.scores[described] += 1.0;
    return;
  }
  const bool mismatch = cluster != word_;
  const double flag_prob = mismatch ? params_.detect_rate : params_.false_alarm;
  if (rng_.bernoulli(flag_prob)) {
    suspicion_.scores[described] += 1.0;
    flags_this_round_ += 1;
  }
}

std::vector<int> ScriptedPolicy::rank_suspects(const PolicyView& view) {
  std::vector<int> others;
  for (int seat : view.alive) {
    if (seat != seat_) others.push_back(seat);
  }
  rng_.shuffle(others);  // tie-break order
  std::stable_sort(others.begin(), others.end(),
                   [&](int a, int b) { return suspicion_.scores[a] > suspicion_.scores[b]; });
  return others;
}

std::pair<std::vector<Tendency>, std::string> ScriptedPolicy::discuss(const PolicyView& view) {
  const std::vector<int> ranked = rank_suspects(view);
  int k = 1 + static_cast<int>(rng_.weighted({params_.tendency_weights.begin(), params_.tendency_weights.end()}));
  k = std::min(k, static_cast<int>(ranked.size()));

  std::vector<Tendency> tendencies;
  const int n_against = (k + 1) / 2;
  const int n_for = k / 2;
  for (int i = 0; i < n_against; ++i)
    tendencies.push_back(Tendency{seat_, ranked[static_cast<std::size_t>(i)], Polarity::Against});
  for (int i = 0; i < n_for; ++i)
    tendencies.push_back(Tendency{seat_, ranked[ranked.size() - 1 - static_cast<std::size_t>(i)], Polarity::For});

  return {tendencies, render_statement(tendencies, rng_)};
}

int ScriptedPolicy::vote(const PolicyView& view) { return rank_suspects(view).front(); }

std::string render_statement(const std::vector<Tendency>& tendencies, Rng& rng) {
  static const std::vector<std::string> against_bank = {
      "I am against {}; that description felt off to me.",
      "I doubt {} this round.",
      "{}'s description does not sit right with me.",
      "My suspicion lands on {}.",
  };
  static const std::vector<std::string> for_bank = {
      "I am with {}.",
      "{} sounds like one of us.",
      "I see no reason to doubt {}.",
      "{} has my trust for now.",
  };
  std::string statement;
  for (const Tendency& t : tendencies) {
    const auto& bank = t.polarity == Polarity::Against ? against_bank : for_bank;
    std::string phrase = bank[rng.below(bank.size())];
    const std::size_t slot = phrase.find("{}");
    phrase.replace(slot, 2, seat_name(t.target));
    if (!statement.empty()) statement += ' ';
    statement += phrase;
  }
  if (statement.empty()) statement = "I have nothing to add this round.";
  return statement;
}

}  // namespace meow
