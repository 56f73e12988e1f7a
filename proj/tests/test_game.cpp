#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "meow/game.hpp"

using namespace meow;

namespace {

GameConfig basic_config(int spy_seat = 3) {
  GameConfig config;
  config.word_pair = {"apple", "pineapple", "fruit"};
  config.spy_seat = spy_seat;
  config.rng_seed = 7;
  config.speaking_order = {0, 1, 2, 3};
  return config;
}

// Independent tally oracle: count votes per target, keep the max-count
// targets, and of those pick the one whose earliest vote has the smallest
// arrival rank. Written from the rules, not from the engine.
int oracle_tally(const std::vector<Vote>& votes) {
  int best = -1;
  int best_count = -1;
  int best_rank = -1;
  for (int target = 0; target < kNumSeats; ++target) {
    int count = 0;
    int first_rank = 1 << 20;
    for (const Vote& v : votes) {
      if (v.target == target) {
        ++count;
        first_rank = std::min(first_rank, v.arrival_rank);
      }
    }
    if (count == 0) continue;
    if (count > best_count || (count == best_count && first_rank < best_rank)) {
      best = target;
      best_count = count;
      best_rank = first_rank;
    }
  }
  return best;
}

RoundInputs legal_round1_inputs(const GameState& state, const std::vector<std::pair<int, int>>& votes) {
  RoundInputs inputs;
  int counter = 0;
  for (int seat : state.alive_seats()) {
    inputs.descriptions[seat] = "token" + std::to_string(counter++);
    inputs.statements[seat] = "statement";
  }
  inputs.votes = votes;
  return inputs;
}

}  // namespace

TEST_CASE("new_game deals words and roles by spy seat") {
  GameState state(basic_config(3));
  for (int seat = 0; seat < 3; ++seat) {
    CHECK(state.player(seat).word == "apple");
    CHECK(state.player(seat).role == Role::Folk);
  }
  CHECK(state.player(3).word == "pineapple");
  CHECK(state.player(3).role == Role::Spy);
  CHECK(state.alive_seats().size() == 4);
  CHECK(state.round_index() == 1);

  GameState spy_first(basic_config(0));
  CHECK(spy_first.player(0).role == Role::Spy);
  CHECK(spy_first.player(1).role == Role::Folk);
}

TEST_CASE("invalid configs are rejected") {
  auto config = basic_config();
  config.word_pair.spy_word = "apple";
  CHECK_THROWS_AS(GameState{config}, InvalidConfig);

  config = basic_config();
  config.spy_seat = 4;
  CHECK_THROWS_AS(GameState{config}, InvalidConfig);

  config = basic_config();
  config.speaking_order = {0, 1, 2, 2};
  CHECK_THROWS_AS(GameState{config}, InvalidConfig);

  config = basic_config();
  config.word_pair.folk_word = "";
  CHECK_THROWS_AS(GameState{config}, InvalidConfig);
}

TEST_CASE("description legality: own word, reuse, case folding") {
  GameState state(basic_config(3));
  CHECK(state.validate_description(0, "apple") == DescriptionCheck::OwnWord);
  CHECK(state.validate_description(0, "Apple") == DescriptionCheck::OwnWord);
  CHECK(state.validate_description(3, "apple") == DescriptionCheck::Ok);  // not the spy's word
  CHECK(state.validate_description(0, "red fruit") == DescriptionCheck::Ok);

  const std::vector<std::string> this_round = {"crunchy"};
  CHECK(state.validate_description(1, "crunchy", this_round) == DescriptionCheck::Reused);
  CHECK(state.validate_description(1, "CRUNCHY", this_round) == DescriptionCheck::Reused);

  // Committed rounds count as used in later rounds.
  RoundInputs inputs = legal_round1_inputs(state, {{0, 3}, {1, 3}, {2, 3}, {3, 0}});
  inputs.descriptions[0] = "crunchy";
  state.advance(inputs);
  CHECK(state.validate_description(1, "crunchy") == DescriptionCheck::Reused);
}

TEST_CASE("tally_votes follows the paper's worked example") {
  // Alice votes Carol, Bob votes Alice, Carol votes Bob, Daniel votes Bob.
  const std::vector<Vote> votes = {{0, 2, 0}, {1, 0, 1}, {2, 1, 2}, {3, 1, 3}};
  CHECK(tally_votes(votes) == 1);  // Bob is eliminated
}

TEST_CASE("tally_votes tie goes to the earliest first vote") {
  // Seats 0 and 1 tied 2-2; seat 1's first vote arrived at rank 0.
  const std::vector<Vote> votes = {{0, 1, 0}, {1, 0, 1}, {2, 0, 2}, {3, 1, 3}};
  CHECK(tally_votes(votes) == 1);
}

TEST_CASE("tally_votes matches the enumeration oracle on all four-voter profiles") {
  // Each of the 4 voters picks one of the 3 other seats: 81 profiles.
  int checked = 0;
  for (int c0 = 0; c0 < 3; ++c0) {
    for (int c1 = 0; c1 < 3; ++c1) {
      for (int c2 = 0; c2 < 3; ++c2) {
        for (int c3 = 0; c3 < 3; ++c3) {
          const int choice[4] = {c0, c1, c2, c3};
          std::vector<Vote> votes;
          for (int voter = 0; voter < 4; ++voter) {
            int target = choice[voter];
            if (target >= voter) ++target;  // skip self
            votes.push_back({voter, target, voter});
          }
          REQUIRE(tally_votes(votes) == oracle_tally(votes));
          ++checked;
        }
      }
    }
  }
  CHECK(checked == 81);
}

TEST_CASE("tally_votes matches the oracle on all three-voter profiles") {
  // Round 2: three alive voters, each picking one of the 2 others.
  const int seats[3] = {0, 2, 3};
  int checked = 0;
  for (int c0 = 0; c0 < 2; ++c0) {
    for (int c1 = 0; c1 < 2; ++c1) {
      for (int c2 = 0; c2 < 2; ++c2) {
        const int choice[3] = {c0, c1, c2};
        std::vector<Vote> votes;
        for (int v = 0; v < 3; ++v) {
          int pick = choice[v];
          std::vector<int> others;
          for (int s : seats) {
            if (s != seats[v]) others.push_back(s);
          }
          votes.push_back({seats[v], others[static_cast<std::size_t>(pick)], v});
        }
        REQUIRE(tally_votes(votes) == oracle_tally(votes));
        ++checked;
      }
    }
  }
  CHECK(checked == 8);
}

TEST_CASE("check_win covers all three outcomes") {
  SUBCASE("spy eliminated in round 1 ends the game for the folk") {
    GameState state(basic_config(3));
    state.advance(legal_round1_inputs(state, {{0, 3}, {1, 3}, {2, 3}, {3, 0}}));
    REQUIRE(state.terminal());
    CHECK(state.winner() == Winner::Folk);
    CHECK(state.rounds().size() == 1);
    CHECK(state.rounds()[0].revealed_role == Role::Spy);
  }

  SUBCASE("folk then spy eliminated gives folk the win in two rounds") {
    GameState state(basic_config(3));
    state.advance(legal_round1_inputs(state, {{0, 1}, {1, 0}, {2, 1}, {3, 1}}));
    REQUIRE_FALSE(state.terminal());
    CHECK(state.alive_seats() == std::vector<int>{0, 2, 3});

    RoundInputs round2;
    int counter = 10;
    for (int seat : state.alive_seats()) {
      round2.descriptions[seat] = "token" + std::to_string(counter++);
      round2.statements[seat] = "statement";
    }
    round2.votes = {{0, 3}, {2, 3}, {3, 0}};
    state.advance(round2);
    REQUIRE(state.terminal());
    CHECK(state.winner() == Winner::Folk);
    CHECK(state.rounds().size() == 2);
  }

  SUBCASE("two folk eliminations hand the game to the spies") {
    GameState state(basic_config(3));
    state.advance(legal_round1_inputs(state, {{0, 1}, {1, 0}, {2, 1}, {3, 1}}));

    RoundInputs round2;
    int counter = 10;
    for (int seat : state.alive_seats()) {
      round2.descriptions[seat] = "token" + std::to_string(counter++);
      round2.statements[seat] = "statement";
    }
    round2.votes = {{0, 2}, {2, 0}, {3, 2}};
    state.advance(round2);
    REQUIRE(state.terminal());
    CHECK(state.winner() == Winner::Spies);
    CHECK(state.alive_seats().size() == 2);
  }
}

TEST_CASE("advance rejects protocol violations") {
  GameState state(basic_config(3));

  SUBCASE("missing description") {
    RoundInputs inputs = legal_round1_inputs(state, {{0, 3}, {1, 3}, {2, 3}, {3, 0}});
    inputs.descriptions.erase(2);
    CHECK_THROWS_AS(state.advance(inputs), ProtocolViolation);
  }

  SUBCASE("self vote") {
    RoundInputs inputs = legal_round1_inputs(state, {{0, 0}, {1, 3}, {2, 3}, {3, 0}});
    CHECK_THROWS_AS(state.advance(inputs), ProtocolViolation);
  }

  SUBCASE("duplicate description within the round") {
    RoundInputs inputs = legal_round1_inputs(state, {{0, 3}, {1, 3}, {2, 3}, {3, 0}});
    inputs.descriptions[1] = inputs.descriptions[0];
    CHECK_THROWS_AS(state.advance(inputs), ProtocolViolation);
  }

  SUBCASE("vote from an eliminated seat in round 2") {
    state.advance(legal_round1_inputs(state, {{0, 1}, {1, 0}, {2, 1}, {3, 1}}));
    RoundInputs round2;
    int counter = 10;
    for (int seat : state.alive_seats()) {
      round2.descriptions[seat] = "token" + std::to_string(counter++);
      round2.statements[seat] = "statement";
    }
    round2.votes = {{0, 3}, {2, 3}, {1, 0}};  // seat 1 is dead
    CHECK_THROWS_AS(state.advance(round2), ProtocolViolation);
  }

  SUBCASE("advance after the game ended") {
    state.advance(legal_round1_inputs(state, {{0, 3}, {1, 3}, {2, 3}, {3, 0}}));
    RoundInputs any;
    CHECK_THROWS_AS(state.advance(any), ProtocolViolation);
  }
}

TEST_CASE("speaking order rotates between rounds and drops the eliminated") {
  auto config = basic_config(3);
  config.speaking_order = {2, 0, 3, 1};
  GameState state(config);
  CHECK(state.speaking_order_for_round(1) == std::vector<int>{2, 0, 3, 1});

  RoundInputs inputs;
  int counter = 0;
  for (int seat : state.alive_seats()) {
    inputs.descriptions[seat] = "token" + std::to_string(counter++);
    inputs.statements[seat] = "statement";
  }
  inputs.votes = {{2, 0}, {0, 2}, {3, 0}, {1, 3}};  // seat 0 eliminated (2 votes)
  state.advance(inputs);
  CHECK(state.speaking_order_for_round(2) == std::vector<int>{3, 1, 2});
}
