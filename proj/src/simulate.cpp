#include "meow/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "meow/digest.hpp"
#include "meow/rng.hpp"

namespace meow {

namespace {

constexpr std::uint64_t kVocabStream = 0x76;
constexpr std::uint64_t kSeatStream = 0x5e;
constexpr std::uint64_t kOrderStream = 0x0d;
constexpr std::uint64_t kSpyStream = 0x57;

}  // namespace

void BatchSpec::validate() const {
  if (n_games < 1) throw InvalidConfig("n_games must be at least 1");
  if (word_pairs.empty()) throw InvalidConfig("word_pairs must not be empty");
  for (const WordPair& pair : word_pairs) pair.validate();
  if (const auto* scripted = std::get_if<ScriptedPolicyParams>(&policy)) scripted->validate();
}

RunGameResult run_game(const GameConfig& config, const PolicyFactory& factory,
                       std::string policy_kind, int vocab_size) {
  GameState state(config);
  const GameVocabulary vocab(config.word_pair, vocab_size, mix_seed(config.rng_seed, kVocabStream));

  std::map<int, std::unique_ptr<PlayerPolicy>> policies;
  for (const PlayerState& p : state.players()) {
    policies[p.seat] =
        factory(config, p.seat, p.role, p.word, vocab, mix_seed(config.rng_seed, kSeatStream, static_cast<std::uint64_t>(p.seat)));
  }

  RunGameResult result;
  auto broadcast = [&](BroadcastKind kind, const std::string& payload, int round) {
    result.broadcasts.push_back(BroadcastEvent{kind, payload, round});
    for (int seat : state.alive_seats()) policies[seat]->on_broadcast(payload);
  };

  auto make_view = [&](int seat, const std::vector<std::string>* round_tokens) {
    PolicyView view;
    view.state = &state;
    view.self = seat;
    view.round = state.round_index();
    view.alive = state.alive_seats();
    view.round_tokens = round_tokens;
    return view;
  };

  static const std::vector<std::string> kNoTokens;

  auto partial = [&]() {
    GameRecord record;
    record.config = config;
    record.rounds = state.rounds();
    record.policy_kind = policy_kind;
    return record;
  };

  try {
    for (int seat : state.speaking_order_for_round(1)) {
      policies[seat]->game_init(make_view(seat, &kNoTokens));
    }

    while (!state.terminal()) {
      const int round = state.round_index();
      const std::vector<int> order = state.speaking_order_for_round(round);
      RoundInputs inputs;

      for (int seat : order) policies[seat]->identity_inference(make_view(seat, &kNoTokens));

      std::vector<std::string> round_tokens;
      for (int seat : order) {
        const std::string token = policies[seat]->describe(make_view(seat, &round_tokens));
        inputs.descriptions[seat] = token;
        broadcast(BroadcastKind::Description,
                  seat_name(seat) + " describes their word as \"" + token + "\".", round);
        for (int observer : order) {
          if (observer != seat)
            policies[observer]->observe_description(make_view(observer, &round_tokens), seat, token);
        }
        round_tokens.push_back(token);
      }

      for (int seat : order) {
        auto [tendencies, statement] = policies[seat]->discuss(make_view(seat, &round_tokens));
        inputs.statements[seat] = statement;
        inputs.tendencies.insert(inputs.tendencies.end(), tendencies.begin(), tendencies.end());
        broadcast(BroadcastKind::Statement, seat_name(seat) + " says: \"" + statement + "\"", round);
      }

      for (int seat : order) {
        inputs.votes.emplace_back(seat, policies[seat]->vote(make_view(seat, &round_tokens)));
      }

      const RoundRecord& record = state.advance(inputs);

      std::string summary = "The results of the round " + std::to_string(round) + " voting are: ";
      for (std::size_t i = 0; i < record.votes.size(); ++i) {
        if (i > 0) summary += ", ";
        summary += seat_name(record.votes[i].voter) + " votes for " + seat_name(record.votes[i].target);
      }
      summary += ".";
      broadcast(BroadcastKind::VoteResult, summary, round);
      broadcast(BroadcastKind::Elimination, seat_name(record.eliminated) + " is eliminated.", round);
    }
  } catch (const GameAborted&) {
    throw;
  } catch (const ProtocolViolation& e) {
    throw GameAborted(e.what(), partial());
  } catch (const TransportError& e) {
    throw GameAborted(e.what(), partial());
  }

  result.record = state.to_record();
  result.record.policy_kind = policy_kind;
  for (auto& [seat, policy] : policies) {
    if (auto* chat = dynamic_cast<ChatPolicy*>(policy.get())) {
      result.transcripts[seat] = chat->transcript();
      const auto& events = chat->fallback_events();
      result.record.fallback_events.insert(result.record.fallback_events.end(), events.begin(),
                                           events.end());
    }
  }
  return result;
}

GameConfig make_game_config(const BatchSpec& spec, std::uint64_t game_index) {
  GameConfig config;
  config.rng_seed = mix_seed(spec.base_seed, game_index);
  config.word_pair = spec.word_pairs[game_index % spec.word_pairs.size()];

  if (spec.spy_assignment == SpyAssignment::RoundRobin) {
    config.spy_seat = static_cast<int>(game_index % static_cast<std::uint64_t>(kNumSeats));
  } else {
    Rng rng(mix_seed(config.rng_seed, kSpyStream));
    config.spy_seat = static_cast<int>(rng.below(kNumSeats));
  }

  config.speaking_order.resize(kNumSeats);
  std::iota(config.speaking_order.begin(), config.speaking_order.end(), 0);
  Rng rng(mix_seed(config.rng_seed, kOrderStream));
  rng.shuffle(config.speaking_order);
  return config;
}

namespace {

struct BatchPolicy {
  PolicyFactory factory;
  std::string kind;
  int vocab_size;
  std::unique_ptr<ChatClient> client;  // shared across games for chat batches
  PromptTemplateSet templates;
};

BatchPolicy make_batch_policy(const BatchSpec& spec) {
  BatchPolicy out;
  if (const auto* scripted = std::get_if<ScriptedPolicyParams>(&spec.policy)) {
    const ScriptedPolicyParams params = *scripted;
    out.kind = "scripted";
    out.vocab_size = params.vocab_size;
    out.factory = [params](const GameConfig&, int seat, Role role, const std::string& word,
                           const GameVocabulary& vocab, std::uint64_t stream_seed) {
      return std::make_unique<ScriptedPolicy>(seat, role, word, params, &vocab, stream_seed);
    };
    return out;
  }
  const auto& chat = std::get<ChatPolicySpec>(spec.policy);
  out.kind = "chat";
  out.vocab_size = chat.fallback.vocab_size;
  out.client = make_client(chat.client);
  out.templates = chat.prompts_dir.empty() ? PromptTemplateSet::builtin()
                                           : PromptTemplateSet::load_dir(chat.prompts_dir);
  ChatClient* client = out.client.get();
  const PromptTemplateSet* templates = &out.templates;
  const ScriptedPolicyParams fallback = chat.fallback;
  out.factory = [client, templates, fallback](const GameConfig&, int seat, Role role,
                                              const std::string& word, const GameVocabulary& vocab,
                                              std::uint64_t stream_seed) {
    return std::make_unique<ChatPolicy>(seat, role, word, client, templates, fallback, &vocab,
                                        stream_seed);
  };
  return out;
}

}  // namespace

BatchResult run_batch(const BatchSpec& spec) {
  spec.validate();
  BatchPolicy policy = make_batch_policy(spec);

  const int n = spec.n_games;
  std::vector<std::optional<GameRecord>> slots(static_cast<std::size_t>(n));
  std::vector<std::optional<GameFailure>> failures(static_cast<std::size_t>(n));

  auto run_one = [&](int index) {
    try {
      GameConfig config = make_game_config(spec, static_cast<std::uint64_t>(index));
      RunGameResult result = run_game(config, policy.factory, policy.kind, policy.vocab_size);
      result.record.game_index = static_cast<std::uint64_t>(index);
      slots[static_cast<std::size_t>(index)] = std::move(result.record);
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(index)] =
          GameFailure{static_cast<std::uint64_t>(index), e.what()};
    }
  };

  const int workers = std::max(1, spec.workers);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) run_one(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run_one(i);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  BatchResult result;
  for (auto& slot : slots) {
    if (slot) result.records.push_back(std::move(*slot));
  }
  for (auto& failure : failures) {
    if (failure) result.failures.push_back(*failure);
  }

  result.stats.games = static_cast<int>(result.records.size());
  int two_round = 0;
  for (const GameRecord& record : result.records) {
    if (record.winner == Winner::Folk) result.stats.folk_wins += 1;
    else result.stats.spies_wins += 1;
    if (record.rounds.size() == 2) two_round += 1;
  }
  result.stats.two_round_fraction =
      result.stats.games == 0 ? 0.0 : static_cast<double>(two_round) / result.stats.games;
  return result;
}

nlohmann::json record_to_json(const GameRecord& record) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const RoundRecord& round : record.rounds) {
    nlohmann::json descriptions = nlohmann::json::object();
    for (const auto& [seat, token] : round.descriptions) descriptions[std::to_string(seat)] = token;
    nlohmann::json statements = nlohmann::json::object();
    for (const auto& [seat, text] : round.statements) statements[std::to_string(seat)] = text;
    nlohmann::json tendencies = nlohmann::json::array();
    for (const Tendency& t : round.tendencies) {
      tendencies.push_back({{"src", t.source}, {"dst", t.target}, {"polarity", to_string(t.polarity)}});
    }
    nlohmann::json votes = nlohmann::json::array();
    for (const Vote& v : round.votes) {
      votes.push_back({{"voter", v.voter}, {"target", v.target}, {"arrival_rank", v.arrival_rank}});
    }
    rounds.push_back({{"round", round.round_index},
                      {"descriptions", std::move(descriptions)},
                      {"statements", std::move(statements)},
                      {"tendencies", std::move(tendencies)},
                      {"votes", std::move(votes)},
                      {"eliminated", round.eliminated},
                      {"revealed_role", to_string(round.revealed_role)}});
  }
  return nlohmann::json{{"game_index", record.game_index},
                        {"seed", record.config.rng_seed},
                        {"folk_word", record.config.word_pair.folk_word},
                        {"spy_word", record.config.word_pair.spy_word},
                        {"spy_seat", record.config.spy_seat},
                        {"winner", to_string(record.winner)},
                        {"rounds", std::move(rounds)},
                        {"meta", {{"policy_kind", record.policy_kind},
                                  {"fallback_events", record.fallback_events}}}};
}

GameRecord record_from_json(const nlohmann::json& j) {
  GameRecord record;
  record.game_index = j.at("game_index").get<std::uint64_t>();
  record.config.rng_seed = j.at("seed").get<std::uint64_t>();
  record.config.word_pair.folk_word = j.at("folk_word").get<std::string>();
  record.config.word_pair.spy_word = j.at("spy_word").get<std::string>();
  record.config.spy_seat = j.at("spy_seat").get<int>();
  record.config.speaking_order = {0, 1, 2, 3};  // not serialized; irrelevant downstream
  record.winner = j.at("winner").get<std::string>() == "Folk" ? Winner::Folk : Winner::Spies;
  record.policy_kind = j.at("meta").at("policy_kind").get<std::string>();
  for (const auto& event : j.at("meta").at("fallback_events"))
    record.fallback_events.push_back(event.get<std::string>());

  for (const auto& round_json : j.at("rounds")) {
    RoundRecord round;
    round.round_index = round_json.at("round").get<int>();
    for (const auto& [seat, token] : round_json.at("descriptions").items())
      round.descriptions[std::stoi(seat)] = token.get<std::string>();
    for (const auto& [seat, text] : round_json.at("statements").items())
      round.statements[std::stoi(seat)] = text.get<std::string>();
    for (const auto& t : round_json.at("tendencies")) {
      round.tendencies.push_back(Tendency{
          t.at("src").get<int>(), t.at("dst").get<int>(),
          t.at("polarity").get<std::string>() == "for" ? Polarity::For : Polarity::Against});
    }
    for (const auto& v : round_json.at("votes")) {
      round.votes.push_back(Vote{v.at("voter").get<int>(), v.at("target").get<int>(),
                                 v.at("arrival_rank").get<int>()});
    }
    round.eliminated = round_json.at("eliminated").get<int>();
    round.revealed_role =
        round_json.at("revealed_role").get<std::string>() == "Spy" ? Role::Spy : Role::Folk;
    record.rounds.push_back(std::move(round));
  }
  return record;
}

void write_records_jsonl(const std::filesystem::path& path, const std::vector<GameRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write records file: " + path.string());
  for (const GameRecord& record : records) out << record_to_json(record).dump() << '\n';
}

std::vector<GameRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read records file: " + path.string());
  std::vector<GameRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto parsed = nlohmann::json::parse(line, nullptr, false);
    if (parsed.is_discarded())
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed record line");
    records.push_back(record_from_json(parsed));
  }
  return records;
}

nlohmann::json batch_spec_to_json(const BatchSpec& spec) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const WordPair& pair : spec.word_pairs)
    pairs.push_back({{"folk_word", pair.folk_word}, {"spy_word", pair.spy_word}, {"category", pair.category}});
  nlohmann::json policy;
  if (const auto* scripted = std::get_if<ScriptedPolicyParams>(&spec.policy)) {
    policy = {{"kind", "scripted"},
              {"detect_rate", scripted->detect_rate},
              {"false_alarm", scripted->false_alarm},
              {"deception", scripted->deception},
              {"tendency_weights", scripted->tendency_weights},
              {"vocab_size", scripted->vocab_size}};
  } else {
    const auto& chat = std::get<ChatPolicySpec>(spec.policy);
    policy = {{"kind", "chat"}, {"endpoint", chat.client.endpoint}, {"model", chat.client.model}};
  }
  return nlohmann::json{{"n_games", spec.n_games},
                        {"base_seed", spec.base_seed},
                        {"word_pairs", std::move(pairs)},
                        {"policy", std::move(policy)},
                        {"spy_assignment",
                         spec.spy_assignment == SpyAssignment::RoundRobin ? "round_robin" : "seeded_uniform"}};
}

}  // namespace meow
