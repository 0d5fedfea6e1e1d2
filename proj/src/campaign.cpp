#include "photobook/campaign.hpp"

#include <atomic>
#include <regex>
#include <set>
#include <thread>

#include "photobook/rng.hpp"
#include "photobook/serialization.hpp"

namespace photobook {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::regex kSafeName("[A-Za-z0-9_.-]+");

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, _] : obj.items()) {
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

DyadConfig parse_dyad(const json& d, const fs::path& base) {
  reject_unknown(d, {"name", "prompt", "anchor", "agents"}, "dyad");
  DyadConfig dyad;
  dyad.name = d.at("name").get<std::string>();
  if (!std::regex_match(dyad.name, kSafeName)) throw ConfigError("dyad name '" + dyad.name + "' must match [A-Za-z0-9_.-]+");
  const std::string prompt = d.value("prompt", "original");
  const auto variant = parse_prompt_variant(prompt);
  if (!variant) throw ConfigError("dyad " + dyad.name + ": unknown prompt variant '" + prompt + "'");
  dyad.prompt = *variant;
  dyad.anchor = d.value("anchor", "");
  const json& agents = d.at("agents");
  reject_unknown(agents, {"A", "B"}, "dyad " + dyad.name + " agents");
  for (Player p : kPlayers) {
    json block = agents.at(std::string(to_string(p)));
    if (!block.is_object()) throw ConfigError("dyad " + dyad.name + ": agent block must be an object");
    if (block.contains("prompt") && block["prompt"] != prompt) {
      throw ConfigError("dyad " + dyad.name + ": both agents must use the dyad's prompt variant");
    }
    block["prompt"] = prompt;
    AgentConfig a = parse_agent_config(block);
    if (a.kind == AgentKind::Replay) throw ConfigError("dyad " + dyad.name + ": replay agents are driven by the human corpus");
    if (!a.cassette.empty()) a.cassette = resolve(base, a.cassette).string();
    if (!a.image_root.empty()) a.image_root = resolve(base, a.image_root).string();
    (p == Player::A ? dyad.agent_a : dyad.agent_b) = std::move(a);
  }
  if (dyad.agent_a.prompt_text != dyad.agent_b.prompt_text) {
    throw ConfigError("dyad " + dyad.name + ": both agents must use the same prompt text");
  }
  return dyad;
}

}  // namespace

CampaignConfig parse_campaign_config(const json& doc, const fs::path& base) {
  CampaignConfig c;
  try {
    reject_unknown(doc, {"schema", "id", "seed", "output_dir", "games", "limits", "parallelism", "rate_limit_rps",
                         "record_timing", "dyads", "embedding", "metrics", "refexp_rules", "human", "compare_prompts"},
                   "config");
    if (doc.value("schema", kConfigSchema) != std::string(kConfigSchema)) throw ConfigError("config schema must be " + std::string(kConfigSchema));
    c.id = doc.value("id", c.id);
    c.seed = doc.value("seed", c.seed);
    c.output_dir = resolve(base, doc.value("output_dir", "out"));
    c.parallelism = doc.value("parallelism", c.parallelism);
    if (c.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    c.rate_limit_rps = doc.value("rate_limit_rps", c.rate_limit_rps);
    c.record_timing = doc.value("record_timing", c.record_timing);

    if (doc.contains("games")) {
      const json& g = doc["games"];
      reject_unknown(g, {"source", "path", "pool", "count", "rounds", "min_shared", "max_shared", "id_prefix"}, "games");
      c.games.source = g.value("source", "fixture");
      if (c.games.source == "fixture") {
        c.games.path = resolve(base, g.at("path").get<std::string>());
      } else if (c.games.source == "synthetic") {
        c.games.pool = resolve(base, g.at("pool").get<std::string>());
        c.games.synthetic.games = g.value("count", c.games.synthetic.games);
        c.games.synthetic.rounds = g.value("rounds", c.games.synthetic.rounds);
        c.games.synthetic.min_shared = g.value("min_shared", c.games.synthetic.min_shared);
        c.games.synthetic.max_shared = g.value("max_shared", c.games.synthetic.max_shared);
        c.games.synthetic.id_prefix = g.value("id_prefix", c.games.synthetic.id_prefix);
        c.games.synthetic.seed = c.seed;
      } else {
        throw ConfigError("games.source must be 'fixture' or 'synthetic'");
      }
    }
    if (doc.contains("limits")) {
      const json& l = doc["limits"];
      reject_unknown(l, {"max_turns", "max_repairs"}, "limits");
      c.limits.max_turns = l.value("max_turns", c.limits.max_turns);
      c.limits.max_repairs = l.value("max_repairs", c.limits.max_repairs);
      if (c.limits.max_turns < 1 || c.limits.max_repairs < 0) throw ConfigError("limits out of range");
    }

    std::set<std::string> names;
    for (const auto& d : doc.value("dyads", json::array())) {
      DyadConfig dyad = parse_dyad(d, base);
      if (dyad.name == "human") throw ConfigError("dyad name 'human' is reserved for the corpus row");
      if (!names.insert(dyad.name).second) throw ConfigError("duplicate dyad name " + dyad.name);
      c.dyads.push_back(std::move(dyad));
    }

    if (doc.contains("embedding")) {
      const json& e = doc["embedding"];
      reject_unknown(e, {"backend", "endpoint", "seed", "timeout_ms", "cache_dir"}, "embedding");
      c.embedding.backend = e.value("backend", c.embedding.backend);
      c.embedding.endpoint = e.value("endpoint", "");
      c.embedding.seed = e.value("seed", c.embedding.seed);
      c.embedding.timeout_ms = e.value("timeout_ms", c.embedding.timeout_ms);
      if (e.contains("cache_dir")) c.embedding.cache_dir = resolve(base, e["cache_dir"].get<std::string>());
      if (c.embedding.backend != "mock" && c.embedding.backend != "http") throw ConfigError("embedding.backend must be 'mock' or 'http'");
      if (c.embedding.backend == "http" && c.embedding.endpoint.empty()) throw ConfigError("embedding.endpoint is required for the http backend");
    }
    if (doc.contains("metrics")) {
      const json& m = doc["metrics"];
      reject_unknown(m, {"clip_scale", "wnr_pairing", "kl_epsilon", "max_round"}, "metrics");
      c.metrics.clip_scale = m.value("clip_scale", c.metrics.clip_scale);
      const std::string pairing = m.value("wnr_pairing", "same_speaker");
      if (pairing == "same_speaker") {
        c.metrics.wnr_pairing = WnrPairing::SameSpeaker;
      } else if (pairing == "any_speaker") {
        c.metrics.wnr_pairing = WnrPairing::AnySpeaker;
      } else {
        throw ConfigError("metrics.wnr_pairing must be 'same_speaker' or 'any_speaker'");
      }
      c.metrics.kl_epsilon = m.value("kl_epsilon", c.metrics.kl_epsilon);
      c.metrics.max_round = m.value("max_round", c.metrics.max_round);
      if (c.metrics.clip_scale <= 0 || c.metrics.kl_epsilon <= 0) throw ConfigError("metrics constants must be positive");
    }
    if (doc.contains("refexp_rules")) c.rules_path = resolve(base, doc["refexp_rules"].get<std::string>());
    if (doc.contains("human")) {
      const json& h = doc["human"];
      reject_unknown(h, {"corpus_dir", "refchains", "sample", "sample_size"}, "human");
      if (h.contains("corpus_dir")) c.human.corpus_dir = resolve(base, h["corpus_dir"].get<std::string>());
      if (h.contains("refchains")) c.human.refchains = resolve(base, h["refchains"].get<std::string>());
      c.human.sample = h.value("sample", c.human.sample);
      c.human.sample_size = h.value("sample_size", c.human.sample_size);
      if (c.human.sample != "all" && c.human.sample != "matched") throw ConfigError("human.sample must be 'all' or 'matched'");
    }
    for (const auto& cmp : doc.value("compare_prompts", json::array())) {
      PromptComparison pc{cmp.at("base").get<std::string>(), cmp.at("tuned").get<std::string>()};
      if (!names.count(pc.base) || !names.count(pc.tuned)) throw ConfigError("compare_prompts names an unknown dyad");
      c.comparisons.push_back(std::move(pc));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

CampaignConfig load_campaign_config(const fs::path& file) {
  json doc;
  try {
    doc = read_json_file(file);
  } catch (const SchemaError& e) {
    throw ConfigError(e.what());
  }
  return parse_campaign_config(doc, fs::absolute(file).parent_path());
}

std::vector<GameSpec> resolve_games(const CampaignConfig& config) {
  if (config.games.source == "synthetic") {
    const json pool = read_json_file(config.games.pool);
    if (!pool.is_array()) throw ConfigError("image pool must be a JSON array of ids");
    const auto ids = pool.get<std::vector<std::string>>();
    return generate_synthetic_games(ids, config.games.synthetic);
  }
  if (config.games.path.empty()) throw ConfigError("games.path is required");
  return load_games(config.games.path);
}

std::unique_ptr<Agent> make_agent(const AgentConfig& config, Player seat, const GameSpec& game, std::uint64_t seed,
                                  std::shared_ptr<RateLimiter> limiter) {
  switch (config.kind) {
    case AgentKind::Scripted: {
      if (config.script == "queue") return std::make_unique<ScriptedAgent>(config.payloads);
      std::map<int, LabelTriple> truth;
      for (const auto& r : game.rounds) truth[r.round_no] = r.truth.of(seat);
      OracleOptions options = config.oracle;
      options.seed = derive_seed(options.seed, std::to_string(seed));
      return std::make_unique<OracleAgent>(options, std::move(truth), config.captions);
    }
    case AgentKind::RemoteChat:
      return make_remote_agent(config, std::move(limiter));
    case AgentKind::Replay:
      break;
  }
  throw ConfigError("replay agents are built from corpus transcripts, not from config");
}

PlayResult play_game(const GameSpec& game, Agent& agent_a, Agent& agent_b, const TurnLimits& limits, bool record_timing) {
  PlayResult result;
  result.transcript.game_id = game.game_id;
  result.transcript.provenance = Provenance::SelfPlay;
  const int rounds = std::min<int>(kMaxSelfPlayRounds, static_cast<int>(game.rounds.size()));
  double elapsed = 0.0;
  for (int i = 0; i < rounds; ++i) {
    RoundState state(game.rounds[static_cast<std::size_t>(i)]);
    RoundOptions options;
    options.limits = limits;
    const RoundOutcome outcome = run_round(state, agent_a, agent_b, options, result.transcript.rounds);
    result.agent_calls += outcome.agent_calls;
    elapsed += outcome.elapsed_ms;
    RoundRecord record = close_round(state, outcome);
    if (!record_timing) record.elapsed_ms.reset();
    result.transcript.rounds.push_back(std::move(record));
  }
  if (record_timing) result.transcript.metadata["elapsed_ms"] = elapsed;
  return result;
}

std::string_view to_string(GameStatus status) {
  switch (status) {
    case GameStatus::Completed: return "completed";
    case GameStatus::Skipped: return "skipped";
    case GameStatus::Quarantined: return "quarantined";
  }
  return "completed";
}

int CampaignResult::count(GameStatus status) const {
  return static_cast<int>(std::count_if(outcomes.begin(), outcomes.end(), [&](const GameOutcome& o) { return o.status == status; }));
}

int CampaignResult::agent_calls() const {
  int total = 0;
  for (const auto& o : outcomes) total += o.agent_calls;
  return total;
}

CampaignResult run_campaign(const CampaignConfig& config, const std::vector<GameSpec>& games, const AgentFactory& factory) {
  struct Task {
    const DyadConfig* dyad;
    const GameSpec* game;
  };
  std::vector<Task> tasks;
  for (const auto& d : config.dyads) {
    for (const auto& g : games) tasks.push_back({&d, &g});
  }
  CampaignResult result;
  result.outcomes.resize(tasks.size());
  std::shared_ptr<RateLimiter> limiter;
  if (config.rate_limit_rps > 0) limiter = std::make_shared<RateLimiter>(config.rate_limit_rps);

  auto run_task = [&](std::size_t index) {
    const DyadConfig& dyad = *tasks[index].dyad;
    const GameSpec& game = *tasks[index].game;
    GameOutcome& out = result.outcomes[index];
    out.dyad = dyad.name;
    out.game_id = game.game_id;

    const fs::path dir = config.runs_dir(dyad.name);
    const fs::path path = dir / (game.game_id + ".json");
    const fs::path quarantine = dir / "quarantine" / (game.game_id + ".json");
    if (!std::regex_match(game.game_id, kSafeName)) {
      out.status = GameStatus::Quarantined;
      out.reason = "game id is not a safe file name";
      return;
    }
    if (fs::exists(path)) {
      try {
        if (transcript_from_json(read_json_file(path)).game_id == game.game_id) {
          out.status = GameStatus::Skipped;
          return;
        }
      } catch (const Error&) {
        // Unreadable leftovers are replayed.
      }
    }

    const std::uint64_t seed = derive_seed(config.seed, dyad.name + "/" + game.game_id);
    try {
      std::unique_ptr<Agent> agents[2];
      for (Player p : kPlayers) {
        const std::uint64_t seat_seed = derive_seed(seed, to_string(p));
        agents[p == Player::A ? 0 : 1] = factory ? factory(dyad, p, game, seat_seed)
                                                 : make_agent(dyad.agent(p), p, game, seat_seed, limiter);
      }
      PlayResult played = play_game(game, *agents[0], *agents[1], config.limits, config.record_timing);
      out.agent_calls = played.agent_calls;
      Transcript& t = played.transcript;
      t.system = dyad.name;
      t.metadata["campaign"] = config.id;
      t.metadata["dyad"] = dyad.name;
      t.metadata["prompt"] = std::string(to_string(dyad.prompt));
      t.metadata["agents"] = {agents[0]->describe(), agents[1]->describe()};
      t.metadata["seed"] = seed;
      t.metadata["game_source"] = std::string(to_string(game.source));
      write_json_file(path, to_json(t, config.record_timing));
      fs::remove(quarantine);
      out.status = GameStatus::Completed;
    } catch (const std::exception& e) {
      out.status = GameStatus::Quarantined;
      out.reason = e.what();
      try {
        write_json_file(quarantine, {{"dyad", dyad.name}, {"game_id", game.game_id}, {"reason", out.reason}});
      } catch (const std::exception&) {
      }
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.parallelism), tasks.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
    return result;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) run_task(i);
    });
  }
  for (auto& t : pool) t.join();
  return result;
}

std::shared_ptr<EmbeddingBackend> make_embedding_backend(const EmbeddingConfig& config) {
  if (config.backend == "http") return std::make_shared<HttpBackend>(config.endpoint, config.timeout_ms);
  return std::make_shared<MockBackend>(config.seed);
}

HumanSet load_human_set(const HumanConfig& config, std::uint64_t seed) {
  HumanSet set;
  if (!config.corpus_dir) return set;
  CorpusIngest ingested = ingest(*config.corpus_dir);
  const std::size_t total = ingested.games.size();
  std::vector<CorpusGame> all = std::move(ingested.games);
  if (config.refchains) set.chains = load_refchains(*config.refchains, all);

  if (config.sample == "matched" && static_cast<std::size_t>(config.sample_size) < total) {
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    Rng rng(derive_seed(seed, "human-sample"));
    rng.shuffle(order);
    order.resize(static_cast<std::size_t>(config.sample_size));
    std::sort(order.begin(), order.end());
    for (std::size_t i : order) set.games.push_back(std::move(all[i]));
    set.sample = "matched:" + std::to_string(config.sample_size) + "/" + std::to_string(total);
  } else {
    set.games = std::move(all);
    set.sample = "all:" + std::to_string(total);
  }
  std::set<std::string> kept;
  for (const auto& g : set.games) kept.insert(g.game.game_id);
  std::erase_if(set.chains, [&](const RefChain& c) { return !kept.count(c.game_id); });
  return set;
}

std::vector<SystemMetrics> compute_campaign_metrics(const CampaignConfig& config, const std::vector<GameSpec>& games,
                                                    EmbeddingGateway& gateway, const ExtractionRules& rules) {
  std::map<std::string, std::string> versions;
  for (ModelTag tag : kModelTags) versions[std::string(to_string(tag))] = gateway.model_version(tag);

  std::vector<SystemMetrics> out;
  for (const auto& dyad : config.dyads) {
    SystemMetrics s;
    s.system = dyad.name;
    s.source = "self_play";
    s.prompt = std::string(to_string(dyad.prompt));
    s.anchor = dyad.anchor;
    s.rules_version = rules.version;
    s.refexp_source = "extracted";
    s.embedding_versions = versions;
    s.seed = config.seed;
    std::set<std::string> agents;
    for (const auto& game : games) {
      const fs::path path = config.runs_dir(dyad.name) / (game.game_id + ".json");
      if (!fs::exists(path)) continue;
      const Transcript t = transcript_from_json(read_json_file(path));
      if (t.metadata.contains("agents")) {
        for (const auto& a : t.metadata["agents"]) agents.insert(a.get<std::string>());
      }
      const auto refs = extract(t, rules, config.metrics.max_round);
      s.games.push_back(compute_game_metrics(t, game, refs, &gateway, config.metrics));
    }
    s.agents.assign(agents.begin(), agents.end());
    out.push_back(std::move(s));
  }

  if (config.human.corpus_dir) {
    const HumanSet human = load_human_set(config.human, config.seed);
    SystemMetrics s;
    s.system = "human";
    s.source = "human_corpus";
    s.anchor = "Human";
    s.agents = {"human"};
    s.rules_version = rules.version;
    s.refexp_source = config.human.refchains ? "gold_chains" : "extracted";
    s.embedding_versions = versions;
    s.sample = human.sample;
    s.seed = config.seed;
    const auto gold = flatten(human.chains);
    for (const auto& g : human.games) {
      const Transcript t = capped(g.transcript, config.metrics.max_round);
      std::vector<ReferringExpression> refs;
      if (config.human.refchains) {
        for (const auto& e : gold) {
          if (e.game_id == t.game_id) refs.push_back(e);
        }
      } else {
        refs = extract(t, rules, config.metrics.max_round);
      }
      s.games.push_back(compute_game_metrics(t, g.game, refs, &gateway, config.metrics));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_system_metrics(const std::vector<SystemMetrics>& systems, const fs::path& dir) {
  for (const auto& s : systems) write_json_file(dir / (s.system + ".json"), to_json(s));
}

}  // namespace photobook
