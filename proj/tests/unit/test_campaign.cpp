#include "doctest.h"
#include "photobook/campaign.hpp"
#include "photobook/serialization.hpp"
#include "support.hpp"

using namespace photobook;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json stub_doc() { return read_json_file(testing::fixtures() / "campaign" / "stub_campaign.json"); }

CampaignConfig stub_config(const fs::path& out) {
  CampaignConfig c = parse_campaign_config(stub_doc(), testing::fixtures() / "campaign");
  c.output_dir = out;
  return c;
}

std::string read_all_transcripts(const CampaignConfig& c) {
  std::string all;
  for (const auto& d : c.dyads) {
    for (const auto& f : list_json_files(c.runs_dir(d.name))) all += read_text_file(f);
  }
  return all;
}

}  // namespace

TEST_SUITE("campaign") {
  TEST_CASE("stub config parses with paths resolved against its directory") {
    testing::TempDir dir("cfg");
    const auto c = stub_config(dir.path());
    CHECK(c.seed == 20240601);
    REQUIRE(c.dyads.size() == 2);
    CHECK(c.dyads[0].anchor == "GPT4.1");
    CHECK(c.dyads[1].agent_a.oracle.accuracy == 0.7);
    CHECK(c.limits.max_turns == 24);
    CHECK(c.human.corpus_dir == testing::fixtures() / "campaign" / "../corpus");
    CHECK(resolve_games(c).size() == 3);
    CHECK(c.runs_dir("x") == dir.path() / "runs" / "x");
  }

  TEST_CASE("config errors") {
    const fs::path base = testing::fixtures() / "campaign";
    auto expect_bad = [&](const std::function<void(json&)>& edit) {
      json d = stub_doc();
      edit(d);
      CHECK_THROWS_AS(parse_campaign_config(d, base), ConfigError);
    };
    expect_bad([](json& d) { d["colour"] = "red"; });
    expect_bad([](json& d) { d["schema"] = "photobook.config/9"; });
    expect_bad([](json& d) { d["parallelism"] = 0; });
    expect_bad([](json& d) { d["limits"]["max_turns"] = 0; });
    expect_bad([](json& d) { d["games"]["source"] = "dreamt"; });
    expect_bad([](json& d) { d["dyads"][1]["name"] = "oracle-exact"; });
    expect_bad([](json& d) { d["dyads"][0]["name"] = "human"; });
    expect_bad([](json& d) { d["dyads"][0]["name"] = "../escape"; });
    expect_bad([](json& d) { d["dyads"][0]["prompt"] = "fancy"; });
    expect_bad([](json& d) { d["dyads"][0]["agents"]["A"]["prompt"] = "engineered"; });
    expect_bad([](json& d) { d["dyads"][0]["agents"]["A"]["api_key"] = "sk-secret"; });
    expect_bad([](json& d) { d["dyads"][0]["agents"]["A"] = {{"kind", "replay"}}; });
    expect_bad([](json& d) { d["embedding"]["backend"] = "http"; });
    expect_bad([](json& d) { d["metrics"]["wnr_pairing"] = "sideways"; });
    expect_bad([](json& d) { d["metrics"]["kl_epsilon"] = 0; });
    expect_bad([](json& d) { d["human"]["sample"] = "some"; });
    expect_bad([](json& d) { d["compare_prompts"] = json::array({{{"base", "oracle-exact"}, {"tuned", "nobody"}}}); });
    expect_bad([](json& d) { d["seed"] = "lots"; });
    CHECK_THROWS_AS(load_campaign_config("/nonexistent/config.json"), ConfigError);
  }

  TEST_CASE("play_game caps the number of rounds") {
    GameSpec g = testing::small_game();
    g.rounds.push_back(testing::assignment(4, {"p", "q", "r"}, {"p", "s", "t"}));
    OracleOptions o;
    OracleAgent a(o, {{1, g.rounds[0].truth.a}, {2, g.rounds[1].truth.a}, {3, g.rounds[2].truth.a}});
    OracleAgent b(o, {{1, g.rounds[0].truth.b}, {2, g.rounds[1].truth.b}, {3, g.rounds[2].truth.b}});
    const auto played = play_game(g, a, b, TurnLimits{});
    CHECK(played.transcript.rounds.size() == 3);
    for (const auto& r : played.transcript.rounds) CHECK(r.score == 6);
    CHECK_FALSE(played.transcript.rounds[0].elapsed_ms.has_value());
  }

  TEST_CASE("run, skip on re-run, quarantine failures") {
    testing::TempDir dir("run");
    CampaignConfig c = stub_config(dir.path());
    const auto games = resolve_games(c);
    auto first = run_campaign(c, games);
    CHECK(first.count(GameStatus::Completed) == 6);
    CHECK(first.agent_calls() > 0);
    CHECK(fs::exists(c.runs_dir("oracle-exact") / "fx002.json"));

    const auto again = run_campaign(c, games);
    CHECK(again.count(GameStatus::Skipped) == 6);
    CHECK(again.agent_calls() == 0);

    fs::remove(c.runs_dir("oracle-noisy") / "fx003.json");
    AgentFactory failing = [](const DyadConfig&, Player, const GameSpec& g, std::uint64_t) -> std::unique_ptr<Agent> {
      if (g.game_id == "fx003") return std::make_unique<ScriptedAgent>(std::vector<std::string>{});
      throw AgentFailure("should not be called");
    };
    const auto third = run_campaign(c, games, failing);
    CHECK(third.count(GameStatus::Skipped) == 5);
    CHECK(third.count(GameStatus::Quarantined) == 1);
    CHECK(third.outcomes.back().game_id == "fx003");
    CHECK(fs::exists(c.runs_dir("oracle-noisy") / "quarantine" / "fx003.json"));
    CHECK_FALSE(fs::exists(c.runs_dir("oracle-noisy") / "fx003.json"));

    // a later successful run clears the quarantine record
    const auto fourth = run_campaign(c, games);
    CHECK(fourth.count(GameStatus::Completed) == 1);
    CHECK_FALSE(fs::exists(c.runs_dir("oracle-noisy") / "quarantine" / "fx003.json"));
  }

  TEST_CASE("unsafe game ids are quarantined without touching the disk") {
    testing::TempDir dir("unsafe");
    CampaignConfig c = stub_config(dir.path());
    GameSpec g = testing::small_game("../evil");
    const auto r = run_campaign(c, {g});
    CHECK(r.count(GameStatus::Quarantined) == 2);
    CHECK_FALSE(fs::exists(dir.path() / "evil.json"));
  }

  TEST_CASE("parallel play writes the same transcripts as sequential play") {
    testing::TempDir one("seq"), two("par");
    CampaignConfig a = stub_config(one.path());
    CampaignConfig b = stub_config(two.path());
    b.parallelism = 4;
    const auto games = resolve_games(a);
    run_campaign(a, games);
    run_campaign(b, games);
    CHECK(read_all_transcripts(a) == read_all_transcripts(b));
  }

  TEST_CASE("different seeds change noisy play") {
    testing::TempDir one("s1"), two("s2");
    CampaignConfig a = stub_config(one.path());
    CampaignConfig b = stub_config(two.path());
    b.seed = a.seed + 1;
    const auto games = resolve_games(a);
    run_campaign(a, games);
    run_campaign(b, games);
    CHECK(read_all_transcripts(a) != read_all_transcripts(b));
  }

  TEST_CASE("human sample modes") {
    HumanConfig h;
    h.corpus_dir = testing::fixtures() / "corpus";
    h.refchains = testing::fixtures() / "corpus" / "refchains.json";
    auto all = load_human_set(h, 1);
    CHECK(all.games.size() == 5);
    CHECK(all.sample == "all:5");
    CHECK(all.chains.size() == 3);
    h.sample = "matched";
    h.sample_size = 2;
    const auto m1 = load_human_set(h, 1);
    const auto m2 = load_human_set(h, 1);
    REQUIRE(m1.games.size() == 2);
    CHECK(m1.sample == "matched:2/5");
    CHECK(m1.games[0].game.game_id == m2.games[0].game.game_id);
    CHECK(m1.games[0].game.game_id < m1.games[1].game.game_id);
    for (const auto& c : m1.chains) {
      CHECK((c.game_id == m1.games[0].game.game_id || c.game_id == m1.games[1].game.game_id));
    }
    CHECK(load_human_set(HumanConfig{}, 1).games.empty());
  }

  TEST_CASE("campaign metrics cover every dyad and the human rows") {
    testing::TempDir dir("metrics");
    CampaignConfig c = stub_config(dir.path());
    const auto games = resolve_games(c);
    run_campaign(c, games);
    EmbeddingGateway gw(make_embedding_backend(c.embedding));
    const auto systems = compute_campaign_metrics(c, games, gw, ExtractionRules::builtin());
    REQUIRE(systems.size() == 3);
    CHECK(systems[0].system == "oracle-exact");
    CHECK(systems[0].games.size() == 3);
    CHECK(systems[0].agents.size() == 1);
    CHECK(systems[2].system == "human");
    CHECK(systems[2].refexp_source == "gold_chains");
    CHECK(systems[2].games.size() == 5);
    for (const auto& g : systems[0].games) {
      CHECK(g.total_score == 18);
      CHECK(g.dialogue_embedding.has_value());
    }
    write_system_metrics(systems, c.metrics_dir());
    CHECK(load_system_metrics(c.metrics_dir()).size() == 3);
  }
}
