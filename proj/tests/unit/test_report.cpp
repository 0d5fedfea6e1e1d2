#include <cmath>
#include <sstream>

#include "doctest.h"
#include "photobook/report.hpp"
#include "photobook/rng.hpp"
#include "photobook/serialization.hpp"
#include "support.hpp"

using namespace photobook;
using nlohmann::json;

namespace {

GameMetrics game_with(const std::string& id, std::vector<std::pair<int, bool>> rounds, std::uint64_t seed) {
  GameMetrics g;
  g.game_id = id;
  int n = 1;
  for (const auto& [score, same] : rounds) {
    RoundMetrics r;
    r.game_id = id;
    r.round_no = n++;
    r.score = score;
    r.same_gt = same;
    r.words = 10 * r.round_no;
    r.turns = 4;
    r.pct_change_words = pct_change(10, r.words);
    g.rounds.push_back(r);
    g.total_score += score;
    g.total_words += r.words;
    g.total_turns += r.turns;
    g.same_gt_rounds += same ? 1 : 0;
  }
  Rng rng(seed);
  std::vector<double> e(4);
  for (double& x : e) x = rng.normal();
  g.dialogue_embedding = e;
  return g;
}

SystemMetrics make_system(const std::string& name, std::uint64_t seed) {
  SystemMetrics s;
  s.system = name;
  s.anchor = "GPT4.1";
  s.seed = seed;
  s.embedding_versions = {{"sentence", "mock-sentence/1"}};
  for (int i = 0; i < 3; ++i) {
    s.games.push_back(game_with(name + "-g" + std::to_string(i), {{6, i == 0}, {4, false}, {5, true}}, seed + i));
  }
  return s;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("inflation delta") {
    const std::vector<ScoredRound> rounds{{"g", 1, 5, GtRelation::SameGT},
                                          {"g", 2, 4, GtRelation::DifferentGT},
                                          {"h", 1, 5, GtRelation::SameGT},
                                          {"h", 2, 4, GtRelation::DifferentGT}};
    const auto r = inflation_analysis("s", rounds);
    CHECK(r.same_gt_mean == 5.0);
    CHECK(r.different_gt_mean == 4.0);
    CHECK(r.delta == 1.0);
    CHECK(r.same_gt_rounds == 2);
  }

  TEST_CASE("inflation needs both groups") {
    const std::vector<ScoredRound> rounds{{"g", 1, 5, GtRelation::SameGT}};
    CHECK_THROWS_AS(inflation_analysis("s", rounds), EmptyGroup);
    CHECK_THROWS_AS(inflation_analysis("s", std::vector<ScoredRound>{}), EmptyGroup);
  }

  TEST_CASE("scored rounds come from per-round metrics") {
    const auto s = make_system("x", 1);
    const auto rounds = scored_rounds(s);
    REQUIRE(rounds.size() == 9);
    CHECK(rounds[0].relation == GtRelation::SameGT);
    CHECK(rounds[1].relation == GtRelation::DifferentGT);
    CHECK(rounds[2].score == 5);
  }

  TEST_CASE("number formatting") {
    CHECK(format_number(1.0) == "1.000000");
    CHECK(format_number(-0.0000001) == "0.000000");
    CHECK(format_number(std::nullopt) == "");
    CHECK(format_number(std::nan("")) == "");
    CHECK(format_number(INFINITY) == "");
  }

  TEST_CASE("metrics json round-trips") {
    const auto s = make_system("x", 1);
    const auto back = system_metrics_from_json(to_json(s));
    CHECK(back.system == "x");
    CHECK(back.games.size() == 3);
    CHECK(back.games[0].dialogue_embedding == s.games[0].dialogue_embedding);
    CHECK(dump_json(to_json(back)) == dump_json(to_json(s)));
    json bad = to_json(s);
    bad["schema"] = "other";
    CHECK_THROWS_AS(system_metrics_from_json(bad), SchemaError);
  }

  TEST_CASE("report is a pure function of its inputs") {
    const std::vector<SystemMetrics> systems{make_system("human", 10), make_system("dyad", 20)};
    const std::vector<SystemMetrics> reversed{systems[1], systems[0]};
    const auto a = build_report(systems, {{"dyad", "human"}});
    const auto b = build_report(reversed, {{"dyad", "human"}});
    CHECK(a == b);
    for (const char* f : {"games.csv", "rounds.csv", "game_level.csv", "round_trajectories.csv", "energy_distance.csv",
                          "inflation.csv", "prompt_comparison.csv", "manifest.json"}) {
      CAPTURE(f);
      CHECK(a.count(f) == 1);
    }
    const json manifest = json::parse(a.at("manifest.json"));
    CHECK(manifest["schema"] == kReportSchema);
    CHECK(manifest["files"].size() == a.size() - 1);
  }

  TEST_CASE("csv headers") {
    const auto files = build_report({make_system("human", 10), make_system("dyad", 20)}, {});
    CHECK(first_line(files.at("inflation.csv")) ==
          "system,anchor,same_gt_rounds,different_gt_rounds,same_gt_mean,different_gt_mean,delta,status,"
          "published_delta,published_delta_alt");
    CHECK(first_line(files.at("energy_distance.csv")) ==
          "system,reference,n_system,n_reference,cross_mean,within_reference,within_system,raw,percent,"
          "published_percent,status");
    // same rounds {6,5,5,5}, different {4,6,4,6,4}
    CHECK(files.at("inflation.csv").find("dyad,GPT4.1,4,5,5.250000,4.800000,0.450000,ok") != std::string::npos);
  }

  TEST_CASE("energy status column") {
    auto human = make_system("human", 10);
    auto dyad = make_system("dyad", 20);
    auto files = build_report({human, dyad}, {});
    CHECK(files.at("energy_distance.csv").find(",ok\n") != std::string::npos);

    dyad.games.resize(1);
    files = build_report({human, dyad}, {});
    CHECK(files.at("energy_distance.csv").find("too_few_samples") != std::string::npos);

    files = build_report({make_system("dyad", 20)}, {});
    CHECK(files.at("energy_distance.csv").find("no_reference") != std::string::npos);

    dyad = make_system("dyad", 20);
    dyad.games[0].dialogue_embedding->push_back(1.0);
    files = build_report({human, dyad}, {});
    CHECK(files.at("energy_distance.csv").find("dim_mismatch") != std::string::npos);
  }

  TEST_CASE("an empty inflation group is reported, not fatal") {
    auto s = make_system("flat", 1);
    for (auto& g : s.games) {
      for (auto& r : g.rounds) r.same_gt = false;
    }
    const auto files = build_inflation_report({s});
    CHECK(files.at("inflation.csv").find("empty_group") != std::string::npos);
  }

  TEST_CASE("reports are written atomically to disk") {
    testing::TempDir dir("report");
    write_report({{"a.csv", "x\n"}}, dir / "r");
    CHECK(read_text_file(dir / "r" / "a.csv") == "x\n");
  }
}
