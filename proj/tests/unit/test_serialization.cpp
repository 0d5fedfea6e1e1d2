#include <fstream>

#include "doctest.h"
#include "photobook/serialization.hpp"
#include "support.hpp"

using namespace photobook;
using nlohmann::json;

namespace {

Transcript sample_transcript() {
  Transcript t;
  t.game_id = "g1";
  t.system = "unit";
  t.metadata = {{"seed", 3}, {"elapsed_ms", 12.5}};
  RoundRecord r;
  r.round_no = 1;
  Turn a;
  a.turn_no = 1;
  a.speaker = Player::A;
  a.message = "Image 1 shows a dog";
  a.reference = 1;
  a.raw = "{}";
  a.response_id = "resp-1";
  Turn b;
  b.turn_no = 2;
  b.speaker = Player::B;
  b.message = "done";
  b.guesses = parse_guess_string("CDC");
  r.turns = {a, b};
  r.guess_b = b.guesses;
  r.score = 2;
  r.missing_guess = true;
  r.elapsed_ms = 4.0;
  r.events.push_back({EventKind::Repair, Player::A, 1, 1, "not_an_object", "garbage"});
  t.rounds.push_back(r);
  return t;
}

}  // namespace

TEST_SUITE("serialization") {
  TEST_CASE("game specs round-trip") {
    const auto g = testing::small_game();
    const GameSpec back = game_from_json(to_json(g));
    CHECK(back.game_id == g.game_id);
    CHECK(back.source == g.source);
    CHECK(back.rounds == g.rounds);
    CHECK(dump_json(to_json(back)) == dump_json(to_json(g)));
  }

  TEST_CASE("game spec truth is derived when absent and checked when present") {
    json doc = to_json(testing::small_game());
    for (auto& r : doc["rounds"]) r.erase("truth");
    CHECK(game_from_json(doc).rounds == testing::small_game().rounds);
    doc = to_json(testing::small_game());
    doc["rounds"][0]["truth"]["A"] = "DDD";
    CHECK_THROWS_AS(game_from_json(doc), InvalidGameSpec);
  }

  TEST_CASE("schema errors") {
    json doc = to_json(testing::small_game());
    json wrong = doc;
    wrong["schema"] = "photobook.gamespec/0";
    CHECK_THROWS_AS(game_from_json(wrong), SchemaError);
    wrong = doc;
    wrong["rounds"][0]["images"]["A"] = json::array({"x", "y"});
    CHECK_THROWS_AS(game_from_json(wrong), SchemaError);
    wrong = doc;
    wrong["source"] = "dream";
    CHECK_THROWS_AS(game_from_json(wrong), SchemaError);
    wrong = doc;
    wrong.erase("game_id");
    CHECK_THROWS_AS(game_from_json(wrong), SchemaError);
    CHECK_THROWS_AS(game_from_json(json::array()), SchemaError);
    CHECK_THROWS_AS(transcript_from_json(doc), SchemaError);
  }

  TEST_CASE("transcripts round-trip") {
    const Transcript t = sample_transcript();
    const Transcript back = transcript_from_json(to_json(t));
    REQUIRE(back.rounds.size() == 1);
    CHECK(back.rounds[0].turns == t.rounds[0].turns);
    CHECK(back.rounds[0].events == t.rounds[0].events);
    CHECK(back.rounds[0].score == 2);
    CHECK(back.rounds[0].missing_guess);
    CHECK_FALSE(back.rounds[0].guess_a.has_value());
    CHECK(back.rounds[0].guess_b == t.rounds[0].guess_b);
    CHECK(back.metadata == t.metadata);
    CHECK(dump_json(to_json(back)) == dump_json(to_json(t)));
  }

  TEST_CASE("timing can be dropped for byte comparisons") {
    const json j = to_json(sample_transcript(), false);
    CHECK_FALSE(j["rounds"][0].contains("elapsed_ms"));
    CHECK_FALSE(j["metadata"].contains("elapsed_ms"));
    CHECK(j["metadata"]["seed"] == 3);
  }

  TEST_CASE("transcript lookup by round") {
    const Transcript t = sample_transcript();
    CHECK(t.round(1).turns.size() == 2);
    CHECK_THROWS_AS(t.round(2), UnknownRound);
  }

  TEST_CASE("refexp documents round-trip with scope") {
    RefexpDocument doc;
    doc.rules_version = "v";
    ReferringExpression e;
    e.game_id = "g";
    e.text = "a dog";
    e.span_end = 5;
    e.linked_image = 2;
    e.link_source = LinkSource::Gold;
    e.rule = "c1";
    doc.expressions = {e};
    doc.scope = std::set<RoundKey>{{"g", 1}, {"g", 2}};
    const auto back = refexp_document_from_json(to_json(doc));
    CHECK(back.rules_version == "v");
    CHECK(back.expressions == doc.expressions);
    CHECK(back.scope == doc.scope);

    json bad = to_json(doc);
    bad["expressions"][0]["linked_image"] = 4;
    CHECK_THROWS_AS(refexp_document_from_json(bad), SchemaError);
  }

  TEST_CASE("dump_json sorts keys, ends with a newline, and survives invalid UTF-8") {
    const json j = {{"b", 1}, {"a", std::string("ok\xff")}};
    const std::string s = dump_json(j);
    CHECK(s.find("\"a\"") < s.find("\"b\""));
    CHECK(s.back() == '\n');
    CHECK(s.find("\xef\xbf\xbd") != std::string::npos);
  }

  TEST_CASE("atomic writes leave no temporaries") {
    testing::TempDir dir("atomic");
    const auto path = dir / "sub" / "x.json";
    write_json_file(path, json{{"k", 1}});
    write_json_file(path, json{{"k", 2}});
    CHECK(read_json_file(path)["k"] == 2);
    int entries = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(path.parent_path())) ++entries;
    CHECK(entries == 1);
    CHECK_THROWS_AS(read_json_file(dir / "missing.json"), SchemaError);
    std::ofstream(dir / "bad.json") << "{";
    CHECK_THROWS_AS(read_json_file(dir / "bad.json"), SchemaError);
  }

  TEST_CASE("listing and loading games") {
    testing::TempDir dir("games");
    write_json_file(dir / "b.json", to_json(testing::small_game("b")));
    write_json_file(dir / "a.json", to_json(testing::small_game("a")));
    std::ofstream(dir / "notes.txt") << "ignored";
    std::filesystem::create_directories(dir / "nested.json");
    const auto files = list_json_files(dir.path());
    REQUIRE(files.size() == 2);
    CHECK(files[0].filename() == "a.json");
    const auto games = load_games(dir.path());
    CHECK(games[1].game_id == "b");

    write_json_file(dir / "pair.json", json::array({to_json(testing::small_game("p")), to_json(testing::small_game("q"))}));
    CHECK(load_games(dir / "pair.json").size() == 2);

    const auto fixtures = load_games(testing::fixtures() / "games");
    REQUIRE(fixtures.size() == 3);
    CHECK(fixtures[0].game_id == "fx001");
  }
}
