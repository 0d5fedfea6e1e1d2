#include <functional>
#include <set>
#include <fstream>
#include <map>

#include "doctest.h"
#include "photobook/corpus.hpp"
#include "photobook/serialization.hpp"
#include "support.hpp"

using namespace photobook;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path corpus_dir() { return testing::fixtures() / "corpus"; }

const CorpusIngest& fixture_ingest() {
  static const CorpusIngest ingest_result = ingest(corpus_dir());
  return ingest_result;
}

const CorpusGame& game(const std::string& id) {
  for (const auto& g : fixture_ingest().games) {
    if (g.game.game_id == id) return g;
  }
  FAIL("no game " << id);
  throw std::logic_error("unreachable");
}

json log_doc(const std::string& name) { return read_json_file(corpus_dir() / "logs" / name); }

/// Copies the fixture logs into a scratch dir, applying `edit` to one file.
void copy_logs(const testing::TempDir& dir, const std::string& name = "", const std::function<void(json&)>& edit = {}) {
  fs::create_directories(dir / "logs");
  for (const auto& f : list_json_files(corpus_dir() / "logs")) {
    json doc = read_json_file(f);
    if (f.filename() == name && edit) edit(doc);
    write_json_file(dir.path() / "logs" / f.filename(), doc);
  }
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("fixture ingests with stable ordering") {
    const auto& in = fixture_ingest();
    REQUIRE(in.games.size() == 5);
    CHECK(in.games[0].game.game_id == "101");
    CHECK(in.games[4].game.game_id == "105");
    for (const auto& g : in.games) {
      CHECK(g.transcript.provenance == Provenance::HumanReplay);
      CHECK(g.game.source == GameSource::HumanCorpus);
    }
  }

  TEST_CASE("per-round turns, words and scores match hand counts") {
    const json expected = read_json_file(corpus_dir() / "expected_counts.json");
    for (const auto& [gid, exp] : expected["games"].items()) {
      CAPTURE(gid);
      const auto& t = game(gid).transcript;
      REQUIRE(t.rounds.size() == exp["rounds"].size());
      int turns = 0, words = 0, score = 0;
      for (const auto& r : exp["rounds"]) {
        const int n = r["round_no"].get<int>();
        CAPTURE(n);
        CHECK(count_turns(t, n) == r["turns"].get<int>());
        CHECK(count_words(t, n) == r["words"].get<int>());
        CHECK(t.round(n).score == r["score"].get<int>());
        CHECK(t.round(n).missing_guess == r["missing_guess"].get<bool>());
        CHECK(t.round(n).beyond_cap == (n > 3));
        if (n <= 3) {
          turns += count_turns(t, n);
          words += count_words(t, n);
          score += *t.round(n).score;
        }
      }
      CHECK(turns == exp["turns_1_3"].get<int>());
      CHECK(words == exp["words_1_3"].get<int>());
      CHECK(score == exp["score_1_3"].get<int>());
    }
  }

  TEST_CASE("summary totals") {
    const json totals = read_json_file(corpus_dir() / "expected_counts.json")["totals"];
    const auto& s = fixture_ingest().summary.all_rounds;
    CHECK(s.games == totals["games"].get<int>());
    CHECK(s.rounds == totals["rounds"].get<int>());
    CHECK(s.utterances == totals["utterances"].get<int>());
    CHECK(s.tokens == totals["tokens"].get<long>());
    CHECK(s.vocabulary == totals["vocabulary"].get<int>());
    CHECK(s.clicks == totals["clicks"].get<int>());
    CHECK(fixture_ingest().summary.capped.rounds == 15);
  }

  TEST_CASE("parsing and re-exporting a log is lossless") {
    for (const auto& f : list_json_files(corpus_dir() / "logs")) {
      CAPTURE(f.filename().string());
      const std::string original = read_text_file(f);
      const auto record = parse_corpus_record(json::parse(original), f.filename().string());
      CHECK(dump_json(to_upstream_json(record)) == original);
    }
  }

  TEST_CASE("numeric message ids survive the round trip") {
    json doc = log_doc("game_104.json");
    doc["rounds"][0]["messages"][0]["message_id"] = 17;
    const auto record = parse_corpus_record(doc, "x");
    CHECK(record.rounds[0].messages[0].message_id == "17");
    CHECK(to_upstream_json(record) == doc);
  }

  TEST_CASE("a re-click overrides the earlier label") {
    const auto& g = game("102");
    const auto& round = g.record.rounds.at(1);
    std::map<std::string, std::set<Label>> labels;
    for (const auto& m : round.messages) {
      const auto c = parse_click(m);
      if (c && c->actor == Player::A) labels[c->image_id].insert(c->label);
    }
    bool reclicked = false;
    for (const auto& [img, ls] : labels) reclicked = reclicked || ls.size() == 2;
    CHECK(reclicked);
    const auto& rec = g.transcript.round(2);
    REQUIRE(rec.guess_a.has_value());
    CHECK(rec.guess_a->values == g.game.round(2).truth.a);
  }

  TEST_CASE("final guesses ride on each speaker's last text turn") {
    const auto& rec = game("101").transcript.round(1);
    int with_guesses = 0;
    for (const auto& t : rec.turns) with_guesses += t.guesses ? 1 : 0;
    CHECK(with_guesses == 2);
    for (const auto& t : rec.turns) CHECK(std::holds_alternative<Turn>(validate_turn(t.raw)));
  }

  TEST_CASE("a missing label is flagged and warned about") {
    const auto& rec = game("105").transcript.round(2);
    CHECK(rec.missing_guess);
    CHECK_FALSE(rec.guess_b.has_value());
    bool warned = false;
    for (const auto& w : fixture_ingest().warnings) warned = warned || (w.record_id == "105" && w.kind == "missing_guess");
    CHECK(warned);
  }

  TEST_CASE("utterances align to the speaker's next click") {
    const auto& g = game("101");
    REQUIRE_FALSE(g.alignments.empty());
    for (const auto& a : g.alignments) {
      const auto& assignment = g.game.round(a.round_no);
      CHECK(assignment.slot(a.slot.player, a.slot.index) == a.slot);
    }
  }

  TEST_CASE("capped drops later rounds") {
    const auto t = capped(game("101").transcript);
    CHECK(t.rounds.size() == 3);
    CHECK(capped(game("101").transcript, 4).rounds.size() == 4);
  }

  TEST_CASE("click parsing") {
    CorpusMessage m;
    m.type = "selection";
    m.text = "<com> dog.jpg";
    auto c = parse_click(m);
    REQUIRE(c);
    CHECK(c->label == Label::Common);
    CHECK(c->image_id == "dog.jpg");
    m.text = "<dif>";
    CHECK_FALSE(parse_click(m));
    m.text = "<maybe> dog.jpg";
    CHECK_FALSE(parse_click(m));
    m.type = "text";
    m.text = "<com> dog.jpg";
    CHECK_FALSE(parse_click(m));
  }

  TEST_CASE("malformed records name the offending record") {
    json doc = log_doc("game_103.json");
    SUBCASE("missing rounds") {
      doc.erase("rounds");
      CHECK_THROWS_AS(parse_corpus_record(doc, "f"), SchemaMismatch);
    }
    SUBCASE("bad speaker") {
      doc["rounds"][0]["messages"][0]["speaker"] = "C";
      try {
        parse_corpus_record(doc, "f");
        FAIL("expected SchemaMismatch");
      } catch (const SchemaMismatch& e) {
        CHECK(e.record_id() == doc["rounds"][0]["messages"][0]["message_id"].get<std::string>());
      }
    }
    SUBCASE("two images") {
      doc["rounds"][1]["images"]["B"].erase(0);
      CHECK_THROWS_AS(parse_corpus_record(doc, "f"), SchemaMismatch);
    }
    SUBCASE("common disagrees") {
      doc["rounds"][0]["common"] = json::array();
      CHECK_THROWS_WITH_AS(normalize(parse_corpus_record(doc, "f")), doctest::Contains("103/round 1"), SchemaMismatch);
    }
    SUBCASE("click on a foreign image") {
      for (auto& m : doc["rounds"][0]["messages"]) {
        if (m["type"] == "selection") {
          m["message"] = "<com> nowhere.jpg";
          break;
        }
      }
      CHECK_THROWS_WITH_AS(normalize(parse_corpus_record(doc, "f")), doctest::Contains("nowhere.jpg"), SchemaMismatch);
    }
    SUBCASE("not an object") {
      CHECK_THROWS_AS(parse_corpus_record(json::array(), "f"), SchemaMismatch);
    }
  }

  TEST_CASE("ingest rejects duplicates and empty sources") {
    testing::TempDir dir("corpus");
    copy_logs(dir, "game_105.json", [](json& d) { d["game_id"] = 101; });
    CHECK_THROWS_WITH_AS(ingest(dir.path()), doctest::Contains("duplicate"), SchemaMismatch);

    testing::TempDir empty("corpus-empty");
    CHECK_THROWS_AS(ingest(empty.path()), SchemaMismatch);
    CHECK_THROWS_AS(ingest(empty / "nope"), SchemaMismatch);
  }

  TEST_CASE("missing image assets are warnings, not errors") {
    testing::TempDir dir("corpus-img");
    copy_logs(dir);
    fs::create_directories(dir / "images");
    std::ofstream(dir / "images" / "dog_on_beach.jpg") << "x";
    const auto in = ingest(dir.path());
    int missing = 0;
    for (const auto& w : in.warnings) {
      if (w.kind == "missing_image_asset") {
        ++missing;
        CHECK(w.detail != "dog_on_beach.jpg");
      }
    }
    CHECK(missing > 0);
  }

  TEST_CASE("reference chains resolve against ingested games") {
    const auto chains = load_refchains(corpus_dir() / "refchains.json", fixture_ingest().games);
    REQUIRE(chains.size() == 3);
    CHECK(chains[0].game_id == "101");
    REQUIRE(chains[0].members.size() == 2);
    CHECK(chains[0].members[0].round_no == 1);
    CHECK(chains[0].members[1].round_no == 2);
    for (const auto& m : chains[0].members) {
      CHECK(m.link_source == LinkSource::Gold);
      CHECK(m.speaker == Player::A);
      CHECK(game("101").game.round(m.round_no).slot(Player::A, m.linked_image).image_id == "dog_on_beach.jpg");
    }
    CHECK(flatten(chains).size() == 6);
  }

  TEST_CASE("bad reference chains name the chain") {
    testing::TempDir dir("chains");
    json doc = read_json_file(corpus_dir() / "refchains.json");
    auto expect_bad = [&](const std::function<void(json&)>& edit, const char* needle) {
      json d = doc;
      edit(d);
      write_json_file(dir / "c.json", d);
      CHECK_THROWS_WITH_AS(load_refchains(dir / "c.json", fixture_ingest().games), doctest::Contains(needle),
                           SchemaMismatch);
    };
    expect_bad([](json& d) { d["chains"][0]["game_id"] = 999; }, "c101-dog-A");
    expect_bad([](json& d) { d["chains"][1]["members"][0]["message_id"] = "g101-m999"; }, "g101-m999");
    expect_bad([](json& d) { d["chains"][1]["image_id"] = "kite.jpg"; }, "kite.jpg");
    expect_bad([](json& d) { d["chains"][2]["speaker"] = "B"; }, "not by the chain's speaker");
    expect_bad([](json& d) { d["chains"][2]["members"][0]["round_nr"] = 9; }, "no round 9");
    CHECK_THROWS_AS(load_refchains(dir / "missing.json", fixture_ingest().games), SchemaMismatch);
  }
}
