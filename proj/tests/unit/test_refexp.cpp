#include <set>

#include "doctest.h"
#include "photobook/refexp.hpp"
#include "photobook/serialization.hpp"
#include "support.hpp"

using namespace photobook;
using nlohmann::json;

namespace {

Turn turn(const std::string& message, std::optional<int> reference = std::nullopt, Player speaker = Player::A) {
  Turn t;
  t.speaker = speaker;
  t.message = message;
  t.reference = reference;
  t.turn_no = 1;
  return t;
}

std::vector<ReferringExpression> run(const std::string& message, std::optional<int> reference = std::nullopt) {
  return extract(turn(message, reference), ExtractionRules::builtin(), "g", 1);
}

ReferringExpression link(const std::string& game, int round, int turn_no, int image) {
  ReferringExpression e;
  e.game_id = game;
  e.round_no = round;
  e.turn_no = turn_no;
  e.linked_image = image;
  return e;
}

}  // namespace

TEST_SUITE("refexp") {
  TEST_CASE("builtin rules load") {
    const auto& r = ExtractionRules::builtin();
    CHECK(r.version == "refexp-rules/1");
    CHECK(r.rules.size() >= 5);
    CHECK(r.index_words.at("third") == 3);
  }

  TEST_CASE("image k predicate") {
    const auto e = run("Image 2 shows a red car parked by the curb.");
    REQUIRE(e.size() == 1);
    CHECK(e[0].linked_image == 2);
    CHECK(e[0].text == "a red car parked by the curb");
    CHECK(e[0].link_source == LinkSource::PatternMatch);
    CHECK(e[0].rule == "image_k_predicate");
    const std::string msg = "Image 2 shows a red car parked by the curb.";
    CHECK(msg.substr(e[0].span_begin, e[0].span_end - e[0].span_begin) == e[0].text);
  }

  TEST_CASE("spans point into the original message across clauses") {
    const std::string msg = "Hello! My image 3 is a kitchen with a window. Image 1: two dogs playing";
    const auto e = extract(turn(msg), ExtractionRules::builtin(), "g", 1);
    REQUIRE(e.size() == 2);
    for (const auto& x : e) CHECK(msg.substr(x.span_begin, x.span_end - x.span_begin) == x.text);
    CHECK(e[0].linked_image == 3);
    CHECK(e[1].linked_image == 1);
    CHECK(e[1].text == "two dogs playing");
  }

  TEST_CASE("ordinal and prepositional forms") {
    auto e = run("In my second picture there is a horse in a field");
    REQUIRE(e.size() == 1);
    CHECK(e[0].linked_image == 2);
    CHECK(e[0].text == "a horse in a field");

    e = run("The third photo shows a clock tower at dusk");
    REQUIRE(e.size() == 1);
    CHECK(e[0].linked_image == 3);

    e = run("For image 1, I see a surfer on a wave");
    REQUIRE(e.size() == 1);
    CHECK(e[0].linked_image == 1);
    CHECK(e[0].text == "a surfer on a wave");
  }

  TEST_CASE("reference field decides and conflicts are dropped") {
    auto e = run("Image 2 shows a boat on a lake", 2);
    REQUIRE(e.size() == 1);
    CHECK(e[0].link_source == LinkSource::ReferenceField);

    CHECK(run("Image 2 shows a boat on a lake", 3).empty());

    e = run("It shows a man riding a bicycle", 3);
    REQUIRE(e.size() == 1);
    CHECK(e[0].linked_image == 3);
    CHECK(e[0].rule == "referenced_subject_predicate");
    CHECK(run("It shows a man riding a bicycle").empty());

    e = run("I have an image of a pizza with olives", 1);
    REQUIRE(e.size() == 1);
    CHECK(e[0].text == "a pizza with olives");
  }

  TEST_CASE("abstentions and rejections") {
    CHECK(run("Okay!").empty());
    CHECK(run("Ready to finalize my guesses.").empty());
    CHECK(run("Is your image 2 a dog on a beach?").empty());
    CHECK(run("Image 1 is common.").empty());
    CHECK(run("Image 3 is different for me.").empty());
    CHECK(run("Image 2 is in both our sets, the red car").empty());
    CHECK(run("Image 1 is a dog").empty() == false);
    CHECK(run("Image 1 is dogs").empty());  // below the minimum description length
  }

  TEST_CASE("a clause naming two images yields nothing") {
    CHECK(run("Image 1 and image 3 show the same beach").empty());
    CHECK(run("Image 1 shows a cat next to what looks like image 2").empty());
  }

  TEST_CASE("a clause yields at most one expression") {
    // property over the fixture: every (turn, clause) gives 0 or 1 expression
    const auto transcripts = load_transcripts(testing::fixtures() / "refexp" / "transcripts");
    for (const auto& t : transcripts) {
      const auto exprs = extract(t, ExtractionRules::builtin());
      std::set<std::tuple<int, int, std::size_t>> starts;
      for (const auto& e : exprs) {
        CHECK(e.linked_image >= 1);
        CHECK(e.linked_image <= 3);
        CHECK(e.span_begin < e.span_end);
        CHECK(starts.insert({e.round_no, e.turn_no, e.span_begin}).second);
      }
    }
  }

  TEST_CASE("rules are data: loading, errors, and removing a rule") {
    json doc = json::parse(R"j({
      "version": "t/1",
      "index_words": {"1": 1, "2": 2, "3": 3},
      "rules": [{"name": "pic", "pattern": "pic (1|2|3): (.+)", "link": "capture", "index_group": 1, "span_group": 2}]
    })j");
    auto rules = ExtractionRules::from_json(doc);
    auto e = extract(turn("pic 3: a tall tree"), rules, "g", 1);
    REQUIRE(e.size() == 1);
    CHECK(e[0].linked_image == 3);
    CHECK(extract(turn("pic 3: a tall tree"), rules.without("pic"), "g", 1).empty());

    doc["rules"][0]["pattern"] = "pic (1|2";
    CHECK_THROWS_AS(ExtractionRules::from_json(doc), RulesError);
    doc["rules"][0]["pattern"] = "pic (1|2|3): (.+)";
    doc["rules"][0]["link"] = "telepathy";
    CHECK_THROWS_AS(ExtractionRules::from_json(doc), RulesError);
    doc["rules"][0]["link"] = "capture";
    doc["rules"][0]["span_group"] = 7;
    CHECK_THROWS_AS(ExtractionRules::from_json(doc), RulesError);
    CHECK_THROWS_AS(ExtractionRules::from_json(json::array()), RulesError);
    CHECK_THROWS_AS(ExtractionRules::load("/nonexistent/rules.json"), RulesError);
  }

  TEST_CASE("link-level scoring") {
    const std::vector<ReferringExpression> gold{link("g", 1, 1, 1), link("g", 1, 2, 3), link("g", 1, 3, 2),
                                                link("g", 1, 4, 1)};
    const std::vector<ReferringExpression> pred{link("g", 1, 1, 1), link("g", 1, 2, 3), link("g", 1, 2, 3)};
    const auto s = validate(pred, gold);
    CHECK(s.true_positives == 2);
    CHECK(s.false_positives == 0);
    CHECK(s.false_negatives == 2);
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 0.5);
    CHECK(s.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }

  TEST_CASE("wrong image is both a false positive and a false negative") {
    const auto s = validate({link("g", 1, 1, 2)}, {link("g", 1, 1, 1)});
    CHECK(s.false_positives == 1);
    CHECK(s.false_negatives == 1);
    CHECK(s.f1 == 0.0);
  }

  TEST_CASE("scope handling and key mismatches") {
    const std::vector<ReferringExpression> gold{link("g", 1, 1, 1)};
    CHECK_THROWS_AS(validate({link("g", 2, 1, 1)}, gold), KeyMismatch);
    std::set<RoundKey> scope{{"g", 1}, {"g", 2}};
    const auto s = validate({link("g", 2, 1, 1), link("h", 1, 1, 1)}, gold, scope);
    CHECK(s.false_positives == 1);  // g/2 is annotated (empty); h/1 is ignored
    CHECK_THROWS_AS(validate({}, {link("z", 1, 1, 1)}, scope), KeyMismatch);
  }

  TEST_CASE("scores from counts handle empty denominators") {
    const auto s = scores_from_counts(0, 0, 0);
    CHECK(s.precision == 0.0);
    CHECK(s.recall == 0.0);
    CHECK(s.f1 == 0.0);
  }

  TEST_CASE("transcript extraction honours max_round") {
    Transcript t;
    t.game_id = "g";
    for (int r = 1; r <= 4; ++r) {
      RoundRecord rec;
      rec.round_no = r;
      rec.turns.push_back(turn("Image 1 shows a big brown dog"));
      t.rounds.push_back(rec);
    }
    CHECK(extract(t, ExtractionRules::builtin()).size() == 3);
    CHECK(extract(t, ExtractionRules::builtin(), 4).size() == 4);
  }

  TEST_CASE("shipped rules on the gold fixture") {
    const auto gold = refexp_document_from_json(read_json_file(testing::fixtures() / "refexp" / "gold.json"));
    REQUIRE(gold.scope.has_value());
    std::vector<ReferringExpression> predicted;
    for (const auto& t : load_transcripts(testing::fixtures() / "refexp" / "transcripts")) {
      auto e = extract(t, ExtractionRules::builtin());
      predicted.insert(predicted.end(), e.begin(), e.end());
    }
    const auto s = validate(predicted, gold.expressions, gold.scope);
    CHECK(s.precision >= 0.95);
    CHECK(s.true_positives + s.false_negatives == static_cast<int>(gold.expressions.size()));
  }
}
