#include "photobook/serialization.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace photobook {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void expect_schema(const json& doc, const char* schema) {
  if (!doc.is_object()) throw SchemaError(std::string("expected a ") + schema + " object");
  const auto it = doc.find("schema");
  if (it == doc.end() || !it->is_string() || it->get<std::string>() != schema) {
    throw SchemaError(std::string("document is not ") + schema);
  }
}

json guess_json(const std::optional<GuessVector>& g) {
  return g ? json(to_string(*g)) : json(nullptr);
}

std::optional<GuessVector> guess_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  auto parsed = parse_guess_string(j.get<std::string>());
  if (!parsed) throw SchemaError("bad guess string '" + j.get<std::string>() + "'");
  return parsed;
}

Player player_from(const json& j) {
  auto p = parse_player(j.get<std::string>());
  if (!p) throw SchemaError("bad player '" + j.get<std::string>() + "'");
  return *p;
}

LabelTriple labels_from(const json& j) {
  auto g = parse_guess_string(j.get<std::string>());
  if (!g) throw SchemaError("bad label string '" + j.get<std::string>() + "'");
  return g->values;
}

ImageSet images_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw SchemaError("a player's round set must list exactly 3 images");
  return {j[0].get<std::string>(), j[1].get<std::string>(), j[2].get<std::string>()};
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw SchemaError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

json to_json(const GameSpec& game) {
  json rounds = json::array();
  for (const auto& r : game.rounds) {
    rounds.push_back({{"round_no", r.round_no},
                      {"images", {{"A", r.images_a}, {"B", r.images_b}}},
                      {"truth", {{"A", to_string(GuessVector{r.truth.a})}, {"B", to_string(GuessVector{r.truth.b})}}}});
  }
  return {{"schema", kGameSpecSchema},
          {"game_id", game.game_id},
          {"source", std::string(to_string(game.source))},
          {"rounds", rounds}};
}

GameSpec game_from_json(const json& doc) {
  expect_schema(doc, kGameSpecSchema);
  GameSpec game = guarded("gamespec", [&] {
    GameSpec g;
    g.game_id = doc.at("game_id").get<std::string>();
    const auto source = parse_game_source(doc.value("source", "fixture"));
    if (!source) throw SchemaError(g.game_id + ": unknown source");
    g.source = *source;
    for (const auto& r : doc.at("rounds")) {
      RoundAssignment a;
      a.round_no = r.at("round_no").get<int>();
      a.images_a = images_from(r.at("images").at("A"));
      a.images_b = images_from(r.at("images").at("B"));
      if (r.contains("truth")) {
        a.truth.a = labels_from(r.at("truth").at("A"));
        a.truth.b = labels_from(r.at("truth").at("B"));
      } else {
        a.truth = derive_truth(a.images_a, a.images_b);
      }
      g.rounds.push_back(std::move(a));
    }
    return g;
  });
  validate(game);
  return game;
}

json to_json(const Turn& turn) {
  json j = {{"turn_no", turn.turn_no},
            {"speaker", std::string(to_string(turn.speaker))},
            {"message", turn.message},
            {"reference", turn.reference ? json(*turn.reference) : json(nullptr)},
            {"guesses", guess_json(turn.guesses)},
            {"raw", turn.raw}};
  if (!turn.source_id.empty()) j["source_id"] = turn.source_id;
  if (!turn.response_id.empty()) j["response_id"] = turn.response_id;
  return j;
}

Turn turn_from_json(const json& j) {
  return guarded("turn", [&] {
    Turn t;
    t.turn_no = j.at("turn_no").get<int>();
    t.speaker = player_from(j.at("speaker"));
    t.message = j.at("message").get<std::string>();
    if (!j.at("reference").is_null()) t.reference = j.at("reference").get<int>();
    t.guesses = guess_from(j.at("guesses"));
    t.raw = j.value("raw", "");
    t.source_id = j.value("source_id", "");
    t.response_id = j.value("response_id", "");
    return t;
  });
}

json to_json(const Transcript& transcript, bool include_timing) {
  json rounds = json::array();
  for (const auto& r : transcript.rounds) {
    json turns = json::array();
    for (const auto& t : r.turns) turns.push_back(to_json(t));
    json events = json::array();
    for (const auto& e : r.events) {
      events.push_back({{"kind", std::string(to_string(e.kind))},
                        {"speaker", std::string(to_string(e.speaker))},
                        {"slot", e.slot},
                        {"attempt", e.attempt},
                        {"detail", e.detail},
                        {"raw", e.raw}});
    }
    json round = {{"round_no", r.round_no},
                  {"turns", turns},
                  {"guesses", {{"A", guess_json(r.guess_a)}, {"B", guess_json(r.guess_b)}}},
                  {"score", r.score ? json(*r.score) : json(nullptr)},
                  {"missing_guess", r.missing_guess},
                  {"turn_limit_hit", r.turn_limit_hit},
                  {"beyond_cap", r.beyond_cap},
                  {"events", events}};
    if (include_timing && r.elapsed_ms) round["elapsed_ms"] = *r.elapsed_ms;
    rounds.push_back(std::move(round));
  }
  json metadata = transcript.metadata;
  if (!include_timing && metadata.is_object()) metadata.erase("elapsed_ms");
  return {{"schema", kTranscriptSchema},
          {"game_id", transcript.game_id},
          {"system", transcript.system},
          {"provenance", std::string(to_string(transcript.provenance))},
          {"metadata", metadata},
          {"rounds", rounds}};
}

Transcript transcript_from_json(const json& doc) {
  expect_schema(doc, kTranscriptSchema);
  return guarded("transcript", [&] {
    Transcript t;
    t.game_id = doc.at("game_id").get<std::string>();
    t.system = doc.at("system").get<std::string>();
    const std::string prov = doc.at("provenance").get<std::string>();
    if (prov == to_string(Provenance::SelfPlay)) {
      t.provenance = Provenance::SelfPlay;
    } else if (prov == to_string(Provenance::HumanReplay)) {
      t.provenance = Provenance::HumanReplay;
    } else {
      throw SchemaError(t.game_id + ": unknown provenance '" + prov + "'");
    }
    t.metadata = doc.value("metadata", json::object());
    for (const auto& r : doc.at("rounds")) {
      RoundRecord rec;
      rec.round_no = r.at("round_no").get<int>();
      for (const auto& turn : r.at("turns")) rec.turns.push_back(turn_from_json(turn));
      rec.guess_a = guess_from(r.at("guesses").at("A"));
      rec.guess_b = guess_from(r.at("guesses").at("B"));
      if (!r.at("score").is_null()) rec.score = r.at("score").get<int>();
      rec.missing_guess = r.value("missing_guess", false);
      rec.turn_limit_hit = r.value("turn_limit_hit", false);
      rec.beyond_cap = r.value("beyond_cap", false);
      for (const auto& e : r.value("events", json::array())) {
        RoundEvent ev;
        const auto kind = parse_event_kind(e.at("kind").get<std::string>());
        if (!kind) throw SchemaError(t.game_id + ": unknown event kind");
        ev.kind = *kind;
        ev.speaker = player_from(e.at("speaker"));
        ev.slot = e.value("slot", 0);
        ev.attempt = e.value("attempt", 0);
        ev.detail = e.value("detail", "");
        ev.raw = e.value("raw", "");
        rec.events.push_back(std::move(ev));
      }
      if (r.contains("elapsed_ms")) rec.elapsed_ms = r.at("elapsed_ms").get<double>();
      t.rounds.push_back(std::move(rec));
    }
    return t;
  });
}

json to_json(const ReferringExpression& e) {
  return {{"game_id", e.game_id},
          {"round_no", e.round_no},
          {"speaker", std::string(to_string(e.speaker))},
          {"turn_no", e.turn_no},
          {"span", {e.span_begin, e.span_end}},
          {"text", e.text},
          {"linked_image", e.linked_image},
          {"link_source", std::string(to_string(e.link_source))},
          {"rule", e.rule}};
}

ReferringExpression refexp_from_json(const json& j) {
  return guarded("referring expression", [&] {
    ReferringExpression e;
    e.game_id = j.at("game_id").get<std::string>();
    e.round_no = j.at("round_no").get<int>();
    e.speaker = player_from(j.at("speaker"));
    e.turn_no = j.at("turn_no").get<int>();
    if (j.contains("span")) {
      e.span_begin = j.at("span").at(0).get<std::size_t>();
      e.span_end = j.at("span").at(1).get<std::size_t>();
    }
    e.text = j.value("text", "");
    e.linked_image = j.at("linked_image").get<int>();
    if (e.linked_image < 1 || e.linked_image > 3) throw SchemaError("linked_image outside 1..3");
    const auto src = parse_link_source(j.value("link_source", "gold"));
    if (!src) throw SchemaError("unknown link_source");
    e.link_source = *src;
    e.rule = j.value("rule", "");
    return e;
  });
}

json to_json(const RefexpDocument& doc) {
  json exprs = json::array();
  for (const auto& e : doc.expressions) exprs.push_back(to_json(e));
  json j = {{"schema", kRefexpSchema}, {"rules_version", doc.rules_version}, {"expressions", exprs}};
  if (doc.scope) {
    json scope = json::array();
    for (const auto& k : *doc.scope) scope.push_back({{"game_id", k.game_id}, {"round_no", k.round_no}});
    j["scope"] = scope;
  }
  return j;
}

RefexpDocument refexp_document_from_json(const json& j) {
  expect_schema(j, kRefexpSchema);
  RefexpDocument doc;
  doc.rules_version = j.value("rules_version", "");
  for (const auto& e : j.at("expressions")) doc.expressions.push_back(refexp_from_json(e));
  if (j.contains("scope")) {
    doc.scope.emplace();
    guarded("scope", [&] {
      for (const auto& k : j.at("scope")) doc.scope->insert({k.at("game_id").get<std::string>(), k.at("round_no").get<int>()});
      return 0;
    });
  }
  return doc;
}

std::string dump_json(const json& doc) {
  return doc.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

json read_json_file(const fs::path& path) {
  json doc = json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded()) throw SchemaError(path.string() + ": not valid JSON");
  return doc;
}

void write_text_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json_file(const fs::path& path, const json& doc) { write_text_file_atomic(path, dump_json(doc)); }

std::vector<fs::path> list_json_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<GameSpec> load_games(const fs::path& path) {
  std::vector<GameSpec> games;
  if (fs::is_directory(path)) {
    for (const auto& f : list_json_files(path)) games.push_back(game_from_json(read_json_file(f)));
    return games;
  }
  const json doc = read_json_file(path);
  if (doc.is_array()) {
    for (const auto& g : doc) games.push_back(game_from_json(g));
  } else {
    games.push_back(game_from_json(doc));
  }
  return games;
}

std::vector<Transcript> load_transcripts(const fs::path& path) {
  std::vector<Transcript> out;
  if (fs::is_directory(path)) {
    for (const auto& f : list_json_files(path)) out.push_back(transcript_from_json(read_json_file(f)));
  } else {
    out.push_back(transcript_from_json(read_json_file(path)));
  }
  return out;
}

}  // namespace photobook
