#include "photobook/corpus.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "photobook/serialization.hpp"
#include "photobook/text.hpp"

namespace photobook {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kGameKeys{"game_id", "rounds"};
const std::set<std::string> kRoundKeys{"round_nr", "images", "common", "messages"};
const std::set<std::string> kMessageKeys{"message_id", "speaker", "type", "message"};

json extras(const json& obj, const std::set<std::string>& known) {
  json out = json::object();
  for (const auto& [k, v] : obj.items()) {
    if (!known.count(k)) out[k] = v;
  }
  return out;
}

const json& field(const json& obj, const char* key, const std::string& id) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaMismatch(id, std::string("missing field '") + key + "'");
  return *it;
}

std::string string_field(const json& obj, const char* key, const std::string& id) {
  const json& v = field(obj, key, id);
  if (!v.is_string()) throw SchemaMismatch(id, std::string("field '") + key + "' is not a string");
  return v.get<std::string>();
}

ImageSet image_set(const json& v, const std::string& id) {
  if (!v.is_array() || v.size() != 3) throw SchemaMismatch(id, "a player's round set must hold 3 images");
  ImageSet out;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_string()) throw SchemaMismatch(id, "image ids must be strings");
    out[i] = v[i].get<std::string>();
  }
  return out;
}

std::string message_key(const CorpusMessage& m, int round_nr, std::size_t index) {
  return m.message_id.empty() ? "r" + std::to_string(round_nr) + "-m" + std::to_string(index) : m.message_id;
}

}  // namespace

std::string CorpusRecord::id() const {
  return game_id.is_string() ? game_id.get<std::string>() : game_id.dump();
}

CorpusRecord parse_corpus_record(const json& doc, const std::string& record_id) {
  if (!doc.is_object()) throw SchemaMismatch(record_id, "game log is not a JSON object");
  CorpusRecord record;
  record.game_id = field(doc, "game_id", record_id);
  if (!record.game_id.is_string() && !record.game_id.is_number_integer()) {
    throw SchemaMismatch(record_id, "game_id must be a string or integer");
  }
  const std::string id = record.id();
  record.extra = extras(doc, kGameKeys);
  const json& rounds = field(doc, "rounds", id);
  if (!rounds.is_array() || rounds.empty()) throw SchemaMismatch(id, "no rounds");
  for (const json& r : rounds) {
    if (!r.is_object()) throw SchemaMismatch(id, "round is not an object");
    CorpusRound round;
    const json& nr = field(r, "round_nr", id);
    if (!nr.is_number_integer()) throw SchemaMismatch(id, "round_nr is not an integer");
    round.round_nr = nr.get<int>();
    const std::string rid = id + "/round " + std::to_string(round.round_nr);
    const json& images = field(r, "images", rid);
    round.images_a = image_set(field(images, "A", rid), rid);
    round.images_b = image_set(field(images, "B", rid), rid);
    for (const json& c : field(r, "common", rid)) {
      if (!c.is_string()) throw SchemaMismatch(rid, "common entries must be strings");
      round.common.push_back(c.get<std::string>());
    }
    round.extra = extras(r, kRoundKeys);
    const json& messages = field(r, "messages", rid);
    if (!messages.is_array()) throw SchemaMismatch(rid, "messages is not an array");
    for (const json& m : messages) {
      if (!m.is_object()) throw SchemaMismatch(rid, "message is not an object");
      CorpusMessage msg;
      if (m.contains("message_id")) {
        const json& mid = m.at("message_id");
        msg.message_id = mid.is_string() ? mid.get<std::string>() : mid.dump();
        if (!mid.is_string()) msg.extra["message_id"] = mid;  // restore numeric ids on export
      }
      const std::string mid = msg.message_id.empty() ? rid : msg.message_id;
      const auto speaker = parse_player(string_field(m, "speaker", mid));
      if (!speaker) throw SchemaMismatch(mid, "speaker must be A or B");
      msg.speaker = *speaker;
      msg.type = string_field(m, "type", mid);
      msg.text = string_field(m, "message", mid);
      msg.extra.update(extras(m, kMessageKeys));
      round.messages.push_back(std::move(msg));
    }
    record.rounds.push_back(std::move(round));
  }
  return record;
}

json to_upstream_json(const CorpusRecord& record) {
  json doc = record.extra;
  doc["game_id"] = record.game_id;
  json rounds = json::array();
  for (const auto& r : record.rounds) {
    json round = r.extra;
    round["round_nr"] = r.round_nr;
    round["images"] = {{"A", r.images_a}, {"B", r.images_b}};
    round["common"] = r.common;
    json messages = json::array();
    for (const auto& m : r.messages) {
      json msg = json::object();
      if (!m.message_id.empty()) msg["message_id"] = m.message_id;
      for (const auto& [k, v] : m.extra.items()) msg[k] = v;
      msg["speaker"] = std::string(to_string(m.speaker));
      msg["type"] = m.type;
      msg["message"] = m.text;
      messages.push_back(std::move(msg));
    }
    round["messages"] = messages;
    rounds.push_back(std::move(round));
  }
  doc["rounds"] = rounds;
  return doc;
}

std::optional<ClickAction> parse_click(const CorpusMessage& message) {
  if (message.type != "selection") return std::nullopt;
  const std::string_view text = message.text;
  ClickAction click;
  click.message_id = message.message_id;
  click.actor = message.speaker;
  if (text.rfind("<com>", 0) == 0) {
    click.label = Label::Common;
  } else if (text.rfind("<dif>", 0) == 0) {
    click.label = Label::Different;
  } else {
    return std::nullopt;
  }
  click.image_id = std::string(text::trim(text.substr(5)));
  if (click.image_id.empty()) return std::nullopt;
  return click;
}

CorpusGame normalize(const CorpusRecord& record) {
  const std::string id = record.id();
  CorpusGame out;
  out.record = record;
  out.game.game_id = id;
  out.game.source = GameSource::HumanCorpus;
  out.transcript.game_id = id;
  out.transcript.system = "human";
  out.transcript.provenance = Provenance::HumanReplay;
  out.transcript.metadata = {{"corpus_layout", kCorpusLayout}, {"source_game_id", record.game_id}};

  for (const auto& r : record.rounds) {
    const std::string rid = id + "/round " + std::to_string(r.round_nr);
    RoundAssignment assignment;
    assignment.round_no = r.round_nr;
    assignment.images_a = r.images_a;
    assignment.images_b = r.images_b;
    assignment.truth = derive_truth(r.images_a, r.images_b);

    std::set<std::string> shared;
    for (const auto& img : r.images_a) {
      if (std::find(r.images_b.begin(), r.images_b.end(), img) != r.images_b.end()) shared.insert(img);
    }
    if (std::set<std::string>(r.common.begin(), r.common.end()) != shared) {
      throw SchemaMismatch(rid, "'common' disagrees with the two players' image sets");
    }

    std::map<std::pair<Player, std::string>, Label> last_label;
    for (std::size_t i = 0; i < r.messages.size(); ++i) {
      const auto& m = r.messages[i];
      if (m.type != "selection") continue;
      const auto click = parse_click(m);
      const std::string mid = message_key(m, r.round_nr, i);
      if (!click) throw SchemaMismatch(id + "/" + mid, "unreadable selection '" + m.text + "'");
      if (!assignment.index_of(click->actor, click->image_id)) {
        throw SchemaMismatch(id + "/" + mid, "selection names image '" + click->image_id + "' outside " +
                                                 std::string(to_string(click->actor)) + "'s set");
      }
      last_label[{click->actor, click->image_id}] = click->label;

      // Utterances since this speaker's previous click point at this image.
      for (std::size_t j = i; j-- > 0;) {
        const auto& prev = r.messages[j];
        if (prev.speaker != m.speaker) continue;
        if (prev.type == "selection") break;
        if (prev.type != "text") continue;
        out.alignments.push_back(
            {message_key(prev, r.round_nr, j), r.round_nr, assignment.slot(m.speaker, *assignment.index_of(m.speaker, click->image_id))});
      }
    }
    std::sort(out.alignments.begin(), out.alignments.end(),
              [](const ClickAlignment& a, const ClickAlignment& b) {
                return std::tie(a.round_no, a.utterance_id) < std::tie(b.round_no, b.utterance_id);
              });

    RoundRecord rec;
    rec.round_no = r.round_nr;
    rec.beyond_cap = r.round_nr > kMaxSelfPlayRounds;
    for (Player p : kPlayers) {
      GuessVector g;
      bool complete = true;
      for (int k = 1; k <= 3; ++k) {
        const auto it = last_label.find({p, assignment.images(p)[static_cast<std::size_t>(k - 1)]});
        if (it == last_label.end()) {
          complete = false;
          break;
        }
        g.values[static_cast<std::size_t>(k - 1)] = it->second;
      }
      if (complete) (p == Player::A ? rec.guess_a : rec.guess_b) = g;
    }

    for (std::size_t i = 0; i < r.messages.size(); ++i) {
      const auto& m = r.messages[i];
      if (m.type != "text" || text::is_blank(m.text)) continue;
      Turn t;
      t.speaker = m.speaker;
      t.message = m.text;
      t.turn_no = static_cast<int>(rec.turns.size()) + 1;
      t.source_id = message_key(m, r.round_nr, i);
      rec.turns.push_back(std::move(t));
    }
    for (Player p : kPlayers) {
      const auto& g = rec.guess(p);
      if (!g) continue;
      for (auto it = rec.turns.rbegin(); it != rec.turns.rend(); ++it) {
        if (it->speaker == p) {
          it->guesses = g;
          break;
        }
      }
    }
    for (auto& t : rec.turns) t.raw = encode_payload(t.message, t.reference, t.guesses);

    const PartialScore score = score_round_partial(assignment.truth, rec.guess_a, rec.guess_b);
    rec.score = score.points;
    rec.missing_guess = score.flagged();
    out.transcript.rounds.push_back(std::move(rec));
    out.game.rounds.push_back(std::move(assignment));
  }

  try {
    validate(out.game);
  } catch (const InvalidGameSpec& e) {
    throw SchemaMismatch(id, e.what());
  }
  return out;
}

CorpusSummary summarize(const std::vector<CorpusGame>& games) {
  CorpusSummary s;
  std::set<std::string> vocab_all;
  std::set<std::string> vocab_capped;
  for (const auto& g : games) {
    ++s.all_rounds.games;
    ++s.capped.games;
    for (const auto& r : g.record.rounds) {
      const bool in_cap = r.round_nr <= kMaxSelfPlayRounds;
      for (const auto& m : r.messages) {
        if (m.type == "selection") {
          ++s.all_rounds.clicks;
          if (in_cap) ++s.capped.clicks;
        }
      }
    }
    for (const auto& r : g.transcript.rounds) {
      const bool in_cap = !r.beyond_cap;
      ++s.all_rounds.rounds;
      if (in_cap) ++s.capped.rounds;
      for (const auto& t : r.turns) {
        const auto words = text::split_words(t.message);
        s.all_rounds.utterances += 1;
        s.all_rounds.tokens += static_cast<long>(words.size());
        if (in_cap) {
          s.capped.utterances += 1;
          s.capped.tokens += static_cast<long>(words.size());
        }
        for (auto w : words) {
          auto lower = text::to_lower(w);
          if (in_cap) vocab_capped.insert(lower);
          vocab_all.insert(std::move(lower));
        }
      }
    }
  }
  s.all_rounds.vocabulary = static_cast<int>(vocab_all.size());
  s.capped.vocabulary = static_cast<int>(vocab_capped.size());
  return s;
}

CorpusIngest ingest(const fs::path& src, const IngestOptions& options) {
  if (!fs::is_directory(src)) throw SchemaMismatch(src.string(), "corpus source is not a directory");
  const fs::path logs = fs::is_directory(src / "logs") ? src / "logs" : src;
  const auto files = list_json_files(logs);
  if (files.empty()) throw SchemaMismatch(src.string(), "no game logs found");

  std::optional<fs::path> image_root = options.image_root;
  if (!image_root && fs::is_directory(src / "images")) image_root = src / "images";

  CorpusIngest result;
  std::set<std::string> seen;
  for (const auto& file : files) {
    const std::string record_id = file.filename().string();
    json doc = json::parse(read_text_file(file), nullptr, false);
    if (doc.is_discarded()) throw SchemaMismatch(record_id, "not valid JSON");
    CorpusGame game = normalize(parse_corpus_record(doc, record_id));
    if (!seen.insert(game.game.game_id).second) throw SchemaMismatch(record_id, "duplicate game_id " + game.game.game_id);

    if (image_root) {
      std::set<std::string> missing;
      for (const auto& r : game.game.rounds) {
        for (Player p : kPlayers) {
          for (const auto& img : r.images(p)) {
            if (!fs::exists(*image_root / img)) missing.insert(img);
          }
        }
      }
      for (const auto& img : missing) result.warnings.push_back({game.game.game_id, "missing_image_asset", img});
    }
    for (const auto& r : game.transcript.rounds) {
      if (r.missing_guess) {
        result.warnings.push_back({game.game.game_id, "missing_guess", "round " + std::to_string(r.round_no)});
      }
    }
    result.games.push_back(std::move(game));
  }
  result.summary = summarize(result.games);
  return result;
}

Transcript capped(const Transcript& transcript, int max_round) {
  Transcript out = transcript;
  std::erase_if(out.rounds, [&](const RoundRecord& r) { return r.round_no > max_round; });
  return out;
}

std::vector<RefChain> load_refchains(const fs::path& path, const std::vector<CorpusGame>& games) {
  if (!fs::exists(path)) throw SchemaMismatch(path.string(), "chain file not found");
  const json doc = json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw SchemaMismatch(path.string(), "not a JSON object");
  const json& chains = field(doc, "chains", path.string());
  if (!chains.is_array()) throw SchemaMismatch(path.string(), "'chains' is not an array");

  std::map<std::string, const CorpusGame*> by_id;
  for (const auto& g : games) by_id[g.game.game_id] = &g;

  std::vector<RefChain> out;
  for (const json& c : chains) {
    RefChain chain;
    chain.chain_id = c.contains("chain_id") && c["chain_id"].is_string() ? c["chain_id"].get<std::string>() : "<unnamed chain>";
    const std::string& cid = chain.chain_id;
    chain.game_id = c.contains("game_id") && c["game_id"].is_number_integer() ? c["game_id"].dump()
                                                                              : string_field(c, "game_id", cid);
    chain.image_id = string_field(c, "image_id", cid);
    const auto speaker = parse_player(string_field(c, "speaker", cid));
    if (!speaker) throw SchemaMismatch(cid, "speaker must be A or B");
    chain.speaker = *speaker;
    const auto git = by_id.find(chain.game_id);
    if (git == by_id.end()) throw SchemaMismatch(cid, "unknown game " + chain.game_id);
    const CorpusGame& game = *git->second;

    const json& members = field(c, "members", cid);
    if (!members.is_array() || members.empty()) throw SchemaMismatch(cid, "chain has no members");
    for (const json& m : members) {
      const json& nr = field(m, "round_nr", cid);
      if (!nr.is_number_integer()) throw SchemaMismatch(cid, "round_nr is not an integer");
      const int round_nr = nr.get<int>();
      const std::string message_id = string_field(m, "message_id", cid);
      const RoundRecord* round = nullptr;
      for (const auto& r : game.transcript.rounds) {
        if (r.round_no == round_nr) round = &r;
      }
      if (!round) throw SchemaMismatch(cid, "game " + chain.game_id + " has no round " + std::to_string(round_nr));
      const auto tit = std::find_if(round->turns.begin(), round->turns.end(),
                                    [&](const Turn& t) { return t.source_id == message_id; });
      if (tit == round->turns.end()) throw SchemaMismatch(cid, "unknown message " + message_id);
      if (tit->speaker != chain.speaker) throw SchemaMismatch(cid, "message " + message_id + " is not by the chain's speaker");
      const auto index = game.game.round(round_nr).index_of(chain.speaker, chain.image_id);
      if (!index) {
        throw SchemaMismatch(cid, "image " + chain.image_id + " is not in " + std::string(to_string(chain.speaker)) +
                                      "'s set in round " + std::to_string(round_nr));
      }
      ReferringExpression e;
      e.game_id = chain.game_id;
      e.round_no = round_nr;
      e.speaker = chain.speaker;
      e.turn_no = tit->turn_no;
      e.span_begin = 0;
      e.span_end = tit->message.size();
      e.text = tit->message;
      e.linked_image = *index;
      e.link_source = LinkSource::Gold;
      e.rule = cid;
      chain.members.push_back(std::move(e));
    }
    out.push_back(std::move(chain));
  }
  return out;
}

std::vector<ReferringExpression> flatten(const std::vector<RefChain>& chains) {
  std::vector<ReferringExpression> out;
  for (const auto& c : chains) out.insert(out.end(), c.members.begin(), c.members.end());
  return out;
}

}  // namespace photobook
