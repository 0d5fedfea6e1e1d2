#include "photobook/protocol.hpp"

#include <chrono>
#include <regex>

#include "photobook/text.hpp"

namespace photobook {
namespace {

using nlohmann::json;

ValidationError fail(ValidationRule rule, std::string field, std::string detail) {
  return ValidationError{rule, std::move(field), std::move(detail)};
}

// Strips one surrounding ``` fence (with optional language tag).
std::string_view unfence(std::string_view raw) {
  std::string_view s = text::trim(raw);
  if (s.size() < 6 || s.substr(0, 3) != "```" || s.substr(s.size() - 3) != "```") return raw;
  const auto first_newline = s.find('\n');
  if (first_newline == std::string_view::npos) return raw;
  return s.substr(first_newline + 1, s.size() - 3 - (first_newline + 1));
}

std::optional<int> parse_reference_text(std::string_view text) {
  static const std::regex re(R"(^\s*(?:image\s*)?([123])\s*$)", std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(text.begin(), text.end(), m, re)) return std::nullopt;
  return m[1].str()[0] - '0';
}

}  // namespace

std::string_view to_string(ValidationRule rule) {
  switch (rule) {
    case ValidationRule::NotAnObject: return "not_an_object";
    case ValidationRule::MissingField: return "missing_field";
    case ValidationRule::WrongType: return "wrong_type";
    case ValidationRule::EmptyMessage: return "empty_message";
    case ValidationRule::BadGuessesArity: return "bad_guesses_arity";
    case ValidationRule::BadLetter: return "bad_letter";
    case ValidationRule::BadReference: return "bad_reference";
  }
  return "not_an_object";
}

std::string ValidationError::describe() const {
  std::string out(to_string(rule));
  if (!field.empty()) out += " (" + field + ")";
  if (!detail.empty()) out += ": " + detail;
  return out;
}

TurnOrError validate_turn(std::string_view raw_payload) {
  const std::string_view body = unfence(raw_payload);
  const json doc = json::parse(body.begin(), body.end(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) return fail(ValidationRule::NotAnObject, "", "payload is not valid JSON");
  if (!doc.is_object()) {
    return fail(ValidationRule::NotAnObject, "", std::string("payload is a JSON ") + doc.type_name());
  }
  for (const char* field : {"message", "reference", "guesses"}) {
    if (!doc.contains(field)) return fail(ValidationRule::MissingField, field, "required field absent");
  }

  Turn turn;
  const json& message = doc.at("message");
  if (!message.is_string()) {
    return fail(ValidationRule::WrongType, "message", std::string("expected string, got ") + message.type_name());
  }
  turn.message = message.get<std::string>();
  if (text::is_blank(turn.message)) return fail(ValidationRule::EmptyMessage, "message", "message is blank");

  const json& reference = doc.at("reference");
  if (reference.is_string()) {
    turn.reference = parse_reference_text(reference.get_ref<const std::string&>());
    if (!turn.reference) {
      return fail(ValidationRule::BadReference, "reference",
                  "expected \"Image 1\", \"Image 2\", \"Image 3\" or null");
    }
  } else if (reference.is_number_integer()) {
    const auto k = reference.get<std::int64_t>();
    if (k < 1 || k > 3) return fail(ValidationRule::BadReference, "reference", "index out of range 1..3");
    turn.reference = static_cast<int>(k);
  } else if (!reference.is_null()) {
    return fail(ValidationRule::BadReference, "reference", std::string("unexpected ") + reference.type_name());
  }

  const json& guesses = doc.at("guesses");
  if (!guesses.is_null()) {
    if (!guesses.is_array()) {
      return fail(ValidationRule::WrongType, "guesses", std::string("expected array or null, got ") +
                                                            guesses.type_name());
    }
    if (guesses.size() != 3) {
      return fail(ValidationRule::BadGuessesArity, "guesses",
                  "expected exactly 3 letters, got " + std::to_string(guesses.size()));
    }
    GuessVector g;
    for (std::size_t i = 0; i < 3; ++i) {
      const json& letter = guesses[i];
      std::optional<Label> label;
      if (letter.is_string()) label = label_from_letter(letter.get_ref<const std::string&>());
      if (!label) {
        return fail(ValidationRule::BadLetter, "guesses",
                    "position " + std::to_string(i + 1) + " must be \"C\" or \"D\"");
      }
      g.values[i] = *label;
    }
    turn.guesses = g;
  }
  turn.raw = std::string(raw_payload);
  return turn;
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Repair: return "repair";
    case EventKind::SkippedTurn: return "skipped_turn";
    case EventKind::IgnoredGuessRevision: return "ignored_guess_revision";
    case EventKind::TurnLimit: return "turn_limit";
    case EventKind::ScheduleExhausted: return "schedule_exhausted";
  }
  return "repair";
}

std::optional<EventKind> parse_event_kind(std::string_view text) {
  for (auto k : {EventKind::Repair, EventKind::SkippedTurn, EventKind::IgnoredGuessRevision,
                 EventKind::TurnLimit, EventKind::ScheduleExhausted}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::string_view to_string(Provenance provenance) {
  return provenance == Provenance::SelfPlay ? "self_play" : "human_replay";
}

const RoundRecord& Transcript::round(int round_no) const {
  for (const auto& r : rounds) {
    if (r.round_no == round_no) return r;
  }
  throw UnknownRound("transcript " + game_id + " has no round " + std::to_string(round_no));
}

std::vector<HistoryEntry> history_for(Player seat, std::span<const RoundRecord> previous_rounds,
                                      int current_round, std::span<const Turn> current_turns) {
  std::vector<HistoryEntry> history;
  auto add = [&](int round_no, const Turn& t) {
    HistoryEntry e;
    e.round_no = round_no;
    e.speaker = t.speaker;
    e.message = t.message;
    if (t.speaker == seat) e.own_raw = t.raw;
    history.push_back(std::move(e));
  };
  for (const auto& r : previous_rounds) {
    for (const auto& t : r.turns) add(r.round_no, t);
  }
  for (const auto& t : current_turns) add(current_round, t);
  return history;
}

RoundOutcome run_round(RoundState& round, Agent& agent_a, Agent& agent_b, const RoundOptions& options,
                       std::span<const RoundRecord> previous_rounds) {
  const auto started = std::chrono::steady_clock::now();
  RoundOutcome outcome;
  Player speaker = options.first_speaker;
  std::size_t order_pos = 0;

  while (!round.both_guessed()) {
    if (options.speaker_order) {
      if (order_pos >= options.speaker_order->size()) {
        outcome.events.push_back({EventKind::ScheduleExhausted, speaker, outcome.slots_used, 0,
                                  "speaker order exhausted before both players guessed", ""});
        break;
      }
      speaker = (*options.speaker_order)[order_pos++];
    }
    if (outcome.slots_used >= options.limits.max_turns) {
      outcome.turn_limit_hit = true;
      outcome.events.push_back({EventKind::TurnLimit, speaker, outcome.slots_used, 0,
                                "max_turns reached before both players guessed", ""});
      break;
    }
    const int slot = ++outcome.slots_used;
    Agent& agent = speaker == Player::A ? agent_a : agent_b;

    AgentContext ctx;
    ctx.seat = speaker;
    ctx.round_no = round.round_no();
    ctx.images = round.assignment().slots(speaker);
    ctx.history = history_for(speaker, previous_rounds, round.round_no(), round.turns());

    std::optional<Turn> accepted;
    for (int attempt = 0; attempt <= options.limits.max_repairs; ++attempt) {
      std::string raw = agent.next_turn(ctx);
      ++outcome.agent_calls;
      auto result = validate_turn(raw);
      if (auto* turn = std::get_if<Turn>(&result)) {
        accepted = std::move(*turn);
        break;
      }
      const std::string error = std::get<ValidationError>(result).describe();
      if (attempt < options.limits.max_repairs) {
        outcome.events.push_back({EventKind::Repair, speaker, slot, attempt + 1, error, raw});
        ctx.repair = RepairRequest{raw, error, attempt + 1};
      } else {
        outcome.events.push_back({EventKind::SkippedTurn, speaker, slot, attempt + 1, error, raw});
      }
    }

    if (accepted) {
      Turn turn = std::move(*accepted);
      turn.speaker = speaker;
      turn.turn_no = static_cast<int>(round.turns().size()) + 1;
      turn.response_id = agent.last_response_id();
      if (turn.guesses && !round.submit_guess(speaker, *turn.guesses)) {
        outcome.events.push_back({EventKind::IgnoredGuessRevision, speaker, slot, 0,
                                  "player already guessed " + to_string(*round.guess(speaker)) +
                                      "; ignored " + to_string(*turn.guesses),
                                  ""});
        turn.guesses.reset();
      }
      round.append_turn(std::move(turn));
    }
    if (!options.speaker_order) speaker = partner_of(speaker);
  }

  outcome.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return outcome;
}

RoundRecord close_round(const RoundState& round, const RoundOutcome& outcome) {
  RoundRecord record;
  record.round_no = round.round_no();
  record.turns = round.turns();
  record.guess_a = round.guess(Player::A);
  record.guess_b = round.guess(Player::B);
  const PartialScore score = score_round_partial(round);
  record.score = score.points;
  record.missing_guess = score.flagged();
  record.turn_limit_hit = outcome.turn_limit_hit;
  record.events = outcome.events;
  record.elapsed_ms = outcome.elapsed_ms;
  return record;
}

int count_turns(const Transcript& transcript, int round_no) {
  return static_cast<int>(transcript.round(round_no).turns.size());
}

int count_words(const RoundRecord& round) {
  std::size_t words = 0;
  for (const auto& t : round.turns) words += text::count_words(t.message);
  return static_cast<int>(words);
}

int count_words(const Transcript& transcript, int round_no) { return count_words(transcript.round(round_no)); }

}  // namespace photobook
