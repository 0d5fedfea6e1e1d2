#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "photobook/agents.hpp"
#include "photobook/game.hpp"
#include "photobook/types.hpp"

namespace photobook {

enum class ValidationRule {
  NotAnObject,
  MissingField,
  WrongType,
  EmptyMessage,
  BadGuessesArity,
  BadLetter,
  BadReference,
};

std::string_view to_string(ValidationRule rule);

struct ValidationError {
  ValidationRule rule = ValidationRule::NotAnObject;
  std::string field;
  std::string detail;

  std::string describe() const;
};

using TurnOrError = std::variant<Turn, ValidationError>;

/// Parses one agent payload. Total: every input yields a Turn (speaker and
/// turn_no left for the caller) or a ValidationError. A payload wrapped in a
/// single markdown code fence is unwrapped first.
TurnOrError validate_turn(std::string_view raw_payload);

struct TurnLimits {
  int max_turns = 40;   // scheduling slots per round, skipped slots included
  int max_repairs = 2;  // re-prompts after an invalid payload
};

struct RoundOptions {
  TurnLimits limits;
  Player first_speaker = Player::A;
  /// Fixed speaker sequence (corpus replay). Unset means strict alternation.
  std::optional<std::vector<Player>> speaker_order;
};

enum class EventKind { Repair, SkippedTurn, IgnoredGuessRevision, TurnLimit, ScheduleExhausted };

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);

struct RoundEvent {
  EventKind kind = EventKind::Repair;
  Player speaker = Player::A;
  int slot = 0;
  int attempt = 0;
  std::string detail;
  std::string raw;

  friend bool operator==(const RoundEvent&, const RoundEvent&) = default;
};

struct RoundOutcome {
  std::vector<RoundEvent> events;
  bool turn_limit_hit = false;
  int slots_used = 0;
  int agent_calls = 0;
  double elapsed_ms = 0.0;
};

/// A closed round as stored in a transcript.
struct RoundRecord {
  int round_no = 1;
  std::vector<Turn> turns;
  std::optional<GuessVector> guess_a;
  std::optional<GuessVector> guess_b;
  std::optional<int> score;
  bool missing_guess = false;
  bool turn_limit_hit = false;
  bool beyond_cap = false;
  std::vector<RoundEvent> events;
  std::optional<double> elapsed_ms;

  const std::optional<GuessVector>& guess(Player p) const { return p == Player::A ? guess_a : guess_b; }
};

enum class Provenance { SelfPlay, HumanReplay };

std::string_view to_string(Provenance provenance);

class UnknownRound : public Error {
 public:
  using Error::Error;
};

struct Transcript {
  std::string game_id;
  std::string system;
  Provenance provenance = Provenance::SelfPlay;
  std::vector<RoundRecord> rounds;
  nlohmann::json metadata = nlohmann::json::object();

  const RoundRecord& round(int round_no) const;  // throws UnknownRound
};

/// Drives one round: asks agents for payloads, validates them, re-prompts up
/// to max_repairs times, records accepted turns, and stops once both players
/// have guessed or the slot budget / speaker order runs out.
/// AgentFailure from an agent propagates.
RoundOutcome run_round(RoundState& round, Agent& agent_a, Agent& agent_b, const RoundOptions& options,
                       std::span<const RoundRecord> previous_rounds = {});

/// History of earlier rounds plus the current round's turns, from `seat`'s view.
std::vector<HistoryEntry> history_for(Player seat, std::span<const RoundRecord> previous_rounds,
                                      int current_round, std::span<const Turn> current_turns);

/// Scores the round (partial scoring for missing guesses) and freezes it.
RoundRecord close_round(const RoundState& round, const RoundOutcome& outcome);

int count_turns(const Transcript& transcript, int round_no);
int count_words(const Transcript& transcript, int round_no);
int count_words(const RoundRecord& round);

}  // namespace photobook
