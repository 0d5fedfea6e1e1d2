#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "photobook/types.hpp"

namespace photobook {

class InvalidGameSpec : public Error {
 public:
  using Error::Error;
};

class MissingGuess : public Error {
 public:
  using Error::Error;
};

class IncompleteGame : public Error {
 public:
  using Error::Error;
};

enum class GameSource { Synthetic, HumanCorpus, Fixture };

std::string_view to_string(GameSource source);
std::optional<GameSource> parse_game_source(std::string_view text);

struct ImageSlot {
  Player player = Player::A;
  int index = 1;  // 1..3
  std::string image_id;

  friend bool operator==(const ImageSlot&, const ImageSlot&) = default;
};

struct GroundTruth {
  LabelTriple a{};
  LabelTriple b{};

  const LabelTriple& of(Player p) const { return p == Player::A ? a : b; }
  Label label(Player p, int index) const { return of(p).at(static_cast<std::size_t>(index - 1)); }

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

using ImageSet = std::array<std::string, 3>;

/// Labels each image Common iff its id appears in the partner's set.
GroundTruth derive_truth(const ImageSet& images_a, const ImageSet& images_b);

/// Image assignment and answer key for one round.
struct RoundAssignment {
  int round_no = 1;
  ImageSet images_a;
  ImageSet images_b;
  GroundTruth truth;

  const ImageSet& images(Player p) const { return p == Player::A ? images_a : images_b; }
  ImageSlot slot(Player p, int index) const;
  std::array<ImageSlot, 3> slots(Player p) const;
  std::optional<int> index_of(Player p, std::string_view image_id) const;

  friend bool operator==(const RoundAssignment&, const RoundAssignment&) = default;
};

struct GameSpec {
  std::string game_id;
  std::vector<RoundAssignment> rounds;
  GameSource source = GameSource::Fixture;

  const RoundAssignment& round(int round_no) const;
};

/// Self-play is capped at this many rounds.
inline constexpr int kMaxSelfPlayRounds = 3;
/// An image recurs at most this often per player in a corpus game.
inline constexpr int kMaxImageAppearances = 5;

/// Checks structural invariants; throws InvalidGameSpec naming the game and
/// the violated rule. Image-recurrence limits apply to HumanCorpus games only.
void validate(const GameSpec& game);

/// Live state of one round. Guesses are write-once.
class RoundState {
 public:
  explicit RoundState(RoundAssignment assignment);

  int round_no() const { return assignment_.round_no; }
  const RoundAssignment& assignment() const { return assignment_; }
  const GroundTruth& truth() const { return assignment_.truth; }

  const std::optional<GuessVector>& guess(Player p) const {
    return p == Player::A ? guess_a_ : guess_b_;
  }
  /// Returns false (and changes nothing) if the player already guessed.
  bool submit_guess(Player p, const GuessVector& guesses);
  bool both_guessed() const { return guess_a_.has_value() && guess_b_.has_value(); }

  const std::vector<Turn>& turns() const { return turns_; }
  void append_turn(Turn turn) { turns_.push_back(std::move(turn)); }

 private:
  RoundAssignment assignment_;
  std::optional<GuessVector> guess_a_;
  std::optional<GuessVector> guess_b_;
  std::vector<Turn> turns_;
};

/// Cells where a player's guess matches their own answer key (0..3).
int score_player(const LabelTriple& truth, const GuessVector& guesses);

/// Correct cells over both players, 0..6. Throws MissingGuess.
int score_round(const RoundState& round);

struct PartialScore {
  int points = 0;
  bool missing_a = false;
  bool missing_b = false;

  bool flagged() const { return missing_a || missing_b; }
};

/// Like score_round but an absent guess scores 0 for that player's cells.
PartialScore score_round_partial(const RoundState& round);
PartialScore score_round_partial(const GroundTruth& truth, const std::optional<GuessVector>& guess_a,
                                 const std::optional<GuessVector>& guess_b);

/// Sum of round scores. Throws IncompleteGame if any round lacks a guess.
int score_game(std::span<const RoundState> rounds);

enum class GtRelation { SameGT, DifferentGT };

std::string_view to_string(GtRelation relation);

GtRelation gt_pattern_relation(const GroundTruth& truth);
inline GtRelation gt_pattern_relation(const RoundState& round) {
  return gt_pattern_relation(round.truth());
}

struct SyntheticOptions {
  int games = 50;
  int rounds = kMaxSelfPlayRounds;
  int min_shared = 0;  // shared images per round, inclusive range
  int max_shared = 3;
  std::uint64_t seed = 0;
  std::string id_prefix = "syn";
};

/// Samples games from an image pool. Each round draws a shared count in
/// [min_shared, max_shared], then distinct images for the shared and the
/// per-player parts, and shuffles each player's local order.
std::vector<GameSpec> generate_synthetic_games(std::span<const std::string> pool,
                                               const SyntheticOptions& options);

}  // namespace photobook
