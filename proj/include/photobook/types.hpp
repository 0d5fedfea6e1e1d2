#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace photobook {

/// Base class for every error the harness throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Player { A, B };

constexpr Player partner_of(Player p) { return p == Player::A ? Player::B : Player::A; }
constexpr std::array<Player, 2> kPlayers{Player::A, Player::B};

std::string_view to_string(Player p);
std::optional<Player> parse_player(std::string_view text);

/// Per-image annotation: C(ommon) or D(ifferent).
enum class Label { Common, Different };

char to_letter(Label label);
std::optional<Label> label_from_letter(std::string_view letter);

using LabelTriple = std::array<Label, 3>;

/// A player's final answer sheet; position k is the player's local Image k+1.
struct GuessVector {
  LabelTriple values{};

  friend bool operator==(const GuessVector&, const GuessVector&) = default;
};

std::string to_string(const GuessVector& guesses);  // e.g. "CDC"
std::optional<GuessVector> parse_guess_string(std::string_view letters);

/// One validated protocol message.
struct Turn {
  Player speaker = Player::A;
  std::string message;
  std::optional<int> reference;  // speaker-local image index 1..3
  std::optional<GuessVector> guesses;
  std::string raw;
  int turn_no = 0;
  std::string source_id;    // upstream message id for replayed corpus turns
  std::string response_id;  // provider response id for remote agents

  friend bool operator==(const Turn&, const Turn&) = default;
};

}  // namespace photobook
