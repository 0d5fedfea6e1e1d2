#include "photobook/types.hpp"

namespace photobook {

std::string_view to_string(Player p) { return p == Player::A ? "A" : "B"; }

std::optional<Player> parse_player(std::string_view text) {
  if (text == "A" || text == "a") return Player::A;
  if (text == "B" || text == "b") return Player::B;
  return std::nullopt;
}

char to_letter(Label label) { return label == Label::Common ? 'C' : 'D'; }

std::optional<Label> label_from_letter(std::string_view letter) {
  if (letter == "C") return Label::Common;
  if (letter == "D") return Label::Different;
  return std::nullopt;
}

std::string to_string(const GuessVector& guesses) {
  std::string out;
  for (Label l : guesses.values) out.push_back(to_letter(l));
  return out;
}

std::optional<GuessVector> parse_guess_string(std::string_view letters) {
  if (letters.size() != 3) return std::nullopt;
  GuessVector g;
  for (std::size_t i = 0; i < 3; ++i) {
    auto label = label_from_letter(letters.substr(i, 1));
    if (!label) return std::nullopt;
    g.values[i] = *label;
  }
  return g;
}

}  // namespace photobook
