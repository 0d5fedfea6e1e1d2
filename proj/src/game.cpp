#include "photobook/game.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "photobook/rng.hpp"

namespace photobook {

std::string_view to_string(GameSource source) {
  switch (source) {
    case GameSource::Synthetic: return "synthetic";
    case GameSource::HumanCorpus: return "human_corpus";
    case GameSource::Fixture: return "fixture";
  }
  return "fixture";
}

std::optional<GameSource> parse_game_source(std::string_view text) {
  if (text == "synthetic") return GameSource::Synthetic;
  if (text == "human_corpus") return GameSource::HumanCorpus;
  if (text == "fixture") return GameSource::Fixture;
  return std::nullopt;
}

std::string_view to_string(GtRelation relation) {
  return relation == GtRelation::SameGT ? "same_gt" : "different_gt";
}

GroundTruth derive_truth(const ImageSet& images_a, const ImageSet& images_b) {
  auto label_against = [](const ImageSet& own, const ImageSet& other) {
    LabelTriple labels{};
    for (std::size_t i = 0; i < 3; ++i) {
      const bool shared = std::find(other.begin(), other.end(), own[i]) != other.end();
      labels[i] = shared ? Label::Common : Label::Different;
    }
    return labels;
  };
  return GroundTruth{label_against(images_a, images_b), label_against(images_b, images_a)};
}

ImageSlot RoundAssignment::slot(Player p, int index) const {
  return ImageSlot{p, index, images(p).at(static_cast<std::size_t>(index - 1))};
}

std::array<ImageSlot, 3> RoundAssignment::slots(Player p) const {
  return {slot(p, 1), slot(p, 2), slot(p, 3)};
}

std::optional<int> RoundAssignment::index_of(Player p, std::string_view image_id) const {
  const auto& set = images(p);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set[i] == image_id) return static_cast<int>(i) + 1;
  }
  return std::nullopt;
}

const RoundAssignment& GameSpec::round(int round_no) const {
  for (const auto& r : rounds) {
    if (r.round_no == round_no) return r;
  }
  throw InvalidGameSpec("game " + game_id + " has no round " + std::to_string(round_no));
}

void validate(const GameSpec& game) {
  auto fail = [&game](const std::string& why) {
    throw InvalidGameSpec("game '" + game.game_id + "': " + why);
  };
  if (game.game_id.empty()) fail("empty game_id");
  if (game.rounds.empty()) fail("no rounds");

  std::map<std::pair<Player, std::string>, int> appearances;
  for (std::size_t r = 0; r < game.rounds.size(); ++r) {
    const auto& round = game.rounds[r];
    const std::string where = "round " + std::to_string(round.round_no);
    if (round.round_no != static_cast<int>(r) + 1) fail(where + ": rounds must be numbered 1..n");
    for (Player p : kPlayers) {
      std::set<std::string> seen;
      for (const auto& id : round.images(p)) {
        if (id.empty()) fail(where + ": empty image_id for player " + std::string(to_string(p)));
        if (!seen.insert(id).second) {
          fail(where + ": duplicate image_id '" + id + "' for player " + std::string(to_string(p)));
        }
        ++appearances[{p, id}];
      }
    }
    if (round.truth != derive_truth(round.images_a, round.images_b)) {
      fail(where + ": ground truth disagrees with the image assignment");
    }
  }
  if (game.source == GameSource::HumanCorpus) {
    for (const auto& [key, count] : appearances) {
      if (count > kMaxImageAppearances) {
        fail("image '" + key.second + "' appears " + std::to_string(count) + " times for player " +
             std::string(to_string(key.first)));
      }
    }
  }
}

RoundState::RoundState(RoundAssignment assignment) : assignment_(std::move(assignment)) {}

bool RoundState::submit_guess(Player p, const GuessVector& guesses) {
  auto& slot = p == Player::A ? guess_a_ : guess_b_;
  if (slot) return false;
  slot = guesses;
  return true;
}

int score_player(const LabelTriple& truth, const GuessVector& guesses) {
  int points = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (truth[i] == guesses.values[i]) ++points;
  }
  return points;
}

int score_round(const RoundState& round) {
  for (Player p : kPlayers) {
    if (!round.guess(p)) {
      throw MissingGuess("round " + std::to_string(round.round_no()) + ": player " +
                         std::string(to_string(p)) + " has not guessed");
    }
  }
  return score_player(round.truth().a, *round.guess(Player::A)) +
         score_player(round.truth().b, *round.guess(Player::B));
}

PartialScore score_round_partial(const GroundTruth& truth, const std::optional<GuessVector>& guess_a,
                                 const std::optional<GuessVector>& guess_b) {
  PartialScore s;
  s.missing_a = !guess_a.has_value();
  s.missing_b = !guess_b.has_value();
  if (guess_a) s.points += score_player(truth.a, *guess_a);
  if (guess_b) s.points += score_player(truth.b, *guess_b);
  return s;
}

PartialScore score_round_partial(const RoundState& round) {
  return score_round_partial(round.truth(), round.guess(Player::A), round.guess(Player::B));
}

int score_game(std::span<const RoundState> rounds) {
  int total = 0;
  for (const auto& round : rounds) {
    if (!round.both_guessed()) {
      throw IncompleteGame("round " + std::to_string(round.round_no()) + " lacks guesses");
    }
    total += score_round(round);
  }
  return total;
}

GtRelation gt_pattern_relation(const GroundTruth& truth) {
  return truth.a == truth.b ? GtRelation::SameGT : GtRelation::DifferentGT;
}

std::vector<GameSpec> generate_synthetic_games(std::span<const std::string> pool,
                                               const SyntheticOptions& options) {
  if (options.min_shared < 0 || options.max_shared > 3 || options.min_shared > options.max_shared) {
    throw InvalidGameSpec("synthetic shared-image range must satisfy 0 <= min <= max <= 3");
  }
  if (options.rounds < 1 || options.rounds > kMaxSelfPlayRounds) {
    throw InvalidGameSpec("synthetic games need 1..3 rounds");
  }
  const std::set<std::string> distinct(pool.begin(), pool.end());
  const auto needed = static_cast<std::size_t>(6 - options.min_shared);
  if (distinct.size() < needed) {
    throw InvalidGameSpec("image pool has " + std::to_string(distinct.size()) +
                          " distinct images; need at least " + std::to_string(needed));
  }
  const std::vector<std::string> images(distinct.begin(), distinct.end());

  Rng rng(options.seed);
  std::vector<GameSpec> games;
  games.reserve(static_cast<std::size_t>(options.games));
  for (int g = 0; g < options.games; ++g) {
    GameSpec game;
    char id[32];
    std::snprintf(id, sizeof id, "%03d", g + 1);
    game.game_id = options.id_prefix + id;
    game.source = GameSource::Synthetic;
    for (int r = 1; r <= options.rounds; ++r) {
      const auto span = static_cast<std::uint64_t>(options.max_shared - options.min_shared + 1);
      const int shared = options.min_shared + static_cast<int>(rng.below(span));
      const int draw = 6 - shared;
      if (static_cast<std::size_t>(draw) > images.size()) {
        throw InvalidGameSpec("image pool too small for a round with " + std::to_string(shared) +
                              " shared images");
      }
      // Partial Fisher-Yates over an index vector.
      std::vector<std::size_t> idx(images.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (int i = 0; i < draw; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(idx.size() - static_cast<std::size_t>(i));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
      }
      std::vector<std::string> a;
      std::vector<std::string> b;
      for (int i = 0; i < shared; ++i) {
        a.push_back(images[idx[static_cast<std::size_t>(i)]]);
        b.push_back(images[idx[static_cast<std::size_t>(i)]]);
      }
      for (int i = shared; i < 3; ++i) a.push_back(images[idx[static_cast<std::size_t>(i)]]);
      for (int i = 3; i < draw; ++i) b.push_back(images[idx[static_cast<std::size_t>(i)]]);
      rng.shuffle(a);
      rng.shuffle(b);

      RoundAssignment round;
      round.round_no = r;
      std::copy(a.begin(), a.end(), round.images_a.begin());
      std::copy(b.begin(), b.end(), round.images_b.begin());
      round.truth = derive_truth(round.images_a, round.images_b);
      game.rounds.push_back(std::move(round));
    }
    games.push_back(std::move(game));
  }
  return games;
}

}  // namespace photobook
