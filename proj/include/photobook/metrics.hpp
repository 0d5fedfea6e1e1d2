#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "photobook/embedding.hpp"
#include "photobook/game.hpp"
#include "photobook/protocol.hpp"
#include "photobook/refexp.hpp"

namespace photobook {

class EmptyDistractorSet : public Error {
 public:
  using Error::Error;
};

class EmptyDistribution : public Error {
 public:
  using Error::Error;
};

class TooFewSamples : public Error {
 public:
  using Error::Error;
};

// ---- aggregates -----------------------------------------------------------

/// Mean, sample standard deviation (n-1) and standard error. SD and SE are 0
/// for a single value; mean is NaN for none.
struct Aggregate {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
};

Aggregate aggregate(std::span<const double> values);

// ---- grounding efficiency -------------------------------------------------

/// (x_r - x_1) / x_1 * 100; empty when x_1 is 0.
std::optional<double> pct_change(double baseline, double value);

struct RoundMetrics {
  std::string game_id;
  int round_no = 1;
  int score = 0;
  int words = 0;
  int turns = 0;
  std::optional<double> pct_change_words;
  std::optional<double> pct_change_turns;
  std::optional<double> clip_abs;
  std::optional<double> clip_con;
  std::optional<double> wnr;
  std::optional<double> kl_from_r1;
  std::optional<double> kl_from_prev;
  int refexps = 0;
  bool missing_guess = false;
  bool same_gt = false;
};

struct GameMetrics {
  std::string game_id;
  std::string system;
  int total_score = 0;
  int total_words = 0;
  int total_turns = 0;
  std::vector<RoundMetrics> rounds;
  bool zero_baseline = false;  // round-1 words or turns were 0
  int same_gt_rounds = 0;
  int missing_guess_rounds = 0;
  std::optional<double> wnr;   // over all pairs in the game
  int wnr_pairs = 0;
  int wnr_skipped = 0;         // pairs with an empty previous expression
  std::string dialogue_text;   // rounds 1..max_round joined by newlines
  std::optional<std::vector<double>> dialogue_embedding;
};

/// Score, word and turn totals plus per-round trajectories over rounds
/// 1..max_round. Round scores come from the transcript (partial scoring).
GameMetrics efficiency(const Transcript& transcript, const GameSpec& game, int max_round = kMaxSelfPlayRounds);

// ---- content alignment ----------------------------------------------------

/// scale * max(cos, 0).
double clip_from_cosine(double cosine_value, double scale = 100.0);

double clipscore_abs(const EmbeddingVector& utterance, const EmbeddingVector& image, double scale = 100.0);

/// Target score minus the mean distractor score. Throws EmptyDistractorSet.
double clipscore_con(const EmbeddingVector& utterance, const EmbeddingVector& target,
                     std::span<const EmbeddingVector> distractors, double scale = 100.0);

double clipscore_abs(EmbeddingGateway& gateway, const std::string& utterance, const std::string& image,
                     double scale = 100.0);
double clipscore_con(EmbeddingGateway& gateway, const std::string& utterance, const std::string& target,
                     const std::vector<std::string>& distractors, double scale = 100.0);

// ---- lexical adaptation ---------------------------------------------------

struct EditCounts {
  int insertions = 0;
  int substitutions = 0;
  int deletions = 0;

  int cost() const { return insertions + substitutions + deletions; }
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

/// Unit-cost alignment turning `prev` into `curr`. Among minimum-cost
/// alignments, the one with the fewest insertions + substitutions.
EditCounts min_alignment(std::span<const std::string> prev, std::span<const std::string> curr);

/// (insertions + substitutions) / |curr|. Empty when prev is empty; 0 when
/// curr is empty.
std::optional<double> wnr(std::span<const std::string> prev, std::span<const std::string> curr);

enum class WnrPairing { SameSpeaker, AnySpeaker };

struct UnigramDist {
  std::map<std::string, double> probs;
  double epsilon = 1e-8;

  double prob(const std::string& token) const;  // 0 outside the support
};

using TokenCounts = std::map<std::string, double>;

TokenCounts unigram_counts(std::span<const std::string> tokens);

/// Both distributions over the union support, epsilon added to every count,
/// then renormalized. Throws EmptyDistribution if either side has no mass.
std::pair<UnigramDist, UnigramDist> smoothed_pair(const TokenCounts& first, const TokenCounts& second,
                                                  double epsilon = 1e-8);

/// KL(p || q), natural log, over p's support. q must cover that support.
double kl_divergence(const UnigramDist& p, const UnigramDist& q);

/// KL between a round-1 and a round-r token multiset (smoothed pair).
double kl_round(const TokenCounts& round1, const TokenCounts& round_r, double epsilon = 1e-8);

// ---- human-likeness -------------------------------------------------------

struct EnergyDistance {
  double raw = 0.0;
  double percent = 0.0;
  double cross_mean = 0.0;     // A
  double within_first = 0.0;   // B
  double within_second = 0.0;  // C
};

/// 2A - B - C with Euclidean distance, means over all ordered pairs (diagonal
/// included); percent = 100 (1 - (B + C) / 2A), 0 when A is 0. Each side is
/// summed in lexicographic order, so the result depends only on the multisets.
/// Throws TooFewSamples below 2 vectors per side, DimMismatch on ragged input.
EnergyDistance energy_distance(std::span<const std::vector<double>> first,
                               std::span<const std::vector<double>> second);

// ---- per-game suite -------------------------------------------------------

struct MetricsOptions {
  double clip_scale = 100.0;
  WnrPairing wnr_pairing = WnrPairing::SameSpeaker;
  double kl_epsilon = 1e-8;
  int max_round = kMaxSelfPlayRounds;
};

/// Efficiency plus CLIPScore, WNR and KL from the given referring
/// expressions. With a gateway, also the dialogue embedding. Expressions
/// whose embeddings fail are skipped.
GameMetrics compute_game_metrics(const Transcript& transcript, const GameSpec& game,
                                 const std::vector<ReferringExpression>& refexps, EmbeddingGateway* gateway,
                                 const MetricsOptions& options = {});

}  // namespace photobook
