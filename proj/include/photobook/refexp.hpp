#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "photobook/protocol.hpp"
#include "photobook/types.hpp"

namespace photobook {

enum class LinkSource { ReferenceField, PatternMatch, Gold };

std::string_view to_string(LinkSource source);
std::optional<LinkSource> parse_link_source(std::string_view text);

/// An utterance span linked to one of the speaker's local image slots.
/// `span_begin`/`span_end` are byte offsets into the turn's message.
struct ReferringExpression {
  std::string game_id;
  int round_no = 1;
  Player speaker = Player::A;
  int turn_no = 1;
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
  std::string text;
  int linked_image = 1;
  LinkSource link_source = LinkSource::PatternMatch;
  std::string rule;  // rule name, chain id for gold

  friend bool operator==(const ReferringExpression&, const ReferringExpression&) = default;
};

class RulesError : public Error {
 public:
  using Error::Error;
};

struct CompiledPattern {
  std::string source;
  std::regex re;
};

enum class RuleLink { Capture, Reference };

struct ExtractionRule {
  std::string name;
  CompiledPattern pattern;
  RuleLink link = RuleLink::Capture;
  int index_group = 1;  // Capture only
  int span_group = 0;
};

/// Versioned rule set, loaded from JSON (see docs/schemas.md).
struct ExtractionRules {
  std::string version;
  std::string clause_breaks = ".!?;\n";
  int min_description_tokens = 2;
  std::map<std::string, int> index_words;
  std::vector<CompiledPattern> mentions;  // every image index named in a clause
  std::vector<CompiledPattern> abstain;   // clause-level vetoes (meta talk etc.)
  std::vector<CompiledPattern> reject_descriptions;
  std::vector<ExtractionRule> rules;      // ordered; first rule to fire wins

  static ExtractionRules from_json(const nlohmann::json& doc);  // throws RulesError
  static ExtractionRules load(const std::string& path);
  static const ExtractionRules& builtin();

  /// Copy with the named rule removed.
  ExtractionRules without(std::string_view rule_name) const;
};

/// Precision-first extraction. A clause yields at most one expression, and
/// only when exactly one image index is recoverable from it. An explicit
/// reference field decides the link; pattern links that contradict it are
/// dropped.
std::vector<ReferringExpression> extract(const Turn& turn, const ExtractionRules& rules,
                                         const std::string& game_id, int round_no);

/// All rounds up to `max_round` of a transcript.
std::vector<ReferringExpression> extract(const Transcript& transcript, const ExtractionRules& rules,
                                         int max_round = 3);

class KeyMismatch : public Error {
 public:
  using Error::Error;
};

struct RoundKey {
  std::string game_id;
  int round_no = 1;

  auto operator<=>(const RoundKey&) const = default;
};

struct ExtractionScores {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Link-level scoring: a prediction is a true positive iff some gold
/// expression links the same (game, round, turn, image). Duplicates collapse.
/// With `scope`, predictions outside it are ignored and gold outside it is a
/// KeyMismatch; without, predictions for rounds absent from gold are.
ExtractionScores validate(const std::vector<ReferringExpression>& predicted,
                          const std::vector<ReferringExpression>& gold,
                          const std::optional<std::set<RoundKey>>& scope = std::nullopt);

ExtractionScores scores_from_counts(int tp, int fp, int fn);

}  // namespace photobook
