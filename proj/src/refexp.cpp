#include "photobook/refexp.hpp"

#include <fstream>
#include <sstream>

#include "photobook/assets.hpp"
#include "photobook/text.hpp"

namespace photobook {
namespace {

using nlohmann::json;
using Match = std::match_results<std::string::const_iterator>;

CompiledPattern compile(const std::string& source) {
  try {
    return {source, std::regex(source, std::regex::ECMAScript | std::regex::icase)};
  } catch (const std::regex_error& e) {
    throw RulesError("bad pattern '" + source + "': " + e.what());
  }
}

std::vector<CompiledPattern> compile_list(const json& doc, const char* key) {
  std::vector<CompiledPattern> out;
  if (!doc.contains(key)) return out;
  for (const auto& p : doc.at(key)) out.push_back(compile(p.get<std::string>()));
  return out;
}

bool any_match(const std::vector<CompiledPattern>& patterns, const std::string& s) {
  for (const auto& p : patterns) {
    if (std::regex_search(s, p.re)) return true;
  }
  return false;
}

struct Clause {
  std::size_t offset = 0;
  std::string text;
};

std::vector<Clause> split_clauses(const std::string& message, const std::string& breaks) {
  std::vector<Clause> clauses;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= message.size(); ++i) {
    if (i == message.size() || breaks.find(message[i]) != std::string::npos) {
      if (i > start) clauses.push_back({start, message.substr(start, i - start)});
      start = i + 1;
    }
  }
  return clauses;
}

bool is_trailing_junk(char c) {
  return c == ',' || c == ':' || c == '-' || c == '"' || c == '\'' || c == ' ' || c == '\t' || c == '\r';
}

}  // namespace

std::string_view to_string(LinkSource source) {
  switch (source) {
    case LinkSource::ReferenceField: return "reference_field";
    case LinkSource::PatternMatch: return "pattern_match";
    case LinkSource::Gold: return "gold";
  }
  return "pattern_match";
}

std::optional<LinkSource> parse_link_source(std::string_view text) {
  for (auto s : {LinkSource::ReferenceField, LinkSource::PatternMatch, LinkSource::Gold}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

ExtractionRules ExtractionRules::from_json(const json& doc) {
  ExtractionRules rules;
  try {
    rules.version = doc.at("version").get<std::string>();
    rules.clause_breaks = doc.value("clause_breaks", rules.clause_breaks);
    rules.min_description_tokens = doc.value("min_description_tokens", rules.min_description_tokens);
    for (const auto& [word, index] : doc.at("index_words").items()) {
      const int k = index.get<int>();
      if (k < 1 || k > 3) throw RulesError("index word '" + word + "' maps outside 1..3");
      rules.index_words[text::to_lower(word)] = k;
    }
    rules.mentions = compile_list(doc, "mentions");
    rules.abstain = compile_list(doc, "abstain");
    rules.reject_descriptions = compile_list(doc, "reject_descriptions");
    for (const auto& r : doc.at("rules")) {
      ExtractionRule rule;
      rule.name = r.at("name").get<std::string>();
      rule.pattern = compile(r.at("pattern").get<std::string>());
      const std::string link = r.value("link", "capture");
      if (link == "capture") {
        rule.link = RuleLink::Capture;
      } else if (link == "reference") {
        rule.link = RuleLink::Reference;
      } else {
        throw RulesError("rule '" + rule.name + "': unknown link '" + link + "'");
      }
      rule.index_group = r.value("index_group", 1);
      rule.span_group = r.value("span_group", 0);
      const auto groups = static_cast<int>(rule.pattern.re.mark_count());
      if (rule.span_group > groups || (rule.link == RuleLink::Capture && rule.index_group > groups)) {
        throw RulesError("rule '" + rule.name + "' names a capture group it does not have");
      }
      rules.rules.push_back(std::move(rule));
    }
  } catch (const json::exception& e) {
    throw RulesError(std::string("rules document: ") + e.what());
  }
  return rules;
}

ExtractionRules ExtractionRules::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RulesError("cannot open rules file " + path);
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw RulesError(path + ": not valid JSON");
  return from_json(doc);
}

const ExtractionRules& ExtractionRules::builtin() {
  static const ExtractionRules rules = from_json(json::parse(assets::refexp_rules()));
  return rules;
}

ExtractionRules ExtractionRules::without(std::string_view rule_name) const {
  ExtractionRules copy = *this;
  std::erase_if(copy.rules, [&](const ExtractionRule& r) { return r.name == rule_name; });
  return copy;
}

std::vector<ReferringExpression> extract(const Turn& turn, const ExtractionRules& rules,
                                         const std::string& game_id, int round_no) {
  std::vector<ReferringExpression> out;
  for (const Clause& clause : split_clauses(turn.message, rules.clause_breaks)) {
    if (text::is_blank(clause.text) || any_match(rules.abstain, clause.text)) continue;

    std::set<int> mentioned;
    for (const auto& p : rules.mentions) {
      for (std::sregex_iterator it(clause.text.begin(), clause.text.end(), p.re), end; it != end; ++it) {
        for (std::size_t g = 1; g < it->size(); ++g) {
          if (!(*it)[g].matched) continue;
          auto w = rules.index_words.find(text::to_lower((*it)[g].str()));
          if (w != rules.index_words.end()) mentioned.insert(w->second);
        }
      }
    }
    if (mentioned.size() > 1) continue;

    for (const auto& rule : rules.rules) {
      Match m;
      if (!std::regex_search(clause.text, m, rule.pattern.re)) continue;

      int index = 0;
      LinkSource source = LinkSource::PatternMatch;
      if (rule.link == RuleLink::Capture) {
        const auto w = rules.index_words.find(text::to_lower(m[rule.index_group].str()));
        if (w == rules.index_words.end()) continue;
        index = w->second;
        if (!mentioned.empty() && !mentioned.count(index)) continue;
        if (turn.reference) {
          if (*turn.reference != index) continue;
          source = LinkSource::ReferenceField;
        }
      } else {
        if (!turn.reference) continue;
        index = *turn.reference;
        if (!mentioned.empty() && !mentioned.count(index)) continue;
        source = LinkSource::ReferenceField;
      }

      auto begin = static_cast<std::size_t>(m.position(rule.span_group));
      auto end = begin + static_cast<std::size_t>(m.length(rule.span_group));
      while (end > begin && is_trailing_junk(clause.text[end - 1])) --end;
      while (begin < end && (clause.text[begin] == ' ' || clause.text[begin] == '\t')) ++begin;
      const std::string description = clause.text.substr(begin, end - begin);
      if (static_cast<int>(text::count_words(description)) < rules.min_description_tokens) continue;
      if (any_match(rules.reject_descriptions, description)) continue;

      ReferringExpression expr;
      expr.game_id = game_id;
      expr.round_no = round_no;
      expr.speaker = turn.speaker;
      expr.turn_no = turn.turn_no;
      expr.span_begin = clause.offset + begin;
      expr.span_end = clause.offset + end;
      expr.text = description;
      expr.linked_image = index;
      expr.link_source = source;
      expr.rule = rule.name;
      out.push_back(std::move(expr));
      break;
    }
  }
  return out;
}

std::vector<ReferringExpression> extract(const Transcript& transcript, const ExtractionRules& rules, int max_round) {
  std::vector<ReferringExpression> out;
  for (const auto& round : transcript.rounds) {
    if (round.round_no > max_round) continue;
    for (const auto& turn : round.turns) {
      auto found = extract(turn, rules, transcript.game_id, round.round_no);
      out.insert(out.end(), std::make_move_iterator(found.begin()), std::make_move_iterator(found.end()));
    }
  }
  return out;
}

ExtractionScores scores_from_counts(int tp, int fp, int fn) {
  ExtractionScores s;
  s.true_positives = tp;
  s.false_positives = fp;
  s.false_negatives = fn;
  s.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

ExtractionScores validate(const std::vector<ReferringExpression>& predicted,
                          const std::vector<ReferringExpression>& gold,
                          const std::optional<std::set<RoundKey>>& scope) {
  using LinkKey = std::tuple<std::string, int, int, int>;
  auto link_key = [](const ReferringExpression& e) {
    return LinkKey{e.game_id, e.round_no, e.turn_no, e.linked_image};
  };
  std::set<RoundKey> gold_rounds;
  std::set<LinkKey> gold_links;
  for (const auto& g : gold) {
    RoundKey key{g.game_id, g.round_no};
    if (scope && !scope->count(key)) {
      throw KeyMismatch("gold expression for " + g.game_id + " round " + std::to_string(g.round_no) +
                        " lies outside the annotated scope");
    }
    gold_rounds.insert(std::move(key));
    gold_links.insert(link_key(g));
  }
  std::set<LinkKey> predicted_links;
  for (const auto& p : predicted) {
    RoundKey key{p.game_id, p.round_no};
    if (scope) {
      if (!scope->count(key)) continue;
    } else if (!gold_rounds.count(key)) {
      throw KeyMismatch("prediction for " + p.game_id + " round " + std::to_string(p.round_no) +
                        " has no gold counterpart");
    }
    predicted_links.insert(link_key(p));
  }
  int tp = 0;
  for (const auto& k : predicted_links) tp += gold_links.count(k) ? 1 : 0;
  const int fp = static_cast<int>(predicted_links.size()) - tp;
  const int fn = static_cast<int>(gold_links.size()) - tp;
  return scores_from_counts(tp, fp, fn);
}

}  // namespace photobook
