#include "photobook/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include "photobook/text.hpp"

namespace photobook {

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  a.n = values.size();
  if (a.n == 0) {
    a.mean = std::numeric_limits<double>::quiet_NaN();
    return a;
  }
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.sd = std::sqrt(ss / static_cast<double>(a.n - 1));
    a.se = a.sd / std::sqrt(static_cast<double>(a.n));
  }
  return a;
}

std::optional<double> pct_change(double baseline, double value) {
  if (baseline == 0.0) return std::nullopt;
  return (value - baseline) / baseline * 100.0;
}

GameMetrics efficiency(const Transcript& transcript, const GameSpec& game, int max_round) {
  GameMetrics gm;
  gm.game_id = transcript.game_id;
  gm.system = transcript.system;
  std::vector<const RoundRecord*> rounds;
  for (const auto& r : transcript.rounds) {
    if (r.round_no <= max_round) rounds.push_back(&r);
  }
  std::sort(rounds.begin(), rounds.end(), [](auto* a, auto* b) { return a->round_no < b->round_no; });

  std::string dialogue;
  for (const RoundRecord* r : rounds) {
    RoundMetrics rm;
    rm.game_id = transcript.game_id;
    rm.round_no = r->round_no;
    rm.score = r->score ? *r->score : score_round_partial(game.round(r->round_no).truth, r->guess_a, r->guess_b).points;
    rm.words = count_words(*r);
    rm.turns = static_cast<int>(r->turns.size());
    rm.missing_guess = r->missing_guess;
    rm.same_gt = gt_pattern_relation(game.round(r->round_no).truth) == GtRelation::SameGT;
    gm.total_score += rm.score;
    gm.total_words += rm.words;
    gm.total_turns += rm.turns;
    gm.same_gt_rounds += rm.same_gt ? 1 : 0;
    gm.missing_guess_rounds += rm.missing_guess ? 1 : 0;
    for (const auto& t : r->turns) {
      if (!dialogue.empty()) dialogue += "\n";
      dialogue += t.message;
    }
    gm.rounds.push_back(std::move(rm));
  }
  if (!gm.rounds.empty()) {
    const auto& first = gm.rounds.front();
    gm.zero_baseline = first.words == 0 || first.turns == 0;
    for (auto& rm : gm.rounds) {
      rm.pct_change_words = pct_change(first.words, rm.words);
      rm.pct_change_turns = pct_change(first.turns, rm.turns);
    }
  }
  gm.dialogue_text = std::move(dialogue);
  return gm;
}

double clip_from_cosine(double cosine_value, double scale) { return scale * std::max(cosine_value, 0.0); }

double clipscore_abs(const EmbeddingVector& utterance, const EmbeddingVector& image, double scale) {
  return clip_from_cosine(cosine(utterance, image), scale);
}

double clipscore_con(const EmbeddingVector& utterance, const EmbeddingVector& target,
                     std::span<const EmbeddingVector> distractors, double scale) {
  if (distractors.empty()) throw EmptyDistractorSet("contrastive CLIPScore needs at least one distractor");
  double sum = 0.0;
  for (const auto& d : distractors) sum += clipscore_abs(utterance, d, scale);
  return clipscore_abs(utterance, target, scale) - sum / static_cast<double>(distractors.size());
}

double clipscore_abs(EmbeddingGateway& gateway, const std::string& utterance, const std::string& image, double scale) {
  return clipscore_abs(gateway.embed_one(ModelTag::JointText, utterance), gateway.embed_one(ModelTag::JointImage, image),
                       scale);
}

double clipscore_con(EmbeddingGateway& gateway, const std::string& utterance, const std::string& target,
                     const std::vector<std::string>& distractors, double scale) {
  if (distractors.empty()) throw EmptyDistractorSet("contrastive CLIPScore needs at least one distractor");
  std::vector<EmbeddingVector> d;
  for (const auto& img : distractors) d.push_back(gateway.embed_one(ModelTag::JointImage, img));
  return clipscore_con(gateway.embed_one(ModelTag::JointText, utterance), gateway.embed_one(ModelTag::JointImage, target),
                       d, scale);
}

EditCounts min_alignment(std::span<const std::string> prev, std::span<const std::string> curr) {
  const std::size_t n = prev.size(), m = curr.size();
  // Cell value: (cost, insertions + substitutions), compared lexicographically.
  using Key = std::pair<int, int>;
  struct Cell {
    Key key;
    EditCounts counts;
  };
  std::vector<std::vector<Cell>> dp(n + 1, std::vector<Cell>(m + 1));
  for (std::size_t i = 1; i <= n; ++i) {
    dp[i][0] = dp[i - 1][0];
    dp[i][0].counts.deletions += 1;
    dp[i][0].key.first += 1;
  }
  for (std::size_t j = 1; j <= m; ++j) {
    dp[0][j] = dp[0][j - 1];
    dp[0][j].counts.insertions += 1;
    dp[0][j].key = {dp[0][j].key.first + 1, dp[0][j].key.second + 1};
  }
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      Cell best = dp[i - 1][j - 1];
      if (prev[i - 1] != curr[j - 1]) {
        best.counts.substitutions += 1;
        best.key = {best.key.first + 1, best.key.second + 1};
      }
      Cell del = dp[i - 1][j];
      del.counts.deletions += 1;
      del.key.first += 1;
      if (del.key < best.key) best = del;
      Cell ins = dp[i][j - 1];
      ins.counts.insertions += 1;
      ins.key = {ins.key.first + 1, ins.key.second + 1};
      if (ins.key < best.key) best = ins;
      dp[i][j] = best;
    }
  }
  return dp[n][m].counts;
}

std::optional<double> wnr(std::span<const std::string> prev, std::span<const std::string> curr) {
  if (prev.empty()) return std::nullopt;
  if (curr.empty()) return 0.0;
  const EditCounts c = min_alignment(prev, curr);
  return static_cast<double>(c.insertions + c.substitutions) / static_cast<double>(curr.size());
}

double UnigramDist::prob(const std::string& token) const {
  const auto it = probs.find(token);
  return it == probs.end() ? 0.0 : it->second;
}

TokenCounts unigram_counts(std::span<const std::string> tokens) {
  TokenCounts counts;
  for (const auto& t : tokens) counts[t] += 1.0;
  return counts;
}

std::pair<UnigramDist, UnigramDist> smoothed_pair(const TokenCounts& first, const TokenCounts& second, double epsilon) {
  auto mass = [](const TokenCounts& c) {
    double total = 0.0;
    for (const auto& [_, v] : c) {
      if (v < 0.0 || !std::isfinite(v)) throw EmptyDistribution("token weights must be finite and non-negative");
      total += v;
    }
    return total;
  };
  if (mass(first) <= 0.0 || mass(second) <= 0.0) throw EmptyDistribution("unigram distribution with no mass");
  std::set<std::string> support;
  for (const auto& [w, _] : first) support.insert(w);
  for (const auto& [w, _] : second) support.insert(w);

  auto build = [&](const TokenCounts& c) {
    UnigramDist d;
    d.epsilon = epsilon;
    double total = 0.0;
    for (const auto& w : support) {
      const auto it = c.find(w);
      const double v = (it == c.end() ? 0.0 : it->second) + epsilon;
      d.probs[w] = v;
      total += v;
    }
    for (auto& [_, p] : d.probs) p /= total;
    return d;
  };
  return {build(first), build(second)};
}

double kl_divergence(const UnigramDist& p, const UnigramDist& q) {
  if (p.probs.empty()) throw EmptyDistribution("KL of an empty distribution");
  double kl = 0.0;
  for (const auto& [w, pw] : p.probs) {
    if (pw == 0.0) continue;
    const double qw = q.prob(w);
    if (qw <= 0.0) throw EmptyDistribution("second distribution does not cover '" + w + "'");
    kl += pw * std::log(pw / qw);
  }
  return std::max(kl, 0.0);
}

double kl_round(const TokenCounts& round1, const TokenCounts& round_r, double epsilon) {
  const auto [p, q] = smoothed_pair(round1, round_r, epsilon);
  return kl_divergence(p, q);
}

namespace {

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimMismatch("energy distance over vectors of different dims");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

double mean_pairwise(std::span<const std::vector<double>> x, std::span<const std::vector<double>> y) {
  double sum = 0.0;
  for (const auto& a : x) {
    for (const auto& b : y) sum += euclidean(a, b);
  }
  return sum / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
}

}  // namespace

EnergyDistance energy_distance(std::span<const std::vector<double>> first, std::span<const std::vector<double>> second) {
  if (first.size() < 2 || second.size() < 2) throw TooFewSamples("energy distance needs at least 2 samples per side");
  // Sorted copies make the sums independent of input order.
  std::vector<std::vector<double>> x(first.begin(), first.end()), y(second.begin(), second.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  EnergyDistance e;
  e.cross_mean = mean_pairwise(x, y);
  e.within_first = mean_pairwise(x, x);
  e.within_second = mean_pairwise(y, y);
  e.raw = std::max(2.0 * e.cross_mean - e.within_first - e.within_second, 0.0);
  e.percent = e.cross_mean > 0.0 ? 100.0 * (1.0 - (e.within_first + e.within_second) / (2.0 * e.cross_mean)) : 0.0;
  return e;
}

namespace {

struct ResolvedRef {
  const ReferringExpression* expr;
  std::string image_id;
  std::vector<std::string> distractors;
};

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

}  // namespace

GameMetrics compute_game_metrics(const Transcript& transcript, const GameSpec& game,
                                 const std::vector<ReferringExpression>& refexps, EmbeddingGateway* gateway,
                                 const MetricsOptions& options) {
  GameMetrics gm = efficiency(transcript, game, options.max_round);

  std::vector<ResolvedRef> refs;
  for (const auto& e : refexps) {
    if (e.game_id != transcript.game_id || e.round_no > options.max_round) continue;
    const auto& images = game.round(e.round_no).images(e.speaker);
    ResolvedRef r{&e, images[static_cast<std::size_t>(e.linked_image - 1)], {}};
    for (int k = 1; k <= 3; ++k) {
      if (k != e.linked_image) r.distractors.push_back(images[static_cast<std::size_t>(k - 1)]);
    }
    refs.push_back(std::move(r));
  }
  std::stable_sort(refs.begin(), refs.end(), [](const ResolvedRef& a, const ResolvedRef& b) {
    return std::tie(a.expr->round_no, a.expr->turn_no, a.expr->span_begin) <
           std::tie(b.expr->round_no, b.expr->turn_no, b.expr->span_begin);
  });

  auto round_metrics = [&](int round_no) -> RoundMetrics* {
    for (auto& rm : gm.rounds) {
      if (rm.round_no == round_no) return &rm;
    }
    return nullptr;
  };
  for (const auto& r : refs) {
    if (auto* rm = round_metrics(r.expr->round_no)) rm->refexps += 1;
  }

  // Content alignment.
  if (gateway && !refs.empty()) {
    std::vector<std::string> texts, images;
    for (const auto& r : refs) {
      texts.push_back(r.expr->text);
      images.push_back(r.image_id);
      images.insert(images.end(), r.distractors.begin(), r.distractors.end());
    }
    std::sort(texts.begin(), texts.end());
    texts.erase(std::unique(texts.begin(), texts.end()), texts.end());
    std::sort(images.begin(), images.end());
    images.erase(std::unique(images.begin(), images.end()), images.end());
    auto index = [](const std::vector<std::string>& items, const EmbeddingResponse& resp) {
      std::map<std::string, EmbeddingVector> out;
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (resp.vectors[i]) out.emplace(items[i], *resp.vectors[i]);
      }
      return out;
    };
    const auto text_vecs = index(texts, gateway->embed({ModelTag::JointText, texts}));
    const auto image_vecs = index(images, gateway->embed({ModelTag::JointImage, images}));

    std::map<int, std::vector<double>> abs_by_round, con_by_round;
    for (const auto& r : refs) {
      const auto t = text_vecs.find(r.expr->text);
      const auto target = image_vecs.find(r.image_id);
      if (t == text_vecs.end() || target == image_vecs.end()) continue;
      std::vector<EmbeddingVector> distractors;
      for (const auto& d : r.distractors) {
        if (auto it = image_vecs.find(d); it != image_vecs.end()) distractors.push_back(it->second);
      }
      try {
        abs_by_round[r.expr->round_no].push_back(clipscore_abs(t->second, target->second, options.clip_scale));
        if (!distractors.empty()) {
          con_by_round[r.expr->round_no].push_back(
              clipscore_con(t->second, target->second, distractors, options.clip_scale));
        }
      } catch (const ZeroVector&) {
      }
    }
    for (auto& rm : gm.rounds) {
      if (auto it = abs_by_round.find(rm.round_no); it != abs_by_round.end()) rm.clip_abs = mean_of(it->second);
      if (auto it = con_by_round.find(rm.round_no); it != con_by_round.end()) rm.clip_con = mean_of(it->second);
    }
  }

  // Lexical adaptation: successive expressions for one image across rounds.
  std::map<std::pair<std::string, std::string>, std::vector<const ResolvedRef*>> chains;
  for (const auto& r : refs) {
    const std::string who = options.wnr_pairing == WnrPairing::SameSpeaker ? std::string(to_string(r.expr->speaker)) : "";
    chains[{who, r.image_id}].push_back(&r);
  }
  std::map<int, std::vector<double>> wnr_by_round;
  std::vector<double> wnr_all;
  for (const auto& [_, chain] : chains) {
    for (std::size_t i = 1; i < chain.size(); ++i) {
      if (chain[i]->expr->round_no == chain[i - 1]->expr->round_no) continue;
      const auto prev = text::lexical_tokens(chain[i - 1]->expr->text);
      const auto curr = text::lexical_tokens(chain[i]->expr->text);
      const auto value = wnr(prev, curr);
      if (!value) {
        ++gm.wnr_skipped;
        continue;
      }
      wnr_by_round[chain[i]->expr->round_no].push_back(*value);
      wnr_all.push_back(*value);
    }
  }
  gm.wnr_pairs = static_cast<int>(wnr_all.size());
  if (!wnr_all.empty()) gm.wnr = mean_of(wnr_all);
  for (auto& rm : gm.rounds) {
    if (auto it = wnr_by_round.find(rm.round_no); it != wnr_by_round.end()) rm.wnr = mean_of(it->second);
  }

  std::map<int, TokenCounts> counts;
  for (const auto& r : refs) {
    for (const auto& tok : text::lexical_tokens(r.expr->text)) counts[r.expr->round_no][tok] += 1.0;
  }
  auto kl_between = [&](int a, int b) -> std::optional<double> {
    const auto ia = counts.find(a), ib = counts.find(b);
    if (ia == counts.end() || ib == counts.end()) return std::nullopt;
    try {
      return kl_round(ia->second, ib->second, options.kl_epsilon);
    } catch (const EmptyDistribution&) {
      return std::nullopt;
    }
  };
  for (auto& rm : gm.rounds) {
    rm.kl_from_r1 = kl_between(1, rm.round_no);
    if (rm.round_no > 1) rm.kl_from_prev = kl_between(rm.round_no - 1, rm.round_no);
  }

  if (gateway && !gm.dialogue_text.empty()) {
    try {
      gm.dialogue_embedding = gateway->embed_one(ModelTag::Sentence, gm.dialogue_text).values;
    } catch (const EmbeddingError&) {
    }
  }
  return gm;
}

}  // namespace photobook
