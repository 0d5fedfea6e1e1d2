#include "photobook/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "photobook/assets.hpp"
#include "photobook/crypto.hpp"
#include "photobook/serialization.hpp"

namespace photobook {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& doc, const char* key) {
  const auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : width_(header.size()) { row(header); }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != width_) throw Error("csv row width mismatch");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_field(fields[i]);
    }
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

 private:
  std::size_t width_;
  std::ostringstream out_;
};

std::string num(std::optional<double> v) { return format_number(v); }
std::string num(double v) { return format_number(v); }
std::string integer(long v) { return std::to_string(v); }

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string versions(const std::map<std::string, std::string>& v) {
  std::vector<std::string> parts;
  for (const auto& [tag, version] : v) parts.push_back(tag + "=" + version);
  return join(parts, ";");
}

const json& anchors() {
  static const json doc = json::parse(assets::reference_anchors());
  return doc;
}

std::optional<double> anchor_value(const std::vector<std::string>& path) {
  const json* node = &anchors();
  for (const auto& key : path) {
    if (!node->is_object() || !node->contains(key)) return std::nullopt;
    node = &(*node)[key];
  }
  if (node->is_array() && !node->empty()) return (*node)[0].get<double>();
  if (node->is_number()) return node->get<double>();
  return std::nullopt;
}

std::vector<double> collect(const std::vector<GameMetrics>& games, double (*get)(const GameMetrics&)) {
  std::vector<double> out;
  for (const auto& g : games) out.push_back(get(g));
  return out;
}

std::vector<const SystemMetrics*> sorted(const std::vector<SystemMetrics>& systems) {
  std::vector<const SystemMetrics*> out;
  for (const auto& s : systems) out.push_back(&s);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->system < b->system; });
  return out;
}

std::vector<const GameMetrics*> sorted_games(const SystemMetrics& s) {
  std::vector<const GameMetrics*> out;
  for (const auto& g : s.games) out.push_back(&g);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->game_id < b->game_id; });
  return out;
}

std::string inflation_csv(const std::vector<SystemMetrics>& systems) {
  Csv csv({"system", "anchor", "same_gt_rounds", "different_gt_rounds", "same_gt_mean", "different_gt_mean", "delta",
           "status", "published_delta", "published_delta_alt"});
  for (const SystemMetrics* s : sorted(systems)) {
    const auto rounds = scored_rounds(*s);
    int same = 0;
    for (const auto& r : rounds) same += r.relation == GtRelation::SameGT ? 1 : 0;
    const auto pub = anchor_value({"inflation_delta", s->anchor, "chart"});
    const auto alt = anchor_value({"inflation_delta", s->anchor, "alternate"});
    try {
      const InflationResult r = inflation_analysis(s->system, rounds);
      csv.row({s->system, s->anchor, integer(r.same_gt_rounds), integer(r.different_gt_rounds), num(r.same_gt_mean),
               num(r.different_gt_mean), num(r.delta), "ok", num(pub), num(alt)});
    } catch (const EmptyGroup&) {
      csv.row({s->system, s->anchor, integer(same), integer(static_cast<long>(rounds.size()) - same), "", "", "",
               "empty_group", num(pub), num(alt)});
    }
  }
  return csv.str();
}

}  // namespace

std::string format_number(std::optional<double> value) {
  if (!value || !std::isfinite(*value)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *value);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

json to_json(const RoundMetrics& m) {
  return {{"game_id", m.game_id},
          {"round_no", m.round_no},
          {"score", m.score},
          {"words", m.words},
          {"turns", m.turns},
          {"pct_change_words", opt(m.pct_change_words)},
          {"pct_change_turns", opt(m.pct_change_turns)},
          {"clip_abs", opt(m.clip_abs)},
          {"clip_con", opt(m.clip_con)},
          {"wnr", opt(m.wnr)},
          {"kl_from_r1", opt(m.kl_from_r1)},
          {"kl_from_prev", opt(m.kl_from_prev)},
          {"refexps", m.refexps},
          {"missing_guess", m.missing_guess},
          {"same_gt", m.same_gt}};
}

json to_json(const GameMetrics& m) {
  json rounds = json::array();
  for (const auto& r : m.rounds) rounds.push_back(to_json(r));
  return {{"game_id", m.game_id},
          {"system", m.system},
          {"total_score", m.total_score},
          {"total_words", m.total_words},
          {"total_turns", m.total_turns},
          {"rounds", rounds},
          {"zero_baseline", m.zero_baseline},
          {"same_gt_rounds", m.same_gt_rounds},
          {"missing_guess_rounds", m.missing_guess_rounds},
          {"wnr", opt(m.wnr)},
          {"wnr_pairs", m.wnr_pairs},
          {"wnr_skipped", m.wnr_skipped},
          {"dialogue_embedding", m.dialogue_embedding ? json(*m.dialogue_embedding) : json(nullptr)}};
}

json to_json(const SystemMetrics& m) {
  json games = json::array();
  for (const auto& g : m.games) games.push_back(to_json(g));
  return {{"schema", kMetricsSchema},
          {"system", m.system},
          {"source", m.source},
          {"prompt", m.prompt},
          {"anchor", m.anchor},
          {"agents", m.agents},
          {"rules_version", m.rules_version},
          {"refexp_source", m.refexp_source},
          {"embedding_versions", m.embedding_versions},
          {"sample", m.sample},
          {"seed", m.seed},
          {"games", games}};
}

RoundMetrics round_metrics_from_json(const json& d) {
  RoundMetrics m;
  m.game_id = d.at("game_id").get<std::string>();
  m.round_no = d.at("round_no").get<int>();
  m.score = d.at("score").get<int>();
  m.words = d.at("words").get<int>();
  m.turns = d.at("turns").get<int>();
  m.pct_change_words = opt_from(d, "pct_change_words");
  m.pct_change_turns = opt_from(d, "pct_change_turns");
  m.clip_abs = opt_from(d, "clip_abs");
  m.clip_con = opt_from(d, "clip_con");
  m.wnr = opt_from(d, "wnr");
  m.kl_from_r1 = opt_from(d, "kl_from_r1");
  m.kl_from_prev = opt_from(d, "kl_from_prev");
  m.refexps = d.value("refexps", 0);
  m.missing_guess = d.value("missing_guess", false);
  m.same_gt = d.value("same_gt", false);
  return m;
}

GameMetrics game_metrics_from_json(const json& d) {
  GameMetrics m;
  m.game_id = d.at("game_id").get<std::string>();
  m.system = d.value("system", "");
  m.total_score = d.at("total_score").get<int>();
  m.total_words = d.at("total_words").get<int>();
  m.total_turns = d.at("total_turns").get<int>();
  for (const auto& r : d.at("rounds")) m.rounds.push_back(round_metrics_from_json(r));
  m.zero_baseline = d.value("zero_baseline", false);
  m.same_gt_rounds = d.value("same_gt_rounds", 0);
  m.missing_guess_rounds = d.value("missing_guess_rounds", 0);
  m.wnr = opt_from(d, "wnr");
  m.wnr_pairs = d.value("wnr_pairs", 0);
  m.wnr_skipped = d.value("wnr_skipped", 0);
  if (d.contains("dialogue_embedding") && !d["dialogue_embedding"].is_null()) {
    m.dialogue_embedding = d["dialogue_embedding"].get<std::vector<double>>();
  }
  return m;
}

SystemMetrics system_metrics_from_json(const json& d) {
  if (!d.is_object() || d.value("schema", "") != kMetricsSchema) throw SchemaError("document is not " + std::string(kMetricsSchema));
  try {
    SystemMetrics m;
    m.system = d.at("system").get<std::string>();
    m.source = d.value("source", "self_play");
    m.prompt = d.value("prompt", "");
    m.anchor = d.value("anchor", "");
    m.agents = d.value("agents", std::vector<std::string>{});
    m.rules_version = d.value("rules_version", "");
    m.refexp_source = d.value("refexp_source", "");
    m.embedding_versions = d.value("embedding_versions", std::map<std::string, std::string>{});
    m.sample = d.value("sample", "");
    m.seed = d.value("seed", std::uint64_t{0});
    for (const auto& g : d.at("games")) m.games.push_back(game_metrics_from_json(g));
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("metrics document: ") + e.what());
  }
}

std::vector<SystemMetrics> load_system_metrics(const fs::path& dir) {
  std::vector<SystemMetrics> out;
  for (const auto& f : list_json_files(dir)) out.push_back(system_metrics_from_json(read_json_file(f)));
  return out;
}

InflationResult inflation_analysis(const std::string& system, std::span<const ScoredRound> rounds) {
  InflationResult r;
  r.system = system;
  double same_sum = 0.0, diff_sum = 0.0;
  for (const auto& s : rounds) {
    if (s.relation == GtRelation::SameGT) {
      ++r.same_gt_rounds;
      same_sum += s.score;
    } else {
      ++r.different_gt_rounds;
      diff_sum += s.score;
    }
  }
  if (r.same_gt_rounds == 0 || r.different_gt_rounds == 0) {
    throw EmptyGroup(system + ": inflation needs rounds in both ground-truth groups (same " +
                     std::to_string(r.same_gt_rounds) + ", different " + std::to_string(r.different_gt_rounds) + ")");
  }
  r.same_gt_mean = same_sum / r.same_gt_rounds;
  r.different_gt_mean = diff_sum / r.different_gt_rounds;
  r.delta = r.same_gt_mean - r.different_gt_mean;
  return r;
}

std::vector<ScoredRound> scored_rounds(const SystemMetrics& metrics) {
  std::vector<ScoredRound> out;
  for (const auto& g : metrics.games) {
    for (const auto& r : g.rounds) {
      out.push_back({g.game_id, r.round_no, r.score, r.same_gt ? GtRelation::SameGT : GtRelation::DifferentGT});
    }
  }
  return out;
}

ReportFiles build_inflation_report(const std::vector<SystemMetrics>& systems) {
  return {{"inflation.csv", inflation_csv(systems)}};
}

ReportFiles build_report(const std::vector<SystemMetrics>& systems, const std::vector<PromptComparison>& comparisons,
                         const std::string& human_system) {
  ReportFiles files;
  const auto ordered = sorted(systems);

  {
    Csv csv({"system", "source", "prompt", "anchor", "sample", "n_games", "score_mean", "score_sd", "words_mean",
             "words_sd", "turns_mean", "turns_sd", "flagged_games", "published_score", "published_words",
             "published_turns", "agents", "rules_version", "refexp_source", "embedding_versions", "seed"});
    for (const SystemMetrics* s : ordered) {
      const auto score = aggregate(collect(s->games, [](const GameMetrics& g) { return double(g.total_score); }));
      const auto words = aggregate(collect(s->games, [](const GameMetrics& g) { return double(g.total_words); }));
      const auto turns = aggregate(collect(s->games, [](const GameMetrics& g) { return double(g.total_turns); }));
      const auto flagged = std::count_if(s->games.begin(), s->games.end(), [](const GameMetrics& g) {
        return g.missing_guess_rounds > 0 || g.zero_baseline;
      });
      csv.row({s->system, s->source, s->prompt, s->anchor, s->sample, integer(static_cast<long>(s->games.size())),
               num(score.mean), num(score.sd), num(words.mean), num(words.sd), num(turns.mean), num(turns.sd),
               integer(flagged), num(anchor_value({"game_level", s->anchor, "score"})),
               num(anchor_value({"game_level", s->anchor, "words"})), num(anchor_value({"game_level", s->anchor, "turns"})),
               join(s->agents, ";"), s->rules_version, s->refexp_source, versions(s->embedding_versions),
               integer(static_cast<long>(s->seed))});
    }
    files["game_level.csv"] = csv.str();
  }

  {
    Csv games({"system", "game_id", "total_score", "total_words", "total_turns", "same_gt_rounds",
               "missing_guess_rounds", "zero_baseline", "wnr", "wnr_pairs", "wnr_skipped"});
    Csv rounds({"system", "game_id", "round_no", "score", "words", "turns", "pct_change_words", "pct_change_turns",
                "clip_abs", "clip_con", "wnr", "kl_from_r1", "kl_from_prev", "refexps", "same_gt", "missing_guess"});
    for (const SystemMetrics* s : ordered) {
      for (const GameMetrics* g : sorted_games(*s)) {
        games.row({s->system, g->game_id, integer(g->total_score), integer(g->total_words), integer(g->total_turns),
                   integer(g->same_gt_rounds), integer(g->missing_guess_rounds), g->zero_baseline ? "1" : "0",
                   num(g->wnr), integer(g->wnr_pairs), integer(g->wnr_skipped)});
        for (const auto& r : g->rounds) {
          rounds.row({s->system, g->game_id, integer(r.round_no), integer(r.score), integer(r.words), integer(r.turns),
                      num(r.pct_change_words), num(r.pct_change_turns), num(r.clip_abs), num(r.clip_con), num(r.wnr),
                      num(r.kl_from_r1), num(r.kl_from_prev), integer(r.refexps), r.same_gt ? "1" : "0",
                      r.missing_guess ? "1" : "0"});
        }
      }
    }
    files["games.csv"] = games.str();
    files["rounds.csv"] = rounds.str();
  }

  {
    using Getter = std::optional<double> (*)(const RoundMetrics&);
    const std::vector<std::pair<std::string, Getter>> series{
        {"score", [](const RoundMetrics& r) -> std::optional<double> { return r.score; }},
        {"pct_change_words", [](const RoundMetrics& r) { return r.pct_change_words; }},
        {"pct_change_turns", [](const RoundMetrics& r) { return r.pct_change_turns; }},
        {"clip_abs", [](const RoundMetrics& r) { return r.clip_abs; }},
        {"clip_con", [](const RoundMetrics& r) { return r.clip_con; }},
        {"wnr", [](const RoundMetrics& r) { return r.wnr; }},
        {"kl_from_r1", [](const RoundMetrics& r) { return r.kl_from_r1; }},
        {"kl_from_prev", [](const RoundMetrics& r) { return r.kl_from_prev; }},
    };
    std::vector<std::string> header{"system", "round_no", "n_games"};
    for (const auto& [name, _] : series) {
      header.push_back(name + "_n");
      header.push_back(name + "_mean");
      header.push_back(name + "_se");
    }
    Csv csv(header);
    for (const SystemMetrics* s : ordered) {
      std::map<int, std::vector<const RoundMetrics*>> by_round;
      for (const auto& g : s->games) {
        for (const auto& r : g.rounds) by_round[r.round_no].push_back(&r);
      }
      for (const auto& [round_no, rows] : by_round) {
        std::vector<std::string> fields{s->system, integer(round_no), integer(static_cast<long>(rows.size()))};
        for (const auto& [_, get] : series) {
          std::vector<double> values;
          for (const RoundMetrics* r : rows) {
            if (auto v = get(*r)) values.push_back(*v);
          }
          const Aggregate a = aggregate(values);
          fields.push_back(integer(static_cast<long>(a.n)));
          fields.push_back(a.n ? num(a.mean) : "");
          fields.push_back(a.n ? num(a.se) : "");
        }
        csv.row(fields);
      }
    }
    files["round_trajectories.csv"] = csv.str();
  }

  {
    Csv csv({"system", "reference", "n_system", "n_reference", "cross_mean", "within_reference", "within_system", "raw",
             "percent", "published_percent", "status"});
    const SystemMetrics* human = nullptr;
    for (const SystemMetrics* s : ordered) {
      if (s->system == human_system) human = s;
    }
    auto embeddings = [](const SystemMetrics& s) {
      std::vector<std::vector<double>> out;
      for (const GameMetrics* g : sorted_games(s)) {
        if (g->dialogue_embedding) out.push_back(*g->dialogue_embedding);
      }
      return out;
    };
    const auto reference = human ? embeddings(*human) : std::vector<std::vector<double>>{};
    for (const SystemMetrics* s : ordered) {
      if (s == human) continue;
      const auto mine = embeddings(*s);
      const auto pub = anchor_value({"energy_distance_percent", s->anchor});
      std::vector<std::string> row{s->system, human_system, integer(static_cast<long>(mine.size())),
                                   integer(static_cast<long>(reference.size()))};
      try {
        if (!human) throw TooFewSamples("no reference system");
        const EnergyDistance e = energy_distance(reference, mine);
        for (double v : {e.cross_mean, e.within_first, e.within_second, e.raw, e.percent}) row.push_back(num(v));
        row.push_back(num(pub));
        row.push_back("ok");
      } catch (const TooFewSamples&) {
        for (int i = 0; i < 5; ++i) row.push_back("");
        row.push_back(num(pub));
        row.push_back(human ? "too_few_samples" : "no_reference");
      } catch (const DimMismatch&) {
        for (int i = 0; i < 5; ++i) row.push_back("");
        row.push_back(num(pub));
        row.push_back("dim_mismatch");
      }
      csv.row(row);
    }
    files["energy_distance.csv"] = csv.str();
  }

  files["inflation.csv"] = inflation_csv(systems);

  {
    Csv csv({"base", "tuned", "game_id", "base_score", "tuned_score", "score_diff", "base_words", "tuned_words",
             "base_turns", "tuned_turns", "same_gt_rounds"});
    std::map<std::string, const SystemMetrics*> by_name;
    for (const SystemMetrics* s : ordered) by_name[s->system] = s;
    for (const auto& c : comparisons) {
      const auto b = by_name.find(c.base), t = by_name.find(c.tuned);
      if (b == by_name.end() || t == by_name.end()) continue;
      std::map<std::string, const GameMetrics*> tuned_games;
      for (const auto& g : t->second->games) tuned_games[g.game_id] = &g;
      for (const GameMetrics* g : sorted_games(*b->second)) {
        const auto it = tuned_games.find(g->game_id);
        if (it == tuned_games.end()) continue;
        const GameMetrics* u = it->second;
        csv.row({c.base, c.tuned, g->game_id, integer(g->total_score), integer(u->total_score),
                 integer(u->total_score - g->total_score), integer(g->total_words), integer(u->total_words),
                 integer(g->total_turns), integer(u->total_turns), integer(g->same_gt_rounds)});
      }
    }
    files["prompt_comparison.csv"] = csv.str();
  }

  json manifest_files = json::object();
  for (const auto& [name, contents] : files) manifest_files[name] = crypto::sha256_hex(contents);
  json provenance = json::array();
  for (const SystemMetrics* s : ordered) {
    provenance.push_back({{"system", s->system},
                          {"source", s->source},
                          {"prompt", s->prompt},
                          {"agents", s->agents},
                          {"rules_version", s->rules_version},
                          {"refexp_source", s->refexp_source},
                          {"embedding_versions", s->embedding_versions},
                          {"sample", s->sample},
                          {"seed", s->seed}});
  }
  const json manifest = {
      {"schema", kReportSchema},
      {"files", manifest_files},
      {"systems", provenance},
      {"anchors_version", anchors().value("version", "")},
      {"notes",
       {"extraction is scored at link level (turn, image), not span overlap",
        "energy distance percent = 100 * (1 - (B + C) / 2A); raw = 2A - B - C",
        "the human inflation anchor is cited as 0.06 (chart) with 0.08 as the alternate figure",
        "images are passed to providers unmodified at their stored resolution"}}};
  files["manifest.json"] = dump_json(manifest);
  return files;
}

void write_report(const ReportFiles& files, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [name, contents] : files) write_text_file_atomic(dir / name, contents);
}

}  // namespace photobook
