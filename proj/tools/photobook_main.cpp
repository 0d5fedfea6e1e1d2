// photobook: command-line front end for the self-play evaluation harness.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "photobook/campaign.hpp"
#include "photobook/corpus.hpp"
#include "photobook/refexp.hpp"
#include "photobook/report.hpp"
#include "photobook/serialization.hpp"

namespace fs = std::filesystem;
using namespace photobook;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kPartial = 3 };

void log(const std::string& line) { std::cerr << "photobook: " << line << "\n"; }

CampaignConfig load_config(const std::string& path, const std::string& output_dir) {
  CampaignConfig config = load_campaign_config(path);
  if (!output_dir.empty()) config.output_dir = output_dir;
  return config;
}

ExtractionRules rules_for(const CampaignConfig& config) {
  return config.rules_path ? ExtractionRules::load(config.rules_path->string()) : ExtractionRules::builtin();
}

int run_selfplay(const CampaignConfig& config) {
  const auto games = resolve_games(config);
  if (config.dyads.empty()) throw ConfigError("config lists no dyads");
  const CampaignResult result = run_campaign(config, games);
  for (const auto& o : result.outcomes) {
    if (o.status == GameStatus::Quarantined) log("quarantined " + o.dyad + "/" + o.game_id + ": " + o.reason);
  }
  std::printf("completed=%d skipped=%d quarantined=%d agent_calls=%d\n", result.count(GameStatus::Completed),
              result.count(GameStatus::Skipped), result.count(GameStatus::Quarantined), result.agent_calls());
  return result.count(GameStatus::Quarantined) > 0 ? kPartial : kOk;
}

int compute_metrics(const CampaignConfig& config) {
  const auto games = resolve_games(config);
  EmbeddingGateway gateway(make_embedding_backend(config.embedding), {config.embedding.cache_dir});
  const auto systems = compute_campaign_metrics(config, games, gateway, rules_for(config));
  write_system_metrics(systems, config.metrics_dir());
  bool partial = false;
  for (const auto& s : systems) {
    std::printf("%s games=%zu\n", s.system.c_str(), s.games.size());
    if (s.source == "self_play" && s.games.size() < games.size()) partial = true;
  }
  return partial ? kPartial : kOk;
}

int analyze_inflation(const CampaignConfig& config) {
  const auto systems = load_system_metrics(config.metrics_dir());
  if (systems.empty()) throw ConfigError("no metrics under " + config.metrics_dir().string() + "; run compute-metrics first");
  const ReportFiles files = build_inflation_report(systems);
  write_report(files, config.report_dir());
  std::fputs(files.at("inflation.csv").c_str(), stdout);
  return kOk;
}

int report(const CampaignConfig& config) {
  const auto systems = load_system_metrics(config.metrics_dir());
  if (systems.empty()) throw ConfigError("no metrics under " + config.metrics_dir().string() + "; run compute-metrics first");
  const ReportFiles files = build_report(systems, config.comparisons);
  write_report(files, config.report_dir());
  for (const auto& [name, _] : files) std::printf("%s\n", (config.report_dir() / name).string().c_str());
  bool flagged = false;
  for (const auto& s : systems) {
    for (const auto& g : s.games) flagged = flagged || g.missing_guess_rounds > 0;
  }
  if (flagged) log("some games have rounds with a missing guess (scored as 0 for that player)");
  return kOk;
}

int ingest_corpus(const std::string& src, const fs::path& out, bool fixture_only) {
  const fs::path source = fixture_only ? fs::path(PHOTOBOOK_FIXTURE_CORPUS) : fs::path(src);
  if (source.empty()) throw ConfigError("--src is required unless --fixture-only is given");
  const CorpusIngest result = ingest(source);
  for (const auto& g : result.games) {
    write_json_file(out / "games" / (g.game.game_id + ".json"), to_json(g.game));
    write_json_file(out / "transcripts" / (g.game.game_id + ".json"), to_json(g.transcript));
  }
  json warnings = json::array();
  for (const auto& w : result.warnings) {
    warnings.push_back({{"record_id", w.record_id}, {"kind", w.kind}, {"detail", w.detail}});
    log("warning " + w.record_id + " " + w.kind + ": " + w.detail);
  }
  auto counts = [](const CorpusCounts& c) {
    return json{{"games", c.games}, {"rounds", c.rounds}, {"utterances", c.utterances},
                {"tokens", c.tokens}, {"vocabulary", c.vocabulary}, {"clicks", c.clicks}};
  };
  const json summary = {{"layout", kCorpusLayout},
                        {"source", fixture_only ? "bundled_fixture" : source.string()},
                        {"all_rounds", counts(result.summary.all_rounds)},
                        {"rounds_1_to_3", counts(result.summary.capped)},
                        {"warnings", warnings}};
  write_json_file(out / "summary.json", summary);
  std::fputs(dump_json(summary).c_str(), stdout);
  return kOk;
}

int extract_refs(const fs::path& in, const std::string& rules_path, const fs::path& out, int max_round) {
  const ExtractionRules rules = rules_path.empty() ? ExtractionRules::builtin() : ExtractionRules::load(rules_path);
  RefexpDocument doc;
  doc.rules_version = rules.version;
  for (const auto& t : load_transcripts(in)) {
    auto found = extract(t, rules, max_round);
    doc.expressions.insert(doc.expressions.end(), found.begin(), found.end());
  }
  write_json_file(out, to_json(doc));
  std::printf("expressions=%zu rules=%s\n", doc.expressions.size(), rules.version.c_str());
  return kOk;
}

int validate_refs(const fs::path& pred_path, const fs::path& gold_path) {
  const RefexpDocument pred = refexp_document_from_json(read_json_file(pred_path));
  const RefexpDocument gold = refexp_document_from_json(read_json_file(gold_path));
  const ExtractionScores s = validate(pred.expressions, gold.expressions, gold.scope);
  const json out = {{"unit", "link"},
                    {"true_positives", s.true_positives},
                    {"false_positives", s.false_positives},
                    {"false_negatives", s.false_negatives},
                    {"precision", s.precision},
                    {"recall", s.recall},
                    {"f1", s.f1},
                    {"rules_version", pred.rules_version}};
  std::fputs(dump_json(out).c_str(), stdout);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PhotoBook self-play evaluation harness"};
  app.require_subcommand(1);

  std::string config, output_dir;
  auto* selfplay = app.add_subcommand("run-selfplay", "Play every dyad over the campaign's games");
  selfplay->add_option("--config", config, "Campaign config file")->required()->check(CLI::ExistingFile);
  selfplay->add_option("--output-dir", output_dir, "Override the config's output_dir");
  auto* metrics = app.add_subcommand("compute-metrics", "Compute metric documents from stored transcripts");
  metrics->add_option("--config", config, "Campaign config file")->required()->check(CLI::ExistingFile);
  metrics->add_option("--output-dir", output_dir, "Override the config's output_dir");
  auto* inflation = app.add_subcommand("analyze-inflation", "Same-GT vs different-GT score inflation");
  inflation->add_option("--config", config, "Campaign config file")->required()->check(CLI::ExistingFile);
  inflation->add_option("--output-dir", output_dir, "Override the config's output_dir");
  auto* rep = app.add_subcommand("report", "Emit report tables and plot data");
  rep->add_option("--config", config, "Campaign config file")->required()->check(CLI::ExistingFile);
  rep->add_option("--output-dir", output_dir, "Override the config's output_dir");

  std::string src, out, in, rules, pred, gold;
  bool fixture_only = false;
  int max_round = kMaxSelfPlayRounds;
  auto* ingest_cmd = app.add_subcommand("ingest-corpus", "Import human game logs");
  ingest_cmd->add_option("--src", src, "Upstream corpus directory");
  ingest_cmd->add_option("--out", out, "Output directory")->required();
  ingest_cmd->add_flag("--fixture-only", fixture_only, "Ingest the bundled fixture corpus");
  auto* extract_cmd = app.add_subcommand("extract-refs", "Rule-based referring expression extraction");
  extract_cmd->add_option("--in", in, "Transcript file or directory")->required()->check(CLI::ExistingPath);
  extract_cmd->add_option("--rules", rules, "Rules file (default: bundled rules)");
  extract_cmd->add_option("--out", out, "Output file")->required();
  extract_cmd->add_option("--max-round", max_round, "Last round to extract from");
  auto* validate_cmd = app.add_subcommand("validate-refs", "Score extracted expressions against gold");
  validate_cmd->add_option("--pred", pred, "Predicted expressions")->required()->check(CLI::ExistingFile);
  validate_cmd->add_option("--gold", gold, "Gold expressions")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*selfplay) return run_selfplay(load_config(config, output_dir));
    if (*metrics) return compute_metrics(load_config(config, output_dir));
    if (*inflation) return analyze_inflation(load_config(config, output_dir));
    if (*rep) return report(load_config(config, output_dir));
    if (*ingest_cmd) return ingest_corpus(src, out, fixture_only);
    if (*extract_cmd) return extract_refs(in, rules, out, max_round);
    if (*validate_cmd) return validate_refs(pred, gold);
  } catch (const ConfigError& e) {
    log(std::string("config error: ") + e.what());
    return kConfig;
  } catch (const SchemaError& e) {
    log(std::string("input error: ") + e.what());
    return kConfig;
  } catch (const SchemaMismatch& e) {
    log(std::string("corpus schema mismatch: ") + e.what());
    return kConfig;
  } catch (const RulesError& e) {
    log(std::string("rules error: ") + e.what());
    return kConfig;
  } catch (const KeyMismatch& e) {
    log(std::string("key mismatch: ") + e.what());
    return kConfig;
  } catch (const InvalidGameSpec& e) {
    log(std::string("invalid game: ") + e.what());
    return kConfig;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return kFailure;
  }
  return kFailure;
}
