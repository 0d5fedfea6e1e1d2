#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "photobook/agents.hpp"
#include "photobook/chat_transport.hpp"
#include "photobook/corpus.hpp"
#include "photobook/embedding.hpp"
#include "photobook/game.hpp"
#include "photobook/metrics.hpp"
#include "photobook/protocol.hpp"
#include "photobook/refexp.hpp"
#include "photobook/report.hpp"

namespace photobook {

inline constexpr const char* kConfigSchema = "photobook.config/1";

struct DyadConfig {
  std::string name;
  PromptVariant prompt = PromptVariant::Original;
  std::string anchor;  // published row label, e.g. "GPT4.1"
  AgentConfig agent_a;
  AgentConfig agent_b;

  const AgentConfig& agent(Player p) const { return p == Player::A ? agent_a : agent_b; }
};

struct GameSetConfig {
  std::string source = "fixture";  // "fixture" | "synthetic"
  std::filesystem::path path;      // fixture: file or directory of GameSpecs
  std::filesystem::path pool;      // synthetic: JSON array of image ids
  SyntheticOptions synthetic;
};

struct EmbeddingConfig {
  std::string backend = "mock";  // "mock" | "http"
  std::string endpoint;
  std::uint64_t seed = 0;
  int timeout_ms = 60000;
  std::optional<std::filesystem::path> cache_dir;
};

struct HumanConfig {
  std::optional<std::filesystem::path> corpus_dir;
  std::optional<std::filesystem::path> refchains;
  std::string sample = "all";  // "all" | "matched"
  int sample_size = 50;
};

struct CampaignConfig {
  std::string id = "campaign";
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  GameSetConfig games;
  TurnLimits limits;
  int parallelism = 1;
  double rate_limit_rps = 0.0;
  bool record_timing = false;
  std::vector<DyadConfig> dyads;
  EmbeddingConfig embedding;
  MetricsOptions metrics;
  std::optional<std::filesystem::path> rules_path;
  HumanConfig human;
  std::vector<PromptComparison> comparisons;

  std::filesystem::path runs_dir(const std::string& dyad) const { return output_dir / "runs" / dyad; }
  std::filesystem::path metrics_dir() const { return output_dir / "metrics"; }
  std::filesystem::path report_dir() const { return output_dir / "report"; }
};

/// Relative paths resolve against `base_dir`. Throws ConfigError.
CampaignConfig parse_campaign_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
CampaignConfig load_campaign_config(const std::filesystem::path& file);

std::vector<GameSpec> resolve_games(const CampaignConfig& config);

/// Fresh agent for one seat of one game.
std::unique_ptr<Agent> make_agent(const AgentConfig& config, Player seat, const GameSpec& game, std::uint64_t seed,
                                  std::shared_ptr<RateLimiter> limiter = nullptr);

struct PlayResult {
  Transcript transcript;
  int agent_calls = 0;
};

/// Plays rounds 1..min(kMaxSelfPlayRounds, rounds in game).
PlayResult play_game(const GameSpec& game, Agent& agent_a, Agent& agent_b, const TurnLimits& limits,
                     bool record_timing = false);

enum class GameStatus { Completed, Skipped, Quarantined };

std::string_view to_string(GameStatus status);

struct GameOutcome {
  std::string dyad;
  std::string game_id;
  GameStatus status = GameStatus::Completed;
  std::string reason;
  int agent_calls = 0;
};

struct CampaignResult {
  std::vector<GameOutcome> outcomes;  // dyad-major, then game order

  int count(GameStatus status) const;
  int agent_calls() const;
};

using AgentFactory = std::function<std::unique_ptr<Agent>(const DyadConfig& dyad, Player seat, const GameSpec& game,
                                                          std::uint64_t seed)>;

/// Runs every dyad over every game. Games with a transcript on disk are
/// skipped; failures are written to the quarantine directory and the
/// campaign continues.
CampaignResult run_campaign(const CampaignConfig& config, const std::vector<GameSpec>& games,
                            const AgentFactory& factory = {});

std::shared_ptr<EmbeddingBackend> make_embedding_backend(const EmbeddingConfig& config);

struct HumanSet {
  std::vector<CorpusGame> games;  // after sampling
  std::string sample;             // e.g. "all:5" or "matched:50/2506"
  std::vector<RefChain> chains;
};

HumanSet load_human_set(const HumanConfig& config, std::uint64_t seed);

/// Metrics for each dyad (from its transcripts on disk) and, when a corpus is
/// configured, the human corpus (rounds 1..3).
std::vector<SystemMetrics> compute_campaign_metrics(const CampaignConfig& config, const std::vector<GameSpec>& games,
                                                    EmbeddingGateway& gateway, const ExtractionRules& rules);

void write_system_metrics(const std::vector<SystemMetrics>& systems, const std::filesystem::path& dir);

}  // namespace photobook
