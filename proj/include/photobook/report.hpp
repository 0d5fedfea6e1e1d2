#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "photobook/game.hpp"
#include "photobook/metrics.hpp"

namespace photobook {

inline constexpr const char* kMetricsSchema = "photobook.metrics/1";
inline constexpr const char* kReportSchema = "photobook.report/1";

/// Metrics for one system (a dyad, or the human corpus) with provenance.
struct SystemMetrics {
  std::string system;
  std::string source = "self_play";  // "self_play" | "human_corpus"
  std::string prompt;                // prompt variant; empty for humans
  std::string anchor;                // published row this system is compared with
  std::vector<std::string> agents;   // agent descriptions (model versions)
  std::string rules_version;
  std::string refexp_source;         // "extracted" | "gold_chains"
  std::map<std::string, std::string> embedding_versions;
  std::string sample;                // human rows: which games were used
  std::uint64_t seed = 0;
  std::vector<GameMetrics> games;
};

nlohmann::json to_json(const RoundMetrics& m);
nlohmann::json to_json(const GameMetrics& m);
nlohmann::json to_json(const SystemMetrics& m);
RoundMetrics round_metrics_from_json(const nlohmann::json& doc);
GameMetrics game_metrics_from_json(const nlohmann::json& doc);
SystemMetrics system_metrics_from_json(const nlohmann::json& doc);  // throws SchemaError

std::vector<SystemMetrics> load_system_metrics(const std::filesystem::path& dir);

class EmptyGroup : public Error {
 public:
  using Error::Error;
};

struct ScoredRound {
  std::string game_id;
  int round_no = 1;
  int score = 0;
  GtRelation relation = GtRelation::DifferentGT;
};

struct InflationResult {
  std::string system;
  int same_gt_rounds = 0;
  int different_gt_rounds = 0;
  double same_gt_mean = 0.0;
  double different_gt_mean = 0.0;
  double delta = 0.0;  // mean(SameGT) - mean(DifferentGT)
};

/// Throws EmptyGroup when either group has no rounds.
InflationResult inflation_analysis(const std::string& system, std::span<const ScoredRound> rounds);

std::vector<ScoredRound> scored_rounds(const SystemMetrics& metrics);

struct PromptComparison {
  std::string base;
  std::string tuned;
};

/// File name -> contents. Every file is a pure function of the inputs.
using ReportFiles = std::map<std::string, std::string>;

ReportFiles build_report(const std::vector<SystemMetrics>& systems, const std::vector<PromptComparison>& comparisons,
                         const std::string& human_system = "human");

/// Only the inflation table and its chart data.
ReportFiles build_inflation_report(const std::vector<SystemMetrics>& systems);

void write_report(const ReportFiles& files, const std::filesystem::path& dir);

/// "%.6f", or empty for a missing / non-finite value.
std::string format_number(std::optional<double> value);

}  // namespace photobook
