#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "photobook/game.hpp"
#include "photobook/protocol.hpp"
#include "photobook/refexp.hpp"

namespace photobook {

class SchemaError : public Error {
 public:
  using Error::Error;
};

inline constexpr const char* kGameSpecSchema = "photobook.gamespec/1";
inline constexpr const char* kTranscriptSchema = "photobook.transcript/1";
inline constexpr const char* kRefexpSchema = "photobook.refexps/1";

nlohmann::json to_json(const GameSpec& game);
GameSpec game_from_json(const nlohmann::json& doc);  // validates; throws SchemaError / InvalidGameSpec

nlohmann::json to_json(const Turn& turn);
Turn turn_from_json(const nlohmann::json& doc);

/// `include_timing` false drops elapsed_ms fields (for byte-comparisons).
nlohmann::json to_json(const Transcript& transcript, bool include_timing = true);
Transcript transcript_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const ReferringExpression& expr);
ReferringExpression refexp_from_json(const nlohmann::json& doc);

struct RefexpDocument {
  std::string rules_version;
  std::vector<ReferringExpression> expressions;
  std::optional<std::set<RoundKey>> scope;  // annotated rounds, gold files only
};

nlohmann::json to_json(const RefexpDocument& doc);
RefexpDocument refexp_document_from_json(const nlohmann::json& doc);

/// Pretty-printed, sorted keys, trailing newline. Invalid UTF-8 is replaced.
std::string dump_json(const nlohmann::json& doc);

nlohmann::json read_json_file(const std::filesystem::path& path);  // throws SchemaError
std::string read_text_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& contents);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

/// Regular `*.json` files directly under `dir`, sorted by name.
std::vector<std::filesystem::path> list_json_files(const std::filesystem::path& dir);

std::vector<GameSpec> load_games(const std::filesystem::path& path);  // file or directory
std::vector<Transcript> load_transcripts(const std::filesystem::path& path);

}  // namespace photobook
