#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "photobook/game.hpp"
#include "photobook/protocol.hpp"
#include "photobook/refexp.hpp"

namespace photobook {

/// Importer for the released human game logs. Layout notes live in
/// docs/schemas.md; one importer version per upstream release.
inline constexpr const char* kCorpusLayout = "photobook-logs-v1";

class SchemaMismatch : public Error {
 public:
  SchemaMismatch(std::string record_id, const std::string& detail)
      : Error(record_id + ": " + detail), record_id_(std::move(record_id)) {}
  const std::string& record_id() const { return record_id_; }

 private:
  std::string record_id_;
};

struct CorpusMessage {
  std::string message_id;
  Player speaker = Player::A;
  std::string type;  // "text", "selection", or passed through untouched
  std::string text;
  nlohmann::json extra = nlohmann::json::object();  // unknown upstream fields
};

struct CorpusRound {
  int round_nr = 1;
  ImageSet images_a;
  ImageSet images_b;
  std::vector<std::string> common;
  std::vector<CorpusMessage> messages;
  nlohmann::json extra = nlohmann::json::object();

  const ImageSet& images(Player p) const { return p == Player::A ? images_a : images_b; }
};

/// One upstream game log, structurally parsed but not yet normalized.
struct CorpusRecord {
  nlohmann::json game_id;  // kept with its upstream JSON type
  std::vector<CorpusRound> rounds;
  nlohmann::json extra = nlohmann::json::object();

  std::string id() const;
};

CorpusRecord parse_corpus_record(const nlohmann::json& doc, const std::string& record_id);  // throws SchemaMismatch
nlohmann::json to_upstream_json(const CorpusRecord& record);

/// A labeling click: "<com> image" or "<dif> image".
struct ClickAction {
  std::string message_id;
  Player actor = Player::A;
  Label label = Label::Common;
  std::string image_id;
};

std::optional<ClickAction> parse_click(const CorpusMessage& message);

/// A text message linked to the image of the same speaker's next click in the round.
struct ClickAlignment {
  std::string utterance_id;
  int round_no = 1;
  ImageSlot slot;
};

struct CorpusGame {
  CorpusRecord record;
  GameSpec game;
  Transcript transcript;  // all rounds; rounds past the self-play cap carry beyond_cap
  std::vector<ClickAlignment> alignments;
};

/// Normalizes one record. Final guesses are each player's last click per
/// image, attached to that player's last text message of the round.
CorpusGame normalize(const CorpusRecord& record);

struct CorpusWarning {
  std::string record_id;
  std::string kind;  // "missing_image_asset", "missing_guess"
  std::string detail;
};

struct CorpusCounts {
  int games = 0;
  int rounds = 0;
  int utterances = 0;
  long tokens = 0;
  int vocabulary = 0;  // distinct lowercased tokens
  int clicks = 0;
};

struct CorpusSummary {
  CorpusCounts all_rounds;
  CorpusCounts capped;  // rounds 1..kMaxSelfPlayRounds only
};

CorpusSummary summarize(const std::vector<CorpusGame>& games);

struct IngestOptions {
  std::optional<std::filesystem::path> image_root;  // default <src>/images when present
};

struct CorpusIngest {
  std::vector<CorpusGame> games;
  std::vector<CorpusWarning> warnings;
  CorpusSummary summary;
};

/// Reads `<src>/logs/*.json` (or `<src>/*.json`), sorted by file name.
/// Throws SchemaMismatch on an empty source or a malformed record.
CorpusIngest ingest(const std::filesystem::path& src, const IngestOptions& options = {});

/// Transcript restricted to rounds 1..max_round.
Transcript capped(const Transcript& transcript, int max_round = kMaxSelfPlayRounds);

struct RefChain {
  std::string chain_id;
  std::string game_id;
  std::string image_id;
  Player speaker = Player::A;
  std::vector<ReferringExpression> members;
};

/// Gold referring chains, resolved against ingested games. Throws
/// SchemaMismatch (with the chain id) on unknown games, messages or images.
std::vector<RefChain> load_refchains(const std::filesystem::path& path, const std::vector<CorpusGame>& games);

std::vector<ReferringExpression> flatten(const std::vector<RefChain>& chains);

}  // namespace photobook
