#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "photobook/game.hpp"
#include "photobook/types.hpp"

namespace photobook {

class AgentFailure : public Error {
 public:
  using Error::Error;
};

class TransportError : public AgentFailure {
 public:
  using AgentFailure::AgentFailure;
};

class ProviderRefusal : public AgentFailure {
 public:
  using AgentFailure::AgentFailure;
};

class Timeout : public AgentFailure {
 public:
  using AgentFailure::AgentFailure;
};

class MissingImage : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class PromptVariant { Original, Engineered };

std::string_view to_string(PromptVariant variant);
std::optional<PromptVariant> parse_prompt_variant(std::string_view text);

/// Bundled template text for a variant ({{image_1}}..{{image_3}}, {{seat}}).
std::string_view prompt_template(PromptVariant variant);

/// Substitutes the three image ids (and the seat, taken from the slots) into
/// a template. Throws MissingImage unless exactly slots 1..3 of one player
/// with non-empty ids are given.
std::string render_prompt(std::string_view template_text, std::span<const ImageSlot> images);
std::string render_prompt(PromptVariant variant, std::span<const ImageSlot> images);

/// A prior turn as one agent sees it. `own_raw` is filled only for the
/// agent's own turns; partners are seen through their message text alone.
struct HistoryEntry {
  int round_no = 1;
  Player speaker = Player::A;
  std::string message;
  std::string own_raw;
};

struct RepairRequest {
  std::string rejected_raw;
  std::string error;
  int attempt = 1;
};

/// Everything an agent may know when producing a turn. Never holds the
/// partner's images or any ground truth.
struct AgentContext {
  Player seat = Player::A;
  int round_no = 1;
  std::array<ImageSlot, 3> images;
  std::vector<HistoryEntry> history;
  std::optional<RepairRequest> repair;
};

class Agent {
 public:
  virtual ~Agent() = default;

  /// Raw payload text; validation happens upstream.
  virtual std::string next_turn(const AgentContext& ctx) = 0;
  /// Provenance label, e.g. "remote:openai/gpt-4.1".
  virtual std::string describe() const = 0;
  virtual std::string last_response_id() const { return {}; }
};

/// Pops payloads from a fixed queue. Throws AgentFailure when exhausted.
class ScriptedAgent : public Agent {
 public:
  explicit ScriptedAgent(std::vector<std::string> payloads);

  std::string next_turn(const AgentContext& ctx) override;
  std::string describe() const override { return "scripted:queue"; }
  std::size_t remaining() const { return payloads_.size(); }

 private:
  std::deque<std::string> payloads_;
};

struct OracleOptions {
  double accuracy = 1.0;   // per-cell probability of submitting the true label
  int describe_turns = 3;  // own turns spent describing images before guessing
  bool verbose = false;    // adds a follow-up question to each description
  std::uint64_t seed = 0;
};

/// Scripted test agent that knows its own answer key. Describes its images
/// one per turn, then submits the (possibly perturbed) truth.
class OracleAgent : public Agent {
 public:
  OracleAgent(OracleOptions options, std::map<int, LabelTriple> truth_by_round,
              std::map<std::string, std::string> captions = {});

  std::string next_turn(const AgentContext& ctx) override;
  std::string describe() const override;

 private:
  GuessVector guesses_for(int round_no) const;
  std::string caption_for(const std::string& image_id) const;

  OracleOptions options_;
  std::map<int, LabelTriple> truth_by_round_;
  std::map<std::string, std::string> captions_;
};

/// Re-emits one player's recorded turns, wrapped as protocol payloads.
class ReplayAgent : public Agent {
 public:
  /// `turns_by_round` holds this player's turns in corpus order.
  explicit ReplayAgent(std::map<int, std::vector<Turn>> turns_by_round);

  std::string next_turn(const AgentContext& ctx) override;
  std::string describe() const override { return "replay:corpus"; }

 private:
  std::map<int, std::vector<Turn>> turns_by_round_;
  std::map<int, std::size_t> cursor_;
};

/// Protocol payload for a turn: {"message", "reference", "guesses"}.
std::string encode_payload(const std::string& message, std::optional<int> reference,
                           const std::optional<GuessVector>& guesses);

enum class AgentKind { RemoteChat, Scripted, Replay };

struct RetryPolicy {
  int max_attempts = 3;
  int initial_backoff_ms = 1000;
  double backoff_multiplier = 2.0;
};

struct AgentConfig {
  AgentKind kind = AgentKind::Scripted;
  std::string model_name;
  PromptVariant prompt = PromptVariant::Original;
  std::string prompt_text;  // overrides the bundled template when set

  // RemoteChat
  std::string provider = "openai";  // "openai" | "anthropic"
  std::string endpoint;
  std::string api_key_env;
  nlohmann::json params = nlohmann::json::object();
  RetryPolicy retry;
  int timeout_ms = 120000;
  bool attach_images = true;  // false: describe images by caption text
  std::string image_root;
  std::string cassette;       // JSONL file for record/replay
  std::string cassette_mode;  // "", "record", "replay"

  // Scripted
  std::string script = "oracle";  // "oracle" | "queue"
  OracleOptions oracle;
  std::vector<std::string> payloads;

  std::map<std::string, std::string> captions;
};

/// Parses and checks an agent block of the campaign config. Throws
/// ConfigError, including when a secret is given inline.
AgentConfig parse_agent_config(const nlohmann::json& block);

std::string template_text(const AgentConfig& config);

}  // namespace photobook
