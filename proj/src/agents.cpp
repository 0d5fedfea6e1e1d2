#include "photobook/agents.hpp"

#include <algorithm>
#include <set>

#include "photobook/assets.hpp"
#include "photobook/rng.hpp"

namespace photobook {
namespace {

using nlohmann::json;

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

std::string_view to_string(PromptVariant variant) {
  return variant == PromptVariant::Original ? "original" : "engineered";
}

std::optional<PromptVariant> parse_prompt_variant(std::string_view text) {
  if (text == "original") return PromptVariant::Original;
  if (text == "engineered") return PromptVariant::Engineered;
  return std::nullopt;
}

std::string_view prompt_template(PromptVariant variant) {
  return variant == PromptVariant::Original ? assets::original_prompt() : assets::engineered_prompt();
}

std::string render_prompt(std::string_view template_text, std::span<const ImageSlot> images) {
  if (images.size() != 3) {
    throw MissingImage("prompt needs exactly 3 images, got " + std::to_string(images.size()));
  }
  std::array<const ImageSlot*, 3> by_index{};
  for (const auto& slot : images) {
    if (slot.index < 1 || slot.index > 3) throw MissingImage("image index out of range");
    if (slot.image_id.empty()) throw MissingImage("Image " + std::to_string(slot.index) + " has no id");
    if (slot.player != images.front().player) throw MissingImage("images belong to different players");
    by_index[static_cast<std::size_t>(slot.index - 1)] = &slot;
  }
  std::string out(template_text);
  for (std::size_t i = 0; i < 3; ++i) {
    if (!by_index[i]) throw MissingImage("Image " + std::to_string(i + 1) + " missing");
    replace_all(out, "{{image_" + std::to_string(i + 1) + "}}", by_index[i]->image_id);
  }
  replace_all(out, "{{seat}}", to_string(images.front().player));
  return out;
}

std::string render_prompt(PromptVariant variant, std::span<const ImageSlot> images) {
  return render_prompt(prompt_template(variant), images);
}

std::string encode_payload(const std::string& message, std::optional<int> reference,
                           const std::optional<GuessVector>& guesses) {
  json doc = json::object();
  doc["message"] = message;
  doc["reference"] = reference ? json("Image " + std::to_string(*reference)) : json(nullptr);
  if (guesses) {
    json letters = json::array();
    for (Label l : guesses->values) letters.push_back(std::string(1, to_letter(l)));
    doc["guesses"] = std::move(letters);
  } else {
    doc["guesses"] = nullptr;
  }
  return doc.dump();
}

ScriptedAgent::ScriptedAgent(std::vector<std::string> payloads)
    : payloads_(std::make_move_iterator(payloads.begin()), std::make_move_iterator(payloads.end())) {}

std::string ScriptedAgent::next_turn(const AgentContext&) {
  if (payloads_.empty()) throw AgentFailure("scripted agent has no payloads left");
  std::string next = std::move(payloads_.front());
  payloads_.pop_front();
  return next;
}

OracleAgent::OracleAgent(OracleOptions options, std::map<int, LabelTriple> truth_by_round,
                         std::map<std::string, std::string> captions)
    : options_(options), truth_by_round_(std::move(truth_by_round)), captions_(std::move(captions)) {
  options_.describe_turns = std::clamp(options_.describe_turns, 0, 3);
}

std::string OracleAgent::describe() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "scripted:oracle(accuracy=%.3f,describe=%d%s)", options_.accuracy,
                options_.describe_turns, options_.verbose ? ",verbose" : "");
  return buf;
}

std::string OracleAgent::caption_for(const std::string& image_id) const {
  if (auto it = captions_.find(image_id); it != captions_.end()) return it->second;
  std::string name = image_id.substr(image_id.find_last_of('/') + 1);
  if (auto dot = name.find_last_of('.'); dot != std::string::npos) name.resize(dot);
  std::replace(name.begin(), name.end(), '_', ' ');
  std::replace(name.begin(), name.end(), '-', ' ');
  return name;
}

GuessVector OracleAgent::guesses_for(int round_no) const {
  auto it = truth_by_round_.find(round_no);
  if (it == truth_by_round_.end()) throw AgentFailure("oracle has no answer key for round " + std::to_string(round_no));
  Rng rng(derive_seed(options_.seed, "round-" + std::to_string(round_no)));
  GuessVector g{it->second};
  for (auto& label : g.values) {
    if (rng.unit() >= options_.accuracy) label = label == Label::Common ? Label::Different : Label::Common;
  }
  return g;
}

std::string OracleAgent::next_turn(const AgentContext& ctx) {
  const auto own_turns = static_cast<int>(std::count_if(ctx.history.begin(), ctx.history.end(), [&](const HistoryEntry& e) {
    return e.round_no == ctx.round_no && e.speaker == ctx.seat;
  }));
  if (own_turns < options_.describe_turns) {
    const int k = own_turns + 1;
    std::string message = "Image " + std::to_string(k) + " shows " +
                          caption_for(ctx.images[static_cast<std::size_t>(k - 1)].image_id) + ".";
    if (options_.verbose) message += " Do you have anything similar in your set?";
    return encode_payload(message, k, std::nullopt);
  }
  if (own_turns == options_.describe_turns) {
    return encode_payload("I have decided on my labels.", std::nullopt, guesses_for(ctx.round_no));
  }
  return encode_payload("Waiting for you to finish.", std::nullopt, std::nullopt);
}

ReplayAgent::ReplayAgent(std::map<int, std::vector<Turn>> turns_by_round)
    : turns_by_round_(std::move(turns_by_round)) {}

std::string ReplayAgent::next_turn(const AgentContext& ctx) {
  auto it = turns_by_round_.find(ctx.round_no);
  std::size_t& cursor = cursor_[ctx.round_no];
  if (it == turns_by_round_.end() || cursor >= it->second.size()) {
    throw AgentFailure("replay exhausted for round " + std::to_string(ctx.round_no));
  }
  const Turn& turn = it->second[cursor++];
  return encode_payload(turn.message, turn.reference, turn.guesses);
}

std::string template_text(const AgentConfig& config) {
  return config.prompt_text.empty() ? std::string(prompt_template(config.prompt)) : config.prompt_text;
}

AgentConfig parse_agent_config(const json& block) {
  if (!block.is_object()) throw ConfigError("agent block must be an object");
  static const std::set<std::string> secret_keys{"api_key", "apikey", "key", "token", "secret", "authorization"};
  static const std::set<std::string> known{"kind", "model", "prompt", "prompt_text", "provider", "endpoint",
                                           "api_key_env", "params", "retry", "timeout_ms", "attach_images",
                                           "image_root", "cassette", "cassette_mode", "script", "oracle",
                                           "payloads", "captions"};
  for (const auto& [key, _] : block.items()) {
    if (secret_keys.count(key)) throw ConfigError("agent config must not hold secrets inline ('" + key + "'); use api_key_env");
    if (!known.count(key)) throw ConfigError("unknown agent config key '" + key + "'");
  }
  if (block.contains("params") && block["params"].is_object()) {
    for (const auto& [key, _] : block["params"].items()) {
      if (secret_keys.count(key)) throw ConfigError("params must not hold secrets ('" + key + "')");
    }
  }

  AgentConfig c;
  try {
    const std::string kind = block.value("kind", "scripted");
    if (kind == "remote_chat") {
      c.kind = AgentKind::RemoteChat;
    } else if (kind == "scripted") {
      c.kind = AgentKind::Scripted;
    } else if (kind == "replay") {
      c.kind = AgentKind::Replay;
    } else {
      throw ConfigError("unknown agent kind '" + kind + "'");
    }
    c.model_name = block.value("model", "");
    const std::string prompt = block.value("prompt", "original");
    auto variant = parse_prompt_variant(prompt);
    if (!variant) throw ConfigError("unknown prompt variant '" + prompt + "'");
    c.prompt = *variant;
    c.prompt_text = block.value("prompt_text", "");
    c.provider = block.value("provider", "openai");
    c.endpoint = block.value("endpoint", "");
    c.api_key_env = block.value("api_key_env", "");
    if (block.contains("params")) {
      if (!block["params"].is_object()) throw ConfigError("params must be an object");
      c.params = block["params"];
    }
    if (block.contains("retry")) {
      const json& r = block["retry"];
      c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
      c.retry.initial_backoff_ms = r.value("initial_backoff_ms", c.retry.initial_backoff_ms);
      c.retry.backoff_multiplier = r.value("backoff_multiplier", c.retry.backoff_multiplier);
      if (c.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
    }
    c.timeout_ms = block.value("timeout_ms", c.timeout_ms);
    c.attach_images = block.value("attach_images", c.attach_images);
    c.image_root = block.value("image_root", "");
    c.cassette = block.value("cassette", "");
    c.cassette_mode = block.value("cassette_mode", "");
    if (!c.cassette_mode.empty() && c.cassette_mode != "record" && c.cassette_mode != "replay") {
      throw ConfigError("cassette_mode must be 'record' or 'replay'");
    }
    if (!c.cassette_mode.empty() && c.cassette.empty()) throw ConfigError("cassette_mode needs a cassette path");
    c.script = block.value("script", "oracle");
    if (c.script != "oracle" && c.script != "queue") throw ConfigError("script must be 'oracle' or 'queue'");
    if (block.contains("oracle")) {
      const json& o = block["oracle"];
      c.oracle.accuracy = o.value("accuracy", c.oracle.accuracy);
      c.oracle.describe_turns = o.value("describe_turns", c.oracle.describe_turns);
      c.oracle.verbose = o.value("verbose", c.oracle.verbose);
      c.oracle.seed = o.value("seed", c.oracle.seed);
    }
    if (block.contains("payloads")) c.payloads = block["payloads"].get<std::vector<std::string>>();
    if (block.contains("captions")) c.captions = block["captions"].get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("agent config: ") + e.what());
  }

  if (c.kind == AgentKind::RemoteChat) {
    if (c.cassette_mode != "replay") {
      if (c.endpoint.empty()) throw ConfigError("remote_chat agent needs an endpoint");
      if (c.api_key_env.empty()) throw ConfigError("remote_chat agent needs api_key_env");
    }
    if (c.provider != "openai" && c.provider != "anthropic") {
      throw ConfigError("unknown provider '" + c.provider + "'");
    }
    if (c.model_name.empty()) throw ConfigError("remote_chat agent needs a model");
  }
  return c;
}

}  // namespace photobook
