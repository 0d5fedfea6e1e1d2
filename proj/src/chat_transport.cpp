#include "photobook/chat_transport.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "photobook/crypto.hpp"
#include "photobook/text.hpp"

namespace photobook {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

std::string media_type_for(const std::string& path) {
  const std::string ext = text::to_lower(fs::path(path).extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "image/jpeg";
}

class OpenAiAdapter : public ProviderAdapter {
 public:
  ChatHttpRequest build(const std::string& model, const json& params, const ChatPrompt& prompt,
                        const std::string& api_key) const override {
    json messages = json::array();
    messages.push_back({{"role", "system"}, {"content", prompt.system}});
    for (const auto& m : prompt.messages) {
      if (m.images.empty()) {
        messages.push_back({{"role", m.role}, {"content", m.text}});
        continue;
      }
      json parts = json::array();
      parts.push_back({{"type", "text"}, {"text", m.text}});
      for (const auto& img : m.images) {
        parts.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:" + img.media_type + ";base64," + img.base64}}}});
      }
      messages.push_back({{"role", m.role}, {"content", std::move(parts)}});
    }
    json body = params;
    body["model"] = model;
    body["messages"] = std::move(messages);
    return {"/v1/chat/completions", std::move(body), {{"Authorization", "Bearer " + api_key}}};
  }

  ProviderReply parse(const ChatHttpReply& reply) const override {
    const json doc = json::parse(reply.body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
      throw TransportError("openai reply has no choices");
    }
    const json& choice = doc["choices"][0];
    const json message = choice.value("message", json::object());
    if (message.contains("refusal") && message["refusal"].is_string()) {
      throw ProviderRefusal("provider refused: " + message["refusal"].get<std::string>());
    }
    if (choice.value("finish_reason", "") == "content_filter") throw ProviderRefusal("provider content filter");
    if (!message.contains("content") || !message["content"].is_string()) {
      throw TransportError("openai reply has no text content");
    }
    return {message["content"].get<std::string>(), doc.value("id", "")};
  }
};

class AnthropicAdapter : public ProviderAdapter {
 public:
  ChatHttpRequest build(const std::string& model, const json& params, const ChatPrompt& prompt,
                        const std::string& api_key) const override {
    json messages = json::array();
    for (const auto& m : prompt.messages) {
      json parts = json::array();
      for (const auto& img : m.images) {
        parts.push_back({{"type", "image"},
                         {"source", {{"type", "base64"}, {"media_type", img.media_type}, {"data", img.base64}}}});
      }
      parts.push_back({{"type", "text"}, {"text", m.text}});
      messages.push_back({{"role", m.role}, {"content", std::move(parts)}});
    }
    json body = params;
    body["model"] = model;
    body["system"] = prompt.system;
    body["messages"] = std::move(messages);
    if (!body.contains("max_tokens")) body["max_tokens"] = 1024;
    return {"/v1/messages", std::move(body), {{"x-api-key", api_key}, {"anthropic-version", "2023-06-01"}}};
  }

  ProviderReply parse(const ChatHttpReply& reply) const override {
    const json doc = json::parse(reply.body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw TransportError("anthropic reply is not JSON");
    if (doc.value("stop_reason", "") == "refusal") throw ProviderRefusal("provider refused");
    if (!doc.contains("content") || !doc["content"].is_array()) throw TransportError("anthropic reply has no content");
    std::string text;
    for (const auto& block : doc["content"]) {
      if (block.value("type", "") == "text") text += block.value("text", "");
    }
    return {text, doc.value("id", "")};
  }
};

}  // namespace

HttpChatTransport::HttpChatTransport(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {}

ChatHttpReply HttpChatTransport::post(const ChatHttpRequest& request) {
  try {
    return net::post(endpoint_, request.path, request.body.dump(), request.headers, timeout_);
  } catch (const net::NetError& e) {
    if (e.kind() == net::FailureKind::Timeout) throw Timeout(e.what());
    throw TransportError(e.what());
  }
}

std::string request_key(const ChatHttpRequest& request) {
  return crypto::sha256_hex(request.path + "\n" + request.body.dump());
}

std::shared_ptr<CassetteTransport> CassetteTransport::replay(const std::string& path) {
  std::shared_ptr<CassetteTransport> t(new CassetteTransport());
  t->path_ = path;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open cassette " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    const json entry = json::parse(line, nullptr, false);
    if (entry.is_discarded() || !entry.contains("key") || !entry.contains("response")) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed cassette entry");
    }
    t->recorded_[entry["key"].get<std::string>()].push_back(
        {entry.value("status", 200), entry["response"].get<std::string>()});
  }
  return t;
}

std::shared_ptr<CassetteTransport> CassetteTransport::record(const std::string& path,
                                                             std::shared_ptr<ChatTransport> inner) {
  std::shared_ptr<CassetteTransport> t(new CassetteTransport());
  t->path_ = path;
  t->inner_ = std::move(inner);
  return t;
}

ChatHttpReply CassetteTransport::post(const ChatHttpRequest& request) {
  const std::string key = request_key(request);
  if (inner_) {
    ChatHttpReply reply = inner_->post(request);
    // one lock for every recorder: parallel games may share a cassette file
    static std::mutex append_mutex;
    std::lock_guard lock(append_mutex);
    std::ofstream out(path_, std::ios::app);
    json entry = {{"key", key}, {"path", request.path}, {"request", request.body},
                  {"status", reply.status}, {"response", reply.body}};
    out << entry.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    return reply;
  }
  std::lock_guard lock(mutex_);
  auto it = recorded_.find(key);
  if (it == recorded_.end()) throw TransportError("cassette " + path_ + " has no reply for request " + key);
  std::size_t& n = served_[key];
  const ChatHttpReply& reply = it->second[std::min(n, it->second.size() - 1)];
  ++n;
  return reply;
}

RateLimiter::RateLimiter(double requests_per_second)
    : interval_(requests_per_second > 0
                    ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                          std::chrono::duration<double>(1.0 / requests_per_second))
                    : std::chrono::steady_clock::duration::zero()),
      next_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

ChatImage ImageSource::load(const std::string& image_id) const {
  const fs::path path = image_root.empty() ? fs::path(image_id) : fs::path(image_root) / image_id;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AgentFailure("image file not found: " + path.string());
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return {media_type_for(path.string()), crypto::base64_encode(bytes.str())};
}

std::string ImageSource::caption(const std::string& image_id) const {
  if (auto it = captions.find(image_id); it != captions.end()) return it->second;
  return image_id;
}

ChatPrompt build_chat_prompt(const AgentContext& ctx, std::string_view template_text, const ImageSource& images) {
  ChatPrompt prompt;
  prompt.system = render_prompt(template_text, ctx.images);

  auto push = [&prompt](const std::string& role, const std::string& text, std::vector<ChatImage> attachments = {}) {
    if (!prompt.messages.empty() && prompt.messages.back().role == role) {
      auto& last = prompt.messages.back();
      last.text += "\n" + text;
      for (auto& a : attachments) last.images.push_back(std::move(a));
      return;
    }
    prompt.messages.push_back({role, text, std::move(attachments)});
  };
  auto round_intro = [&]() {
    const std::string head = "Round " + std::to_string(ctx.round_no) + " begins.";
    if (!images.attach_images) {
      std::string text = head + " Your images:";
      for (const auto& slot : ctx.images) {
        text += "\nImage " + std::to_string(slot.index) + ": " + images.caption(slot.image_id);
      }
      push("user", text);
      return;
    }
    std::vector<ChatImage> attachments;
    for (const auto& slot : ctx.images) attachments.push_back(images.load(slot.image_id));
    push("user", head + " Your images are attached in order: Image 1, Image 2, Image 3.", std::move(attachments));
  };

  int marker = 0;
  for (const auto& entry : ctx.history) {
    if (entry.round_no != marker) {
      marker = entry.round_no;
      if (marker == ctx.round_no) {
        round_intro();
      } else {
        push("user", "Round " + std::to_string(marker) + " begins.");
      }
    }
    if (entry.speaker == ctx.seat) {
      push("assistant", entry.own_raw.empty() ? entry.message : entry.own_raw);
    } else {
      push("user", "Partner: " + entry.message);
    }
  }
  if (marker != ctx.round_no) round_intro();
  if (ctx.repair) {
    push("assistant", ctx.repair->rejected_raw);
    push("user", "Your previous reply was rejected (" + ctx.repair->error +
                     "). Reply with one valid JSON object with the fields \"message\", \"reference\" and \"guesses\".");
  }
  if (prompt.messages.back().role == "assistant") push("user", "Your turn.");
  return prompt;
}

std::unique_ptr<ProviderAdapter> make_provider(std::string_view name) {
  if (name == "openai") return std::make_unique<OpenAiAdapter>();
  if (name == "anthropic") return std::make_unique<AnthropicAdapter>();
  throw ConfigError("unknown provider '" + std::string(name) + "'");
}

RemoteChatAgent::RemoteChatAgent(AgentConfig config, std::shared_ptr<ChatTransport> transport,
                                 std::shared_ptr<RateLimiter> limiter, Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      limiter_(std::move(limiter)),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      provider_(make_provider(config_.provider)),
      images_{config_.attach_images, config_.image_root, config_.captions} {}

std::string RemoteChatAgent::describe() const { return "remote:" + config_.provider + "/" + config_.model_name; }

std::string RemoteChatAgent::next_turn(const AgentContext& ctx) {
  std::string api_key;
  if (!config_.api_key_env.empty()) {
    if (const char* v = std::getenv(config_.api_key_env.c_str())) api_key = v;
  }
  if (api_key.empty() && config_.cassette_mode != "replay") {
    throw AgentFailure("credential variable '" + config_.api_key_env + "' is not set");
  }
  const ChatPrompt prompt = build_chat_prompt(ctx, template_text(config_), images_);
  const ChatHttpRequest request = provider_->build(config_.model_name, config_.params, prompt, api_key);
  last_request_ = request.body;

  std::string last_error;
  bool last_was_timeout = false;
  double backoff_ms = config_.retry.initial_backoff_ms;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      sleeper_(std::chrono::milliseconds(static_cast<long long>(backoff_ms)));
      backoff_ms *= config_.retry.backoff_multiplier;
    }
    if (limiter_) limiter_->acquire();
    ++attempts_;
    ChatHttpReply reply;
    try {
      reply = transport_->post(request);
    } catch (const Timeout& e) {
      last_error = e.what();
      last_was_timeout = true;
      continue;
    } catch (const TransportError& e) {
      last_error = e.what();
      last_was_timeout = false;
      continue;
    }
    if (reply.status >= 200 && reply.status < 300) {
      ProviderReply parsed = provider_->parse(reply);
      last_response_id_ = parsed.response_id;
      return parsed.text;
    }
    last_error = "HTTP " + std::to_string(reply.status) + ": " + reply.body.substr(0, 200);
    last_was_timeout = false;
    if (!retryable_status(reply.status)) throw TransportError(describe() + ": " + last_error);
  }
  const std::string msg = describe() + ": giving up after " + std::to_string(config_.retry.max_attempts) +
                          " attempts: " + last_error;
  if (last_was_timeout) throw Timeout(msg);
  throw TransportError(msg);
}

std::unique_ptr<RemoteChatAgent> make_remote_agent(const AgentConfig& config, std::shared_ptr<RateLimiter> limiter) {
  std::shared_ptr<ChatTransport> transport;
  if (config.cassette_mode == "replay") {
    transport = CassetteTransport::replay(config.cassette);
  } else {
    transport = std::make_shared<HttpChatTransport>(config.endpoint, std::chrono::milliseconds(config.timeout_ms));
    if (config.cassette_mode == "record") transport = CassetteTransport::record(config.cassette, transport);
  }
  return std::make_unique<RemoteChatAgent>(config, std::move(transport), std::move(limiter));
}

StubChatServer::StubChatServer(Responder responder)
    : responder_(std::move(responder)),
      server_([this](const std::string& method, const std::string& path, const std::string& body) {
        return handle(method, path, body);
      }) {}

net::Response StubChatServer::handle(const std::string& method, const std::string& path, const std::string& body) {
  if (method != "POST") return {404, R"({"error":"not found"})"};
  const json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) return {400, R"({"error":"malformed JSON"})"};
  ++requests_;
  {
    std::lock_guard lock(mutex_);
    bodies_.push_back(doc);
  }
  return responder_(path, doc);
}

std::vector<json> StubChatServer::bodies() const {
  std::lock_guard lock(mutex_);
  return bodies_;
}

StubChatServer::Responder StubChatServer::from_cassette(const std::string& path) {
  auto cassette = CassetteTransport::replay(path);
  return [cassette](const std::string& p, const json& body) -> ChatHttpReply {
    try {
      return cassette->post({p, body, {}});
    } catch (const TransportError& e) {
      return {404, json{{"error", e.what()}}.dump()};
    }
  };
}

StubChatServer::Responder StubChatServer::openai_sequence(std::vector<std::string> contents) {
  auto state = std::make_shared<std::pair<std::mutex, std::size_t>>();
  auto shared = std::make_shared<std::vector<std::string>>(std::move(contents));
  return [state, shared](const std::string&, const json&) -> ChatHttpReply {
    std::lock_guard lock(state->first);
    const std::size_t i = std::min(state->second++, shared->size() - 1);
    json reply = {{"id", "stub-" + std::to_string(i + 1)},
                  {"object", "chat.completion"},
                  {"choices", json::array({{{"index", 0},
                                            {"finish_reason", "stop"},
                                            {"message", {{"role", "assistant"}, {"content", (*shared)[i]}}}}})}};
    return {200, reply.dump()};
  };
}

}  // namespace photobook
