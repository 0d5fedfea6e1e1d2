#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "photobook/agents.hpp"
#include "photobook/net.hpp"

namespace photobook {

struct ChatHttpRequest {
  std::string path;
  nlohmann::json body;
  net::Headers headers;
};

using ChatHttpReply = net::Response;

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  /// Throws TransportError (connection) or Timeout.
  virtual ChatHttpReply post(const ChatHttpRequest& request) = 0;
};

class HttpChatTransport : public ChatTransport {
 public:
  HttpChatTransport(std::string endpoint, std::chrono::milliseconds timeout);
  ChatHttpReply post(const ChatHttpRequest& request) override;

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

/// Content key of a request: path and body only, so credentials never
/// reach a cassette.
std::string request_key(const ChatHttpRequest& request);

/// Record/replay over a JSONL cassette ({key, path, request, status, response}
/// per line). Replay serves recorded replies in order per key and fails with
/// TransportError on an unknown request; record forwards and appends.
class CassetteTransport : public ChatTransport {
 public:
  static std::shared_ptr<CassetteTransport> replay(const std::string& path);
  static std::shared_ptr<CassetteTransport> record(const std::string& path, std::shared_ptr<ChatTransport> inner);

  ChatHttpReply post(const ChatHttpRequest& request) override;

 private:
  CassetteTransport() = default;

  std::string path_;
  std::shared_ptr<ChatTransport> inner_;
  std::map<std::string, std::vector<ChatHttpReply>> recorded_;
  std::map<std::string, std::size_t> served_;
  std::mutex mutex_;
};

/// Spaces request starts at least 1/rate seconds apart across all holders.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second);
  void acquire();

 private:
  std::chrono::steady_clock::duration interval_;
  std::chrono::steady_clock::time_point next_;
  std::mutex mutex_;
};

struct ChatImage {
  std::string media_type;
  std::string base64;
};

struct ChatMessage {
  std::string role;  // "user" | "assistant"
  std::string text;
  std::vector<ChatImage> images;
};

/// Provider-neutral request: system text plus alternating messages.
struct ChatPrompt {
  std::string system;
  std::vector<ChatMessage> messages;
};

/// Resolves an image id to attachment bytes, or (dry run) to caption text.
struct ImageSource {
  bool attach_images = true;
  std::string image_root;
  std::map<std::string, std::string> captions;

  ChatImage load(const std::string& image_id) const;  // throws AgentFailure
  std::string caption(const std::string& image_id) const;
};

ChatPrompt build_chat_prompt(const AgentContext& ctx, std::string_view template_text, const ImageSource& images);

struct ProviderReply {
  std::string text;
  std::string response_id;
};

class ProviderAdapter {
 public:
  virtual ~ProviderAdapter() = default;
  virtual ChatHttpRequest build(const std::string& model, const nlohmann::json& params, const ChatPrompt& prompt,
                                const std::string& api_key) const = 0;
  /// Throws ProviderRefusal or TransportError on an unusable body.
  virtual ProviderReply parse(const ChatHttpReply& reply) const = 0;
};

std::unique_ptr<ProviderAdapter> make_provider(std::string_view name);

/// Agent backed by a chat-completion endpoint.
class RemoteChatAgent : public Agent {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  RemoteChatAgent(AgentConfig config, std::shared_ptr<ChatTransport> transport,
                  std::shared_ptr<RateLimiter> limiter = nullptr, Sleeper sleeper = nullptr);

  std::string next_turn(const AgentContext& ctx) override;
  std::string describe() const override;
  std::string last_response_id() const override { return last_response_id_; }

  int transport_attempts() const { return attempts_.load(); }
  /// Body of the most recent request, for inspection.
  const nlohmann::json& last_request() const { return last_request_; }

 private:
  AgentConfig config_;
  std::shared_ptr<ChatTransport> transport_;
  std::shared_ptr<RateLimiter> limiter_;
  Sleeper sleeper_;
  std::unique_ptr<ProviderAdapter> provider_;
  ImageSource images_;
  std::atomic<int> attempts_{0};
  std::string last_response_id_;
  nlohmann::json last_request_;
};

/// Builds the transport stack for a config (HTTP, optionally behind a
/// cassette) and the agent on top.
std::unique_ptr<RemoteChatAgent> make_remote_agent(const AgentConfig& config,
                                                   std::shared_ptr<RateLimiter> limiter = nullptr);

/// Loopback server speaking the provider wire protocol, for offline runs.
class StubChatServer {
 public:
  using Responder = std::function<ChatHttpReply(const std::string& path, const nlohmann::json& body)>;

  explicit StubChatServer(Responder responder);

  /// Replies from a cassette recorded by CassetteTransport.
  static Responder from_cassette(const std::string& path);
  /// OpenAI-shaped replies carrying `contents` in order (last one repeats).
  static Responder openai_sequence(std::vector<std::string> contents);

  std::string base_url() const { return server_.base_url(); }
  int requests() const { return requests_.load(); }
  std::vector<nlohmann::json> bodies() const;

 private:
  net::Response handle(const std::string& method, const std::string& path, const std::string& body);

  Responder responder_;
  std::atomic<int> requests_{0};
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> bodies_;
  net::LocalServer server_;
};

}  // namespace photobook
