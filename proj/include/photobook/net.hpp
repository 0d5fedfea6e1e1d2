#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "photobook/types.hpp"

// Thin HTTP layer over cpp-httplib, kept out of the other headers.
namespace photobook::net {

using Headers = std::vector<std::pair<std::string, std::string>>;

struct Response {
  int status = 0;
  std::string body;
};

enum class FailureKind { Connection, Timeout };

class NetError : public Error {
 public:
  NetError(FailureKind kind, const std::string& what) : Error(what), kind_(kind) {}
  FailureKind kind() const { return kind_; }

 private:
  FailureKind kind_;
};

/// "https://host:8443/v1" -> {"https://host:8443", "/v1"}.
struct Url {
  std::string origin;
  std::string path_prefix;
};
Url split_url(const std::string& url);

Response post(const std::string& url, const std::string& path, const std::string& body,
              const Headers& headers, std::chrono::milliseconds timeout);
Response get(const std::string& url, const std::string& path, std::chrono::milliseconds timeout);

/// Loopback server on an ephemeral port, serving every request through one
/// handler on a background thread. Stops on destruction.
class LocalServer {
 public:
  using Handler = std::function<Response(const std::string& method, const std::string& path,
                                         const std::string& body)>;

  explicit LocalServer(Handler handler);
  ~LocalServer();
  LocalServer(const LocalServer&) = delete;
  LocalServer& operator=(const LocalServer&) = delete;

  int port() const;
  std::string base_url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace photobook::net
