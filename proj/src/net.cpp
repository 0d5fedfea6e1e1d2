#include "photobook/net.hpp"

#include <httplib.h>

#include <regex>
#include <thread>

namespace photobook::net {
namespace {

std::unique_ptr<httplib::Client> make_client(const std::string& origin, std::chrono::milliseconds timeout) {
  auto client = std::make_unique<httplib::Client>(origin);
  const auto secs = static_cast<time_t>(timeout.count() / 1000);
  const auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client->set_connection_timeout(secs, usecs);
  client->set_read_timeout(secs, usecs);
  client->set_write_timeout(secs, usecs);
  return client;
}

[[noreturn]] void raise(const std::string& origin, httplib::Error err) {
  const auto kind = err == httplib::Error::Read || err == httplib::Error::Write ||
                            err == httplib::Error::ConnectionTimeout
                        ? FailureKind::Timeout
                        : FailureKind::Connection;
  throw NetError(kind, origin + ": " + httplib::to_string(err));
}

}  // namespace

Url split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw Error("malformed endpoint URL '" + url + "'");
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

Response post(const std::string& url, const std::string& path, const std::string& body,
              const Headers& headers, std::chrono::milliseconds timeout) {
  const Url u = split_url(url);
  auto client = make_client(u.origin, timeout);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client->Post(u.path_prefix + path, h, body, "application/json");
  if (!res) raise(u.origin, res.error());
  return {res->status, res->body};
}

Response get(const std::string& url, const std::string& path, std::chrono::milliseconds timeout) {
  const Url u = split_url(url);
  auto client = make_client(u.origin, timeout);
  auto res = client->Get(u.path_prefix + path);
  if (!res) raise(u.origin, res.error());
  return {res->status, res->body};
}

struct LocalServer::Impl {
  httplib::Server server;
  int port = 0;
  std::thread thread;
};

LocalServer::LocalServer(Handler handler) : impl_(std::make_unique<Impl>()) {
  auto dispatch = [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
    const Response out = handler(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  impl_->server.Get(".*", dispatch);
  impl_->server.Post(".*", dispatch);
  impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  if (impl_->port <= 0) throw Error("could not bind loopback server");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

LocalServer::~LocalServer() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int LocalServer::port() const { return impl_->port; }

std::string LocalServer::base_url() const { return "http://127.0.0.1:" + std::to_string(impl_->port); }

}  // namespace photobook::net
