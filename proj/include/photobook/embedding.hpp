#pragma once

#include <array>
#include <atomic>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "photobook/net.hpp"
#include "photobook/types.hpp"

namespace photobook {

enum class ModelTag { JointText, JointImage, Sentence };

inline constexpr std::array<ModelTag, 3> kModelTags{ModelTag::JointText, ModelTag::JointImage, ModelTag::Sentence};

/// Wire names: "joint-text", "joint-image", "sentence".
std::string_view to_string(ModelTag tag);
std::optional<ModelTag> parse_model_tag(std::string_view text);

class ServiceUnavailable : public Error {
 public:
  using Error::Error;
};

class EmbeddingError : public Error {
 public:
  using Error::Error;
};

class DimMismatch : public Error {
 public:
  using Error::Error;
};

class ZeroVector : public Error {
 public:
  using Error::Error;
};

struct EmbeddingVector {
  std::vector<double> values;
  ModelTag tag = ModelTag::Sentence;
  std::string source_key;  // sha256 of the item
  bool normalized = false;  // backend returns unit vectors

  std::size_t dim() const { return values.size(); }
};

struct EmbeddingRequest {
  ModelTag tag = ModelTag::Sentence;
  std::vector<std::string> items;  // texts, or image references for JointImage
};

struct ItemError {
  std::size_t index = 0;
  std::string item;
  std::string detail;
};

/// `vectors[i]` is empty exactly when `errors` names index i.
struct EmbeddingResponse {
  std::vector<std::optional<EmbeddingVector>> vectors;
  std::size_t dim = 0;
  std::string model_version;
  bool normalized = false;
  std::vector<ItemError> errors;
};

struct ModelInfo {
  std::string model_version;
  std::size_t dim = 0;
  bool normalized = false;
};

/// What a backend returns for one batch; `values[i]` empty iff errors names i.
struct BackendBatch {
  std::vector<std::optional<std::vector<double>>> values;
  std::vector<ItemError> errors;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual ModelInfo info(ModelTag tag) = 0;  // throws ServiceUnavailable
  virtual BackendBatch embed(ModelTag tag, const std::vector<std::string>& items) = 0;
};

/// Seeded offline backend. Vectors are standard-normal draws keyed by
/// (seed, tag, item); dims match the real service (512/512/384).
class MockBackend : public EmbeddingBackend {
 public:
  explicit MockBackend(std::uint64_t seed = 0);

  ModelInfo info(ModelTag tag) override;
  BackendBatch embed(ModelTag tag, const std::vector<std::string>& items) override;

  /// Fixed vector for one item (zero-padded to the tag's dim).
  void set_override(ModelTag tag, const std::string& item, std::vector<double> values);
  /// Items that fail with an ItemError.
  void fail_item(const std::string& item);
  /// JointImage items must then exist under `root`.
  void require_image_files(std::filesystem::path root);

  std::size_t calls() const { return calls_.load(); }
  std::size_t items_embedded() const { return items_.load(); }
  static std::size_t dim_for(ModelTag tag);

 private:
  std::uint64_t seed_;
  std::mutex mutex_;
  std::map<std::pair<ModelTag, std::string>, std::vector<double>> overrides_;
  std::set<std::string> failing_;
  std::optional<std::filesystem::path> image_root_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> items_{0};
};

/// Client for the embedding service: POST /embed, GET /health.
class HttpBackend : public EmbeddingBackend {
 public:
  explicit HttpBackend(std::string base_url, int timeout_ms = 60000);

  ModelInfo info(ModelTag tag) override;
  BackendBatch embed(ModelTag tag, const std::vector<std::string>& items) override;
  nlohmann::json health();

 private:
  std::string base_url_;
  int timeout_ms_;
  std::mutex mutex_;
  std::map<ModelTag, ModelInfo> info_;
};

/// Loopback server speaking the service wire protocol over a backend.
class MockEmbedServer {
 public:
  explicit MockEmbedServer(std::shared_ptr<EmbeddingBackend> backend);

  std::string base_url() const { return server_.base_url(); }
  std::size_t requests() const { return requests_.load(); }

 private:
  net::Response handle(const std::string& method, const std::string& path, const std::string& body);

  std::shared_ptr<EmbeddingBackend> backend_;
  std::atomic<std::size_t> requests_{0};
  net::LocalServer server_;
};

struct GatewayOptions {
  std::optional<std::filesystem::path> cache_dir;  // persistent JSONL cache
};

/// Cached, thread-safe front for a backend. Cache key is
/// (tag, model_version, sha256(item)); concurrent requests for the same key
/// share one backend call. Item errors are not cached.
class EmbeddingGateway {
 public:
  explicit EmbeddingGateway(std::shared_ptr<EmbeddingBackend> backend, GatewayOptions options = {});

  /// Throws EmbeddingError on an empty batch, ServiceUnavailable from the backend.
  EmbeddingResponse embed(const EmbeddingRequest& request);
  /// Single item; an item error is thrown as EmbeddingError.
  EmbeddingVector embed_one(ModelTag tag, const std::string& item);

  std::string model_version(ModelTag tag);
  std::size_t cache_size() const;
  std::size_t cache_hits() const { return hits_.load(); }

 private:
  struct Slot {
    std::optional<std::vector<double>> values;
    std::string error;
  };

  std::string cache_key(ModelTag tag, const std::string& version, const std::string& digest) const;
  void load_disk_cache();
  void append_disk_cache(const std::string& key, const std::vector<double>& values);
  ModelInfo info_for(ModelTag tag);

  std::shared_ptr<EmbeddingBackend> backend_;
  GatewayOptions options_;
  mutable std::shared_mutex cache_mutex_;
  std::map<std::string, std::vector<double>> cache_;
  std::mutex inflight_mutex_;
  std::map<std::string, std::shared_future<Slot>> inflight_;
  std::mutex disk_mutex_;
  std::mutex info_mutex_;
  std::map<ModelTag, ModelInfo> info_;
  std::atomic<std::size_t> hits_{0};
};

/// Standard cosine similarity, clamped to [-1, 1].
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace photobook
