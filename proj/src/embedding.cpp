#include "photobook/embedding.hpp"

#include <cmath>
#include <fstream>

#include "photobook/crypto.hpp"
#include "photobook/rng.hpp"

namespace photobook {
namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ModelTag tag) {
  switch (tag) {
    case ModelTag::JointText: return "joint-text";
    case ModelTag::JointImage: return "joint-image";
    case ModelTag::Sentence: return "sentence";
  }
  return "sentence";
}

std::optional<ModelTag> parse_model_tag(std::string_view text) {
  for (ModelTag t : kModelTags) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

// ---- mock backend ---------------------------------------------------------

MockBackend::MockBackend(std::uint64_t seed) : seed_(seed) {}

std::size_t MockBackend::dim_for(ModelTag tag) { return tag == ModelTag::Sentence ? 384 : 512; }

ModelInfo MockBackend::info(ModelTag tag) {
  return {"mock-" + std::string(to_string(tag)) + "/1", dim_for(tag), false};
}

void MockBackend::set_override(ModelTag tag, const std::string& item, std::vector<double> values) {
  values.resize(dim_for(tag), 0.0);
  std::lock_guard lock(mutex_);
  overrides_[{tag, item}] = std::move(values);
}

void MockBackend::fail_item(const std::string& item) {
  std::lock_guard lock(mutex_);
  failing_.insert(item);
}

void MockBackend::require_image_files(fs::path root) {
  std::lock_guard lock(mutex_);
  image_root_ = std::move(root);
}

BackendBatch MockBackend::embed(ModelTag tag, const std::vector<std::string>& items) {
  ++calls_;
  items_ += items.size();
  BackendBatch batch;
  batch.values.resize(items.size());
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string& item = items[i];
    if (failing_.count(item)) {
      batch.errors.push_back({i, item, "item rejected by backend"});
      continue;
    }
    if (tag == ModelTag::JointImage && image_root_ && !fs::is_regular_file(*image_root_ / item)) {
      batch.errors.push_back({i, item, "unreadable image"});
      continue;
    }
    if (auto it = overrides_.find({tag, item}); it != overrides_.end()) {
      batch.values[i] = it->second;
      continue;
    }
    Rng rng(derive_seed(seed_, std::string(to_string(tag)) + "\n" + item));
    std::vector<double> v(dim_for(tag));
    for (double& x : v) x = rng.normal();
    batch.values[i] = std::move(v);
  }
  return batch;
}

// ---- HTTP backend ---------------------------------------------------------

HttpBackend::HttpBackend(std::string base_url, int timeout_ms) : base_url_(std::move(base_url)), timeout_ms_(timeout_ms) {}

json HttpBackend::health() {
  net::Response r;
  try {
    r = net::get(base_url_, "/health", std::chrono::milliseconds(timeout_ms_));
  } catch (const net::NetError& e) {
    throw ServiceUnavailable(std::string("embedding service: ") + e.what());
  }
  if (r.status != 200) throw ServiceUnavailable("embedding service /health returned HTTP " + std::to_string(r.status));
  json doc = json::parse(r.body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ServiceUnavailable("embedding service /health: malformed body");
  return doc;
}

ModelInfo HttpBackend::info(ModelTag tag) {
  std::lock_guard lock(mutex_);
  if (auto it = info_.find(tag); it != info_.end()) return it->second;
  const json doc = health();
  if (doc.value("status", "") != "ok") throw ServiceUnavailable("embedding service reports status " + doc.value("status", "?"));
  const auto models = doc.find("models");
  if (models == doc.end() || !models->is_object() || !models->contains(std::string(to_string(tag)))) {
    throw ServiceUnavailable("embedding service does not serve '" + std::string(to_string(tag)) + "'");
  }
  const json& m = models->at(std::string(to_string(tag)));
  ModelInfo info{m.value("model_version", ""), m.value("dim", std::size_t{0}), m.value("normalized", false)};
  if (info.model_version.empty() || info.dim == 0) throw ServiceUnavailable("embedding service: incomplete model entry");
  info_[tag] = info;
  return info;
}

BackendBatch HttpBackend::embed(ModelTag tag, const std::vector<std::string>& items) {
  const ModelInfo expected = info(tag);
  const json body = {{"model", std::string(to_string(tag))}, {"items", items}};
  net::Response r;
  try {
    r = net::post(base_url_, "/embed", body.dump(), {{"Content-Type", "application/json"}},
                  std::chrono::milliseconds(timeout_ms_));
  } catch (const net::NetError& e) {
    throw ServiceUnavailable(std::string("embedding service: ") + e.what());
  }
  if (r.status == 400) throw EmbeddingError("embedding service rejected the request: " + r.body);
  if (r.status != 200 && r.status != 422) throw ServiceUnavailable("embedding service returned HTTP " + std::to_string(r.status));

  const json doc = json::parse(r.body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ServiceUnavailable("embedding service: malformed response");
  if (doc.value("model_version", "") != expected.model_version) {
    throw ServiceUnavailable("embedding service changed model version mid-run");
  }
  const auto vectors = doc.find("vectors");
  if (vectors == doc.end() || !vectors->is_array() || vectors->size() != items.size()) {
    throw ServiceUnavailable("embedding service: response length does not match request");
  }
  BackendBatch batch;
  batch.values.resize(items.size());
  std::set<std::size_t> failed;
  if (auto errs = doc.find("errors"); errs != doc.end() && errs->is_array()) {
    for (const auto& e : *errs) {
      const auto index = e.value("index", items.size());
      if (index >= items.size()) throw ServiceUnavailable("embedding service: error index out of range");
      failed.insert(index);
      batch.errors.push_back({index, items[index], e.value("detail", "item failed")});
    }
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const json& v = (*vectors)[i];
    if (v.is_null()) {
      if (!failed.count(i)) batch.errors.push_back({i, items[i], "no vector returned"});
      continue;
    }
    try {
      batch.values[i] = v.get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ServiceUnavailable("embedding service: vector " + std::to_string(i) + " is not numeric");
    }
  }
  return batch;
}

// ---- mock server ----------------------------------------------------------

MockEmbedServer::MockEmbedServer(std::shared_ptr<EmbeddingBackend> backend)
    : backend_(std::move(backend)),
      server_([this](const std::string& method, const std::string& path, const std::string& body) {
        return handle(method, path, body);
      }) {}

net::Response MockEmbedServer::handle(const std::string& method, const std::string& path, const std::string& body) {
  ++requests_;
  auto error = [](int status, const std::string& detail) {
    return net::Response{status, json{{"error", detail}}.dump()};
  };
  if (method == "GET" && path == "/health") {
    json models = json::object();
    for (ModelTag t : kModelTags) {
      const ModelInfo info = backend_->info(t);
      models[std::string(to_string(t))] = {{"model_version", info.model_version}, {"dim", info.dim}, {"normalized", info.normalized}};
    }
    return {200, json{{"status", "ok"}, {"models", models}}.dump()};
  }
  if (method != "POST" || path != "/embed") return error(404, "no such endpoint");

  const json req = json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object() || !req.contains("model") || !req["model"].is_string() ||
      !req.contains("items") || !req["items"].is_array()) {
    return error(400, "body must be {model, items}");
  }
  const auto tag = parse_model_tag(req["model"].get<std::string>());
  if (!tag) return error(404, "unknown model");
  std::vector<std::string> items;
  for (const auto& item : req["items"]) {
    if (!item.is_string()) return error(400, "items must be strings");
    items.push_back(item.get<std::string>());
  }
  if (items.empty()) return error(400, "empty batch");
  const ModelInfo info = backend_->info(*tag);
  const BackendBatch batch = backend_->embed(*tag, items);
  json vectors = json::array();
  for (const auto& v : batch.values) vectors.push_back(v ? json(*v) : json(nullptr));
  json errors = json::array();
  for (const auto& e : batch.errors) errors.push_back({{"index", e.index}, {"item", e.item}, {"detail", e.detail}});
  const json out = {{"vectors", vectors},
                    {"dim", info.dim},
                    {"model_version", info.model_version},
                    {"normalized", info.normalized},
                    {"errors", errors}};
  return {batch.errors.empty() ? 200 : 422, out.dump()};
}

// ---- gateway --------------------------------------------------------------

EmbeddingGateway::EmbeddingGateway(std::shared_ptr<EmbeddingBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
  if (options_.cache_dir) {
    fs::create_directories(*options_.cache_dir);
    load_disk_cache();
  }
}

std::string EmbeddingGateway::cache_key(ModelTag tag, const std::string& version, const std::string& digest) const {
  return std::string(to_string(tag)) + "|" + version + "|" + digest;
}

void EmbeddingGateway::load_disk_cache() {
  std::ifstream in(*options_.cache_dir / "embeddings.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    const json entry = json::parse(line, nullptr, false);
    // A torn final line from an interrupted run is skipped.
    if (entry.is_discarded() || !entry.contains("key") || !entry.contains("values")) continue;
    cache_[entry["key"].get<std::string>()] = entry["values"].get<std::vector<double>>();
  }
}

void EmbeddingGateway::append_disk_cache(const std::string& key, const std::vector<double>& values) {
  if (!options_.cache_dir) return;
  std::lock_guard lock(disk_mutex_);
  std::ofstream out(*options_.cache_dir / "embeddings.jsonl", std::ios::app);
  out << json{{"key", key}, {"values", values}}.dump() << "\n";
}

ModelInfo EmbeddingGateway::info_for(ModelTag tag) {
  std::lock_guard lock(info_mutex_);
  if (auto it = info_.find(tag); it != info_.end()) return it->second;
  ModelInfo info = backend_->info(tag);
  info_[tag] = info;
  return info;
}

std::string EmbeddingGateway::model_version(ModelTag tag) { return info_for(tag).model_version; }

std::size_t EmbeddingGateway::cache_size() const {
  std::shared_lock lock(cache_mutex_);
  return cache_.size();
}

EmbeddingResponse EmbeddingGateway::embed(const EmbeddingRequest& request) {
  if (request.items.empty()) throw EmbeddingError("empty embedding batch");
  const ModelInfo info = info_for(request.tag);
  const std::size_t n = request.items.size();

  EmbeddingResponse response;
  response.vectors.resize(n);
  response.dim = info.dim;
  response.model_version = info.model_version;
  response.normalized = info.normalized;

  std::vector<std::string> digests(n);
  std::vector<std::string> keys(n);
  std::vector<std::size_t> pending;
  {
    std::shared_lock lock(cache_mutex_);
    for (std::size_t i = 0; i < n; ++i) {
      digests[i] = crypto::sha256_hex(request.items[i]);
      keys[i] = cache_key(request.tag, info.model_version, digests[i]);
      if (auto it = cache_.find(keys[i]); it != cache_.end()) {
        response.vectors[i] = EmbeddingVector{it->second, request.tag, digests[i], info.normalized};
        ++hits_;
      } else {
        pending.push_back(i);
      }
    }
  }

  std::map<std::string, std::shared_future<Slot>> waits;
  std::map<std::string, std::promise<Slot>> owned;
  std::vector<std::string> fetch_items;
  std::vector<std::string> fetch_keys;
  {
    std::lock_guard lock(inflight_mutex_);
    for (std::size_t i : pending) {
      const std::string& key = keys[i];
      if (waits.count(key)) continue;
      if (auto it = inflight_.find(key); it != inflight_.end()) {
        waits[key] = it->second;
        continue;
      }
      {
        std::shared_lock cache_lock(cache_mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) {
          std::promise<Slot> ready;
          ready.set_value(Slot{it->second, {}});
          waits[key] = ready.get_future().share();
          continue;
        }
      }
      auto& promise = owned[key];
      waits[key] = inflight_[key] = promise.get_future().share();
      fetch_items.push_back(request.items[i]);
      fetch_keys.push_back(key);
    }
  }

  if (!fetch_items.empty()) {
    BackendBatch batch;
    try {
      batch = backend_->embed(request.tag, fetch_items);
      if (batch.values.size() != fetch_items.size()) throw ServiceUnavailable("backend returned a batch of the wrong length");
    } catch (...) {
      std::lock_guard lock(inflight_mutex_);
      for (auto& [key, promise] : owned) {
        promise.set_exception(std::current_exception());
        inflight_.erase(key);
      }
      throw;
    }
    std::map<std::size_t, std::string> errors;
    for (const auto& e : batch.errors) errors[e.index] = e.detail;
    std::vector<Slot> slots(fetch_items.size());
    for (std::size_t j = 0; j < fetch_items.size(); ++j) {
      auto& values = batch.values[j];
      if (!values) {
        slots[j].error = errors.count(j) ? errors[j] : "no vector returned";
        continue;
      }
      const bool finite = std::all_of(values->begin(), values->end(), [](double x) { return std::isfinite(x); });
      if (values->size() != info.dim || !finite) {
        slots[j].error = values->size() != info.dim ? "dimension differs from the model's" : "non-finite entry";
        continue;
      }
      slots[j].values = std::move(*values);
      {
        std::unique_lock lock(cache_mutex_);
        cache_[fetch_keys[j]] = *slots[j].values;
      }
      append_disk_cache(fetch_keys[j], *slots[j].values);
    }
    std::lock_guard lock(inflight_mutex_);
    for (std::size_t j = 0; j < fetch_items.size(); ++j) {
      owned[fetch_keys[j]].set_value(slots[j]);
      inflight_.erase(fetch_keys[j]);
    }
  }

  for (std::size_t i : pending) {
    const Slot slot = waits.at(keys[i]).get();
    if (slot.values) {
      response.vectors[i] = EmbeddingVector{*slot.values, request.tag, digests[i], info.normalized};
    } else {
      response.errors.push_back({i, request.items[i], slot.error});
    }
  }
  std::sort(response.errors.begin(), response.errors.end(),
            [](const ItemError& a, const ItemError& b) { return a.index < b.index; });
  return response;
}

EmbeddingVector EmbeddingGateway::embed_one(ModelTag tag, const std::string& item) {
  EmbeddingResponse r = embed({tag, {item}});
  if (!r.vectors[0]) throw EmbeddingError("cannot embed '" + item + "': " + r.errors.at(0).detail);
  return std::move(*r.vectors[0]);
}

// ---- cosine ---------------------------------------------------------------

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw DimMismatch("cosine of vectors with dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ZeroVector("cosine with a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return cosine(a.values, b.values); }

}  // namespace photobook
