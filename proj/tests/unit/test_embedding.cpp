#include <cmath>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "photobook/crypto.hpp"
#include "photobook/embedding.hpp"
#include "support.hpp"

using namespace photobook;
using nlohmann::json;

TEST_SUITE("embedding") {
  TEST_CASE("mock vectors are seeded and sized like the service") {
    MockBackend a(3), b(3), c(4);
    CHECK(MockBackend::dim_for(ModelTag::JointText) == 512);
    CHECK(MockBackend::dim_for(ModelTag::JointImage) == 512);
    CHECK(MockBackend::dim_for(ModelTag::Sentence) == 384);
    const auto va = a.embed(ModelTag::Sentence, {"a dog", "a cat"});
    const auto vb = b.embed(ModelTag::Sentence, {"a dog"});
    const auto vc = c.embed(ModelTag::Sentence, {"a dog"});
    CHECK(va.values[0]->size() == 384);
    CHECK(*va.values[0] == *vb.values[0]);
    CHECK(*va.values[0] != *va.values[1]);
    CHECK(*va.values[0] != *vc.values[0]);
    CHECK(*a.embed(ModelTag::JointText, {"a dog"}).values[0] != *a.embed(ModelTag::JointImage, {"a dog"}).values[0]);
    CHECK(a.calls() == 3);
  }

  TEST_CASE("mock overrides, failures and image checks") {
    MockBackend m;
    m.set_override(ModelTag::JointText, "x", {1.0, 2.0});
    m.fail_item("bad");
    const auto r = m.embed(ModelTag::JointText, {"x", "bad"});
    REQUIRE(r.values[0]);
    CHECK(r.values[0]->size() == 512);
    CHECK((*r.values[0])[1] == 2.0);
    CHECK((*r.values[0])[2] == 0.0);
    CHECK_FALSE(r.values[1]);
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].index == 1);

    testing::TempDir dir("img");
    std::ofstream(dir / "here.jpg") << "x";
    m.require_image_files(dir.path());
    const auto img = m.embed(ModelTag::JointImage, {"here.jpg", "gone.jpg"});
    CHECK(img.values[0]);
    CHECK_FALSE(img.values[1]);
  }

  TEST_CASE("cosine") {
    CHECK(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
    CHECK(cosine(std::vector<double>{3, 4}, std::vector<double>{6, 8}) == doctest::Approx(1.0));
    CHECK(cosine(std::vector<double>{1, 1}, std::vector<double>{-1, -1}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}), DimMismatch);
    CHECK_THROWS_AS(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), ZeroVector);
    // clamped even when rounding overshoots
    const std::vector<double> v{0.1, 0.2, 0.3};
    CHECK(cosine(v, v) <= 1.0);
  }

  TEST_CASE("model tags round-trip") {
    for (ModelTag t : kModelTags) CHECK(parse_model_tag(to_string(t)) == t);
    CHECK(to_string(ModelTag::JointText) == "joint-text");
    CHECK_FALSE(parse_model_tag("clip").has_value());
  }

  TEST_CASE("gateway caches by item and dedupes a batch") {
    auto backend = std::make_shared<MockBackend>(1);
    EmbeddingGateway gw(backend);
    const auto r = gw.embed({ModelTag::Sentence, {"a", "b", "a"}});
    CHECK(backend->items_embedded() == 2);
    REQUIRE(r.vectors.size() == 3);
    CHECK(r.vectors[0]->values == r.vectors[2]->values);
    CHECK(r.vectors[0]->source_key == crypto::sha256_hex("a"));
    CHECK(r.dim == 384);
    CHECK(r.model_version == "mock-sentence/1");
    CHECK(gw.cache_size() == 2);
    gw.embed({ModelTag::Sentence, {"b", "c"}});
    CHECK(backend->items_embedded() == 3);
    CHECK(gw.cache_hits() == 1);
    CHECK_THROWS_AS(gw.embed({ModelTag::Sentence, {}}), EmbeddingError);
  }

  TEST_CASE("item errors are reported per item and not cached") {
    auto backend = std::make_shared<MockBackend>();
    backend->fail_item("bad");
    EmbeddingGateway gw(backend);
    const auto r = gw.embed({ModelTag::JointText, {"ok", "bad"}});
    CHECK(r.vectors[0]);
    CHECK_FALSE(r.vectors[1]);
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].index == 1);
    CHECK(r.errors[0].item == "bad");
    CHECK(gw.cache_size() == 1);
    CHECK_THROWS_AS(gw.embed_one(ModelTag::JointText, "bad"), EmbeddingError);
    CHECK(gw.embed_one(ModelTag::JointText, "ok").dim() == 512);
  }

  TEST_CASE("concurrent callers share results") {
    auto backend = std::make_shared<MockBackend>(9);
    EmbeddingGateway gw(backend);
    std::vector<std::string> items;
    for (int i = 0; i < 20; ++i) items.push_back("item " + std::to_string(i));
    std::vector<std::thread> threads;
    std::vector<EmbeddingResponse> out(4);
    for (int t = 0; t < 4; ++t) threads.emplace_back([&, t] { out[t] = gw.embed({ModelTag::Sentence, items}); });
    for (auto& t : threads) t.join();
    CHECK(backend->items_embedded() == 20);
    for (int t = 1; t < 4; ++t) {
      for (std::size_t i = 0; i < items.size(); ++i) CHECK(out[t].vectors[i]->values == out[0].vectors[i]->values);
    }
  }

  TEST_CASE("disk cache persists and tolerates a torn line") {
    testing::TempDir dir("cache");
    GatewayOptions opt;
    opt.cache_dir = dir.path();
    {
      EmbeddingGateway gw(std::make_shared<MockBackend>(2), opt);
      gw.embed({ModelTag::Sentence, {"one", "two"}});
    }
    std::ofstream(dir / "embeddings.jsonl", std::ios::app) << "{\"key\":\"sentence|mock";
    auto backend = std::make_shared<MockBackend>(2);
    EmbeddingGateway gw(backend, opt);
    CHECK(gw.cache_size() == 2);
    gw.embed({ModelTag::Sentence, {"one", "two"}});
    CHECK(backend->calls() == 0);
    CHECK(gw.cache_hits() == 2);
  }

  TEST_CASE("http backend against the loopback mock service") {
    auto mock = std::make_shared<MockBackend>(5);
    mock->fail_item("broken");
    MockEmbedServer server(mock);
    HttpBackend http(server.base_url(), 5000);

    const json health = http.health();
    CHECK(health["status"] == "ok");
    CHECK(health["models"]["sentence"]["dim"] == 384);
    CHECK(http.info(ModelTag::JointImage).dim == 512);

    const auto direct = MockBackend(5).embed(ModelTag::Sentence, {"hello"});
    const auto remote = http.embed(ModelTag::Sentence, {"hello", "broken"});
    REQUIRE(remote.values[0]);
    REQUIRE(remote.values[0]->size() == 384);
    for (std::size_t i = 0; i < 384; ++i) CHECK((*remote.values[0])[i] == doctest::Approx((*direct.values[0])[i]).epsilon(1e-12));
    CHECK_FALSE(remote.values[1]);
    REQUIRE(remote.errors.size() == 1);
    CHECK(remote.errors[0].index == 1);

    EmbeddingGateway gw(std::make_shared<HttpBackend>(server.base_url(), 5000));
    CHECK(gw.embed_one(ModelTag::JointText, "a cat").dim() == 512);
    CHECK(server.requests() >= 5);
  }

  TEST_CASE("an unreachable service is ServiceUnavailable") {
    std::string url;
    {
      MockEmbedServer gone(std::make_shared<MockBackend>());
      url = gone.base_url();
    }
    HttpBackend http(url, 2000);
    CHECK_THROWS_AS(http.health(), ServiceUnavailable);
    CHECK_THROWS_AS(http.info(ModelTag::Sentence), ServiceUnavailable);
  }
}
