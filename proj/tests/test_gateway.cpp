#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <future>

#include "test_support.hpp"

using namespace piculet;
using namespace piculet::testing;

namespace {

const Bytes kImage = fake_png("kitchen");

struct GatewayFixture : ::testing::Test {
  FixtureRig rig;
  void SetUp() override {
    rig.backend->set_entry(digest_of(kImage),
                           {{"detect", {{"detections", {det("person", 0.92), det("person", 0.88), det("cup", 0.7)}}}},
                            {"ocr", {{"spans", {span("EXIT")}}}},
                            {"faces", {{"faces", json::array()}}}});
  }
};

// Scripted backend: throws the queued errors in order, then answers.
class ScriptedMllm final : public MllmBackend {
 public:
  explicit ScriptedMllm(std::vector<Error> failures) : failures_(std::move(failures)) {}
  std::string chat(const ChatRequest&) override {
    const auto n = calls_++;
    if (n < failures_.size()) throw failures_[n];
    return "ok";
  }
  std::string describe() const override { return "scripted"; }
  std::size_t calls() const { return calls_; }

 private:
  std::vector<Error> failures_;
  std::size_t calls_ = 0;
};

template <typename Fn>
Error catch_error(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected piculet::Error";
  return Error(ErrorKind::input, "none");
}

}  // namespace

// ---- pipeline -----------------------------------------------------------------

TEST_F(GatewayFixture, EchoStubReturnsTheFormulatedPrompt) {
  auto gw = make_gateway(rig, std::make_shared<EchoMllm>());
  auto r = gw->answer_pipeline(kImage, "Is there a cup in the image?", EnabledSet::all());
  EXPECT_EQ(r.answer, r.formulated.text);
  EXPECT_EQ(r.formulated.text,
            "The text content contained in the image: EXIT.\n"
            "the image contains these objects: there are 2 persons, there is 1 cup.\n"
            "Answer the question based on the image and the factual information provided.\n"
            "Is there a cup in the image?");
  EXPECT_EQ(r.timings.mllm_attempts, 1);
  EXPECT_TRUE(r.backend_failures.empty());
}

TEST_F(GatewayFixture, EmptyEnabledSetSkipsAllExtractors) {
  auto gw = make_gateway(rig, std::make_shared<EchoMllm>());
  auto r = gw->answer_pipeline(kImage, "What is here?", EnabledSet{});
  EXPECT_EQ(r.answer, "Answer the question based on the image and the factual information provided.\nWhat is here?");
  EXPECT_EQ(rig.backend->total_calls(), 0u);
}

TEST_F(GatewayFixture, ExactlyOneMllmCallPerAnswer) {
  auto counting = std::make_shared<CountingMllm>(std::make_shared<EchoMllm>());
  auto gw = make_gateway(rig, counting);
  for (int i = 0; i < 5; ++i) gw->answer_pipeline(kImage, "Q" + std::to_string(i) + "?", EnabledSet::all());
  EXPECT_EQ(counting->calls(), 5u);
}

TEST_F(GatewayFixture, PrewarmedCacheMakesNoExtractorCalls) {
  auto cache = std::make_shared<ExtractionCache>(16);
  auto gw = make_gateway(rig, std::make_shared<EchoMllm>(), cache);
  auto first = gw->answer_pipeline(kImage, "Q?", EnabledSet::all());
  EXPECT_FALSE(first.timings.cache_hit);
  rig.backend->reset_calls();
  auto second = gw->answer_pipeline(kImage, "Q?", EnabledSet::all());
  EXPECT_TRUE(second.timings.cache_hit);
  EXPECT_EQ(rig.backend->total_calls(), 0u);
  EXPECT_EQ(second.answer, first.answer);
  // A different enabled set is a different cache entry.
  gw->answer_pipeline(kImage, "Q?", {ExtractorKind::ocr});
  EXPECT_EQ(rig.backend->calls("/v1/ocr"), 1u);
}

TEST_F(GatewayFixture, CacheKeyDependsOnExtractorConfig) {
  auto cache = std::make_shared<ExtractionCache>(16);
  auto gw1 = make_gateway(rig, std::make_shared<EchoMllm>(), cache);
  auto strict = small_config();
  strict.detection_confidence_threshold = 0.9;
  auto gw2 = make_gateway(rig, std::make_shared<EchoMllm>(), cache, strict);
  gw1->answer_pipeline(kImage, "Q?", EnabledSet::all());
  auto r = gw2->answer_pipeline(kImage, "Q?", EnabledSet::all());
  EXPECT_FALSE(r.timings.cache_hit);
  EXPECT_EQ(r.bundle.detections->size(), 1u);
}

TEST_F(GatewayFixture, TolerantFailuresAreNotCached) {
  auto cache = std::make_shared<ExtractionCache>(16);
  auto cfg = small_config();
  cfg.tolerate_backend_failure = true;
  auto gw = make_gateway(rig, std::make_shared<EchoMllm>(), cache, cfg);
  rig.backend->set_failure("ocr", {FailureMode::transport, 0, "", 1});
  auto r = gw->answer_pipeline(kImage, "Q?", EnabledSet::all());
  ASSERT_EQ(r.backend_failures.size(), 1u);
  EXPECT_EQ(cache->size(), 0u);
  auto again = gw->answer_pipeline(kImage, "Q?", EnabledSet::all());
  EXPECT_TRUE(again.backend_failures.empty());
  EXPECT_EQ(again.bundle.ocr->size(), 1u);
}

TEST_F(GatewayFixture, ErrorsCarryTheFailingStage) {
  auto gw = make_gateway(rig, std::make_shared<EchoMllm>());
  auto e = catch_error([&] { gw->answer_pipeline(as_bytes("text"), "Q?", EnabledSet::all()); });
  EXPECT_EQ(e.stage(), "input");
  EXPECT_EQ(e.kind(), ErrorKind::input);
  e = catch_error([&] { gw->answer_pipeline(kImage, "", EnabledSet::all()); });
  EXPECT_EQ(e.stage(), "input");

  rig.backend->set_failure("detect", {FailureMode::status, 500, "gpu on fire"});
  e = catch_error([&] { gw->answer_pipeline(kImage, "Q?", EnabledSet::all()); });
  EXPECT_EQ(e.stage(), "extract");
  EXPECT_EQ(e.backend_name(), "detection");

  FixtureRig clean;
  clean.backend->set_default(json::object());
  auto failing = std::make_shared<ScriptedMllm>(std::vector<Error>{backend_error(400, "bad prompt")});
  auto gw2 = make_gateway(clean, failing);
  e = catch_error([&] { gw2->answer_pipeline(kImage, "Q?", EnabledSet::all()); });
  EXPECT_EQ(e.stage(), "query");
  EXPECT_EQ(e.backend_name(), "mllm");
}

TEST_F(GatewayFixture, ConcurrentAnswersMatchSequentialOnes) {
  std::vector<Bytes> images;
  for (int i = 0; i < 12; ++i) {
    images.push_back(fake_png("img" + std::to_string(i)));
    rig.backend->set_entry(digest_of(images.back()),
                           {{"detect", {{"detections", {det(i % 2 ? "dog" : "cat", 0.9)}}}},
                            {"ocr", {{"spans", {span("T" + std::to_string(i))}}}}});
  }
  auto gw = make_gateway(rig, std::make_shared<EchoMllm>(), std::make_shared<ExtractionCache>(64));
  std::vector<std::string> sequential;
  for (const auto& img : images) sequential.push_back(gw->answer_pipeline(img, "Q?", EnabledSet::all()).answer);
  std::vector<std::future<std::string>> futures;
  for (int round = 0; round < 3; ++round)
    for (const auto& img : images)
      futures.push_back(std::async(std::launch::async,
                                   [&, &img = img] { return gw->answer_pipeline(img, "Q?", EnabledSet::all()).answer; }));
  for (std::size_t i = 0; i < futures.size(); ++i) EXPECT_EQ(futures[i].get(), sequential[i % images.size()]);
}

TEST_F(GatewayFixture, ResultJsonOmitsTimingsOnRequest) {
  auto gw = make_gateway(rig, std::make_shared<EchoMllm>());
  auto r = gw->answer_pipeline(kImage, "Q?", EnabledSet::all());
  EXPECT_TRUE(to_json(r).contains("timings"));
  EXPECT_FALSE(to_json(r, false).contains("timings"));
  EXPECT_EQ(to_json(r, false)["formulated"]["parts"].size(), r.formulated.parts.size());
}

// ---- retry contract ------------------------------------------------------------

TEST(QueryMllm, RetriesTransportFailuresThenSucceeds) {
  ScriptedMllm m({transport_error("reset"), transport_error("reset")});
  auto answer = query_mllm(kImage, "prompt", m, fast_mllm_config(2));
  EXPECT_EQ(answer.text, "ok");
  EXPECT_EQ(answer.attempts, 3);
  EXPECT_EQ(m.calls(), 3u);
}

TEST(QueryMllm, GivesUpAfterRetryBudget) {
  ScriptedMllm m(std::vector<Error>(5, transport_error("reset")));
  auto e = catch_error([&] { query_mllm(kImage, "prompt", m, fast_mllm_config(1)); });
  EXPECT_EQ(e.kind(), ErrorKind::transport);
  EXPECT_EQ(e.attempts(), 2);
  EXPECT_EQ(m.calls(), 2u);
}

TEST(QueryMllm, DoesNotRetryBackendOrProtocolErrors) {
  ScriptedMllm backend({backend_error(422, "unsupported image")});
  auto e = catch_error([&] { query_mllm(kImage, "prompt", backend, fast_mllm_config(3)); });
  EXPECT_EQ(e.kind(), ErrorKind::backend);
  EXPECT_EQ(e.status(), 422);
  EXPECT_EQ(backend.calls(), 1u);

  ScriptedMllm proto({protocol_error("no answer field")});
  e = catch_error([&] { query_mllm(kImage, "prompt", proto, fast_mllm_config(3)); });
  EXPECT_EQ(e.kind(), ErrorKind::protocol);
  EXPECT_EQ(proto.calls(), 1u);
}

TEST(QueryMllm, EmptyPromptIsInputError) {
  EchoMllm echo;
  EXPECT_EQ(catch_error([&] { query_mllm(kImage, "", echo, fast_mllm_config()); }).kind(), ErrorKind::input);
}

TEST(QueryMllm, BackoffDoublesBetweenAttempts) {
  ScriptedMllm m({transport_error("a"), transport_error("b")});
  auto cfg = fast_mllm_config(2);
  cfg.backoff = std::chrono::milliseconds(20);
  const auto t0 = std::chrono::steady_clock::now();
  query_mllm(kImage, "prompt", m, cfg);
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_GE(elapsed, std::chrono::milliseconds(60));  // 20 + 40
}

TEST(HttpMllm, SpeaksTheChatWireProtocol) {
  std::atomic<int> drops{2};
  json seen;
  std::mutex mu;
  WireServer server([&](std::string_view method, std::string_view path, std::string_view body) -> WireReply {
    if (method == "GET" && path == "/v1/health") return {200, "{}"};
    if (path != "/v1/chat") return {404, R"({"error":"not found"})"};
    if (drops.fetch_sub(1) > 0) return {0, ""};
    std::lock_guard lock(mu);
    seen = json::parse(body);
    return {200, json{{"answer", "Yes."}}.dump()};
  });
  server.start();
  HttpMllmBackend backend(server.address(), std::chrono::seconds(5));
  auto answer = query_mllm(kImage, "Is it?", backend, fast_mllm_config(2));
  EXPECT_EQ(answer.text, "Yes.");
  EXPECT_EQ(answer.attempts, 3);
  EXPECT_EQ(seen["model"], "stub");
  EXPECT_EQ(seen["prompt"], "Is it?");
  EXPECT_EQ(base64_decode(seen["image"].get<std::string>()), kImage);
  EXPECT_TRUE(backend.reachable());
  server.stop();
}

TEST(HttpMllm, ErrorBodyIsBackendErrorAndMissingAnswerIsProtocolError) {
  bool missing = false;
  WireServer server([&](std::string_view, std::string_view, std::string_view) -> WireReply {
    if (missing) return {200, R"({"text":"Yes"})"};
    return {400, R"({"error":"image too large"})"};
  });
  server.start();
  HttpMllmBackend backend(server.address(), std::chrono::seconds(5));
  auto e = catch_error([&] { query_mllm(kImage, "Q", backend, fast_mllm_config(2)); });
  EXPECT_EQ(e.kind(), ErrorKind::backend);
  EXPECT_EQ(e.attempts(), 1);
  missing = true;
  EXPECT_EQ(catch_error([&] { query_mllm(kImage, "Q", backend, fast_mllm_config(2)); }).kind(), ErrorKind::protocol);
  server.stop();
}

// ---- HTTP service --------------------------------------------------------------

TEST_F(GatewayFixture, ServiceAnswersOverHttp) {
  auto gw = std::shared_ptr<const Gateway>(make_gateway(rig, std::make_shared<EchoMllm>()));
  GatewayServer server(gw, EnabledSet::all());
  const int port = server.start();
  httplib::Client cli("127.0.0.1", port);

  auto ok = cli.Post("/v1/answer", json{{"image", base64_encode(kImage)}, {"query", "Is there a cup?"}}.dump(),
                     "application/json");
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 200);
  auto body = json::parse(ok->body);
  EXPECT_EQ(body["answer"], body["formulated"]["text"]);
  EXPECT_TRUE(body["timings"].contains("total_ms"));

  auto subset = cli.Post("/v1/answer",
                         json{{"image", base64_encode(kImage)}, {"query", "Q?"}, {"enabled", {"ocr"}}}.dump(),
                         "application/json");
  ASSERT_TRUE(subset);
  EXPECT_FALSE(json::parse(subset->body)["bundle"].contains("detections"));

  auto bad = cli.Post("/v1/answer", json{{"image", base64_encode(as_bytes("text"))}, {"query", "Q?"}}.dump(),
                      "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(json::parse(bad->body)["stage"], "input");

  auto garbage = cli.Post("/v1/answer", "not json", "application/json");
  ASSERT_TRUE(garbage);
  EXPECT_EQ(garbage->status, 400);

  rig.backend->set_failure("detect", {FailureMode::transport});
  auto down = cli.Post("/v1/answer", json{{"image", base64_encode(kImage)}, {"query", "Q?"}}.dump(),
                       "application/json");
  ASSERT_TRUE(down);
  EXPECT_EQ(down->status, 502);
  auto err = json::parse(down->body);
  EXPECT_EQ(err["stage"], "extract");
  EXPECT_NE(err["error"].get<std::string>().find("detection"), std::string::npos);
  server.stop();
}

TEST_F(GatewayFixture, ServiceAcceptsMultipartUploads) {
  auto gw = std::shared_ptr<const Gateway>(make_gateway(rig, std::make_shared<EchoMllm>()));
  GatewayServer server(gw, EnabledSet::all());
  const int port = server.start();
  httplib::Client cli("127.0.0.1", port);
  httplib::MultipartFormDataItems items{
      {"image", std::string(kImage.begin(), kImage.end()), "a.png", "image/png"},
      {"query", "Is there a cup?", "", ""},
  };
  auto res = cli.Post("/v1/answer", items);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200) << res->body;
  EXPECT_NE(json::parse(res->body)["answer"].get<std::string>().find("there is 1 cup"), std::string::npos);
  server.stop();
}

TEST_F(GatewayFixture, HealthReportsBackends) {
  auto gw = std::shared_ptr<const Gateway>(make_gateway(rig, std::make_shared<EchoMllm>()));
  GatewayServer server(gw, EnabledSet::all());
  const int port = server.start();
  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Get("/v1/health");
  ASSERT_TRUE(res);
  auto h = json::parse(res->body);
  EXPECT_EQ(h["status"], "ok");
  for (const char* b : {"detection", "ocr", "face", "mllm"}) EXPECT_TRUE(h["backends"][b]["reachable"]) << b;
  server.stop();
}

// ---- configuration -------------------------------------------------------------

TEST(Config, DefaultsAreSensible) {
  auto c = GatewayConfig::from_json(json::object());
  EXPECT_DOUBLE_EQ(c.extractors.config.detection_confidence_threshold, 0.5);
  EXPECT_DOUBLE_EQ(c.extractors.config.face_match_threshold, 0.40);
  EXPECT_EQ(c.extractors.config.face_dim, 512u);
  EXPECT_EQ(c.extractors.enabled, EnabledSet::all());
  EXPECT_EQ(c.mllm.client.max_retries, 2);
  EXPECT_EQ(c.mllm.client.timeout, std::chrono::seconds(120));
}

TEST(Config, ParsesAllSectionsAndResolvesRelativePaths) {
  auto c = GatewayConfig::from_json(json::parse(R"({
    "extractors": {"backend": "fixture", "fixture": "fx.json", "gallery": "/abs/g.json",
                   "detection": {"endpoint": "http://det:1", "timeout_ms": 250},
                   "detection_confidence_threshold": 0.3, "face_dim": 128, "enabled": ["detection", "ocr"]},
    "templates": {"predefined_prompt": "Be factual."},
    "mllm": {"backend": "rules", "rules": [{"contains": "dog", "answer": "Yes"}], "default_answer": "No",
             "max_retries": 0, "backoff_ms": 5},
    "cache": {"capacity": 3},
    "logging": {"level": "quiet"},
    "server": {"port": 9000}
  })"),
                                    "/etc/piculet");
  EXPECT_EQ(c.extractors.fixture, std::filesystem::path("/etc/piculet/fx.json"));
  EXPECT_EQ(c.extractors.gallery, std::filesystem::path("/abs/g.json"));
  EXPECT_EQ(c.extractors.config.detection.address, "http://det:1");
  EXPECT_EQ(c.extractors.config.detection.timeout, std::chrono::milliseconds(250));
  EXPECT_EQ(c.extractors.config.face_dim, 128u);
  EXPECT_EQ(c.extractors.enabled, (EnabledSet{ExtractorKind::detection, ExtractorKind::ocr}));
  EXPECT_EQ(c.templates.predefined_prompt, "Be factual.");
  ASSERT_EQ(c.mllm.rules.size(), 1u);
  EXPECT_EQ(c.cache_capacity, 3u);
  EXPECT_EQ(c.port, 9000);
  auto backend = make_chat_backend(c.mllm, "mllm");
  EXPECT_EQ(backend->chat({"m", kImage, "a dog?"}), "Yes");
  EXPECT_EQ(backend->chat({"m", kImage, "a cat?"}), "No");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(GatewayConfig::from_json({{"extractor", json::object()}}), Error);
  EXPECT_THROW(GatewayConfig::from_json({{"extractors", {{"thresh", 0.3}}}}), Error);
  EXPECT_THROW(GatewayConfig::from_json({{"extractors", {{"detection_confidence_threshold", 1.5}}}}), Error);
  EXPECT_THROW(GatewayConfig::from_json({{"extractors", {{"backend", "fixture"}}}}), Error);
  EXPECT_THROW(GatewayConfig::from_json({{"mllm", {{"backend", "magic"}}}}), Error);
  EXPECT_THROW(GatewayConfig::from_json({{"mllm", {{"template", "x"}}}}), Error);
  EXPECT_THROW(GatewayConfig::from_json({{"mllm", {{"max_retries", "two"}}}}), Error);
  EXPECT_THROW(GatewayConfig::from_json({{"server", {{"port", 70000}}}}), Error);
}

TEST(Config, ToJsonRoundTrips) {
  auto c = GatewayConfig::from_json({{"extractors", {{"face_dim", 64}, {"enabled", {"face"}}}},
                                     {"mllm", {{"backend", "echo"}}}});
  auto back = GatewayConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Config, EnvironmentOverridesEndpoints) {
  setenv("PICULET_OCR_ENDPOINT", "http://ocr.internal:9", 1);
  setenv("PICULET_MLLM_ENDPOINT", "http://mllm.internal:9", 1);
  auto c = GatewayConfig::from_json(json::object());
  c.apply_env();
  unsetenv("PICULET_OCR_ENDPOINT");
  unsetenv("PICULET_MLLM_ENDPOINT");
  EXPECT_EQ(c.extractors.config.ocr.address, "http://ocr.internal:9");
  EXPECT_EQ(c.mllm.client.endpoint, "http://mllm.internal:9");
  EXPECT_EQ(c.extractors.config.detection.address, "http://127.0.0.1:8101");
}

TEST(Config, FromConfigBuildsAWorkingFixtureGateway) {
  TempDir tmp;
  write_bytes(tmp / "a.png", kImage);
  write_file(tmp / "fixture.json",
             R"({"dim": 4, "images": {"file:a.png": {"detect": {"detections": [{"label": "dog", "confidence": 0.9, "box": [0,0,1,1]}]}}}})");
  write_file(tmp / "gallery.json", R"({"dim": 4, "entries": []})");
  write_file(tmp / "config.json", R"({
    "extractors": {"backend": "fixture", "fixture": "fixture.json", "gallery": "gallery.json", "face_dim": 4,
                   "enabled": ["detection"]},
    "mllm": {"backend": "echo"}
  })");
  auto c = GatewayConfig::load(tmp / "config.json");
  auto gw = Gateway::from_config(c);
  auto r = gw->answer_pipeline(kImage, "Dog?", c.extractors.enabled);
  EXPECT_EQ(r.answer,
            "the image contains these objects: there is 1 dog.\n"
            "Answer the question based on the image and the factual information provided.\nDog?");
}

TEST(Cache, EvictsLeastRecentlyUsed) {
  ExtractionCache cache(2);
  auto key = [](const char* d) { return CacheKey{d, EnabledSet::all(), "cfg"}; };
  ExtractionBundle b;
  cache.put(key("a"), b);
  cache.put(key("b"), b);
  EXPECT_TRUE(cache.get(key("a")));  // a is now most recent
  cache.put(key("c"), b);
  EXPECT_FALSE(cache.get(key("b")));
  EXPECT_TRUE(cache.get(key("a")));
  EXPECT_TRUE(cache.get(key("c")));
  EXPECT_EQ(cache.size(), 2u);
  EXPECT_EQ(cache.hits(), 3u);
  EXPECT_EQ(cache.misses(), 1u);
}
