#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "mockforge/ingest.hpp"
#include "mockforge/service.hpp"
#include "mockforge/synth.hpp"

using namespace mockforge;
using namespace mockforge::service;
using nlohmann::json;

namespace {

struct Fixture {
  ingest::Corpus corpus;
  Artifacts full;
};

// Untrained tiny models: enough to exercise routing and the pipeline contract.
const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    out.corpus = synth::synthetic_corpus({.train = 32, .validation = 16, .test = 8, .seed = 2});
    std::vector<textfeat::TokenSequence> docs;
    for (const auto& s : out.corpus.train.screens) {
      for (const auto& c : s.captions) docs.push_back(textfeat::tokenize(c));
    }
    auto provider = std::make_shared<const textfeat::EmbeddingProvider>(textfeat::EmbeddingProvider::hashed_tfidf(docs, 32));

    generator::GeneratorConfig gc;
    gc.encoder = {.hidden = 16, .intermediate = 32, .layers = 1, .heads = 2, .max_len = 16, .dropout = 0.0};
    gc.decoder = {.hidden = 16, .intermediate = 32, .layers = 1, .heads = 2, .max_len = 16, .dropout = 0.0};
    gc.mixtures = 2;
    out.full.generator = std::make_shared<generator::GeneratorModel>(gc, provider, out.corpus.vocab, 1);
    out.full.generator_id = "gen-test";
    std::vector<std::vector<ElementBox>> views;
    for (const auto& s : out.corpus.validation.screens) views.push_back(ingest::extract_leaf_view(s));
    out.full.calibration = quality::calibrate(views);

    retrieval::DualEncoderConfig dc;
    dc.text = {.hidden = 16, .intermediate = 32, .layers = 1, .heads = 2, .max_len = 16, .dropout = 0.0};
    dc.ui = {.hidden = 16, .intermediate = 32, .layers = 1, .heads = 2, .max_len = 32, .dropout = 0.0};
    auto dual = std::make_shared<retrieval::DualEncoder>(dc, provider, out.corpus.vocab.size(), 2);
    out.full.dual_encoder = dual;
    out.full.dual_encoder_id = "dual-test";
    out.full.index = std::make_shared<const artifact::IndexBundle>(
        artifact::build_index_bundle(out.corpus.train.screens, out.corpus.vocab, provider, dual.get()));
    return out;
  }();
  return f;
}

json body_of(const HttpResponse& r) { return json::parse(r.body); }

}  // namespace

// ---- request parsing -------------------------------------------------------------

TEST(GenerateRequest, DefaultsAndFields) {
  const auto& vocab = fixture().corpus.vocab;
  const auto r = GenerateRequest::from_json({{"prompt", "login screen"}}, vocab);
  EXPECT_EQ(r.n, 10u);
  EXPECT_DOUBLE_EQ(r.temperature, 0.1);
  EXPECT_TRUE(r.postprocess);

  const auto p = GenerateRequest::from_json(
      {{"prompt", "x"}, {"n", 3}, {"temperature", 0.5}, {"seed", 9}, {"postprocess", false},
       {"pins", {{{"class", "Image"}, {"x", 0.1}, {"y", 0.1}, {"w", 0.2}, {"h", 0.2}}}}},
      vocab);
  EXPECT_EQ(p.n, 3u);
  EXPECT_EQ(p.seed, 9u);
  ASSERT_EQ(p.pins.size(), 1u);
  EXPECT_EQ(vocab.at(p.pins[0].class_id).name, "Image");
}

TEST(GenerateRequest, ReportsEveryBadField) {
  const auto& vocab = fixture().corpus.vocab;
  try {
    GenerateRequest::from_json({{"prompt", "  "},
                                {"n", 51},
                                {"temperature", 0},
                                {"seed", -1},
                                {"colour", "red"},
                                {"pins", {{{"class", "Image"}, {"x", 0.9}, {"y", 0.1}, {"w", 0.2}, {"h", 0.2}},
                                          {{"class", "NoSuchClass"}, {"x", 0}, {"y", 0}, {"w", 0.1}, {"h", 0.1}}}}},
                               vocab);
    FAIL() << "expected RequestError";
  } catch (const RequestError& e) {
    const auto& f = e.fields();
    for (const char* k : {"prompt", "n", "temperature", "seed", "colour", "pins[0]", "pins[1]"}) {
      EXPECT_TRUE(f.count(k)) << k;
    }
  }
  EXPECT_THROW(GenerateRequest::from_json({{"n", 2}}, vocab), RequestError);
  EXPECT_THROW(GenerateRequest::from_json(json::array(), vocab), RequestError);
  EXPECT_THROW(GenerateRequest::from_json({{"prompt", "x"}, {"n", 2.5}}, vocab), RequestError);
}

TEST(RetrieveRequest, ModesAndLimits) {
  EXPECT_EQ(RetrieveRequest::from_json({{"prompt", "x"}}).mode, Method::text_only);
  const auto r = RetrieveRequest::from_json({{"prompt", "x"}, {"mode", "multi-modal"}, {"k", 50}});
  EXPECT_EQ(r.mode, Method::multi_modal);
  EXPECT_EQ(r.k, 50u);
  EXPECT_THROW(RetrieveRequest::from_json({{"prompt", "x"}, {"mode", "generator"}}), RequestError);
  EXPECT_THROW(RetrieveRequest::from_json({{"prompt", "x"}, {"k", 0}}), RequestError);
}

// ---- cache -----------------------------------------------------------------------

TEST(CandidateCache, EvictsLeastRecentlyUsed) {
  CandidateCache cache(2);
  const auto vocab = ClassVocabulary::rico_default();
  MockupCandidate c;
  cache.put("a", {c, vocab});
  cache.put("b", {c, vocab});
  EXPECT_TRUE(cache.get("a"));  // a is now most recent
  cache.put("c", {c, vocab});
  EXPECT_TRUE(cache.get("a"));
  EXPECT_FALSE(cache.get("b"));
  EXPECT_TRUE(cache.get("c"));
  EXPECT_EQ(cache.size(), 2u);
  cache.put("c", {c, vocab});
  EXPECT_EQ(cache.size(), 2u);
  EXPECT_THROW(CandidateCache(0), UsageError);
}

TEST(CandidateCache, ConcurrentAccessKeepsCapacity) {
  CandidateCache cache(16);
  const auto vocab = ClassVocabulary::rico_default();
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 200; ++i) {
        cache.put(std::to_string(t * 1000 + i), {MockupCandidate{}, vocab});
        cache.get(std::to_string(t * 1000 + i / 2));
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(cache.size(), 16u);
}

// ---- pipeline --------------------------------------------------------------------

TEST(GeneratePipeline, PostprocessKeepsFilteredTopHalfOnGrid) {
  const auto& f = fixture();
  GenerateRequest req;
  req.prompt = "login screen of a weather app";
  req.n = 12;
  req.temperature = 1.0;
  const auto out = generate(*f.full.generator, &*f.full.calibration, req);
  EXPECT_EQ(out.sampled, 12u);
  EXPECT_LE(out.passed_filter, out.sampled);
  EXPECT_EQ(out.candidates.size(), (out.passed_filter + 1) / 2);
  for (const auto& c : out.candidates) {
    ASSERT_TRUE(c.scores);
    const auto fresh = quality::score(c.elements);
    EXPECT_DOUBLE_EQ(c.scores->overlap, fresh.overlap);
    EXPECT_DOUBLE_EQ(c.scores->alignment, fresh.alignment);
    for (const auto& e : c.elements) EXPECT_EQ(e, quality::snap_element(e));
  }
  EXPECT_THROW(generate(*f.full.generator, nullptr, req), ArtifactMissing);
}

TEST(GeneratePipeline, RawModeReturnsEverySampleAndKeepsPins) {
  const auto& f = fixture();
  GenerateRequest req;
  req.prompt = "photo grid";
  req.n = 4;
  req.postprocess = false;
  ElementBox pin;
  pin.x = 0.123;
  pin.y = 0.2;
  pin.w = 0.3;
  pin.h = 0.1;
  pin.class_id = f.corpus.vocab.id_of("Image");
  req.pins = {pin};
  const auto out = generate(*f.full.generator, nullptr, req);
  ASSERT_EQ(out.candidates.size(), 4u);
  for (const auto& c : out.candidates) {
    EXPECT_NE(std::find(c.elements.begin(), c.elements.end(), pin), c.elements.end());
  }
  EXPECT_EQ(out.candidates[1].seed, 1u);
}

TEST(RetrievePipeline, DistinctScreensAndMissingArtifacts) {
  const auto& f = fixture();
  RetrieveRequest req;
  req.prompt = "photo grid for travel";
  req.k = 5;
  for (auto mode : {Method::text_only, Method::multi_modal}) {
    req.mode = mode;
    const auto out = retrieve(f.full, req);
    ASSERT_EQ(out.size(), 5u);
    std::set<std::string> ids;
    for (const auto& c : out) ids.insert(*c.source_screen_id);
    EXPECT_EQ(ids.size(), 5u);
  }
  Artifacts text_only = f.full;
  text_only.dual_encoder.reset();
  EXPECT_THROW(retrieve(text_only, req), ArtifactMissing);
  EXPECT_THROW(retrieve(Artifacts{}, req), ArtifactMissing);
}

// ---- routes ----------------------------------------------------------------------

TEST(ServiceRoutes, HealthAndClasses) {
  Service svc(Artifacts{});
  auto h = svc.handle("GET", "/v1/health", "");
  EXPECT_EQ(h.status, 200);
  EXPECT_EQ(body_of(h)["artifacts"]["generator"], false);
  EXPECT_EQ(svc.handle("POST", "/v1/health", "").status, 405);

  auto c = body_of(svc.handle("GET", "/v1/classes", ""));
  ASSERT_GT(c["classes"].size(), 20u);
  EXPECT_EQ(c["classes"][0]["id"], 0);
  EXPECT_EQ(svc.handle("GET", "/v1/nowhere", "").status, 404);
}

TEST(ServiceRoutes, ErrorStatuses) {
  Service empty(Artifacts{});
  auto r = empty.handle("POST", "/v1/generate", R"({"prompt":"x"})");
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(body_of(r)["artifact"], "generator");
  EXPECT_EQ(body_of(empty.handle("POST", "/v1/retrieve", R"({"prompt":"x"})"))["artifact"], "text_index");

  Service svc(fixture().full);
  r = svc.handle("POST", "/v1/generate", "{not json");
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(body_of(r)["error"], "invalid_request");
  r = svc.handle("POST", "/v1/generate", R"({"prompt":"x","n":0})");
  EXPECT_EQ(r.status, 400);
  EXPECT_TRUE(body_of(r)["fields"].contains("n"));
  EXPECT_EQ(svc.handle("GET", "/v1/generate", "").status, 405);
  EXPECT_EQ(svc.handle("GET", "/v1/candidates/cdeadbeef/svg", "").status, 404);

  Artifacts no_cal = fixture().full;
  no_cal.calibration.reset();
  Service svc2(no_cal);
  EXPECT_EQ(body_of(svc2.handle("POST", "/v1/generate", R"({"prompt":"x"})"))["artifact"], "calibration");
  EXPECT_EQ(svc2.handle("POST", "/v1/generate", R"({"prompt":"x","postprocess":false})").status, 200);
}

TEST(ServiceRoutes, GenerateThenFetchSvg) {
  Service svc(fixture().full);
  auto r = svc.handle("POST", "/v1/generate", R"({"prompt":"settings page","n":3,"postprocess":false,"seed":4})");
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = body_of(r);
  EXPECT_EQ(j["sampled"], 3);
  ASSERT_EQ(j["candidates"].size(), 3u);
  const auto& c0 = j["candidates"][0];
  EXPECT_EQ(c0["provenance"]["model"], "gen-test");
  EXPECT_EQ(c0["provenance"]["seed"], 4);
  EXPECT_EQ(c0["provenance"]["postprocessed"], false);

  // same request, same ids
  const auto again = body_of(svc.handle("POST", "/v1/generate", R"({"prompt":"settings page","n":3,"postprocess":false,"seed":4})"));
  EXPECT_EQ(again["candidates"][0]["id"], c0["id"]);

  const auto svg = svc.handle("GET", "/v1/candidates/" + c0["id"].get<std::string>() + "/svg", "");
  EXPECT_EQ(svg.status, 200);
  EXPECT_EQ(svg.content_type, "image/svg+xml");
  EXPECT_NE(svg.body.find("<svg"), std::string::npos);
  EXPECT_GE(svc.cached_candidates(), 3u);
}

TEST(ServiceRoutes, RetrieveBothModes) {
  Service svc(fixture().full);
  for (const char* mode : {"text-only", "multi-modal"}) {
    auto r = svc.handle("POST", "/v1/retrieve", json{{"prompt", "chat conversation"}, {"mode", mode}, {"k", 3}}.dump());
    ASSERT_EQ(r.status, 200) << r.body;
    const auto j = body_of(r);
    ASSERT_EQ(j["candidates"].size(), 3u);
    EXPECT_EQ(j["candidates"][0]["provenance"]["method"], mode);
    EXPECT_FALSE(j["candidates"][0]["source_screen_id"].is_null());
  }
}

TEST(ServiceRoutes, SwapArtifactsTakesEffect) {
  Service svc(Artifacts{});
  EXPECT_EQ(svc.handle("POST", "/v1/retrieve", R"({"prompt":"x"})").status, 409);
  svc.swap_artifacts(fixture().full);
  EXPECT_EQ(svc.handle("POST", "/v1/retrieve", R"({"prompt":"x"})").status, 200);
}

// ---- HTTP ------------------------------------------------------------------------

TEST(HttpServer, ServesOverLoopback) {
  Service svc(fixture().full);
  HttpServer server(svc, 2);
  const int port = server.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread loop([&] { server.listen(); });

  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5);
  httplib::Result health;
  for (int i = 0; i < 50 && !health; ++i) {
    health = client.Get("/v1/health");
    if (!health) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(json::parse(health->body)["artifacts"]["text_index"], true);

  auto gen = client.Post("/v1/generate", R"({"prompt":"map view","n":2,"postprocess":false})", "application/json");
  ASSERT_TRUE(gen);
  EXPECT_EQ(gen->status, 200);
  const auto id = json::parse(gen->body)["candidates"][0]["id"].get<std::string>();
  auto svg = client.Get("/v1/candidates/" + id + "/svg");
  ASSERT_TRUE(svg);
  EXPECT_EQ(svg->status, 200);
  EXPECT_EQ(svg->get_header_value("Content-Type"), "image/svg+xml");

  auto bad = client.Post("/v1/retrieve", R"({"prompt":"x","k":99})", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);

  server.stop();
  loop.join();
}
