#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "mockforge/ingest.hpp"

using namespace mockforge;
using namespace mockforge::ingest;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kFixture = fs::path(MOCKFORGE_TEST_DATA_DIR) / "fixtures" / "ingest10";

ScreenMeta meta(int w = 1440, int h = 2560) { return {"s", "app", std::nullopt, w, h}; }

CorpusInputs fixture_inputs() {
  CorpusInputs in;
  in.hierarchy_dir = kFixture / "hierarchies";
  in.captions = kFixture / "captions.tsv";
  in.manifest = kFixture / "manifest.tsv";
  in.annotations = kFixture / "annotations.tsv";
  in.app_descriptions = kFixture / "app_descriptions.tsv";
  return in;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mockforge_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(ParseHierarchy, NormalizesBounds) {
  const auto vocab = ClassVocabulary::rico_default();
  const auto s = parse_view_hierarchy(json::parse(R"({"bounds":[0,0,720,1280]})"), meta(), vocab);
  ASSERT_EQ(s.elements.size(), 1u);
  EXPECT_DOUBLE_EQ(s.elements[0].x, 0.0);
  EXPECT_DOUBLE_EQ(s.elements[0].w, 0.5);
  EXPECT_DOUBLE_EQ(s.elements[0].h, 0.5);
  EXPECT_TRUE(s.elements[0].is_leaf);
  EXPECT_EQ(s.elements[0].class_id, vocab.unknown());
}

TEST(ParseHierarchy, DropsZeroAreaNodes) {
  const auto vocab = ClassVocabulary::rico_default();
  const auto s = parse_view_hierarchy(
      json::parse(R"({"bounds":[0,0,1440,2560],"children":[{"bounds":[500,10,400,90]},{"bounds":[0,0,10,10]}]})"),
      meta(), vocab);
  ASSERT_EQ(s.elements.size(), 2u);
  EXPECT_FALSE(s.elements[0].is_leaf);
}

TEST(ParseHierarchy, ChainParentsInDfsOrder) {
  const auto vocab = ClassVocabulary::rico_default();
  const auto s = parse_view_hierarchy(
      json::parse(R"({"bounds":[0,0,100,100],"children":[{"bounds":[0,0,50,50],"children":[{"bounds":[0,0,10,10]}]}]})"),
      meta(100, 100), vocab);
  ASSERT_EQ(s.elements.size(), 3u);
  EXPECT_FALSE(s.elements[0].parent_idx.has_value());
  EXPECT_EQ(s.elements[1].parent_idx, 0u);
  EXPECT_EQ(s.elements[2].parent_idx, 1u);
  EXPECT_TRUE(s.elements[2].is_leaf);
  EXPECT_TRUE(validate_screen(s, vocab).empty());
}

TEST(ParseHierarchy, MalformedNodeNamesPath) {
  const auto vocab = ClassVocabulary::rico_default();
  try {
    parse_view_hierarchy(json::parse(R"({"bounds":[0,0,10,10],"children":[{"bounds":[0,0,5,5]},{"bounds":"x"}]})"),
                         meta(10, 10), vocab);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("root/children[1]"), std::string::npos);
  }
}

TEST(ParseHierarchy, FarOutsideBoundsDroppedWithWarning) {
  const auto vocab = ClassVocabulary::rico_default();
  std::vector<std::string> warnings;
  const auto s = parse_view_hierarchy(
      json::parse(R"({"bounds":[0,0,100,100],"children":[{"bounds":[0,0,500,50]},{"bounds":[90,90,150,150]}]})"),
      meta(100, 100), vocab, &warnings);
  ASSERT_EQ(s.elements.size(), 2u);  // root + clipped child
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_DOUBLE_EQ(s.elements[1].right(), 1.0);
}

TEST(Annotations, MergeAndCoverage) {
  const auto vocab = ClassVocabulary::rico_default();
  UiScreen s;
  s.elements.resize(6);
  const auto r = merge_semantic_annotations(s, {{3, "Image"}}, vocab);
  EXPECT_EQ(r.screen.elements[3].class_id, vocab.id_of("Image"));
  EXPECT_EQ(r.screen.elements[5].class_id, vocab.unknown());
  EXPECT_DOUBLE_EQ(r.coverage(), 1.0 / 6.0);
  EXPECT_THROW(merge_semantic_annotations(s, {{0, "Hologram"}}, vocab), DataError);
}

TEST(Separator, OnlyTouchesUnknownLeaves) {
  const auto vocab = ClassVocabulary::rico_default();
  UiScreen s;
  ElementBox thin{.x = 0, .y = 0.5, .w = 0.9, .h = 0.005, .class_id = vocab.unknown()};
  ElementBox square{.x = 0, .y = 0, .w = 0.3, .h = 0.3, .class_id = vocab.unknown()};
  ElementBox image{.x = 0, .y = 0.6, .w = 0.5, .h = 0.005, .class_id = vocab.id_of("Image")};
  s.elements = {thin, square, image};
  const auto out = apply_separator_heuristic(s, vocab);
  EXPECT_EQ(out.elements[0].class_id, vocab.separator());
  EXPECT_EQ(out.elements[1].class_id, vocab.unknown());
  EXPECT_EQ(out.elements[2].class_id, vocab.id_of("Image"));
}

TEST(LeafView, LeavesOnlySorted) {
  UiScreen s;
  ElementBox container{.x = 0, .y = 0, .w = 1, .h = 1, .is_leaf = false};
  ElementBox low{.x = 0.1, .y = 0.9, .w = 0.1, .h = 0.05, .parent_idx = 0};
  ElementBox high{.x = 0.9, .y = 0.1, .w = 0.05, .h = 0.05, .parent_idx = 0};
  s.elements = {container, low, high};
  const auto leaves = extract_leaf_view(s);
  ASSERT_EQ(leaves.size(), 2u);
  EXPECT_DOUBLE_EQ(leaves[0].y, 0.1);
  EXPECT_FALSE(leaves[0].parent_idx.has_value());
  s.elements = {container};
  EXPECT_TRUE(extract_leaf_view(s).empty());
}

TEST(TokenView, CountAndConventions) {
  const std::vector<textfeat::TokenSequence> corpus{textfeat::tokenize("photo app")};
  const auto provider = textfeat::EmbeddingProvider::hashed_tfidf(corpus, 16);
  UiScreen s;
  s.elements.resize(3, ElementBox{.x = 0, .y = 0, .w = 0.5, .h = 0.5});
  s.elements[1].text = "photo";
  const auto view = build_retrieval_token_view(s, provider);
  ASSERT_EQ(view.size(), 6u);
  EXPECT_EQ(view.tokens.front().kind, UiTokenKind::start);
  EXPECT_EQ(view.tokens[1].kind, UiTokenKind::app_desc);
  EXPECT_EQ(view.tokens.back().kind, UiTokenKind::end);
  for (float v : view.tokens[2].text_vec) EXPECT_EQ(v, 0.0f);
  EXPECT_NE(view.tokens[3].text_vec, view.tokens[2].text_vec);

  s.elements.resize(510);
  EXPECT_THROW(build_retrieval_token_view(s, provider), OverLongScreen);
  s.elements.resize(509);
  EXPECT_EQ(build_retrieval_token_view(s, provider).size(), 512u);
}

TEST(Corpus, FixtureSplitsAndReport) {
  const auto corpus = build_corpus(fixture_inputs());
  EXPECT_EQ(corpus.train.screens.size(), 6u);
  EXPECT_EQ(corpus.validation.screens.size(), 2u);
  EXPECT_EQ(corpus.test.screens.size(), 2u);
  EXPECT_EQ(corpus.report["splits"]["train"], 6);
  EXPECT_GT(corpus.report["annotation_coverage"].get<double>(), 0.5);

  const auto& s0 = corpus.train.screens[0];
  EXPECT_EQ(s0.screen_id, "s00");
  EXPECT_EQ(s0.captions.size(), 5u);
  EXPECT_EQ(s0.app_description, "a photo sharing app");
  EXPECT_EQ(s0.elements[1].class_id, corpus.vocab.id_of("Toolbar"));
  std::size_t separators = 0;
  for (const auto& e : s0.elements) separators += e.class_id == corpus.vocab.separator();
  EXPECT_EQ(separators, 1u);
  for (const auto* split : {&corpus.train, &corpus.validation, &corpus.test})
    for (const auto& s : split->screens) EXPECT_TRUE(validate_screen(s, corpus.vocab).empty()) << s.screen_id;
}

TEST(Corpus, DeterministicAcrossRuns) {
  const auto a = build_corpus(fixture_inputs());
  const auto b = build_corpus(fixture_inputs());
  for (std::size_t i = 0; i < a.train.screens.size(); ++i) {
    EXPECT_EQ(screen_to_json(a.train.screens[i], a.vocab), screen_to_json(b.train.screens[i], b.vocab));
  }
}

TEST(Corpus, WriteLoadRoundTrip) {
  const auto corpus = build_corpus(fixture_inputs());
  const auto dir = temp_dir("corpus_rt");
  write_corpus(dir, corpus);
  const auto back = load_corpus(dir);
  EXPECT_EQ(back.vocab, corpus.vocab);
  ASSERT_EQ(back.test.screens.size(), 2u);
  EXPECT_EQ(back.test.screens[1].elements, corpus.test.screens[1].elements);
  fs::remove_all(dir);
}

TEST(Corpus, ScreenInTwoSplitsIsFatal) {
  const auto dir = temp_dir("dup_manifest");
  std::ofstream(dir / "manifest.tsv") << "s00\ttrain\ns00\ttest\n";
  auto in = fixture_inputs();
  in.manifest = dir / "manifest.tsv";
  EXPECT_THROW(build_corpus(in), DataError);
  std::ofstream(dir / "manifest.tsv") << "s00\ttrain\tapp\ns01\ttest\tapp\n";
  EXPECT_THROW(build_corpus(in), DataError);  // one app spanning splits
  fs::remove_all(dir);
}

TEST(Corpus, MissingHierarchyDropsScreenOnly) {
  const auto dir = temp_dir("missing_hier");
  std::ofstream(dir / "manifest.tsv") << "s00\ttrain\nghost\ttrain\n";
  auto in = fixture_inputs();
  in.manifest = dir / "manifest.tsv";
  const auto corpus = build_corpus(in);
  EXPECT_EQ(corpus.train.screens.size(), 1u);
  ASSERT_EQ(corpus.report["dropped"].size(), 1u);
  EXPECT_EQ(corpus.report["dropped"][0]["screen_id"], "ghost");
  fs::remove_all(dir);
}
