#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "mockforge/core.hpp"
#include "test_util.hpp"

using namespace mockforge;

namespace {

ElementBox at(double y, double x) {
  ElementBox e;
  e.x = x;
  e.y = y;
  e.w = 0.05;
  e.h = 0.05;
  return e;
}

}  // namespace

TEST(ClassVocabulary, SpecialClassesAppendedAfterContent) {
  const ClassVocabulary v({"Text", "Image"});
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.content_count(), 2u);
  EXPECT_EQ(v.id_of("Image"), 1);
  EXPECT_EQ(v.separator(), 2);
  EXPECT_EQ(v.unknown(), 3);
  EXPECT_EQ(v.start(), 4);
  EXPECT_EQ(v.eos(), 5);
  EXPECT_EQ(v.pad(), 6);
  EXPECT_TRUE(v.is_control(v.eos()));
  EXPECT_FALSE(v.is_control(v.separator()));
  EXPECT_THROW(v.id_of("Slider"), DataError);
  EXPECT_THROW(ClassVocabulary({"Text", "Text"}), DataError);
  EXPECT_THROW(ClassVocabulary({"EOS"}), DataError);
}

TEST(ClassVocabulary, RicoDefaultHas25ContentClasses) {
  const auto v = ClassVocabulary::rico_default();
  EXPECT_EQ(v.content_count(), 25u);
  EXPECT_TRUE(v.find("Text Button").has_value());
}

TEST(CanonicalSort, TopLeftFirst) {
  const std::vector<ElementBox> in{at(0.5, 0.8), at(0.1, 0.9)};
  const auto out = canonical_sort(in);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_DOUBLE_EQ(out[0].y, 0.1);
  EXPECT_DOUBLE_EQ(out[1].y, 0.5);
}

TEST(CanonicalSort, Empty) { EXPECT_TRUE(canonical_sort({}).empty()); }

TEST(CanonicalSort, SameBandTieBrokenByX) {
  // floor(0.100*64) == floor(0.104*64) == 6
  const std::vector<ElementBox> in{at(0.100, 0.7), at(0.104, 0.2)};
  const auto out = canonical_sort(in);
  EXPECT_DOUBLE_EQ(out[0].x, 0.2);
  EXPECT_DOUBLE_EQ(out[0].y, 0.104);
  EXPECT_DOUBLE_EQ(out[1].x, 0.7);
}

TEST(CanonicalSort, PropertiesOnRandomLayouts) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto layout = fixtures::random_layout(rng, 1 + trial % 20, 4);
    const auto once = canonical_sort(layout);
    const auto twice = canonical_sort(once);
    EXPECT_EQ(once, twice);  // idempotent

    auto key = [](const ElementBox& e) { return std::tuple(e.x, e.y, e.w, e.h, e.class_id); };
    std::vector<std::tuple<double, double, double, double, int>> a, b;
    for (const auto& e : layout) a.push_back(key(e));
    for (const auto& e : once) b.push_back(key(e));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);  // permutation

    for (std::size_t i = 0; i < once.size(); ++i) {
      for (std::size_t j = i + 1; j < once.size(); ++j) {
        EXPECT_LE(std::floor(once[i].y * 64), std::floor(once[j].y * 64));
      }
    }
  }
}

TEST(ValidateScreen, ReportsEachViolation) {
  const ClassVocabulary vocab({"Text"});
  UiScreen s;
  s.screen_id = "s1";
  s.elements.push_back(at(0.1, 0.1));
  EXPECT_TRUE(validate_screen(s, vocab).empty());

  s.elements[0].x = 1.2;
  auto v = validate_screen(s, vocab);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("element 0"), std::string::npos);

  s.elements[0].x = 0.1;
  s.elements.push_back(at(0.3, 0.3));
  s.elements[0].parent_idx = 1;
  v = validate_screen(s, vocab);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("parent_idx"), std::string::npos);

  s.elements[0].parent_idx.reset();
  s.elements[1].class_id = 99;
  v = validate_screen(s, vocab);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("class_id"), std::string::npos);
}

TEST(ValidateScreen, EpsilonSlackOnFarEdge) {
  ElementBox e = at(0.5, 0.5);
  e.w = 0.5 + 5e-7;
  EXPECT_TRUE(box_is_valid(e));
  e.w = 0.5 + 5e-6;
  EXPECT_FALSE(box_is_valid(e));
}

TEST(ScreenJson, RoundTripsNumericFieldsBitExactly) {
  const ClassVocabulary vocab({"Text", "Image"});
  std::mt19937_64 rng(3);
  UiScreen s;
  s.screen_id = "abc";
  s.app_id = "app";
  s.app_description = "a weather app";
  s.captions = {"one", "two"};
  s.elements = fixtures::random_layout(rng, 12, 2);
  s.elements[1].parent_idx = 0;
  s.elements[2].text = "hello";
  s.elements[0].is_leaf = false;
  const auto text = screen_to_json(s, vocab).dump();
  const auto back = screen_from_json(nlohmann::json::parse(text), vocab);
  ASSERT_EQ(back.elements.size(), s.elements.size());
  for (std::size_t i = 0; i < s.elements.size(); ++i) EXPECT_EQ(back.elements[i], s.elements[i]);
  EXPECT_EQ(back.captions, s.captions);
  EXPECT_EQ(back.app_description, s.app_description);
  EXPECT_EQ(screen_to_json(back, vocab).dump(), text);
}

TEST(ScreenJson, UnknownClassNameIsDataError) {
  const ClassVocabulary vocab({"Text"});
  const auto j = nlohmann::json::parse(
      R"({"screen_id":"s","elements":[{"x":0,"y":0,"w":0.1,"h":0.1,"class":"Nope","is_leaf":true}]})");
  EXPECT_THROW(screen_from_json(j, vocab), DataError);
}

TEST(CandidateJson, RoundTripIgnoresServiceKeys) {
  const ClassVocabulary vocab({"Text", "Image"});
  std::mt19937_64 rng(8);
  MockupCandidate c;
  c.elements = fixtures::random_layout(rng, 5, 2);
  c.prompt = "photo grid";
  c.method = Method::text_only;
  c.source_screen_id = "s12";
  c.seed = 41;
  c.scores = QualityScores{0.1, 0.02, 0.003};
  c.similarity = -0.25;
  auto j = candidate_to_json(c, vocab);
  const auto text = j.dump();
  j["id"] = "c0123";
  j["provenance"] = {{"method", "text-only"}};
  const auto back = candidate_from_json(j, vocab);
  EXPECT_EQ(candidate_to_json(back, vocab).dump(), text);
  EXPECT_EQ(back.elements, c.elements);
  EXPECT_THROW(candidate_from_json(nlohmann::json::parse(R"({"elements": 3})"), vocab), DataError);
}
