#include "mockforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace mockforge::synth {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<Archetype>& archetypes() {
  static const std::vector<Archetype> a{
      {"login", {"login screen", "sign in page"}},
      {"feed", {"list of items", "feed page"}},
      {"gallery", {"photo grid", "image gallery"}},
      {"settings", {"settings page", "preferences screen with toggles"}},
      {"player", {"media player", "playback screen"}},
      {"map", {"map view", "location map screen"}},
      {"profile", {"user profile", "account profile page"}},
      {"chat", {"chat conversation", "messaging screen"}},
  };
  return a;
}

const std::vector<std::string>& topics() {
  static const std::vector<std::string> t{"weather", "recipes", "travel",  "fitness",
                                          "banking", "news",    "shopping", "podcasts"};
  return t;
}

namespace {

struct Spec {
  const char* cls;
  double x, y, w, h;
  std::string text;
};

std::vector<Spec> layout_spec(std::size_t archetype, const std::string& topic, std::size_t rows) {
  std::vector<Spec> s{{"Toolbar", 0.0, 0.0, 1.0, 0.08, topic}};
  switch (archetype) {
    case 0:  // login
      s.insert(s.end(), {{"Image", 0.35, 0.14, 0.30, 0.17, ""},
                         {"Input", 0.10, 0.40, 0.80, 0.07, "email"},
                         {"Input", 0.10, 0.50, 0.80, 0.07, "password"},
                         {"Text Button", 0.10, 0.62, 0.80, 0.07, "sign in"},
                         {"Text", 0.30, 0.74, 0.40, 0.04, "forgot password"}});
      break;
    case 1:  // feed
      for (std::size_t i = 0; i < rows; ++i) {
        s.push_back({"List Item", 0.04, 0.10 + 0.13 * static_cast<double>(i), 0.92, 0.11, topic + " story"});
      }
      s.push_back({"Icon", 0.82, 0.88, 0.14, 0.08, ""});
      break;
    case 2:  // gallery; heart icons sit on the first row of photos
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) s.push_back({"Image", 0.04 + 0.32 * c, 0.11 + 0.20 * r, 0.28, 0.17, ""});
      for (int c = 0; c < 3; ++c) s.push_back({"Icon", 0.23 + 0.32 * c, 0.22, 0.07, 0.05, ""});
      break;
    case 3: {  // settings
      static const char* names[] = {"notifications", "dark mode", "sync", "location", "privacy", "sounds", "storage"};
      for (std::size_t i = 0; i < rows; ++i) {
        const double y = 0.12 + 0.10 * static_cast<double>(i);
        s.push_back({"Text", 0.06, y, 0.60, 0.05, names[i % 7]});
        s.push_back({"On/Off Switch", 0.78, y, 0.16, 0.05, ""});
      }
      s.push_back({"Text Button", 0.30, 0.88, 0.40, 0.06, "sign out"});
      break;
    }
    case 4:  // player
      s.insert(s.end(), {{"Image", 0.15, 0.12, 0.70, 0.38, ""},
                         {"Text", 0.15, 0.54, 0.70, 0.05, "now playing"},
                         {"Slider", 0.10, 0.63, 0.80, 0.04, ""},
                         {"Icon", 0.20, 0.72, 0.12, 0.07, ""},
                         {"Icon", 0.44, 0.72, 0.12, 0.07, ""},
                         {"Icon", 0.68, 0.72, 0.12, 0.07, ""}});
      break;
    case 5:  // map; search field and button float over the map
      s.insert(s.end(), {{"Map View", 0.0, 0.08, 1.0, 0.84, ""},
                         {"Input", 0.05, 0.11, 0.90, 0.07, "search places"},
                         {"Icon", 0.81, 0.80, 0.14, 0.08, ""},
                         {"Bottom Navigation", 0.0, 0.92, 1.0, 0.08, ""}});
      break;
    case 6:  // profile
      s.insert(s.end(), {{"Icon", 0.38, 0.11, 0.24, 0.13, ""},
                         {"Text", 0.25, 0.26, 0.50, 0.04, "name"},
                         {"Text", 0.15, 0.32, 0.70, 0.04, "bio"},
                         {"Button Bar", 0.10, 0.39, 0.80, 0.06, "follow message"},
                         {"Multi-Tab", 0.0, 0.48, 1.0, 0.06, "posts likes"},
                         {"Card", 0.04, 0.57, 0.92, 0.17, ""},
                         {"Card", 0.04, 0.77, 0.92, 0.17, ""}});
      break;
    default:  // chat
      s.push_back({"Text", 0.40, 0.10, 0.20, 0.03, "today"});
      for (std::size_t i = 0; i < rows; ++i) {
        s.push_back({"Text", i % 2 ? 0.36 : 0.04, 0.15 + 0.10 * static_cast<double>(i), 0.60, 0.06,
                     i % 2 ? "reply" : "message"});
      }
      s.push_back({"Input", 0.04, 0.90, 0.76, 0.07, "type a message"});
      s.push_back({"Icon", 0.84, 0.90, 0.12, 0.07, ""});
  }
  return s;
}

std::size_t default_rows(std::size_t archetype) {
  switch (archetype) {
    case 1: return 5;
    case 3: return 6;
    case 7: return 5;
    default: return 0;
  }
}

}  // namespace

std::vector<ElementBox> archetype_layout(std::size_t archetype, const std::string& topic, std::mt19937_64* rng,
                                         double jitter) {
  if (archetype >= archetypes().size()) throw UsageError("unknown archetype index " + std::to_string(archetype));
  std::size_t rows = default_rows(archetype);
  if (rng && rows) rows = std::uniform_int_distribution<std::size_t>(rows - 1, rows + 1)(*rng);
  const auto vocab = ClassVocabulary::rico_default();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<ElementBox> out;
  for (const auto& s : layout_spec(archetype, topic, rows)) {
    ElementBox e;
    e.class_id = vocab.id_of(s.cls);
    e.x = s.x;
    e.y = s.y;
    e.w = s.w;
    e.h = s.h;
    if (rng) {
      e.x += jitter * u(*rng);
      e.y += jitter * u(*rng);
      e.w += 0.5 * jitter * u(*rng);
      e.h += 0.5 * jitter * u(*rng);
    }
    e.w = std::clamp(e.w, 0.01, 1.0);
    e.h = std::clamp(e.h, 0.01, 1.0);
    e.x = std::clamp(e.x, 0.0, 1.0 - e.w);
    e.y = std::clamp(e.y, 0.0, 1.0 - e.h);
    if (!s.text.empty()) e.text = s.text;
    out.push_back(std::move(e));
  }
  return canonical_sort(out);
}

std::string caption(std::size_t archetype, const std::string& topic, std::size_t template_idx) {
  const auto& p = archetypes().at(archetype).phrases;
  switch (template_idx % 5) {
    case 0: return fmt::format("{} of a {} app", p[0], topic);
    case 1: return fmt::format("{} app {}", topic, p[1]);
    case 2: return fmt::format("a {} for {}", p[0], topic);
    case 3: return fmt::format("{} in the {} application", p[1], topic);
    default: return fmt::format("{} {}", topic, p[0]);
  }
}

std::size_t archetype_of(const std::string& screen_id) {
  const auto name = screen_id.substr(0, screen_id.find('.'));
  for (std::size_t i = 0; i < archetypes().size(); ++i) {
    if (archetypes()[i].name == name) return i;
  }
  throw DataError("not a synthetic screen id: " + screen_id);
}

ingest::Corpus synthetic_corpus(const SynthConfig& cfg) {
  ingest::Corpus corpus;
  corpus.vocab = ClassVocabulary::rico_default();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t na = archetypes().size(), nt = topics().size();
  auto fill = [&](ingest::CorpusSplit& split, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t pair = i % (na * nt);
      const std::size_t a = pair % na, t = pair / na;
      const auto& topic = topics()[t];
      UiScreen s;
      s.screen_id = fmt::format("{}.{}.{}.{:03}", archetypes()[a].name, topic, split.name, i);
      s.app_id = fmt::format("synth.{}.{}", split.name, topic);
      s.app_description = "a " + topic + " app";
      ElementBox root;
      root.w = 1.0;
      root.h = 1.0;
      root.class_id = corpus.vocab.unknown();
      root.is_leaf = false;
      s.elements.push_back(root);
      // Snap to the pixel grid so the raw-input round trip through ingest is exact.
      auto leaves = archetype_layout(a, topic, &rng, cfg.jitter);
      for (auto& e : leaves) {
        const double l = std::round(e.x * s.screen_w_px), t = std::round(e.y * s.screen_h_px);
        e.w = (std::round(e.right() * s.screen_w_px) - l) / s.screen_w_px;
        e.h = (std::round(e.bottom() * s.screen_h_px) - t) / s.screen_h_px;
        e.x = l / s.screen_w_px;
        e.y = t / s.screen_h_px;
        e.parent_idx = 0;
      }
      for (auto& e : canonical_sort(leaves)) s.elements.push_back(std::move(e));
      for (std::size_t c = 0; c < 5; ++c) s.captions.push_back(caption(a, topic, c));
      split.screens.push_back(std::move(s));
    }
  };
  fill(corpus.train, cfg.train);
  fill(corpus.validation, cfg.validation);
  fill(corpus.test, cfg.test);
  corpus.report = {{"source", "synthetic"},
                   {"seed", cfg.seed},
                   {"splits", {{"train", cfg.train}, {"validation", cfg.validation}, {"test", cfg.test}}}};
  return corpus;
}

void write_raw_inputs(const fs::path& dir, const ingest::Corpus& corpus) {
  fs::create_directories(dir / "hierarchies");
  std::ofstream manifest(dir / "manifest.tsv"), captions(dir / "captions.tsv"), annotations(dir / "annotations.tsv"),
      apps(dir / "app_descriptions.tsv");
  if (!manifest || !captions || !annotations || !apps) throw DataError("cannot write raw inputs under " + dir.string());
  std::map<std::string, std::string> app_desc;
  constexpr int kW = 1440, kH = 2560;
  for (const auto* split : {&corpus.train, &corpus.validation, &corpus.test}) {
    for (const auto& s : split->screens) {
      manifest << s.screen_id << '\t' << split->name << '\t' << s.app_id << '\n';
      for (const auto& c : s.captions) captions << s.screen_id << '\t' << c << '\n';
      if (s.app_description) app_desc[s.app_id] = *s.app_description;
      json root = {{"bounds", {0, 0, kW, kH}}, {"class", "android.widget.FrameLayout"}, {"children", json::array()}};
      for (std::size_t i = 1; i < s.elements.size(); ++i) {
        const auto& e = s.elements[i];
        json node = {{"bounds",
                      {std::lround(e.x * kW), std::lround(e.y * kH), std::lround(e.right() * kW),
                       std::lround(e.bottom() * kH)}},
                     {"class", "android.view.View"}};
        if (e.text) node["text"] = *e.text;
        root["children"].push_back(node);
        annotations << s.screen_id << '\t' << i << '\t' << corpus.vocab.at(e.class_id).name << '\n';
      }
      std::ofstream(dir / "hierarchies" / (s.screen_id + ".json")) << json{{"activity", {{"root", root}}}}.dump();
    }
  }
  for (const auto& [app, desc] : app_desc) apps << app << '\t' << desc << '\n';
}

}  // namespace mockforge::synth
