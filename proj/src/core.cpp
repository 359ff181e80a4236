#include "mockforge/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mockforge {

using nlohmann::json;

ClassVocabulary::ClassVocabulary(const std::vector<std::string>& content_names) {
  auto add = [this](const std::string& name, ClassKind kind) {
    if (name.empty()) throw DataError("class vocabulary: empty class name");
    if (by_name_.count(name)) throw DataError("class vocabulary: duplicate class name '" + name + "'");
    const int id = static_cast<int>(classes_.size());
    classes_.push_back({id, name, kind});
    by_name_.emplace(name, id);
    return id;
  };
  for (const auto& n : content_names) add(n, ClassKind::content);
  content_count_ = classes_.size();
  separator_ = add("SEPARATOR", ClassKind::separator);
  unknown_ = add("UNKNOWN", ClassKind::unknown);
  start_ = add("START", ClassKind::control);
  eos_ = add("EOS", ClassKind::control);
  pad_ = add("PAD", ClassKind::control);
}

ClassVocabulary ClassVocabulary::rico_default() {
  return ClassVocabulary({"Advertisement", "Background Image", "Bottom Navigation", "Button Bar",
                          "Card", "Checkbox", "Date Picker", "Drawer", "Icon", "Image", "Input",
                          "List Item", "Map View", "Modal", "Multi-Tab", "Number Stepper",
                          "On/Off Switch", "Pager Indicator", "Radio Button", "Slider", "Text",
                          "Text Button", "Toolbar", "Video", "Web View"});
}

ClassVocabulary ClassVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open class vocabulary file " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    names.push_back(line);
  }
  return ClassVocabulary(names);
}

const SemanticClass& ClassVocabulary::at(int id) const {
  if (!contains(id)) throw DataError("class id " + std::to_string(id) + " outside vocabulary");
  return classes_[static_cast<std::size_t>(id)];
}

std::optional<int> ClassVocabulary::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

int ClassVocabulary::id_of(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw DataError("class '" + std::string(name) + "' is not in the class vocabulary");
}

std::vector<std::string> ClassVocabulary::content_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < content_count_; ++i) out.push_back(classes_[i].name);
  return out;
}

bool ClassVocabulary::operator==(const ClassVocabulary& other) const {
  return content_names() == other.content_names();
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::text_only: return "text-only";
    case Method::multi_modal: return "multi-modal";
    case Method::generator: return "generator";
  }
  return "generator";
}

Method method_from_string(std::string_view s) {
  if (s == "text-only") return Method::text_only;
  if (s == "multi-modal") return Method::multi_modal;
  if (s == "generator") return Method::generator;
  throw UsageError("unknown method '" + std::string(s) + "'");
}

std::vector<ElementBox> canonical_sort(std::span<const ElementBox> elements) {
  std::vector<ElementBox> out(elements.begin(), elements.end());
  std::stable_sort(out.begin(), out.end(), [](const ElementBox& a, const ElementBox& b) {
    const auto band_a = std::floor(a.y * kSortBands);
    const auto band_b = std::floor(b.y * kSortBands);
    if (band_a != band_b) return band_a < band_b;
    return a.x < b.x;
  });
  return out;
}

bool box_is_valid(const ElementBox& e, double eps) {
  if (!std::isfinite(e.x) || !std::isfinite(e.y) || !std::isfinite(e.w) || !std::isfinite(e.h)) return false;
  return e.x >= 0.0 && e.x <= 1.0 && e.y >= 0.0 && e.y <= 1.0 && e.w > 0.0 && e.h > 0.0 &&
         e.x + e.w <= 1.0 + eps && e.y + e.h <= 1.0 + eps;
}

std::vector<std::string> validate_screen(const UiScreen& screen, const ClassVocabulary& vocab) {
  std::vector<std::string> out;
  if (screen.screen_w_px <= 0 || screen.screen_h_px <= 0) {
    out.push_back("screen " + screen.screen_id + ": non-positive pixel size");
  }
  for (std::size_t i = 0; i < screen.elements.size(); ++i) {
    const auto& e = screen.elements[i];
    const std::string who = "element " + std::to_string(i);
    if (!box_is_valid(e)) {
      std::ostringstream os;
      os << who << ": geometry out of range (x=" << e.x << ", y=" << e.y << ", w=" << e.w << ", h=" << e.h << ")";
      out.push_back(os.str());
    }
    if (!vocab.contains(e.class_id)) {
      out.push_back(who + ": unknown class_id " + std::to_string(e.class_id));
    }
    if (e.parent_idx && *e.parent_idx >= i) {
      out.push_back(who + ": parent_idx " + std::to_string(*e.parent_idx) + " does not precede the element");
    }
  }
  return out;
}

json element_to_json(const ElementBox& e, const ClassVocabulary& vocab) {
  json j;
  j["x"] = e.x;
  j["y"] = e.y;
  j["w"] = e.w;
  j["h"] = e.h;
  j["class"] = vocab.at(e.class_id).name;
  if (e.text) j["text"] = *e.text;
  if (e.parent_idx) j["parent"] = *e.parent_idx;
  j["is_leaf"] = e.is_leaf;
  return j;
}

ElementBox element_from_json(const json& j, const ClassVocabulary& vocab) {
  if (!j.is_object()) throw DataError("element must be a JSON object");
  ElementBox e;
  try {
    e.x = j.at("x").get<double>();
    e.y = j.at("y").get<double>();
    e.w = j.at("w").get<double>();
    e.h = j.at("h").get<double>();
  } catch (const json::exception& ex) {
    throw DataError(std::string("element geometry: ") + ex.what());
  }
  e.class_id = j.contains("class") ? vocab.id_of(j.at("class").get<std::string>()) : vocab.unknown();
  if (j.contains("text") && !j.at("text").is_null()) e.text = j.at("text").get<std::string>();
  if (j.contains("parent") && !j.at("parent").is_null()) e.parent_idx = j.at("parent").get<std::size_t>();
  e.is_leaf = j.value("is_leaf", true);
  return e;
}

json screen_to_json(const UiScreen& s, const ClassVocabulary& vocab) {
  json j;
  j["screen_id"] = s.screen_id;
  j["app_id"] = s.app_id;
  j["app_description"] = s.app_description ? json(*s.app_description) : json(nullptr);
  j["screen_w_px"] = s.screen_w_px;
  j["screen_h_px"] = s.screen_h_px;
  j["captions"] = s.captions;
  json els = json::array();
  for (const auto& e : s.elements) els.push_back(element_to_json(e, vocab));
  j["elements"] = std::move(els);
  return j;
}

UiScreen screen_from_json(const json& j, const ClassVocabulary& vocab) {
  UiScreen s;
  try {
    s.screen_id = j.at("screen_id").get<std::string>();
    s.app_id = j.value("app_id", std::string{});
    if (j.contains("app_description") && !j.at("app_description").is_null()) {
      s.app_description = j.at("app_description").get<std::string>();
    }
    s.screen_w_px = j.value("screen_w_px", 1440);
    s.screen_h_px = j.value("screen_h_px", 2560);
    if (j.contains("captions")) s.captions = j.at("captions").get<std::vector<std::string>>();
    for (const auto& e : j.at("elements")) s.elements.push_back(element_from_json(e, vocab));
  } catch (const json::exception& ex) {
    throw DataError(std::string("screen record: ") + ex.what());
  }
  return s;
}

std::vector<UiScreen> read_screens_jsonl(const std::filesystem::path& path, const ClassVocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open screen file " + path.string());
  std::vector<UiScreen> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(screen_from_json(json::parse(line), vocab));
    } catch (const json::parse_error& ex) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

void write_screens_jsonl(const std::filesystem::path& path, std::span<const UiScreen> screens,
                         const ClassVocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : screens) out << screen_to_json(s, vocab).dump() << '\n';
}

json vocab_to_json(const ClassVocabulary& vocab) { return json{{"content_classes", vocab.content_names()}}; }

ClassVocabulary vocab_from_json(const json& j) {
  return ClassVocabulary(j.at("content_classes").get<std::vector<std::string>>());
}

json candidate_to_json(const MockupCandidate& c, const ClassVocabulary& vocab) {
  json j;
  j["prompt"] = c.prompt;
  j["method"] = std::string(to_string(c.method));
  j["source_screen_id"] = c.source_screen_id ? json(*c.source_screen_id) : json(nullptr);
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  if (c.similarity) j["similarity"] = *c.similarity;
  if (c.scores) {
    j["scores"] = {{"overlap", c.scores->overlap},
                   {"iou", c.scores->iou},
                   {"alignment", c.scores->alignment},
                   {"rerank_score", c.scores->rerank_score}};
  } else {
    j["scores"] = nullptr;
  }
  json els = json::array();
  for (const auto& e : c.elements) els.push_back(element_to_json(e, vocab));
  j["elements"] = std::move(els);
  return j;
}

MockupCandidate candidate_from_json(const json& j, const ClassVocabulary& vocab) {
  if (!j.is_object()) throw DataError("candidate must be a JSON object");
  MockupCandidate c;
  try {
    c.prompt = j.value("prompt", "");
    c.method = method_from_string(j.value("method", "generator"));
    if (j.contains("source_screen_id") && !j["source_screen_id"].is_null()) {
      c.source_screen_id = j["source_screen_id"].get<std::string>();
    }
    if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("similarity") && !j["similarity"].is_null()) c.similarity = j["similarity"].get<double>();
    if (j.contains("scores") && !j["scores"].is_null()) {
      const auto& s = j["scores"];
      c.scores = QualityScores{s.at("overlap").get<double>(), s.at("iou").get<double>(),
                               s.at("alignment").get<double>(), s.value("rerank_score", 0.0)};
    }
    for (const auto& e : j.at("elements")) c.elements.push_back(element_from_json(e, vocab));
  } catch (const json::exception& ex) {
    throw DataError(std::string("candidate: ") + ex.what());
  }
  return c;
}

}  // namespace mockforge
