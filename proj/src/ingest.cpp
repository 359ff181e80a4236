#include "mockforge/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

namespace mockforge::ingest {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const json& resolve_root(const json& raw) {
  if (raw.is_object()) {
    if (raw.contains("activity") && raw["activity"].is_object() && raw["activity"].contains("root")) {
      return raw["activity"]["root"];
    }
    if (raw.contains("root") && !raw.contains("bounds")) return raw["root"];
  }
  return raw;
}

struct Flattener {
  const ScreenMeta& meta;
  int unknown;
  std::vector<std::string>* warnings;
  std::vector<ElementBox> out;
  std::vector<std::size_t> kept_children;

  void warn(std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  }

  void visit(const json& node, const std::string& path, std::optional<std::size_t> parent) {
    if (!node.is_object()) throw ParseError(path + ": node is not an object");
    if (!node.contains("bounds")) throw ParseError(path + ": missing bounds");
    const auto& b = node["bounds"];
    if (!b.is_array() || b.size() != 4 || !std::all_of(b.begin(), b.end(), [](const json& v) { return v.is_number(); })) {
      throw ParseError(path + ": bounds must be four numbers");
    }
    const double W = meta.screen_w_px, H = meta.screen_h_px;
    double l = b[0].get<double>(), t = b[1].get<double>(), r = b[2].get<double>(), bt = b[3].get<double>();

    std::optional<std::size_t> self;
    if (l < -W || t < -H || r > 2 * W || bt > 2 * H) {
      warn(path + ": bounds outside twice the screen size, element dropped");
    } else {
      l = std::clamp(l, 0.0, W);
      r = std::clamp(r, 0.0, W);
      t = std::clamp(t, 0.0, H);
      bt = std::clamp(bt, 0.0, H);
      if (r > l && bt > t) {
        ElementBox e;
        e.x = l / W;
        e.y = t / H;
        e.w = (r - l) / W;
        e.h = (bt - t) / H;
        e.class_id = unknown;
        if (node.contains("text") && node["text"].is_string() && !node["text"].get<std::string>().empty()) {
          e.text = node["text"].get<std::string>();
        }
        e.parent_idx = parent;
        if (parent) ++kept_children[*parent];
        self = out.size();
        out.push_back(std::move(e));
        kept_children.push_back(0);
      }
    }

    if (!node.contains("children") || node["children"].is_null()) return;
    const auto& children = node["children"];
    if (!children.is_array()) throw ParseError(path + ": children must be an array");
    for (std::size_t i = 0; i < children.size(); ++i) {
      if (children[i].is_null()) continue;  // Rico leaves null slots in some dumps
      visit(children[i], path + "/children[" + std::to_string(i) + "]", self ? self : parent);
    }
  }
};

std::string trim_cr(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

}  // namespace

UiScreen parse_view_hierarchy(const json& raw, const ScreenMeta& meta, const ClassVocabulary& vocab,
                              std::vector<std::string>* warnings) {
  if (meta.screen_w_px <= 0 || meta.screen_h_px <= 0) {
    throw ParseError(meta.screen_id + ": screen size must be positive");
  }
  Flattener f{meta, vocab.unknown(), warnings, {}, {}};
  f.visit(resolve_root(raw), "root", std::nullopt);
  for (std::size_t i = 0; i < f.out.size(); ++i) f.out[i].is_leaf = f.kept_children[i] == 0;

  UiScreen s;
  s.screen_id = meta.screen_id;
  s.app_id = meta.app_id;
  s.app_description = meta.app_description;
  s.screen_w_px = meta.screen_w_px;
  s.screen_h_px = meta.screen_h_px;
  s.elements = std::move(f.out);
  return s;
}

MergeResult merge_semantic_annotations(UiScreen screen, const Annotations& annotations, const ClassVocabulary& vocab) {
  MergeResult r;
  for (auto& e : screen.elements) e.class_id = vocab.unknown();
  for (const auto& [idx, name] : annotations) {
    const auto id = vocab.find(name);
    if (!id) throw DataError("annotation for " + screen.screen_id + " names unknown class '" + name + "'");
    if (idx >= screen.elements.size()) continue;  // element dropped during parsing
    screen.elements[idx].class_id = *id;
    ++r.annotated;
  }
  r.screen = std::move(screen);
  return r;
}

UiScreen apply_separator_heuristic(UiScreen screen, const ClassVocabulary& vocab, double threshold) {
  for (auto& e : screen.elements) {
    if (e.is_leaf && e.class_id == vocab.unknown() && (e.w < threshold || e.h < threshold)) {
      e.class_id = vocab.separator();
    }
  }
  return screen;
}

std::vector<ElementBox> extract_leaf_view(const UiScreen& screen) {
  std::vector<ElementBox> leaves;
  for (const auto& e : screen.elements) {
    if (!e.is_leaf) continue;
    leaves.push_back(e);
    leaves.back().parent_idx.reset();
  }
  return canonical_sort(leaves);
}

RetrievalTokenView build_retrieval_token_view(const UiScreen& screen, const textfeat::EmbeddingProvider& embedder,
                                              std::size_t max_tokens) {
  const std::size_t count = screen.elements.size() + 3;
  if (count > max_tokens) {
    throw OverLongScreen(screen.screen_id + ": " + std::to_string(count) + " tokens exceeds " +
                         std::to_string(max_tokens));
  }
  const textfeat::EmbeddingVector zero(embedder.dim(), 0.0f);
  RetrievalTokenView view;
  view.tokens.reserve(count);
  view.tokens.push_back({UiTokenKind::start, {}, -1, zero});
  view.tokens.push_back(
      {UiTokenKind::app_desc, {}, -1, screen.app_description ? embedder.pool_text(*screen.app_description) : zero});
  for (const auto& e : screen.elements) {
    UiToken t;
    t.kind = UiTokenKind::element;
    t.dims = {static_cast<float>(e.x), static_cast<float>(e.y), static_cast<float>(e.w), static_cast<float>(e.h)};
    t.class_id = e.class_id;
    t.text_vec = e.text ? embedder.pool_text(*e.text) : zero;
    view.tokens.push_back(std::move(t));
  }
  view.tokens.push_back({UiTokenKind::end, {}, -1, zero});
  return view;
}

CorpusSplit& Corpus::split(std::string_view name) {
  return const_cast<CorpusSplit&>(static_cast<const Corpus&>(*this).split(name));
}

const CorpusSplit& Corpus::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "validation") return validation;
  if (name == "test") return test;
  throw DataError("unknown split '" + std::string(name) + "'");
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = trim_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    rows.push_back(std::move(cols));
  }
  return rows;
}

namespace {

struct ManifestEntry {
  std::string screen_id;
  std::string split;
  std::string app_id;
  std::optional<std::pair<int, int>> size;
};

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::vector<ManifestEntry> entries;
  std::unordered_map<std::string, std::string> seen;
  std::unordered_map<std::string, std::string> app_split;
  std::size_t row = 0;
  for (auto& cols : read_tsv(path)) {
    ++row;
    if (cols.size() < 2) throw DataError(path.string() + ":" + std::to_string(row) + ": expected screen_id and split");
    ManifestEntry e{cols[0], cols[1], cols.size() > 2 && !cols[2].empty() ? cols[2] : cols[0], std::nullopt};
    if (e.split != "train" && e.split != "validation" && e.split != "test") {
      throw DataError(path.string() + ":" + std::to_string(row) + ": unknown split '" + e.split + "'");
    }
    if (cols.size() > 4) {
      try {
        e.size = std::pair{std::stoi(cols[3]), std::stoi(cols[4])};
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(row) + ": bad screen size");
      }
    }
    if (auto it = seen.find(e.screen_id); it != seen.end()) {
      throw DataError("screen " + e.screen_id + " listed in both " + it->second + " and " + e.split);
    }
    seen.emplace(e.screen_id, e.split);
    if (auto it = app_split.find(e.app_id); it != app_split.end() && it->second != e.split) {
      throw DataError("app " + e.app_id + " appears in both " + it->second + " and " + e.split);
    }
    app_split.emplace(e.app_id, e.split);
    entries.push_back(std::move(e));
  }
  return entries;
}

struct ScreenOutcome {
  std::optional<UiScreen> screen;
  std::size_t annotated = 0;
  std::string dropped_reason;
  std::string fatal;
  std::vector<std::string> warnings;
};

}  // namespace

Corpus build_corpus(const CorpusInputs& inputs) {
  const auto manifest = read_manifest(inputs.manifest);

  std::unordered_map<std::string, std::vector<std::string>> captions;
  for (auto& cols : read_tsv(inputs.captions)) {
    if (cols.size() < 2) continue;
    captions[cols[0]].push_back(cols[1]);
  }
  std::unordered_map<std::string, Annotations> annotations;
  if (inputs.annotations) {
    for (auto& cols : read_tsv(*inputs.annotations)) {
      if (cols.size() < 3) throw DataError("annotation rows need screen_id, index and class");
      std::size_t idx = 0;
      try {
        idx = static_cast<std::size_t>(std::stoul(cols[1]));
      } catch (const std::exception&) {
        throw DataError("bad element index '" + cols[1] + "' for " + cols[0]);
      }
      annotations[cols[0]][idx] = cols[2];
    }
  }
  std::unordered_map<std::string, std::string> app_desc;
  if (inputs.app_descriptions) {
    for (auto& cols : read_tsv(*inputs.app_descriptions)) {
      if (cols.size() >= 2) app_desc[cols[0]] = cols[1];
    }
  }

  std::vector<ScreenOutcome> outcomes(manifest.size());
  const auto n = static_cast<long>(manifest.size());
  // Screens are independent; results land in manifest order regardless of scheduling.
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto& m = manifest[static_cast<std::size_t>(i)];
    auto& out = outcomes[static_cast<std::size_t>(i)];
    try {
      const fs::path file = inputs.hierarchy_dir / (m.screen_id + ".json");
      std::ifstream in(file);
      if (!in) {
        out.dropped_reason = "missing hierarchy file";
        continue;
      }
      json raw;
      try {
        raw = json::parse(in);
      } catch (const json::parse_error& ex) {
        out.dropped_reason = std::string("malformed JSON: ") + ex.what();
        continue;
      }
      ScreenMeta meta{m.screen_id, m.app_id, std::nullopt, 1440, 2560};
      if (auto it = app_desc.find(m.app_id); it != app_desc.end()) meta.app_description = it->second;
      if (m.size) {
        std::tie(meta.screen_w_px, meta.screen_h_px) = *m.size;
      } else {
        const auto& root = resolve_root(raw);
        if (root.is_object() && root.contains("bounds") && root["bounds"].is_array() && root["bounds"].size() == 4 &&
            root["bounds"][2].is_number() && root["bounds"][3].is_number()) {
          const int w = root["bounds"][2].get<int>(), h = root["bounds"][3].get<int>();
          if (w > 0 && h > 0) {
            meta.screen_w_px = w;
            meta.screen_h_px = h;
          }
        }
      }
      UiScreen screen = parse_view_hierarchy(raw, meta, inputs.vocab, &out.warnings);
      const auto ann = annotations.find(m.screen_id);
      MergeResult merged;
      try {
        merged = merge_semantic_annotations(std::move(screen), ann == annotations.end() ? Annotations{} : ann->second,
                                            inputs.vocab);
      } catch (const DataError& ex) {
        out.fatal = ex.what();
        continue;
      }
      out.annotated = merged.annotated;
      UiScreen final_screen = apply_separator_heuristic(std::move(merged.screen), inputs.vocab,
                                                        inputs.separator_threshold);
      if (auto it = captions.find(m.screen_id); it != captions.end()) final_screen.captions = it->second;
      out.screen = std::move(final_screen);
    } catch (const DataError& ex) {
      out.dropped_reason = ex.what();
    } catch (const json::exception& ex) {
      out.dropped_reason = ex.what();
    }
  }

  Corpus corpus;
  corpus.vocab = inputs.vocab;
  json dropped = json::array();
  std::vector<std::size_t> histogram(inputs.vocab.size(), 0);
  std::size_t elements = 0, annotated = 0, warnings = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.fatal.empty()) throw DataError(o.fatal);
    for (const auto& w : o.warnings) spdlog::warn("{}: {}", manifest[i].screen_id, w);
    warnings += o.warnings.size();
    if (!o.screen) {
      spdlog::warn("dropping screen {}: {}", manifest[i].screen_id, o.dropped_reason);
      dropped.push_back({{"screen_id", manifest[i].screen_id}, {"reason", o.dropped_reason}});
      continue;
    }
    for (const auto& e : o.screen->elements) ++histogram[static_cast<std::size_t>(e.class_id)];
    elements += o.screen->elements.size();
    annotated += o.annotated;
    corpus.split(manifest[i].split).screens.push_back(std::move(*o.screen));
  }

  json hist = json::object();
  for (const auto& c : inputs.vocab.classes()) {
    if (c.kind != ClassKind::control) hist[c.name] = histogram[static_cast<std::size_t>(c.id)];
  }
  corpus.report = {
      {"splits",
       {{"train", corpus.train.screens.size()},
        {"validation", corpus.validation.screens.size()},
        {"test", corpus.test.screens.size()}}},
      {"dropped", dropped},
      {"elements", elements},
      {"annotation_coverage", elements ? static_cast<double>(annotated) / static_cast<double>(elements) : 0.0},
      {"warnings", warnings},
      {"class_histogram", hist},
  };
  return corpus;
}

void write_corpus(const fs::path& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  for (const auto* split : {&corpus.train, &corpus.validation, &corpus.test}) {
    write_screens_jsonl(dir / (split->name + ".jsonl"), split->screens, corpus.vocab);
  }
  std::ofstream(dir / "vocab.json") << vocab_to_json(corpus.vocab).dump(2) << '\n';
  std::ofstream(dir / "report.json") << corpus.report.dump(2) << '\n';
}

Corpus load_corpus(const fs::path& dir) {
  std::ifstream vin(dir / "vocab.json");
  if (!vin) throw DataError("no vocab.json in " + dir.string());
  Corpus c;
  c.vocab = vocab_from_json(json::parse(vin));
  for (auto* split : {&c.train, &c.validation, &c.test}) {
    const auto path = dir / (split->name + ".jsonl");
    if (fs::exists(path)) split->screens = read_screens_jsonl(path, c.vocab);
  }
  if (std::ifstream rin(dir / "report.json"); rin) c.report = json::parse(rin);
  return c;
}

}  // namespace mockforge::ingest
