#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mockforge/core.hpp"
#include "mockforge/textfeat.hpp"

namespace mockforge::ingest {

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class OverLongScreen : public DataError {
 public:
  using DataError::DataError;
};

inline constexpr double kSeparatorThreshold = 0.02;
inline constexpr std::size_t kMaxUiTokens = 512;

struct ScreenMeta {
  std::string screen_id;
  std::string app_id;
  std::optional<std::string> app_description;
  int screen_w_px = 1440;
  int screen_h_px = 2560;
};

/// Depth-first flattening of a hierarchy tree. Accepts a bare node or a Rico-style
/// document with the tree under "activity"/"root". Each node carries
/// "bounds": [left, top, right, bottom] in pixels and optional "text" and "children".
///
/// Zero-area nodes and nodes reaching beyond twice the screen size are dropped
/// (their kept descendants re-attach to the nearest kept ancestor); is_leaf means
/// no kept children. Every element is classed UNKNOWN until annotations are merged.
UiScreen parse_view_hierarchy(const nlohmann::json& raw, const ScreenMeta& meta, const ClassVocabulary& vocab,
                              std::vector<std::string>* warnings = nullptr);

/// Element key -> class name, keyed by the element's index in the parsed (DFS) list.
using Annotations = std::map<std::size_t, std::string>;

struct MergeResult {
  UiScreen screen;
  std::size_t annotated = 0;
  double coverage() const {
    return screen.elements.empty() ? 0.0 : static_cast<double>(annotated) / screen.elements.size();
  }
};

/// Throws DataError when an annotation names a class outside the vocabulary.
MergeResult merge_semantic_annotations(UiScreen screen, const Annotations& annotations, const ClassVocabulary& vocab);

/// UNKNOWN leaves narrower or shorter than the threshold become SEPARATOR.
UiScreen apply_separator_heuristic(UiScreen screen, const ClassVocabulary& vocab,
                                   double threshold = kSeparatorThreshold);

/// Leaf elements only, canonically sorted, parent links cleared.
std::vector<ElementBox> extract_leaf_view(const UiScreen& screen);

enum class UiTokenKind { start = 0, app_desc = 1, element = 2, end = 3 };

struct UiToken {
  UiTokenKind kind = UiTokenKind::start;
  std::array<float, 4> dims{};  // element tokens only
  int class_id = -1;            // element tokens only
  textfeat::EmbeddingVector text_vec;
};

struct RetrievalTokenView {
  std::vector<UiToken> tokens;
  std::size_t size() const { return tokens.size(); }
};

/// start, app-desc, one token per element (intermediate ones included), end.
/// Throws OverLongScreen past max_tokens.
RetrievalTokenView build_retrieval_token_view(const UiScreen& screen, const textfeat::EmbeddingProvider& embedder,
                                              std::size_t max_tokens = kMaxUiTokens);

struct CorpusSplit {
  std::string name;
  std::vector<UiScreen> screens;
};

struct Corpus {
  CorpusSplit train{"train", {}};
  CorpusSplit validation{"validation", {}};
  CorpusSplit test{"test", {}};
  ClassVocabulary vocab;
  nlohmann::json report;

  CorpusSplit& split(std::string_view name);
  const CorpusSplit& split(std::string_view name) const;
};

struct CorpusInputs {
  std::filesystem::path hierarchy_dir;  // <screen_id>.json per screen
  std::filesystem::path captions;       // screen_id \t caption
  std::filesystem::path manifest;       // screen_id \t split [\t app_id [\t w_px \t h_px]]
  std::optional<std::filesystem::path> annotations;       // screen_id \t dfs index \t class name
  std::optional<std::filesystem::path> app_descriptions;  // app_id \t description
  ClassVocabulary vocab = ClassVocabulary::rico_default();
  double separator_threshold = kSeparatorThreshold;
};

/// Parses, merges and applies the separator heuristic to every manifest screen.
/// Per-element problems drop the element, per-screen problems drop the screen,
/// manifest inconsistencies (duplicate ids, apps spanning splits) throw DataError.
Corpus build_corpus(const CorpusInputs& inputs);

/// Writes <split>.jsonl, vocab.json and report.json.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

/// Reads rows of a tab-separated file; blank lines skipped.
std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path);

}  // namespace mockforge::ingest
