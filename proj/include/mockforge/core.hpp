#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mockforge {

// Error categories map one-to-one onto CLI exit codes (usage=1, data=2, numeric=3).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kGeometryEps = 1e-6;
inline constexpr int kSortBands = 64;

enum class ClassKind { content, separator, unknown, control };

struct SemanticClass {
  int id = 0;
  std::string name;
  ClassKind kind = ClassKind::content;
};

/// Dense, stable mapping between semantic class ids and names.
///
/// Content classes come first in the order they were supplied; the five
/// special classes SEPARATOR, UNKNOWN, START, EOS and PAD are appended after.
class ClassVocabulary {
 public:
  ClassVocabulary() = default;
  explicit ClassVocabulary(const std::vector<std::string>& content_names);

  /// The 25 component classes of the public Rico semantic annotations.
  static ClassVocabulary rico_default();
  /// One content-class name per line; blank lines and '#' comments skipped.
  static ClassVocabulary load(const std::filesystem::path& path);

  std::size_t size() const { return classes_.size(); }
  std::size_t content_count() const { return content_count_; }
  const SemanticClass& at(int id) const;
  const std::vector<SemanticClass>& classes() const { return classes_; }
  std::optional<int> find(std::string_view name) const;
  /// Throws DataError when the name is not part of the vocabulary.
  int id_of(std::string_view name) const;
  bool contains(int id) const { return id >= 0 && static_cast<std::size_t>(id) < classes_.size(); }

  int separator() const { return separator_; }
  int unknown() const { return unknown_; }
  int start() const { return start_; }
  int eos() const { return eos_; }
  int pad() const { return pad_; }
  bool is_control(int id) const { return at(id).kind == ClassKind::control; }

  std::vector<std::string> content_names() const;
  bool operator==(const ClassVocabulary& other) const;

 private:
  std::vector<SemanticClass> classes_;
  std::unordered_map<std::string, int> by_name_;
  std::size_t content_count_ = 0;
  int separator_ = -1;
  int unknown_ = -1;
  int start_ = -1;
  int eos_ = -1;
  int pad_ = -1;
};

struct ElementBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  int class_id = 0;
  std::optional<std::string> text;
  std::optional<std::size_t> parent_idx;
  bool is_leaf = true;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  bool operator==(const ElementBox&) const = default;
};

struct UiScreen {
  std::string screen_id;
  std::string app_id;
  std::optional<std::string> app_description;
  int screen_w_px = 1440;
  int screen_h_px = 2560;
  std::vector<ElementBox> elements;
  std::vector<std::string> captions;
};

enum class Method { text_only, multi_modal, generator };

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

struct QualityScores {
  double overlap = 0.0;
  double iou = 0.0;
  double alignment = 0.0;
  double rerank_score = 0.0;
};

struct MockupCandidate {
  std::vector<ElementBox> elements;
  std::string prompt;
  Method method = Method::generator;
  std::optional<std::string> source_screen_id;
  std::optional<std::uint64_t> seed;
  std::optional<QualityScores> scores;
  // Similarity (retrieval) or -distance; informational only.
  std::optional<double> similarity;
};

/// Stable sort by (floor(y * 64), x). Top-left elements come first.
std::vector<ElementBox> canonical_sort(std::span<const ElementBox> elements);

/// Geometry checks for one box against the ElementBox invariants.
bool box_is_valid(const ElementBox& e, double eps = kGeometryEps);

/// Every invariant violation of the screen; empty means valid.
std::vector<std::string> validate_screen(const UiScreen& screen, const ClassVocabulary& vocab);

// Canonical screen file format.
nlohmann::json screen_to_json(const UiScreen& screen, const ClassVocabulary& vocab);
UiScreen screen_from_json(const nlohmann::json& j, const ClassVocabulary& vocab);
nlohmann::json element_to_json(const ElementBox& e, const ClassVocabulary& vocab);
ElementBox element_from_json(const nlohmann::json& j, const ClassVocabulary& vocab);

std::vector<UiScreen> read_screens_jsonl(const std::filesystem::path& path, const ClassVocabulary& vocab);
void write_screens_jsonl(const std::filesystem::path& path, std::span<const UiScreen> screens,
                         const ClassVocabulary& vocab);

nlohmann::json vocab_to_json(const ClassVocabulary& vocab);
ClassVocabulary vocab_from_json(const nlohmann::json& j);

nlohmann::json candidate_to_json(const MockupCandidate& c, const ClassVocabulary& vocab);
/// Accepts candidate_to_json output; extra keys (id, provenance) are ignored.
MockupCandidate candidate_from_json(const nlohmann::json& j, const ClassVocabulary& vocab);

}  // namespace mockforge
