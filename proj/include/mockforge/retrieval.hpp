#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mockforge/core.hpp"
#include "mockforge/ingest.hpp"
#include "mockforge/text_input.hpp"
#include "mockforge/textfeat.hpp"
#include "mockforge/transformer.hpp"

namespace mockforge::retrieval {

using textfeat::EmbeddingVector;

enum class IndexMetric : std::uint32_t { euclidean = 0, dot = 1 };

struct IndexId {
  std::string screen_id;
  std::optional<std::uint32_t> caption_idx;
  bool operator==(const IndexId&) const = default;
};

/// Exact-scan vector index. Euclidean scores are distances (ascending), dot
/// scores are similarities (descending); ties resolve by insertion order.
class VectorIndex {
 public:
  VectorIndex() = default;
  VectorIndex(IndexMetric metric, std::size_t dim) : metric_(metric), dim_(dim) {}

  /// Throws DataError on a width mismatch or a duplicate id.
  void add(IndexId id, std::span<const float> vec);

  struct Hit {
    std::size_t row;
    double score;
  };
  /// Best min(k, size) rows. Throws DataError on an empty index, UsageError for k == 0.
  std::vector<Hit> search(std::span<const float> query, std::size_t k, bool parallel = true) const;
  /// Every row's score in insertion order.
  std::vector<double> scores(std::span<const float> query, bool parallel = true) const;

  IndexMetric metric() const { return metric_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const IndexId& id(std::size_t row) const { return ids_.at(row); }
  std::span<const float> row(std::size_t r) const { return {matrix_.data() + r * dim_, dim_}; }

  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

 private:
  IndexMetric metric_ = IndexMetric::euclidean;
  std::size_t dim_ = 0;
  std::vector<IndexId> ids_;
  std::vector<float> matrix_;
  std::unordered_map<std::string, std::size_t> seen_;
};

/// Leaf views of indexed screens, for turning hits into candidates.
class ScreenCatalog {
 public:
  ScreenCatalog() = default;
  explicit ScreenCatalog(std::span<const UiScreen> screens);
  const std::vector<ElementBox>& leaves(const std::string& screen_id) const;
  const std::vector<std::string>& captions(const std::string& screen_id) const;
  bool contains(const std::string& screen_id) const { return entries_.contains(screen_id); }

 private:
  struct Entry {
    std::vector<ElementBox> leaves;
    std::vector<std::string> captions;
  };
  std::unordered_map<std::string, Entry> entries_;
};

// ---- text-only retriever -----------------------------------------------------

/// One row per (screen, caption): the pooled caption embedding.
VectorIndex text_index_build(std::span<const UiScreen> screens, const textfeat::EmbeddingProvider& provider);

/// k nearest caption rows by L2 distance; similarity = -distance. With dedup
/// each screen appears at most once.
std::vector<MockupCandidate> retrieve_text_only(const std::string& query, const VectorIndex& index,
                                                const textfeat::EmbeddingProvider& provider,
                                                const ScreenCatalog& catalog, std::size_t k, bool dedup = false);

// ---- multi-modal retriever ---------------------------------------------------

struct DualEncoderConfig {
  nn::TransformerConfig text{.hidden = 64, .intermediate = 256, .layers = 4, .heads = 4, .max_len = 64, .dropout = 0.1};
  nn::TransformerConfig ui{.hidden = 64, .intermediate = 256, .layers = 4, .heads = 4, .max_len = 512, .dropout = 0.1};

  void validate() const;
  nlohmann::json to_json() const;
  static DualEncoderConfig from_json(const nlohmann::json& j);
};

/// TextEncoder and UIEncoder with input projections; both pool the start position.
class DualEncoder {
 public:
  DualEncoder(DualEncoderConfig cfg, std::shared_ptr<const textfeat::EmbeddingProvider> provider,
              std::size_t num_classes, std::uint64_t seed);
  DualEncoder(const DualEncoder&) = delete;
  DualEncoder& operator=(const DualEncoder&) = delete;
  DualEncoder(DualEncoder&&) = default;
  DualEncoder& operator=(DualEncoder&&) = default;

  /// l for each caption, [B, H].
  tensor::Tensor text_batch(const std::vector<textfeat::TokenSequence>& captions,
                            const nn::ForwardContext& ctx = {}) const;
  /// r for each view, [B, H].
  tensor::Tensor ui_batch(std::span<const ingest::RetrievalTokenView* const> views,
                          const nn::ForwardContext& ctx = {}) const;

  EmbeddingVector encode_text(const textfeat::TokenSequence& caption) const;
  EmbeddingVector encode_text(std::string_view caption) const { return encode_text(textfeat::tokenize(caption)); }
  EmbeddingVector encode_ui(const ingest::RetrievalTokenView& view) const;

  const DualEncoderConfig& config() const { return cfg_; }
  const textfeat::EmbeddingProvider& provider() const { return *provider_; }
  std::shared_ptr<const textfeat::EmbeddingProvider> provider_ptr() const { return provider_; }
  std::size_t num_classes() const { return num_classes_; }
  tensor::ParameterStore& params() { return *params_; }
  const tensor::ParameterStore& params() const { return *params_; }

 private:
  DualEncoderConfig cfg_;
  std::shared_ptr<const textfeat::EmbeddingProvider> provider_;
  std::size_t num_classes_;
  std::unique_ptr<tensor::ParameterStore> params_;
  nn::TextInputLayer text_input_;
  nn::Linear ui_features_;   // [kind one-hot 4 | x y w h | text vector] -> H
  tensor::Tensor ui_class_;  // [num_classes + 1, H]; last row for non-element tokens
  std::unique_ptr<nn::TransformerEncoder> text_encoder_;
  std::unique_ptr<nn::TransformerEncoder> ui_encoder_;
};

/// Bidirectional in-batch softmax loss over S = L R^T. With include_positive the
/// log-sum-exp runs over all j (standard softmax); without it, over j != i as the
/// equation is printed. Throws UsageError for K < 2.
tensor::Tensor contrastive_loss(const tensor::Tensor& l, const tensor::Tensor& r, bool include_positive = true);

struct PairExample {
  const ingest::RetrievalTokenView* view = nullptr;
  std::vector<textfeat::TokenSequence> captions;
};

struct RetrieverTrainConfig {
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 3;  // epochs without validation improvement before stopping
  double learning_rate = 1e-3;
  bool include_positive = true;
  std::uint64_t seed = 1;
  double max_seconds = 0.0;  // 0 = no wall-clock budget
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainLog {
  std::vector<double> step_losses;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
  nlohmann::json to_json() const;
};

/// Adam at a constant learning rate; one uniformly drawn caption per screen per
/// epoch. Restores the best-validation weights before returning.
TrainLog train_dual_encoder(DualEncoder& enc, std::span<const PairExample> train,
                            std::span<const PairExample> validation, const RetrieverTrainConfig& cfg);

/// In-batch loss over the validation captions (first caption per screen), no dropout.
double evaluate_contrastive(const DualEncoder& enc, std::span<const PairExample> examples, std::size_t batch_size,
                            bool include_positive = true);

/// UI embeddings r for every view, in order.
std::vector<EmbeddingVector> encode_uis(const DualEncoder& enc, std::span<const ingest::RetrievalTokenView> views,
                                        std::size_t batch_size = 32);

VectorIndex ui_index_build(const DualEncoder& enc, std::span<const UiScreen> screens,
                           std::span<const ingest::RetrievalTokenView> views);

std::vector<MockupCandidate> retrieve_multimodal(const std::string& query, const DualEncoder& enc,
                                                 const VectorIndex& ui_index, const ScreenCatalog& catalog,
                                                 std::size_t k);

// ---- top-k evaluation --------------------------------------------------------

struct TopKConfig {
  std::vector<std::size_t> ks{1, 10};
  std::optional<std::size_t> subset_size;
  std::size_t trials = 5;
  std::uint64_t seed = 0;
};

struct TopKResult {
  std::vector<std::size_t> ks;
  std::vector<double> accuracy;  // fraction in [0, 1], one per k
  std::size_t queries = 0;
  std::size_t candidates = 0;
  std::size_t trials = 1;
};

/// query_truth[i] is the candidate row that query i should retrieve. Rank counts
/// strictly better candidates plus tied ones at lower rows.
TopKResult eval_topk(std::span<const EmbeddingVector> queries, std::span<const std::size_t> query_truth,
                     std::span<const EmbeddingVector> candidates, IndexMetric metric, const TopKConfig& cfg);

/// Every caption of every screen against all (or subsets of) the split's UIs.
TopKResult eval_topk(const DualEncoder& enc, std::span<const UiScreen> screens,
                     std::span<const ingest::RetrievalTokenView> views, const TopKConfig& cfg);

struct Table1Row {
  std::string method;
  TopKResult result;
};

/// Header "method\tTop-1\tTop-10" (one column per k), percentages with two decimals.
std::string format_table1(std::span<const Table1Row> rows);

}  // namespace mockforge::retrieval
