#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mockforge/core.hpp"

namespace mockforge::textfeat {

using EmbeddingVector = std::vector<float>;

struct TokenSequence {
  std::vector<std::string> tokens;
  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  std::string joined() const;
};

class MissingEmbedding : public DataError {
 public:
  using DataError::DataError;
};

/// Lower-case, whitespace split; every ASCII punctuation character becomes its own token.
TokenSequence tokenize(std::string_view text);

enum class ProviderMode { hashed_tfidf, file_backed, learned_table };

std::string_view to_string(ProviderMode m);

inline constexpr std::uint64_t kDefaultHashSeed = 0x9e3779b97f4a7c15ULL;
inline constexpr std::size_t kDefaultDim = 64;
inline constexpr std::size_t kBertDim = 768;

enum class EmbeddingKeyKind : std::uint32_t { sentence = 0, token = 1 };

struct EmbeddingFile {
  std::uint32_t dim = 0;
  EmbeddingKeyKind key_kind = EmbeddingKeyKind::sentence;
  std::vector<std::string> keys;
  std::vector<float> values;  // keys.size() x dim
};

EmbeddingFile read_embedding_file(const std::filesystem::path& path);
void write_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file);

/// Text embedding provider standing in for a pretrained sentence encoder.
///
/// hashed-tfidf: each token maps to a signed one-hot slot (h(token) mod dim,
///   sign from a second hash) scaled by idf(token) = log((N+1)/(df+1)) + 1.
///   Sentence vectors are the L2-normalized sum of token vectors.
/// file-backed: vectors read verbatim from an EMBV file.
/// learned-table: a token vocabulary plus a dense table; row 0 is <unk>.
///
/// Immutable after construction; embedding calls are safe to run concurrently.
class EmbeddingProvider {
 public:
  static EmbeddingProvider hashed_tfidf(std::span<const TokenSequence> corpus, std::size_t dim = kDefaultDim,
                                        std::uint64_t seed = kDefaultHashSeed);
  static EmbeddingProvider file_backed(const std::filesystem::path& path);
  static EmbeddingProvider file_backed(EmbeddingFile file);
  /// Vocabulary from tokens seen at least `min_count` times; the table starts at
  /// zeros (fill it with set_table).
  static EmbeddingProvider learned_table(std::span<const TokenSequence> corpus, std::size_t dim,
                                         std::size_t min_count = 1);

  ProviderMode mode() const { return mode_; }
  std::size_t dim() const { return dim_; }

  std::vector<EmbeddingVector> embed_tokens(const TokenSequence& seq) const;
  EmbeddingVector pool_description(const TokenSequence& seq) const;
  EmbeddingVector pool_text(std::string_view text) const { return pool_description(tokenize(text)); }

  // hashed-tfidf internals, exposed for tests
  std::size_t hash_slot(std::string_view token) const;
  float hash_sign(std::string_view token) const;
  double idf(std::string_view token) const;
  std::size_t document_count() const { return doc_count_; }

  // learned-table
  std::size_t vocab_size() const { return vocab_.size(); }
  std::vector<int> token_ids(const TokenSequence& seq) const;
  std::span<const float> table() const { return table_; }
  void set_table(std::vector<float> table);

  /// Serializable description; file-backed providers embed their vectors.
  nlohmann::json to_json() const;
  static EmbeddingProvider from_json(const nlohmann::json& j);

 private:
  ProviderMode mode_ = ProviderMode::hashed_tfidf;
  std::size_t dim_ = kDefaultDim;
  std::uint64_t seed_ = kDefaultHashSeed;
  std::size_t doc_count_ = 0;
  std::unordered_map<std::string, std::uint32_t> doc_freq_;
  // file-backed
  EmbeddingKeyKind key_kind_ = EmbeddingKeyKind::sentence;
  std::unordered_map<std::string, std::size_t> rows_;
  std::vector<float> file_values_;
  std::vector<std::string> file_keys_;
  // learned-table
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> vocab_index_;
  std::vector<float> table_;
};

/// L2 normalization in place; zero vectors are left untouched.
void l2_normalize(std::span<float> v);

}  // namespace mockforge::textfeat
