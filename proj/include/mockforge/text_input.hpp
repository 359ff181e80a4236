#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mockforge/textfeat.hpp"
#include "mockforge/transformer.hpp"

namespace mockforge::nn {

/// Maps a batch of token sequences to hidden-wide encoder inputs [B, 1 + T, H].
/// Position 0 is a learned start slot whose output serves as the pooled vector.
///
/// Frozen providers (hashed-tfidf, file-backed) contribute fixed token vectors
/// followed by a learned projection; a learned-table provider contributes its
/// vocabulary and the table itself becomes a trainable parameter.
class TextInputLayer {
 public:
  TextInputLayer() = default;
  TextInputLayer(ParameterStore& params, const std::string& name, std::shared_ptr<const textfeat::EmbeddingProvider> provider,
                 std::size_t hidden, Rng& rng);

  struct Batch {
    Tensor inputs;  // [B, 1 + T, H]
    SequenceMask mask;
  };

  /// Sequences longer than max_tokens are truncated.
  Batch operator()(const std::vector<textfeat::TokenSequence>& batch, std::size_t max_tokens) const;

  const textfeat::EmbeddingProvider& provider() const { return *provider_; }
  const std::shared_ptr<const textfeat::EmbeddingProvider>& provider_ptr() const { return provider_; }

 private:
  std::shared_ptr<const textfeat::EmbeddingProvider> provider_;
  std::size_t hidden_ = 0;
  Linear projection_;  // frozen modes: [dim + 1, H]; the extra column flags the start slot
  Tensor table_;       // learned mode: [vocab + 1, H]; the last row is the start slot
};

}  // namespace mockforge::nn
