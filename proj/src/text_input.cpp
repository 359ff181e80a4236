#include "mockforge/text_input.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

namespace mockforge::nn {

using namespace mockforge::tensor;
using textfeat::ProviderMode;

TextInputLayer::TextInputLayer(ParameterStore& params, const std::string& name,
                               std::shared_ptr<const textfeat::EmbeddingProvider> provider, std::size_t hidden,
                               Rng& rng)
    : provider_(std::move(provider)), hidden_(hidden) {
  if (!provider_) throw UsageError("text input layer needs an embedding provider");
  if (provider_->mode() == ProviderMode::learned_table) {
    const std::size_t rows = provider_->vocab_size() + 1;
    const auto init = provider_->table();
    const bool reuse = provider_->dim() == hidden && init.size() == provider_->vocab_size() * hidden &&
                       std::any_of(init.begin(), init.end(), [](float v) { return v != 0.0f; });
    if (reuse) {
      std::vector<double> v(rows * hidden, 0.0);
      std::copy(init.begin(), init.end(), v.begin());
      table_ = params.add(name + ".table", Tensor::from({rows, hidden}, std::move(v)));
    } else {
      table_ = params.add_xavier(name + ".table", {rows, hidden}, rng);
    }
  } else {
    projection_ = Linear::create(params, name + ".proj", provider_->dim() + 1, hidden, rng);
  }
}

TextInputLayer::Batch TextInputLayer::operator()(const std::vector<textfeat::TokenSequence>& batch,
                                                 std::size_t max_tokens) const {
  const std::size_t b = batch.size();
  std::size_t longest = 0;
  std::vector<std::size_t> lengths(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t n = batch[i].size();
    if (n > max_tokens) {
      spdlog::warn("text of {} tokens truncated to {}", n, max_tokens);
      n = max_tokens;
    }
    lengths[i] = n + 1;
    longest = std::max(longest, n);
  }
  const std::size_t t = longest + 1;
  Batch out;
  out.mask = SequenceMask::from_lengths(lengths, t);

  if (provider_->mode() == ProviderMode::learned_table) {
    const int start = static_cast<int>(provider_->vocab_size());
    std::vector<int> ids(b * t, 0);
    for (std::size_t i = 0; i < b; ++i) {
      ids[i * t] = start;
      textfeat::TokenSequence seq = batch[i];
      seq.tokens.resize(lengths[i] - 1);
      const auto tok = provider_->token_ids(seq);
      std::copy(tok.begin(), tok.end(), ids.begin() + static_cast<std::ptrdiff_t>(i * t + 1));
    }
    out.inputs = reshape(embedding(table_, ids), {b, t, hidden_});
    return out;
  }

  const std::size_t d = provider_->dim();
  const std::size_t width = d + 1;
  std::vector<double> feats(b * t * width, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    feats[(i * t) * width + d] = 1.0;
    if (lengths[i] <= 1) continue;
    textfeat::TokenSequence seq = batch[i];
    seq.tokens.resize(lengths[i] - 1);
    const auto vecs = provider_->embed_tokens(seq);
    for (std::size_t p = 0; p < vecs.size(); ++p) {
      std::copy(vecs[p].begin(), vecs[p].end(), feats.begin() + static_cast<std::ptrdiff_t>((i * t + 1 + p) * width));
    }
  }
  out.inputs = reshape(projection_(Tensor::from({b * t, width}, std::move(feats))), {b, t, hidden_});
  return out;
}

}  // namespace mockforge::nn
