#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mockforge/tensor.hpp"

namespace mockforge::nn {

using tensor::ParameterStore;
using tensor::Rng;
using tensor::Tensor;

struct TransformerConfig {
  std::size_t hidden = 64;
  std::size_t intermediate = 256;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t max_len = 512;
  double dropout = 0.1;

  /// Throws UsageError when hidden is not divisible by heads or a size is zero.
  void validate() const;
  nlohmann::json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);
  bool operator==(const TransformerConfig&) const = default;
};

/// Dropout is active only when training and an rng is supplied.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear create(ParameterStore& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(ParameterStore& params, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const;
};

/// Per-batch validity of sequence positions, row-major [batch, length]; 1 = real token.
struct SequenceMask {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::uint8_t> valid;

  static SequenceMask all_valid(std::size_t batch, std::size_t length);
  static SequenceMask from_lengths(const std::vector<std::size_t>& lengths, std::size_t length);
  bool at(std::size_t b, std::size_t t) const { return valid[b * length + t] != 0; }
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& params, const std::string& name, std::size_t hidden, std::size_t heads,
                     Rng& rng);

  /// query [B, T, H] attends to memory [B, S, H]; masked keys and (when causal)
  /// keys after the query position receive zero weight.
  Tensor operator()(const Tensor& query, const Tensor& memory, const SequenceMask& memory_mask, bool causal) const;

 private:
  Linear q_, k_, v_, o_;
  std::size_t hidden_ = 0;
  std::size_t heads_ = 0;
};

struct FeedForward {
  Linear in;
  Linear out;
  Tensor operator()(const Tensor& x) const { return out(tensor::relu(in(x))); }
};

/// Pre-norm encoder block: x + SelfAttn(LN(x)), then x + FFN(LN(x)).
class EncoderLayer {
 public:
  EncoderLayer(ParameterStore& params, const std::string& name, const TransformerConfig& cfg, Rng& rng);
  Tensor operator()(const Tensor& x, const SequenceMask& mask, const ForwardContext& ctx) const;

 private:
  LayerNorm ln_attn_, ln_ffn_;
  MultiHeadAttention attn_;
  FeedForward ffn_;
  double dropout_;
};

/// Pre-norm decoder block with causal self-attention and cross-attention.
class DecoderLayer {
 public:
  DecoderLayer(ParameterStore& params, const std::string& name, const TransformerConfig& cfg, Rng& rng);
  Tensor operator()(const Tensor& x, const SequenceMask& target_mask, const Tensor& memory,
                    const SequenceMask& memory_mask, const ForwardContext& ctx) const;

 private:
  LayerNorm ln_self_, ln_cross_, ln_ffn_;
  MultiHeadAttention self_attn_, cross_attn_;
  FeedForward ffn_;
  double dropout_;
};

class TransformerEncoder {
 public:
  TransformerEncoder(ParameterStore& params, const std::string& name, const TransformerConfig& cfg, Rng& rng);

  /// inputs [B, T, H] (already projected to hidden width); sinusoidal positions are added here.
  Tensor operator()(const Tensor& inputs, const SequenceMask& mask, const ForwardContext& ctx = {}) const;
  const TransformerConfig& config() const { return cfg_; }

 private:
  TransformerConfig cfg_;
  std::vector<EncoderLayer> layers_;
  LayerNorm final_norm_;
};

class TransformerDecoder {
 public:
  TransformerDecoder(ParameterStore& params, const std::string& name, const TransformerConfig& cfg, Rng& rng);

  /// Output position i depends on target positions <= i and all unmasked memory positions.
  Tensor operator()(const Tensor& targets, const SequenceMask& target_mask, const Tensor& memory,
                    const SequenceMask& memory_mask, const ForwardContext& ctx = {}) const;
  const TransformerConfig& config() const { return cfg_; }

 private:
  TransformerConfig cfg_;
  std::vector<DecoderLayer> layers_;
  LayerNorm final_norm_;
};

/// Standard sin/cos table, [length, hidden].
std::vector<double> sinusoidal_positions(std::size_t length, std::size_t hidden);

/// Position-0 vectors of [B, T, H] -> [B, H].
Tensor pooled_output(const Tensor& sequence);

}  // namespace mockforge::nn
