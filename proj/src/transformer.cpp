#include "mockforge/transformer.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace mockforge::nn {

using namespace mockforge::tensor;
using nlohmann::json;

void TransformerConfig::validate() const {
  if (hidden == 0 || intermediate == 0 || layers == 0 || heads == 0 || max_len == 0) {
    throw UsageError("transformer config: sizes must be positive");
  }
  if (hidden % heads != 0) {
    throw UsageError("transformer config: hidden " + std::to_string(hidden) + " not divisible by heads " +
                     std::to_string(heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) throw UsageError("transformer config: dropout must be in [0, 1)");
}

json TransformerConfig::to_json() const {
  return {{"hidden", hidden}, {"intermediate", intermediate}, {"layers", layers},
          {"heads", heads},   {"max_len", max_len},           {"dropout", dropout}};
}

TransformerConfig TransformerConfig::from_json(const json& j) {
  TransformerConfig c;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.intermediate = j.at("intermediate").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.validate();
  return c;
}

Linear Linear::create(ParameterStore& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  Linear l;
  l.weight = params.add_xavier(name + ".w", {in, out}, rng);
  l.bias = params.add_constant(name + ".b", {out}, 0.0);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

LayerNorm LayerNorm::create(ParameterStore& params, const std::string& name, std::size_t dim) {
  return {params.add_constant(name + ".gamma", {dim}, 1.0), params.add_constant(name + ".beta", {dim}, 0.0)};
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }

SequenceMask SequenceMask::all_valid(std::size_t batch, std::size_t length) {
  return {batch, length, std::vector<std::uint8_t>(batch * length, 1)};
}

SequenceMask SequenceMask::from_lengths(const std::vector<std::size_t>& lengths, std::size_t length) {
  SequenceMask m{lengths.size(), length, std::vector<std::uint8_t>(lengths.size() * length, 0)};
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    for (std::size_t t = 0; t < std::min(lengths[b], length); ++t) m.valid[b * length + t] = 1;
  }
  return m;
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& params, const std::string& name, std::size_t hidden,
                                       std::size_t heads, Rng& rng)
    : q_(Linear::create(params, name + ".q", hidden, hidden, rng)),
      k_(Linear::create(params, name + ".k", hidden, hidden, rng)),
      v_(Linear::create(params, name + ".v", hidden, hidden, rng)),
      o_(Linear::create(params, name + ".o", hidden, hidden, rng)),
      hidden_(hidden),
      heads_(heads) {}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory, const SequenceMask& memory_mask,
                                      bool causal) const {
  const std::size_t batch = query.dim(0);
  const std::size_t tq = query.dim(1);
  const std::size_t tk = memory.dim(1);
  const std::size_t dh = hidden_ / heads_;
  if (memory.dim(0) != batch || memory_mask.batch != batch || memory_mask.length != tk) {
    throw ShapeError("attention: query " + shape_str(query.shape()) + " vs memory " + shape_str(memory.shape()));
  }
  auto split = [&](const Tensor& x, std::size_t len) {
    // [B, T, H] -> [B*heads, T, dh]
    return reshape(permute_0213(reshape(x, {batch, len, heads_, dh})), {batch * heads_, len, dh});
  };
  const Tensor q = split(q_(query), tq);
  const Tensor k = split(k_(memory), tk);
  const Tensor v = split(v_(memory), tk);
  Tensor scores = scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<std::uint8_t> blocked(batch * heads_ * tq * tk, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads_; ++h) {
      for (std::size_t i = 0; i < tq; ++i) {
        std::uint8_t* row = blocked.data() + ((b * heads_ + h) * tq + i) * tk;
        for (std::size_t j = 0; j < tk; ++j) row[j] = (!memory_mask.at(b, j) || (causal && j > i)) ? 1 : 0;
      }
    }
  }
  const Tensor weights = softmax(masked_fill(scores, blocked, -1e9));
  const Tensor ctx = bmm(weights, v);  // [B*heads, T, dh]
  const Tensor merged = reshape(permute_0213(reshape(ctx, {batch, heads_, tq, dh})), {batch, tq, hidden_});
  return o_(merged);
}

EncoderLayer::EncoderLayer(ParameterStore& params, const std::string& name, const TransformerConfig& cfg, Rng& rng)
    : ln_attn_(LayerNorm::create(params, name + ".ln_attn", cfg.hidden)),
      ln_ffn_(LayerNorm::create(params, name + ".ln_ffn", cfg.hidden)),
      attn_(params, name + ".attn", cfg.hidden, cfg.heads, rng),
      ffn_{Linear::create(params, name + ".ffn_in", cfg.hidden, cfg.intermediate, rng),
           Linear::create(params, name + ".ffn_out", cfg.intermediate, cfg.hidden, rng)},
      dropout_(cfg.dropout) {}

namespace {

Tensor maybe_dropout(const Tensor& x, double p, const ForwardContext& ctx) {
  if (!ctx.training || ctx.rng == nullptr || p <= 0.0) return x;
  return dropout(x, p, *ctx.rng);
}

void check_length(std::size_t len, const TransformerConfig& cfg, const char* what) {
  if (len == 0) throw DataError(std::string(what) + ": empty sequence");
  if (len > cfg.max_len) {
    throw DataError(std::string(what) + ": sequence length " + std::to_string(len) + " exceeds max_len " +
                    std::to_string(cfg.max_len));
  }
}

Tensor add_positions(const Tensor& x) {
  const std::size_t batch = x.dim(0);
  const std::size_t len = x.dim(1);
  const std::size_t hidden = x.dim(2);
  const auto table = sinusoidal_positions(len, hidden);
  std::vector<double> tiled(batch * len * hidden);
  for (std::size_t b = 0; b < batch; ++b) std::copy(table.begin(), table.end(), tiled.begin() + b * len * hidden);
  return add(x, Tensor::from(x.shape(), std::move(tiled)));
}

}  // namespace

Tensor EncoderLayer::operator()(const Tensor& x, const SequenceMask& mask, const ForwardContext& ctx) const {
  const Tensor normed = ln_attn_(x);
  const Tensor h = add(x, maybe_dropout(attn_(normed, normed, mask, false), dropout_, ctx));
  return add(h, maybe_dropout(ffn_(ln_ffn_(h)), dropout_, ctx));
}

DecoderLayer::DecoderLayer(ParameterStore& params, const std::string& name, const TransformerConfig& cfg, Rng& rng)
    : ln_self_(LayerNorm::create(params, name + ".ln_self", cfg.hidden)),
      ln_cross_(LayerNorm::create(params, name + ".ln_cross", cfg.hidden)),
      ln_ffn_(LayerNorm::create(params, name + ".ln_ffn", cfg.hidden)),
      self_attn_(params, name + ".self_attn", cfg.hidden, cfg.heads, rng),
      cross_attn_(params, name + ".cross_attn", cfg.hidden, cfg.heads, rng),
      ffn_{Linear::create(params, name + ".ffn_in", cfg.hidden, cfg.intermediate, rng),
           Linear::create(params, name + ".ffn_out", cfg.intermediate, cfg.hidden, rng)},
      dropout_(cfg.dropout) {}

Tensor DecoderLayer::operator()(const Tensor& x, const SequenceMask& target_mask, const Tensor& memory,
                                const SequenceMask& memory_mask, const ForwardContext& ctx) const {
  const Tensor normed = ln_self_(x);
  Tensor h = add(x, maybe_dropout(self_attn_(normed, normed, target_mask, true), dropout_, ctx));
  h = add(h, maybe_dropout(cross_attn_(ln_cross_(h), memory, memory_mask, false), dropout_, ctx));
  return add(h, maybe_dropout(ffn_(ln_ffn_(h)), dropout_, ctx));
}

TransformerEncoder::TransformerEncoder(ParameterStore& params, const std::string& name, const TransformerConfig& cfg,
                                       Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t i = 0; i < cfg.layers; ++i) layers_.emplace_back(params, name + ".layer" + std::to_string(i), cfg, rng);
  final_norm_ = LayerNorm::create(params, name + ".final_norm", cfg.hidden);
}

Tensor TransformerEncoder::operator()(const Tensor& inputs, const SequenceMask& mask, const ForwardContext& ctx) const {
  if (inputs.rank() != 3 || inputs.dim(2) != cfg_.hidden) {
    throw ShapeError("encoder input must be [B, T, " + std::to_string(cfg_.hidden) + "], got " +
                     shape_str(inputs.shape()));
  }
  check_length(inputs.dim(1), cfg_, "encoder");
  Tensor x = maybe_dropout(add_positions(inputs), cfg_.dropout, ctx);
  for (const auto& layer : layers_) x = layer(x, mask, ctx);
  return final_norm_(x);
}

TransformerDecoder::TransformerDecoder(ParameterStore& params, const std::string& name, const TransformerConfig& cfg,
                                       Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t i = 0; i < cfg.layers; ++i) layers_.emplace_back(params, name + ".layer" + std::to_string(i), cfg, rng);
  final_norm_ = LayerNorm::create(params, name + ".final_norm", cfg.hidden);
}

Tensor TransformerDecoder::operator()(const Tensor& targets, const SequenceMask& target_mask, const Tensor& memory,
                                      const SequenceMask& memory_mask, const ForwardContext& ctx) const {
  if (targets.rank() != 3 || targets.dim(2) != cfg_.hidden) {
    throw ShapeError("decoder input must be [B, T, " + std::to_string(cfg_.hidden) + "], got " +
                     shape_str(targets.shape()));
  }
  check_length(targets.dim(1), cfg_, "decoder");
  if (memory.rank() != 3 || memory.dim(1) == 0) throw DataError("decoder: encoder side must be non-empty");
  Tensor x = maybe_dropout(add_positions(targets), cfg_.dropout, ctx);
  for (const auto& layer : layers_) x = layer(x, target_mask, memory, memory_mask, ctx);
  return final_norm_(x);
}

std::vector<double> sinusoidal_positions(std::size_t length, std::size_t hidden) {
  std::vector<double> table(length * hidden);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < hidden; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(hidden));
      const double angle = static_cast<double>(pos) * rate;
      table[pos * hidden + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

Tensor pooled_output(const Tensor& sequence) {
  if (sequence.rank() != 3 || sequence.dim(1) == 0) {
    throw ShapeError("pooled_output expects non-empty [B, T, H], got " + shape_str(sequence.shape()));
  }
  return reshape(slice(sequence, 1, 0, 1), {sequence.dim(0), sequence.dim(2)});
}

}  // namespace mockforge::nn
