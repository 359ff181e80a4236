#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mockforge/core.hpp"
#include "mockforge/text_input.hpp"
#include "mockforge/textfeat.hpp"
#include "mockforge/transformer.hpp"

namespace mockforge::generator {

using tensor::Rng;
using tensor::Tensor;

inline constexpr std::size_t kAttributes = 4;  // x, y, w, h
inline constexpr double kMinSigma = 1e-4;
inline constexpr double kMinSampledSide = 1.0 / 64.0;
inline constexpr double kDeterministicTau = 1e-6;

/// One step's output distribution. Head rows are laid out per attribute as
/// [pi (M) | mu (M) | log sigma (M)], x then y, w, h, followed by the class logits.
struct MdnParams {
  std::array<std::vector<double>, kAttributes> pi;
  std::array<std::vector<double>, kAttributes> mu;
  std::array<std::vector<double>, kAttributes> log_sigma;
  std::vector<double> class_logits;

  std::size_t mixtures() const { return pi[0].size(); }
  static std::size_t row_width(std::size_t mixtures, std::size_t classes) {
    return kAttributes * 3 * mixtures + classes;
  }
  static MdnParams from_row(std::span<const double> row, std::size_t mixtures, std::size_t classes);
  std::vector<double> to_row() const;
};

/// What one decoder position should predict: a class, plus geometry for anything
/// that is not a control token.
struct StepTarget {
  int class_id = 0;
  std::optional<std::array<double, kAttributes>> dims;

  static StepTarget element(const ElementBox& e) { return {e.class_id, std::array<double, kAttributes>{e.x, e.y, e.w, e.h}}; }
  static StepTarget control(int class_id) { return {class_id, std::nullopt}; }
};

/// Batched NLL over head rows [N, row_width]. Rows with valid == 0 contribute
/// exactly 0. Returns the sum over rows. geometry_weight scales the GMM terms
/// (1 = the plain NLL).
Tensor mdn_nll(const Tensor& head, std::span<const StepTarget> targets, std::span<const std::uint8_t> valid,
               std::size_t mixtures, double geometry_weight = 1.0);

/// Single-step NLL: -log softmax(c)[class] minus the GMM log densities when
/// the target carries geometry.
double mdn_nll(const MdnParams& params, const StepTarget& target);

struct GeneratorConfig {
  nn::TransformerConfig encoder{.hidden = 64, .intermediate = 256, .layers = 6, .heads = 4, .max_len = 64, .dropout = 0.1};
  nn::TransformerConfig decoder{.hidden = 64, .intermediate = 256, .layers = 6, .heads = 4, .max_len = 130, .dropout = 0.1};
  std::size_t mixtures = 5;

  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

/// Encoded prompt, reused across decoding steps.
struct TextMemory {
  Tensor states;  // [B, S, H]
  nn::SequenceMask mask;
};

class GeneratorModel {
 public:
  GeneratorModel(GeneratorConfig cfg, std::shared_ptr<const textfeat::EmbeddingProvider> provider,
                 ClassVocabulary vocab, std::uint64_t seed);
  GeneratorModel(const GeneratorModel&) = delete;
  GeneratorModel& operator=(const GeneratorModel&) = delete;
  GeneratorModel(GeneratorModel&&) = default;
  GeneratorModel& operator=(GeneratorModel&&) = default;

  TextMemory encode_text(const std::vector<textfeat::TokenSequence>& prompts, const nn::ForwardContext& ctx = {}) const;

  /// u_i = Linear([x, y, w, h, e(class)]) for every box, [N, H].
  Tensor element_inputs(std::span<const ElementBox> elements) const;
  /// A START pseudo-element: zero geometry, START class.
  ElementBox start_element() const {
    ElementBox e;
    e.class_id = vocab_.start();
    return e;
  }

  /// Decoder over START-prefixed sequences. sequences[b] excludes START; the
  /// result is head rows [B, 1 + max_n, row_width].
  Tensor decode(const std::vector<std::vector<ElementBox>>& sequences, const TextMemory& memory,
                const nn::ForwardContext& ctx = {}) const;

  /// theta for the position after START, prefix[0..]. DataError if too long.
  MdnParams forward_step_distribution(std::span<const ElementBox> prefix, const textfeat::TokenSequence& text) const;
  MdnParams forward_step_distribution(std::span<const ElementBox> prefix, const TextMemory& memory) const;

  /// Summed NLL of START, u_1..u_n, EOS over every caption/sequence pair, plus the
  /// number of predicted steps (n + 1 each).
  std::pair<Tensor, std::size_t> sequence_nll(const std::vector<textfeat::TokenSequence>& prompts,
                                              const std::vector<std::vector<ElementBox>>& sequences,
                                              const nn::ForwardContext& ctx = {}, double geometry_weight = 1.0) const;

  const GeneratorConfig& config() const { return cfg_; }
  const ClassVocabulary& vocab() const { return vocab_; }
  const textfeat::EmbeddingProvider& provider() const { return *provider_; }
  std::shared_ptr<const textfeat::EmbeddingProvider> provider_ptr() const { return provider_; }
  tensor::ParameterStore& params() { return *params_; }
  const tensor::ParameterStore& params() const { return *params_; }
  /// Longest element sequence the decoder accepts (START and EOS take one slot each).
  std::size_t max_elements() const { return cfg_.decoder.max_len - 2; }

 private:
  GeneratorConfig cfg_;
  std::shared_ptr<const textfeat::EmbeddingProvider> provider_;
  ClassVocabulary vocab_;
  std::unique_ptr<tensor::ParameterStore> params_;
  nn::TextInputLayer text_input_;
  Tensor class_embedding_;  // [|V|, H]
  nn::Linear element_proj_;  // [4 + H] -> H
  nn::Linear head_;          // H -> row_width
  std::unique_ptr<nn::TransformerEncoder> encoder_;
  std::unique_ptr<nn::TransformerDecoder> decoder_;
};

struct GeneratorExample {
  std::vector<ElementBox> elements;  // canonical leaf view
  std::vector<textfeat::TokenSequence> captions;
};

/// Leaf views + tokenized captions. Screens with no leaves or too many for the
/// decoder are skipped and counted.
struct PreparedGeneratorData {
  std::vector<GeneratorExample> examples;
  std::size_t skipped_empty = 0;
  std::size_t skipped_long = 0;
};
PreparedGeneratorData prepare_generator_data(std::span<const UiScreen> screens, std::size_t max_elements);

struct GeneratorTrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 3;  // stale validation epochs before the next lr stage
  std::vector<double> lr_stages{1e-3, 1e-4, 1e-5};
  std::size_t max_steps = 0;  // 0 = unlimited
  double max_seconds = 0.0;   // 0 = unlimited
  std::uint64_t seed = 1;
  // Scales the geometry terms of the training objective. The class and geometry
  // factors are separate heads, so the optimum is unchanged; a value below 1
  // keeps the 1/sigma-sized geometry gradients from drowning the class head.
  double geometry_weight = 1.0;
};

struct GeneratorEpoch {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;       // mean training objective per predicted step
  double validation_loss = 0.0;  // mean NLL per predicted step
};

struct GeneratorTrainLog {
  std::vector<double> step_losses;
  std::vector<GeneratorEpoch> epochs;
  std::size_t best_epoch = 0;
  std::size_t skipped_empty = 0;
  std::size_t skipped_long = 0;
  double seconds = 0.0;
  nlohmann::json to_json() const;
};

/// Teacher forcing with Adam and the staged learning rate. Each stage runs until
/// validation stops improving for `patience` epochs, then training resumes from
/// the best weights at the next rate. The best weights are restored at the end.
GeneratorTrainLog train_generator(GeneratorModel& model, const PreparedGeneratorData& train,
                                  const PreparedGeneratorData& validation, const GeneratorTrainConfig& cfg);

/// Mean per-step NLL using each screen's first caption, without dropout.
double evaluate_generator(const GeneratorModel& model, std::span<const GeneratorExample> examples,
                          std::size_t batch_size = 32);

// ---- sampling ----------------------------------------------------------------

struct SamplerConfig {
  double temperature = 0.1;
  std::size_t max_elements = 128;
  std::uint64_t seed = 0;
  std::size_t n_samples = 1;

  void validate() const;
};

/// Class from softmax(c / tau) (START and PAD excluded); nullopt means EOS.
/// Geometry per attribute from a component of softmax(pi / tau) and N(mu, tau * sigma^2),
/// clamped to w, h in [1/64, 1], y in [0, 1 - h] and x in [0, 1 - w].
std::optional<ElementBox> sample_element(const MdnParams& params, double tau, Rng& rng, const ClassVocabulary& vocab);

using StepFunction = std::function<MdnParams(std::span<const ElementBox> prefix)>;

/// The autoregressive loop on top of any step distribution: pins first, then
/// samples until EOS or max_elements. Returns elements in generation order.
std::vector<ElementBox> sample_sequence(const StepFunction& step, std::span<const ElementBox> pins,
                                        const SamplerConfig& cfg, Rng& rng, const ClassVocabulary& vocab);

/// One candidate, seeded with cfg.seed. Pins become a canonically sorted prefix;
/// the output is re-sorted canonically.
MockupCandidate sample_ui(const GeneratorModel& model, const std::string& prompt, const SamplerConfig& cfg,
                          std::span<const ElementBox> pins = {});

/// cfg.n_samples candidates with seeds cfg.seed, cfg.seed + 1, ...
std::vector<MockupCandidate> sample_uis(const GeneratorModel& model, const std::string& prompt,
                                        const SamplerConfig& cfg, std::span<const ElementBox> pins = {});

/// Shannon entropy (nats) of softmax(logits / tau).
double tempered_entropy(std::span<const double> logits, double tau);

}  // namespace mockforge::generator
