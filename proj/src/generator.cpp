#include "mockforge/generator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mockforge/ingest.hpp"

namespace mockforge::generator {

using namespace mockforge::tensor;
using nlohmann::json;

namespace {
constexpr double kMinImprovement = 1e-6;  // smaller validation gains count as a plateau
}

MdnParams MdnParams::from_row(std::span<const double> row, std::size_t mixtures, std::size_t classes) {
  if (row.size() != row_width(mixtures, classes)) {
    throw ShapeError(fmt::format("MDN row has {} values, expected {}", row.size(), row_width(mixtures, classes)));
  }
  MdnParams p;
  auto it = row.begin();
  auto take = [&](std::vector<double>& dst, std::size_t n) {
    dst.assign(it, it + static_cast<std::ptrdiff_t>(n));
    it += static_cast<std::ptrdiff_t>(n);
  };
  for (std::size_t a = 0; a < kAttributes; ++a) {
    take(p.pi[a], mixtures);
    take(p.mu[a], mixtures);
    take(p.log_sigma[a], mixtures);
  }
  take(p.class_logits, classes);
  return p;
}

std::vector<double> MdnParams::to_row() const {
  std::vector<double> row;
  row.reserve(row_width(mixtures(), class_logits.size()));
  for (std::size_t a = 0; a < kAttributes; ++a) {
    row.insert(row.end(), pi[a].begin(), pi[a].end());
    row.insert(row.end(), mu[a].begin(), mu[a].end());
    row.insert(row.end(), log_sigma[a].begin(), log_sigma[a].end());
  }
  row.insert(row.end(), class_logits.begin(), class_logits.end());
  return row;
}

Tensor mdn_nll(const Tensor& head, std::span<const StepTarget> targets, std::span<const std::uint8_t> valid,
               std::size_t mixtures, double geometry_weight) {
  if (head.rank() != 2) throw ShapeError("mdn_nll expects [N, W] head rows, got " + shape_str(head.shape()));
  const std::size_t n = head.dim(0), width = head.dim(1), m = mixtures;
  if (m == 0 || width <= kAttributes * 3 * m) throw ShapeError("MDN head too narrow for the mixture count");
  if (targets.size() != n || valid.size() != n) throw ShapeError("one target and validity flag per head row");
  const std::size_t classes = width - kAttributes * 3 * m;

  std::vector<int> cls(n, 0);
  std::vector<double> class_mask(n, 0.0), geo_mask(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    if (targets[i].class_id < 0 || static_cast<std::size_t>(targets[i].class_id) >= classes) {
      throw DataError(fmt::format("target class {} outside the {}-class head", targets[i].class_id, classes));
    }
    cls[i] = targets[i].class_id;
    class_mask[i] = 1.0;
    geo_mask[i] = targets[i].dims ? geometry_weight : 0.0;
  }

  const double log_min_sigma = std::log(kMinSigma);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Tensor geo_ll;
  for (std::size_t a = 0; a < kAttributes; ++a) {
    const std::size_t base = a * 3 * m;
    const Tensor pi = slice(head, 1, base, base + m);
    const Tensor mu = slice(head, 1, base + m, base + 2 * m);
    const Tensor s = clamp_min(slice(head, 1, base + 2 * m, base + 3 * m), log_min_sigma);
    std::vector<double> t(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (geo_mask[i] != 0.0) std::fill_n(t.begin() + static_cast<std::ptrdiff_t>(i * m), m, (*targets[i].dims)[a]);
    }
    const Tensor z = mul(sub(Tensor::from({n, m}, std::move(t)), mu), exp(scale(s, -1.0)));
    const Tensor log_comp = add_scalar(sub(sub(log_softmax(pi), scale(mul(z, z), 0.5)), s), -half_log_2pi);
    const Tensor ll = logsumexp(log_comp);
    geo_ll = geo_ll.defined() ? add(geo_ll, ll) : ll;
  }
  const Tensor class_ll = pick(log_softmax(slice(head, 1, kAttributes * 3 * m, width)), cls);
  const Tensor total = add(sum(mul(class_ll, Tensor::from({n}, std::move(class_mask)))),
                           sum(mul(geo_ll, Tensor::from({n}, std::move(geo_mask)))));
  return scale(total, -1.0);
}

double mdn_nll(const MdnParams& params, const StepTarget& target) {
  NoGradGuard guard;
  const auto row = params.to_row();
  const std::uint8_t valid = 1;
  return mdn_nll(Tensor::from({1, row.size()}, row), std::span(&target, 1), std::span(&valid, 1), params.mixtures())
      .item();
}

// ---- model -------------------------------------------------------------------

void GeneratorConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.hidden != decoder.hidden) throw UsageError("encoder and decoder must share the hidden width");
  if (mixtures == 0) throw UsageError("mixture count must be at least 1");
  if (decoder.max_len < 2) throw UsageError("decoder max_len must be at least 2");
}

json GeneratorConfig::to_json() const {
  return {{"encoder", encoder.to_json()}, {"decoder", decoder.to_json()}, {"mixtures", mixtures}};
}

GeneratorConfig GeneratorConfig::from_json(const json& j) {
  GeneratorConfig c{nn::TransformerConfig::from_json(j.at("encoder")), nn::TransformerConfig::from_json(j.at("decoder")),
                    j.at("mixtures").get<std::size_t>()};
  c.validate();
  return c;
}

GeneratorModel::GeneratorModel(GeneratorConfig cfg, std::shared_ptr<const textfeat::EmbeddingProvider> provider,
                               ClassVocabulary vocab, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      provider_(std::move(provider)),
      vocab_(std::move(vocab)),
      params_(std::make_unique<ParameterStore>()) {
  cfg_.validate();
  if (vocab_.start() < 0 || vocab_.eos() < 0 || vocab_.pad() < 0) {
    throw UsageError("class vocabulary lacks START/EOS/PAD");
  }
  Rng rng(seed);
  const std::size_t h = cfg_.decoder.hidden;
  text_input_ = nn::TextInputLayer(*params_, "text.input", provider_, h, rng);
  class_embedding_ = params_->add_xavier("decoder.class_embedding", {vocab_.size(), h}, rng);
  element_proj_ = nn::Linear::create(*params_, "decoder.element_proj", kAttributes + h, h, rng);
  head_ = nn::Linear::create(*params_, "decoder.mdn_head", h, MdnParams::row_width(cfg_.mixtures, vocab_.size()), rng);
  encoder_ = std::make_unique<nn::TransformerEncoder>(*params_, "text.encoder", cfg_.encoder, rng);
  decoder_ = std::make_unique<nn::TransformerDecoder>(*params_, "decoder", cfg_.decoder, rng);
}

TextMemory GeneratorModel::encode_text(const std::vector<textfeat::TokenSequence>& prompts,
                                       const nn::ForwardContext& ctx) const {
  auto in = text_input_(prompts, cfg_.encoder.max_len - 1);
  return {(*encoder_)(in.inputs, in.mask, ctx), std::move(in.mask)};
}

Tensor GeneratorModel::element_inputs(std::span<const ElementBox> elements) const {
  const std::size_t n = elements.size();
  std::vector<double> dims(n * kAttributes);
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = elements[i];
    if (!vocab_.contains(e.class_id)) throw DataError(fmt::format("class id {} not in vocabulary", e.class_id));
    dims[i * 4 + 0] = e.x;
    dims[i * 4 + 1] = e.y;
    dims[i * 4 + 2] = e.w;
    dims[i * 4 + 3] = e.h;
    ids[i] = e.class_id;
  }
  return element_proj_(concat({Tensor::from({n, kAttributes}, std::move(dims)), embedding(class_embedding_, ids)}, 1));
}

Tensor GeneratorModel::decode(const std::vector<std::vector<ElementBox>>& sequences, const TextMemory& memory,
                              const nn::ForwardContext& ctx) const {
  const std::size_t b = sequences.size();
  std::size_t longest = 0;
  for (const auto& s : sequences) longest = std::max(longest, s.size());
  const std::size_t t = longest + 1;
  if (t > cfg_.decoder.max_len) {
    throw DataError(fmt::format("{} elements exceed the decoder length {}", longest, cfg_.decoder.max_len));
  }
  ElementBox pad;
  pad.class_id = vocab_.pad();
  std::vector<ElementBox> flat(b * t, pad);
  std::vector<std::size_t> lengths(b);
  for (std::size_t i = 0; i < b; ++i) {
    flat[i * t] = start_element();
    std::copy(sequences[i].begin(), sequences[i].end(), flat.begin() + static_cast<std::ptrdiff_t>(i * t + 1));
    lengths[i] = sequences[i].size() + 1;
  }
  const std::size_t h = cfg_.decoder.hidden;
  const Tensor x = reshape(element_inputs(flat), {b, t, h});
  const Tensor y = (*decoder_)(x, nn::SequenceMask::from_lengths(lengths, t), memory.states, memory.mask, ctx);
  const Tensor rows = head_(reshape(y, {b * t, h}));
  return reshape(rows, {b, t, rows.dim(1)});
}

MdnParams GeneratorModel::forward_step_distribution(std::span<const ElementBox> prefix, const TextMemory& memory) const {
  NoGradGuard guard;
  const Tensor head = decode({std::vector<ElementBox>(prefix.begin(), prefix.end())}, memory);
  const std::size_t width = head.dim(2);
  const auto values = head.values();
  return MdnParams::from_row(values.subspan(prefix.size() * width, width), cfg_.mixtures, vocab_.size());
}

MdnParams GeneratorModel::forward_step_distribution(std::span<const ElementBox> prefix,
                                                    const textfeat::TokenSequence& text) const {
  NoGradGuard guard;
  return forward_step_distribution(prefix, encode_text({text}));
}

std::pair<Tensor, std::size_t> GeneratorModel::sequence_nll(const std::vector<textfeat::TokenSequence>& prompts,
                                                            const std::vector<std::vector<ElementBox>>& sequences,
                                                            const nn::ForwardContext& ctx,
                                                            double geometry_weight) const {
  if (prompts.size() != sequences.size()) throw UsageError("one prompt per element sequence required");
  const Tensor head = decode(sequences, encode_text(prompts, ctx), ctx);
  const std::size_t b = head.dim(0), t = head.dim(1), width = head.dim(2);
  std::vector<StepTarget> targets(b * t, StepTarget::control(vocab_.pad()));
  std::vector<std::uint8_t> valid(b * t, 0);
  std::size_t steps = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto& seq = sequences[i];
    for (std::size_t p = 0; p <= seq.size(); ++p) {
      targets[i * t + p] = p < seq.size() ? StepTarget::element(seq[p]) : StepTarget::control(vocab_.eos());
      valid[i * t + p] = 1;
    }
    steps += seq.size() + 1;
  }
  return {mdn_nll(reshape(head, {b * t, width}), targets, valid, cfg_.mixtures, geometry_weight), steps};
}

// ---- training ----------------------------------------------------------------

PreparedGeneratorData prepare_generator_data(std::span<const UiScreen> screens, std::size_t max_elements) {
  PreparedGeneratorData out;
  for (const auto& s : screens) {
    if (s.captions.empty()) continue;
    auto leaves = ingest::extract_leaf_view(s);
    if (leaves.empty()) {
      ++out.skipped_empty;
      continue;
    }
    if (leaves.size() > max_elements) {
      ++out.skipped_long;
      continue;
    }
    GeneratorExample ex{std::move(leaves), {}};
    for (const auto& c : s.captions) ex.captions.push_back(textfeat::tokenize(c));
    out.examples.push_back(std::move(ex));
  }
  if (out.skipped_empty || out.skipped_long) {
    spdlog::info("generator data: skipped {} screens without leaves and {} over {} leaves", out.skipped_empty,
                 out.skipped_long, max_elements);
  }
  return out;
}

json GeneratorTrainLog::to_json() const {
  json ep = json::array();
  for (const auto& e : epochs) {
    ep.push_back({{"epoch", e.epoch},
                  {"learning_rate", e.learning_rate},
                  {"train_loss", e.train_loss},
                  {"validation_loss", e.validation_loss}});
  }
  return {{"steps", step_losses.size()}, {"epochs", ep},         {"best_epoch", best_epoch},
          {"skipped_empty", skipped_empty}, {"skipped_long", skipped_long}, {"seconds", seconds}};
}

double evaluate_generator(const GeneratorModel& model, std::span<const GeneratorExample> examples,
                          std::size_t batch_size) {
  NoGradGuard guard;
  double total = 0.0;
  std::size_t steps = 0;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    std::vector<textfeat::TokenSequence> prompts;
    std::vector<std::vector<ElementBox>> seqs;
    for (std::size_t i = start; i < end; ++i) {
      prompts.push_back(examples[i].captions.front());
      seqs.push_back(examples[i].elements);
    }
    const auto [nll, n] = model.sequence_nll(prompts, seqs);
    total += nll.item();
    steps += n;
  }
  return steps ? total / static_cast<double>(steps) : std::numeric_limits<double>::quiet_NaN();
}

GeneratorTrainLog train_generator(GeneratorModel& model, const PreparedGeneratorData& train,
                                  const PreparedGeneratorData& validation, const GeneratorTrainConfig& cfg) {
  if (train.examples.empty()) throw DataError("no usable generator training screens");
  if (cfg.lr_stages.empty()) throw UsageError("at least one learning-rate stage required");
  if (cfg.batch_size == 0) throw UsageError("batch size must be positive");
  if (!(cfg.geometry_weight > 0.0)) throw UsageError("geometry weight must be positive");

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  Rng rng(cfg.seed);
  std::size_t stage = 0;
  Adam opt(model.params(), {.learning_rate = cfg.lr_stages[0]});
  GeneratorTrainLog log;
  log.skipped_empty = train.skipped_empty;
  log.skipped_long = train.skipped_long;
  double best = std::numeric_limits<double>::infinity();
  auto best_weights = snapshot(model.params());
  std::size_t stale = 0;
  bool stop = false;
  std::vector<std::size_t> order(train.examples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_nll = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size() && !stop; start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<textfeat::TokenSequence> prompts;
      std::vector<std::vector<ElementBox>> seqs;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = train.examples[order[i]];
        std::uniform_int_distribution<std::size_t> pick_caption(0, ex.captions.size() - 1);
        prompts.push_back(ex.captions[pick_caption(rng)]);
        seqs.push_back(ex.elements);
      }
      model.params().zero_grad();
      const auto [nll, steps] = model.sequence_nll(prompts, seqs, {true, &rng}, cfg.geometry_weight);
      const Tensor loss = scale(nll, 1.0 / static_cast<double>(steps));
      if (!std::isfinite(loss.item())) {
        throw NumericalError(fmt::format("generator loss is not finite at step {}", log.step_losses.size()));
      }
      backward(loss);
      opt.step();
      log.step_losses.push_back(loss.item());
      epoch_nll += nll.item();
      epoch_steps += steps;
      if (cfg.max_steps && log.step_losses.size() >= cfg.max_steps) stop = true;
      if (cfg.max_seconds > 0.0 && elapsed() > cfg.max_seconds) stop = true;
    }
    GeneratorEpoch rec{epoch, opt.learning_rate(), epoch_nll / static_cast<double>(std::max<std::size_t>(1, epoch_steps)),
                       0.0};
    rec.validation_loss =
        validation.examples.empty() ? rec.train_loss : evaluate_generator(model, validation.examples, cfg.batch_size);
    log.epochs.push_back(rec);
    spdlog::info("generator epoch {} lr {:g} train {:.4f} validation {:.4f}", epoch, rec.learning_rate, rec.train_loss,
                 rec.validation_loss);
    if (rec.validation_loss < best - kMinImprovement) {
      best = rec.validation_loss;
      best_weights = snapshot(model.params());
      log.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      if (stage + 1 == cfg.lr_stages.size()) break;
      ++stage;
      restore(model.params(), best_weights.first, best_weights.second);
      opt.set_learning_rate(cfg.lr_stages[stage]);
      stale = 0;
      spdlog::info("generator plateau: learning rate now {:g}", cfg.lr_stages[stage]);
    }
  }
  restore(model.params(), best_weights.first, best_weights.second);
  log.seconds = elapsed();
  return log;
}

// ---- sampling ----------------------------------------------------------------

void SamplerConfig::validate() const {
  if (!(temperature > 0.0) || temperature > 10.0) {
    throw UsageError(fmt::format("temperature must be in (0, 10], got {}", temperature));
  }
  if (n_samples == 0) throw UsageError("n_samples must be at least 1");
}

namespace {

// Index drawn from softmax(logits / tau) over allowed entries; argmax in the tau -> 0 limit.
std::size_t draw(std::span<const double> logits, double tau, Rng& rng, const std::vector<char>* allowed = nullptr) {
  auto ok = [&](std::size_t i) { return !allowed || (*allowed)[i]; };
  double top = -std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (ok(i) && logits[i] > top) {
      top = logits[i];
      arg = i;
    }
  }
  if (!std::isfinite(top)) throw NumericalError("no finite logits to sample from");
  if (tau <= kDeterministicTau) return arg;
  std::vector<double> w(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (ok(i)) total += w[i] = std::exp((logits[i] - top) / tau);
  }
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    if (u < w[i]) return i;
    u -= w[i];
  }
  return arg;
}

}  // namespace

std::optional<ElementBox> sample_element(const MdnParams& params, double tau, Rng& rng, const ClassVocabulary& vocab) {
  if (!(tau > 0.0)) throw UsageError("temperature must be positive");
  if (params.class_logits.size() != vocab.size()) throw ShapeError("class logits do not match the vocabulary");
  std::vector<char> allowed(vocab.size(), 1);
  allowed[static_cast<std::size_t>(vocab.start())] = 0;
  allowed[static_cast<std::size_t>(vocab.pad())] = 0;
  const auto cls = static_cast<int>(draw(params.class_logits, tau, rng, &allowed));
  if (cls == vocab.eos()) return std::nullopt;

  std::array<double, kAttributes> v{};
  for (std::size_t a = 0; a < kAttributes; ++a) {
    const std::size_t m = draw(params.pi[a], tau, rng);
    v[a] = params.mu[a][m];
    if (tau > kDeterministicTau) {
      const double sigma = std::max(std::exp(params.log_sigma[a][m]), kMinSigma);
      v[a] += std::sqrt(tau) * sigma * std::normal_distribution<double>(0.0, 1.0)(rng);
    }
    if (!std::isfinite(v[a])) throw NumericalError("sampled a non-finite coordinate");
  }
  ElementBox e;
  e.class_id = cls;
  e.w = std::clamp(v[2], kMinSampledSide, 1.0);
  e.h = std::clamp(v[3], kMinSampledSide, 1.0);
  e.x = std::clamp(v[0], 0.0, 1.0 - e.w);
  e.y = std::clamp(v[1], 0.0, 1.0 - e.h);
  return e;
}

std::vector<ElementBox> sample_sequence(const StepFunction& step, std::span<const ElementBox> pins,
                                        const SamplerConfig& cfg, Rng& rng, const ClassVocabulary& vocab) {
  cfg.validate();
  if (pins.size() > cfg.max_elements) {
    throw UsageError(fmt::format("{} pins exceed max_elements {}", pins.size(), cfg.max_elements));
  }
  std::vector<ElementBox> seq;
  for (const auto& p : canonical_sort(pins)) {
    if (!box_is_valid(p)) throw UsageError("pinned element has invalid geometry");
    if (!vocab.contains(p.class_id) || vocab.is_control(p.class_id)) throw UsageError("pinned element has a control class");
    ElementBox e = p;
    e.parent_idx.reset();
    e.is_leaf = true;
    seq.push_back(std::move(e));
  }
  while (seq.size() < cfg.max_elements) {
    auto e = sample_element(step(seq), cfg.temperature, rng, vocab);
    if (!e) break;
    seq.push_back(*e);
  }
  return seq;
}

MockupCandidate sample_ui(const GeneratorModel& model, const std::string& prompt, const SamplerConfig& cfg,
                          std::span<const ElementBox> pins) {
  NoGradGuard guard;
  SamplerConfig capped = cfg;
  capped.max_elements = std::min(cfg.max_elements, model.max_elements());
  if (pins.size() > capped.max_elements) {
    throw UsageError(fmt::format("{} pins exceed max_elements {}", pins.size(), capped.max_elements));
  }
  const TextMemory memory = model.encode_text({textfeat::tokenize(prompt)});
  Rng rng(cfg.seed);
  const auto seq = sample_sequence([&](std::span<const ElementBox> prefix) {
    return model.forward_step_distribution(prefix, memory);
  }, pins, capped, rng, model.vocab());
  MockupCandidate c;
  c.elements = canonical_sort(seq);
  c.prompt = prompt;
  c.method = Method::generator;
  c.seed = cfg.seed;
  return c;
}

std::vector<MockupCandidate> sample_uis(const GeneratorModel& model, const std::string& prompt,
                                        const SamplerConfig& cfg, std::span<const ElementBox> pins) {
  cfg.validate();
  std::vector<MockupCandidate> out;
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    SamplerConfig one = cfg;
    one.seed = cfg.seed + i;
    out.push_back(sample_ui(model, prompt, one, pins));
  }
  return out;
}

double tempered_entropy(std::span<const double> logits, double tau) {
  if (logits.empty()) return 0.0;
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp((l - top) / tau);
  double h = 0.0;
  for (double l : logits) {
    const double p = std::exp((l - top) / tau) / z;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace mockforge::generator
