#include "mockforge/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mockforge/kernels.hpp"

namespace mockforge::retrieval {

using namespace mockforge::tensor;
using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "index files are little-endian");

namespace {

std::string id_key(const IndexId& id) {
  return id.screen_id + '\x1f' + (id.caption_idx ? std::to_string(*id.caption_idx) : std::string("-"));
}

bool better(IndexMetric m, double a, double b) { return m == IndexMetric::euclidean ? a < b : a > b; }

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("truncated index file " + path.string());
  return v;
}

constexpr std::uint32_t kNoCaption = 0xFFFFFFFFu;

}  // namespace

void VectorIndex::add(IndexId id, std::span<const float> vec) {
  if (vec.size() != dim_) {
    throw DataError(fmt::format("index row width {} does not match index dim {}", vec.size(), dim_));
  }
  auto key = id_key(id);
  if (seen_.contains(key)) throw DataError("duplicate index id " + id.screen_id);
  seen_.emplace(std::move(key), ids_.size());
  ids_.push_back(std::move(id));
  matrix_.insert(matrix_.end(), vec.begin(), vec.end());
}

std::vector<double> VectorIndex::scores(std::span<const float> query, bool parallel) const {
  if (query.size() != dim_) throw DataError(fmt::format("query width {} does not match index dim {}", query.size(), dim_));
  std::vector<double> out(size());
  if (metric_ == IndexMetric::dot) {
    (parallel ? kernels::row_dots_parallel : kernels::row_dots_serial)(matrix_.data(), size(), dim_, query.data(),
                                                                         out.data());
  } else {
    (parallel ? kernels::row_sqdist_parallel : kernels::row_sqdist_serial)(matrix_.data(), size(), dim_,
                                                                             query.data(), out.data());
    for (double& d : out) d = std::sqrt(d);
  }
  return out;
}

std::vector<VectorIndex::Hit> VectorIndex::search(std::span<const float> query, std::size_t k, bool parallel) const {
  if (ids_.empty()) throw DataError("search on an empty index");
  if (k == 0) throw UsageError("k must be at least 1");
  const auto s = scores(query, parallel);
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (s[a] != s[b]) return better(metric_, s[a], s[b]);
                      return a < b;
                    });
  std::vector<Hit> hits;
  hits.reserve(k);
  for (std::size_t i = 0; i < k; ++i) hits.push_back({order[i], s[order[i]]});
  return hits;
}

void VectorIndex::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write("UIIX", 4);
  put(out, static_cast<std::uint32_t>(metric_));
  put(out, static_cast<std::uint32_t>(dim_));
  put(out, static_cast<std::uint64_t>(ids_.size()));
  for (const auto& id : ids_) {
    put(out, static_cast<std::uint32_t>(id.screen_id.size()));
    out.write(id.screen_id.data(), static_cast<std::streamsize>(id.screen_id.size()));
    put(out, id.caption_idx.value_or(kNoCaption));
  }
  out.write(reinterpret_cast<const char*>(matrix_.data()), static_cast<std::streamsize>(matrix_.size() * sizeof(float)));
}

VectorIndex VectorIndex::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "UIIX") throw DataError(path.string() + " is not a UIIX index");
  const auto metric = get<std::uint32_t>(in, path);
  if (metric > 1) throw DataError("unknown index metric code " + std::to_string(metric));
  const auto dim = get<std::uint32_t>(in, path);
  const auto count = get<std::uint64_t>(in, path);
  VectorIndex idx(static_cast<IndexMetric>(metric), dim);
  std::vector<IndexId> ids;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    std::string sid(len, '\0');
    if (!in.read(sid.data(), len)) throw DataError("truncated index file " + path.string());
    const auto cap = get<std::uint32_t>(in, path);
    ids.push_back({std::move(sid), cap == kNoCaption ? std::nullopt : std::optional<std::uint32_t>(cap)});
  }
  std::vector<float> row(dim);
  for (auto& id : ids) {
    if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(dim * sizeof(float)))) {
      throw DataError("truncated index file " + path.string());
    }
    idx.add(std::move(id), row);
  }
  return idx;
}

ScreenCatalog::ScreenCatalog(std::span<const UiScreen> screens) {
  for (const auto& s : screens) entries_[s.screen_id] = {ingest::extract_leaf_view(s), s.captions};
}

const std::vector<ElementBox>& ScreenCatalog::leaves(const std::string& screen_id) const {
  const auto it = entries_.find(screen_id);
  if (it == entries_.end()) throw DataError("screen " + screen_id + " not in catalog");
  return it->second.leaves;
}

const std::vector<std::string>& ScreenCatalog::captions(const std::string& screen_id) const {
  const auto it = entries_.find(screen_id);
  if (it == entries_.end()) throw DataError("screen " + screen_id + " not in catalog");
  return it->second.captions;
}

VectorIndex text_index_build(std::span<const UiScreen> screens, const textfeat::EmbeddingProvider& provider) {
  VectorIndex idx(IndexMetric::euclidean, provider.dim());
  for (const auto& s : screens) {
    for (std::size_t c = 0; c < s.captions.size(); ++c) {
      idx.add({s.screen_id, static_cast<std::uint32_t>(c)}, provider.pool_text(s.captions[c]));
    }
  }
  return idx;
}

namespace {

std::vector<MockupCandidate> hits_to_candidates(const std::vector<VectorIndex::Hit>& hits, const VectorIndex& index,
                                                const ScreenCatalog& catalog, const std::string& query, Method method,
                                                std::size_t k, bool dedup) {
  std::vector<MockupCandidate> out;
  std::vector<std::string> used;
  for (const auto& h : hits) {
    if (out.size() == k) break;
    const auto& sid = index.id(h.row).screen_id;
    if (dedup) {
      if (std::find(used.begin(), used.end(), sid) != used.end()) continue;
      used.push_back(sid);
    }
    MockupCandidate c;
    c.elements = catalog.leaves(sid);
    c.prompt = query;
    c.method = method;
    c.source_screen_id = sid;
    c.similarity = index.metric() == IndexMetric::euclidean ? -h.score : h.score;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

std::vector<MockupCandidate> retrieve_text_only(const std::string& query, const VectorIndex& index,
                                                const textfeat::EmbeddingProvider& provider,
                                                const ScreenCatalog& catalog, std::size_t k, bool dedup) {
  const auto q = provider.pool_text(query);
  const auto hits = index.search(q, dedup ? index.size() : k);
  return hits_to_candidates(hits, index, catalog, query, Method::text_only, k, dedup);
}

// ---- dual encoder ------------------------------------------------------------

void DualEncoderConfig::validate() const {
  text.validate();
  ui.validate();
  if (text.hidden != ui.hidden) throw UsageError("text and UI encoders must share the hidden width");
}

json DualEncoderConfig::to_json() const { return {{"text", text.to_json()}, {"ui", ui.to_json()}}; }

DualEncoderConfig DualEncoderConfig::from_json(const json& j) {
  DualEncoderConfig c{nn::TransformerConfig::from_json(j.at("text")), nn::TransformerConfig::from_json(j.at("ui"))};
  c.validate();
  return c;
}

namespace {
constexpr std::size_t kTokenKinds = 4;
}

DualEncoder::DualEncoder(DualEncoderConfig cfg, std::shared_ptr<const textfeat::EmbeddingProvider> provider,
                         std::size_t num_classes, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      provider_(std::move(provider)),
      num_classes_(num_classes),
      params_(std::make_unique<ParameterStore>()) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t h = cfg_.text.hidden;
  text_input_ = nn::TextInputLayer(*params_, "text.input", provider_, h, rng);
  ui_features_ = nn::Linear::create(*params_, "ui.features", kTokenKinds + 4 + provider_->dim(), h, rng);
  ui_class_ = params_->add_xavier("ui.class_embedding", {num_classes_ + 1, h}, rng);
  text_encoder_ = std::make_unique<nn::TransformerEncoder>(*params_, "text.encoder", cfg_.text, rng);
  ui_encoder_ = std::make_unique<nn::TransformerEncoder>(*params_, "ui.encoder", cfg_.ui, rng);
}

namespace {

// Both towers end in a layer norm, so pooled vectors have norm ~sqrt(H) and raw
// dot products start around +-H, saturating the in-batch softmax. H^-1/4 per side
// is a sqrt(H) temperature on S; rankings are unchanged.
double pooled_scale(std::size_t hidden) { return std::pow(static_cast<double>(hidden), -0.25); }

}  // namespace

Tensor DualEncoder::text_batch(const std::vector<textfeat::TokenSequence>& captions,
                               const nn::ForwardContext& ctx) const {
  auto in = text_input_(captions, cfg_.text.max_len - 1);
  return scale(nn::pooled_output((*text_encoder_)(in.inputs, in.mask, ctx)), pooled_scale(cfg_.text.hidden));
}

Tensor DualEncoder::ui_batch(std::span<const ingest::RetrievalTokenView* const> views,
                             const nn::ForwardContext& ctx) const {
  const std::size_t b = views.size();
  std::size_t t = 0;
  std::vector<std::size_t> lengths;
  for (const auto* v : views) {
    lengths.push_back(v->size());
    t = std::max(t, v->size());
  }
  const std::size_t d = provider_->dim();
  const std::size_t width = kTokenKinds + 4 + d;
  std::vector<double> feats(b * t * width, 0.0);
  std::vector<int> classes(b * t, static_cast<int>(num_classes_));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t p = 0; p < views[i]->size(); ++p) {
      const auto& tok = views[i]->tokens[p];
      double* row = feats.data() + (i * t + p) * width;
      row[static_cast<std::size_t>(tok.kind)] = 1.0;
      if (tok.kind == ingest::UiTokenKind::element) {
        for (std::size_t a = 0; a < 4; ++a) row[kTokenKinds + a] = tok.dims[a];
        if (tok.class_id >= 0 && static_cast<std::size_t>(tok.class_id) < num_classes_) classes[i * t + p] = tok.class_id;
      }
      if (tok.text_vec.size() == d) std::copy(tok.text_vec.begin(), tok.text_vec.end(), row + kTokenKinds + 4);
    }
  }
  const Tensor x = add(ui_features_(Tensor::from({b * t, width}, std::move(feats))), embedding(ui_class_, classes));
  const auto out = (*ui_encoder_)(reshape(x, {b, t, cfg_.ui.hidden}), nn::SequenceMask::from_lengths(lengths, t), ctx);
  return scale(nn::pooled_output(out), pooled_scale(cfg_.ui.hidden));
}

namespace {

EmbeddingVector to_float(const Tensor& t, std::size_t row, std::size_t width) {
  EmbeddingVector v(width);
  for (std::size_t i = 0; i < width; ++i) v[i] = static_cast<float>(t.at(row * width + i));
  return v;
}

}  // namespace

EmbeddingVector DualEncoder::encode_text(const textfeat::TokenSequence& caption) const {
  NoGradGuard guard;
  return to_float(text_batch({caption}), 0, cfg_.text.hidden);
}

EmbeddingVector DualEncoder::encode_ui(const ingest::RetrievalTokenView& view) const {
  NoGradGuard guard;
  const ingest::RetrievalTokenView* ptr = &view;
  return to_float(ui_batch(std::span(&ptr, 1)), 0, cfg_.ui.hidden);
}

Tensor contrastive_loss(const Tensor& l, const Tensor& r, bool include_positive) {
  if (l.rank() != 2 || l.shape() != r.shape()) {
    throw ShapeError("contrastive_loss expects matching [K, H] inputs, got " + shape_str(l.shape()) + " and " +
                     shape_str(r.shape()));
  }
  const std::size_t k = l.dim(0), h = l.dim(1);
  if (k < 2) throw UsageError("contrastive loss needs at least two pairs for in-batch negatives");
  const Tensor l3 = reshape(l, {1, k, h});
  const Tensor r3 = reshape(r, {1, k, h});
  Tensor s = reshape(bmm(l3, r3, true), {k, k});   // S(l_i, r_j)
  Tensor st = reshape(bmm(r3, l3, true), {k, k});  // S(r_i, l_j)
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor diag = pick(s, idx);
  if (!include_positive) {
    std::vector<std::uint8_t> eye(k * k, 0);
    for (std::size_t i = 0; i < k; ++i) eye[i * k + i] = 1;
    s = masked_fill(s, eye, -1e9);
    st = masked_fill(st, eye, -1e9);
  }
  const Tensor total = sub(add(sum(logsumexp(s)), sum(logsumexp(st))), scale(sum(diag), 2.0));
  return scale(total, 1.0 / static_cast<double>(k));
}

json TrainLog::to_json() const {
  json ep = json::array();
  for (const auto& e : epochs) {
    ep.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_loss", e.validation_loss}});
  }
  return {{"steps", step_losses.size()}, {"epochs", ep}, {"best_epoch", best_epoch}, {"seconds", seconds}};
}

double evaluate_contrastive(const DualEncoder& enc, std::span<const PairExample> examples, std::size_t batch_size,
                            bool include_positive) {
  NoGradGuard guard;
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start + 1 < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    if (end - start < 2) break;
    std::vector<textfeat::TokenSequence> caps;
    std::vector<const ingest::RetrievalTokenView*> views;
    for (std::size_t i = start; i < end; ++i) {
      caps.push_back(examples[i].captions.front());
      views.push_back(examples[i].view);
    }
    total += contrastive_loss(enc.text_batch(caps), enc.ui_batch(views), include_positive).item();
    ++batches;
  }
  return batches ? total / static_cast<double>(batches) : std::numeric_limits<double>::quiet_NaN();
}

TrainLog train_dual_encoder(DualEncoder& enc, std::span<const PairExample> train,
                            std::span<const PairExample> validation, const RetrieverTrainConfig& cfg) {
  if (cfg.batch_size < 2) throw UsageError("batch size must be at least 2 for in-batch negatives");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (!train[i].captions.empty()) usable.push_back(i);
  }
  if (usable.size() < 2) throw DataError("need at least two captioned training screens");
  std::vector<PairExample> val;
  for (const auto& e : validation) {
    if (!e.captions.empty()) val.push_back(e);
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  Rng rng(cfg.seed);
  Adam opt(enc.params(), {.learning_rate = cfg.learning_rate});
  TrainLog log;
  double best = std::numeric_limits<double>::infinity();
  std::pair<json, std::string> best_weights = snapshot(enc.params());
  std::size_t stale = 0;
  bool out_of_time = false;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !out_of_time; ++epoch) {
    std::shuffle(usable.begin(), usable.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < usable.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(usable.size(), start + cfg.batch_size);
      if (end - start < 2) break;
      std::vector<textfeat::TokenSequence> caps;
      std::vector<const ingest::RetrievalTokenView*> views;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = train[usable[i]];
        std::uniform_int_distribution<std::size_t> pick_caption(0, ex.captions.size() - 1);
        caps.push_back(ex.captions[pick_caption(rng)]);
        views.push_back(ex.view);
      }
      const nn::ForwardContext ctx{true, &rng};
      enc.params().zero_grad();
      const Tensor loss = contrastive_loss(enc.text_batch(caps, ctx), enc.ui_batch(views, ctx), cfg.include_positive);
      if (!std::isfinite(loss.item())) throw NumericalError("dual encoder loss is not finite at step " +
                                                            std::to_string(log.step_losses.size()));
      backward(loss);
      opt.step();
      log.step_losses.push_back(loss.item());
      epoch_loss += loss.item();
      ++epoch_steps;
      if (cfg.max_seconds > 0.0 && elapsed() > cfg.max_seconds) {
        out_of_time = true;
        break;
      }
    }
    EpochRecord rec{epoch, epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0, 0.0};
    rec.validation_loss = val.size() >= 2 ? evaluate_contrastive(enc, val, cfg.batch_size, true) : rec.train_loss;
    log.epochs.push_back(rec);
    spdlog::info("retriever epoch {} train {:.4f} validation {:.4f}", epoch, rec.train_loss, rec.validation_loss);
    if (rec.validation_loss < best) {
      best = rec.validation_loss;
      best_weights = snapshot(enc.params());
      log.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  restore(enc.params(), best_weights.first, best_weights.second);
  log.seconds = elapsed();
  return log;
}

std::vector<EmbeddingVector> encode_uis(const DualEncoder& enc, std::span<const ingest::RetrievalTokenView> views,
                                        std::size_t batch_size) {
  NoGradGuard guard;
  std::vector<EmbeddingVector> out;
  out.reserve(views.size());
  const std::size_t h = enc.config().ui.hidden;
  for (std::size_t start = 0; start < views.size(); start += batch_size) {
    const std::size_t end = std::min(views.size(), start + batch_size);
    std::vector<const ingest::RetrievalTokenView*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&views[i]);
    const Tensor r = enc.ui_batch(ptrs);
    for (std::size_t i = 0; i < ptrs.size(); ++i) out.push_back(to_float(r, i, h));
  }
  return out;
}

namespace {

std::vector<EmbeddingVector> encode_texts(const DualEncoder& enc, const std::vector<textfeat::TokenSequence>& caps,
                                          std::size_t batch_size = 64) {
  NoGradGuard guard;
  std::vector<EmbeddingVector> out;
  const std::size_t h = enc.config().text.hidden;
  for (std::size_t start = 0; start < caps.size(); start += batch_size) {
    const std::size_t end = std::min(caps.size(), start + batch_size);
    const std::vector<textfeat::TokenSequence> chunk(caps.begin() + static_cast<std::ptrdiff_t>(start),
                                                     caps.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor l = enc.text_batch(chunk);
    for (std::size_t i = 0; i < chunk.size(); ++i) out.push_back(to_float(l, i, h));
  }
  return out;
}

}  // namespace

VectorIndex ui_index_build(const DualEncoder& enc, std::span<const UiScreen> screens,
                           std::span<const ingest::RetrievalTokenView> views) {
  if (screens.size() != views.size()) throw UsageError("one token view per screen required");
  const auto emb = encode_uis(enc, views);
  VectorIndex idx(IndexMetric::dot, enc.config().ui.hidden);
  for (std::size_t i = 0; i < screens.size(); ++i) idx.add({screens[i].screen_id, std::nullopt}, emb[i]);
  return idx;
}

std::vector<MockupCandidate> retrieve_multimodal(const std::string& query, const DualEncoder& enc,
                                                 const VectorIndex& ui_index, const ScreenCatalog& catalog,
                                                 std::size_t k) {
  if (ui_index.metric() != IndexMetric::dot) throw UsageError("multi-modal retrieval needs a dot-product index");
  const auto hits = ui_index.search(enc.encode_text(query), k);
  return hits_to_candidates(hits, ui_index, catalog, query, Method::multi_modal, k, false);
}

TopKResult eval_topk(std::span<const EmbeddingVector> queries, std::span<const std::size_t> query_truth,
                     std::span<const EmbeddingVector> candidates, IndexMetric metric, const TopKConfig& cfg) {
  if (queries.size() != query_truth.size()) throw UsageError("one ground-truth row per query required");
  if (candidates.empty()) throw DataError("no candidates to rank");
  if (cfg.ks.empty()) throw UsageError("no k values requested");
  const std::size_t max_k = *std::max_element(cfg.ks.begin(), cfg.ks.end());
  if (cfg.subset_size && *cfg.subset_size < max_k) {
    throw UsageError(fmt::format("subset size {} is smaller than k = {}", *cfg.subset_size, max_k));
  }
  VectorIndex idx(metric, candidates.front().size());
  for (std::size_t i = 0; i < candidates.size(); ++i) idx.add({std::to_string(i), std::nullopt}, candidates[i]);

  // Candidate membership per trial; a single all-in trial for the full protocol.
  std::vector<std::vector<char>> member;
  if (cfg.subset_size) {
    std::size_t size = *cfg.subset_size;
    if (size > candidates.size()) {
      spdlog::warn("subset size {} exceeds {} candidates; using all", size, candidates.size());
      size = candidates.size();
    }
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t t = 0; t < std::max<std::size_t>(1, cfg.trials); ++t) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<char> m(candidates.size(), 0);
      for (std::size_t i = 0; i < size; ++i) m[order[i]] = 1;
      member.push_back(std::move(m));
    }
  } else {
    member.emplace_back(candidates.size(), 1);
  }

  std::vector<std::vector<std::size_t>> hits(member.size(), std::vector<std::size_t>(cfg.ks.size(), 0));
  std::vector<std::size_t> counted(member.size(), 0);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto s = idx.scores(queries[q]);
    const std::size_t truth = query_truth[q];
    for (std::size_t t = 0; t < member.size(); ++t) {
      if (!member[t][truth]) continue;
      std::size_t rank = 0;
      for (std::size_t c = 0; c < s.size(); ++c) {
        if (!member[t][c] || c == truth) continue;
        if (better(metric, s[c], s[truth]) || (s[c] == s[truth] && c < truth)) ++rank;
      }
      ++counted[t];
      for (std::size_t i = 0; i < cfg.ks.size(); ++i) hits[t][i] += rank < cfg.ks[i];
    }
  }

  TopKResult r;
  r.ks = cfg.ks;
  r.accuracy.assign(cfg.ks.size(), 0.0);
  r.queries = queries.size();
  r.candidates = cfg.subset_size ? std::min(*cfg.subset_size, candidates.size()) : candidates.size();
  r.trials = member.size();
  for (std::size_t t = 0; t < member.size(); ++t) {
    for (std::size_t i = 0; i < cfg.ks.size(); ++i) {
      if (counted[t]) r.accuracy[i] += static_cast<double>(hits[t][i]) / static_cast<double>(counted[t]);
    }
  }
  for (double& a : r.accuracy) a /= static_cast<double>(member.size());
  return r;
}

TopKResult eval_topk(const DualEncoder& enc, std::span<const UiScreen> screens,
                     std::span<const ingest::RetrievalTokenView> views, const TopKConfig& cfg) {
  if (screens.size() != views.size()) throw UsageError("one token view per screen required");
  std::vector<textfeat::TokenSequence> caps;
  std::vector<std::size_t> truth;
  for (std::size_t i = 0; i < screens.size(); ++i) {
    for (const auto& c : screens[i].captions) {
      caps.push_back(textfeat::tokenize(c));
      truth.push_back(i);
    }
  }
  const auto q = encode_texts(enc, caps);
  const auto u = encode_uis(enc, views);
  return eval_topk(q, truth, u, IndexMetric::dot, cfg);
}

std::string format_table1(std::span<const Table1Row> rows) {
  std::string out = "method";
  if (!rows.empty()) {
    for (std::size_t k : rows.front().result.ks) out += fmt::format("\tTop-{}", k);
  }
  out += "\n";
  for (const auto& row : rows) {
    out += row.method;
    for (double a : row.result.accuracy) out += fmt::format("\t{:.2f}%", 100.0 * a);
    out += "\n";
  }
  return out;
}

}  // namespace mockforge::retrieval
