#include "mockforge/evaluate.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mockforge/ingest.hpp"

namespace mockforge::evaluate {

std::vector<retrieval::Table1Row> table1(const retrieval::DualEncoder& enc, std::span<const UiScreen> test,
                                         const Table1Config& cfg) {
  if (test.empty()) throw UsageError("Table 1 needs a non-empty test split");
  std::vector<textfeat::EmbeddingVector> queries;
  std::vector<std::size_t> truth;
  std::vector<ingest::RetrievalTokenView> views;
  for (std::size_t i = 0; i < test.size(); ++i) {
    views.push_back(ingest::build_retrieval_token_view(test[i], enc.provider()));
    for (const auto& c : test[i].captions) {
      queries.push_back(enc.encode_text(c));
      truth.push_back(i);
    }
  }
  const auto uis = retrieval::encode_uis(enc, views);

  std::vector<retrieval::Table1Row> rows;
  if (cfg.subset_size > 0 && test.size() > cfg.subset_size) {
    retrieval::TopKConfig sub;
    sub.subset_size = cfg.subset_size;
    sub.trials = cfg.trials;
    sub.seed = cfg.seed;
    rows.push_back({fmt::format("{} ({} subsets avg.)", kRowMultiModal, cfg.trials),
                    retrieval::eval_topk(queries, truth, uis, retrieval::IndexMetric::dot, sub)});
  } else {
    spdlog::info("test split has {} screens; skipping the {}-candidate subset row", test.size(), cfg.subset_size);
  }
  retrieval::TopKConfig all;
  all.trials = 1;
  all.seed = cfg.seed;
  rows.push_back({fmt::format("{} (entire test set)", kRowMultiModal),
                  retrieval::eval_topk(queries, truth, uis, retrieval::IndexMetric::dot, all)});
  return rows;
}

namespace {

// Running means for one Table 2 row.
struct RowAccumulator {
  double iou = 0, overlap = 0, alignment = 0, diversity = 0, relevance = 0;
  std::size_t uis = 0, diverse_sets = 0, relevant_sets = 0;

  void add_ui(std::span<const ElementBox> elements) {
    const auto s = quality::score(elements);
    iou += s.iou;
    overlap += s.overlap;
    alignment += s.alignment;
    ++uis;
  }
  void add_set(std::span<const MockupCandidate> set, std::span<const ElementBox> truth) {
    if (set.size() >= 2) {
      diversity += quality::diversity(set);
      ++diverse_sets;
    }
    if (!set.empty()) {
      relevance += quality::relevance(set, truth);
      ++relevant_sets;
    }
  }
  quality::Table2Row row(std::string name) const {
    quality::Table2Row r;
    r.method = std::move(name);
    if (uis) {
      r.iou = iou / static_cast<double>(uis);
      r.overlap = overlap / static_cast<double>(uis);
      r.alignment = alignment / static_cast<double>(uis);
    }
    if (diverse_sets) r.diversity = diversity / static_cast<double>(diverse_sets);
    if (relevant_sets) r.relevance = relevance / static_cast<double>(relevant_sets);
    return r;
  }
};

}  // namespace

std::vector<quality::Table2Row> table2(const Table2Inputs& in, const Table2Config& cfg, Table2Counts* counts) {
  if (cfg.samples == 0 || cfg.k == 0) throw UsageError("Table 2 needs samples >= 1 and k >= 1");
  if (in.generator && !in.calibration) throw UsageError("the generator row needs a calibration");
  if (in.dual_encoder && !(in.index && in.index->ui_index)) throw UsageError("the multi-modal row needs a UI index");

  RowAccumulator gen, mm, text, data;
  Table2Counts local;
  std::size_t query = 0;
  for (const auto& screen : in.test) {
    if (cfg.max_queries && query >= *cfg.max_queries) break;
    const auto truth = ingest::extract_leaf_view(screen);
    if (screen.captions.empty() || truth.empty()) continue;
    const std::string& prompt = screen.captions.front();

    if (in.generator) {
      generator::SamplerConfig sc;
      sc.temperature = cfg.temperature;
      sc.n_samples = cfg.samples;
      sc.max_elements = in.generator->max_elements();
      sc.seed = cfg.seed + query * cfg.samples;
      auto samples = generator::sample_uis(*in.generator, prompt, sc);
      for (const auto& c : samples) gen.add_ui(c.elements);
      local.generator_samples += samples.size();
      auto kept = quality::filter_candidates(std::move(samples), *in.calibration);
      local.generator_passed += kept.size();
      kept = quality::rerank_candidates(std::move(kept), *in.calibration);
      for (auto& c : kept) c = quality::snap_to_grid(std::move(c));
      if (kept.empty()) ++local.generator_empty_sets;
      gen.add_set(kept, truth);
    }
    if (in.dual_encoder) {
      const auto set = retrieval::retrieve_multimodal(prompt, *in.dual_encoder, *in.index->ui_index,
                                                      in.index->catalog, cfg.k);
      for (const auto& c : set) mm.add_ui(c.elements);
      mm.add_set(set, truth);
    }
    if (in.index) {
      const auto set = retrieval::retrieve_text_only(prompt, in.index->text_index, *in.index->provider,
                                                     in.index->catalog, cfg.k, true);
      for (const auto& c : set) text.add_ui(c.elements);
      text.add_set(set, truth);
    }
    ++query;
  }
  // The data row covers the whole split even when queries are capped.
  for (const auto& screen : in.test) {
    const auto leaves = ingest::extract_leaf_view(screen);
    if (!leaves.empty()) data.add_ui(leaves);
  }
  local.queries = query;
  if (counts) *counts = local;

  std::vector<quality::Table2Row> rows;
  if (in.generator) rows.push_back(gen.row(kRowGenerator));
  if (in.dual_encoder) rows.push_back(mm.row(kRowMultiModal));
  if (in.index) rows.push_back(text.row(kRowTextOnly));
  rows.push_back(data.row(kRowData));
  return rows;
}

}  // namespace mockforge::evaluate
