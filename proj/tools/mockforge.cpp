// mockforge: command-line front end for the whole pipeline.
//
// Exit codes: 0 ok, 1 usage, 2 data, 3 numerical. Failures print one line to
// stderr: "error<TAB>kind<TAB>message".

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mockforge/evaluate.hpp"
#include "mockforge/ingest.hpp"
#include "mockforge/render.hpp"
#include "mockforge/service.hpp"
#include "mockforge/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mockforge;

namespace {

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  }
  return s;
}

int fail(const char* kind, int code, const std::string& message) {
  std::cerr << "error\t" << kind << '\t' << one_line(message) << '\n';
  return code;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// Caption corpus of a split, for fitting the hashed tf-idf provider.
std::vector<textfeat::TokenSequence> caption_docs(std::span<const UiScreen> screens) {
  std::vector<textfeat::TokenSequence> docs;
  for (const auto& s : screens) {
    for (const auto& c : s.captions) docs.push_back(textfeat::tokenize(c));
  }
  return docs;
}

std::shared_ptr<const textfeat::EmbeddingProvider> make_provider(const std::string& embeddings, std::size_t dim,
                                                                 std::span<const UiScreen> train) {
  if (!embeddings.empty()) {
    return std::make_shared<const textfeat::EmbeddingProvider>(textfeat::EmbeddingProvider::file_backed(embeddings));
  }
  const auto docs = caption_docs(train);
  return std::make_shared<const textfeat::EmbeddingProvider>(textfeat::EmbeddingProvider::hashed_tfidf(docs, dim));
}

std::vector<std::vector<ElementBox>> leaf_views(std::span<const UiScreen> screens) {
  std::vector<std::vector<ElementBox>> out;
  for (const auto& s : screens) {
    auto leaves = ingest::extract_leaf_view(s);
    if (!leaves.empty()) out.push_back(std::move(leaves));
  }
  return out;
}

std::vector<MockupCandidate> read_candidates(const fs::path& path, const ClassVocabulary& vocab) {
  const json j = read_json(path);
  const json& list = j.is_object() && j.contains("candidates") ? j["candidates"] : j;
  std::vector<MockupCandidate> out;
  if (list.is_array()) {
    for (const auto& c : list) out.push_back(candidate_from_json(c, vocab));
  } else {
    out.push_back(candidate_from_json(list, vocab));
  }
  return out;
}

// Writes <dir>/candidates.json, one SVG per candidate and gallery.html.
void write_mockups(const fs::path& dir, std::span<const MockupCandidate> cands, const ClassVocabulary& vocab,
                   const std::string& prompt) {
  fs::create_directories(dir);
  json list = json::array();
  for (std::size_t i = 0; i < cands.size(); ++i) {
    auto j = candidate_to_json(cands[i], vocab);
    j["id"] = service::candidate_id(cands[i], vocab);
    list.push_back(std::move(j));
    const auto doc = render::render_svg(cands[i], vocab);
    for (const auto& w : doc.warnings) spdlog::warn("candidate {}: {}", i, w);
    write_text(dir / fmt::format("candidate_{:02}.svg", i), doc.svg);
  }
  write_text(dir / "candidates.json", json{{"candidates", list}}.dump(2) + "\n");
  if (!cands.empty()) write_text(dir / "gallery.html", render::render_gallery(cands, vocab, prompt));
}

// ---- config file ----------------------------------------------------------------

// Values from a JSON config become option defaults, so an explicit flag or a
// MOCKFORGE_* variable still wins. Keys are long option names, at the top level
// (any command) or inside an object named after the command.
void apply_config(CLI::App& app, const json& cfg) {
  auto apply = [](CLI::App* cmd, const json& section) {
    if (!section.is_object()) return;
    for (const auto& [key, value] : section.items()) {
      if (value.is_object()) continue;
      CLI::Option* opt = nullptr;
      try {
        opt = cmd->get_option("--" + key);
      } catch (const CLI::OptionNotFound&) {
        continue;
      }
      opt->default_val(value.is_string() ? value.get<std::string>() : value.dump());
    }
  };
  for (CLI::App* cmd : app.get_subcommands({})) {
    apply(cmd, cfg);
    if (cfg.contains(cmd->get_name())) apply(cmd, cfg[cmd->get_name()]);
  }
  apply(&app, cfg);
}

std::optional<fs::path> config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view a = argv[i];
    if (a == "--config" && i + 1 < argc) return fs::path(argv[i + 1]);
    if (a.starts_with("--config=")) return fs::path(std::string(a.substr(9)));
  }
  if (const char* env = std::getenv("MOCKFORGE_CONFIG"); env && *env) return fs::path(env);
  return std::nullopt;
}

// ---- commands --------------------------------------------------------------------

struct Common {
  std::uint64_t seed = 0;
  std::string log_level = "info";
};

struct SynthArgs {
  std::string out;
  std::size_t train = 400, validation = 64, test = 64;
  double jitter = 0.006;
};

int run_synth(const SynthArgs& a, const Common& c) {
  synth::SynthConfig cfg{a.train, a.validation, a.test, c.seed, a.jitter};
  const auto corpus = synth::synthetic_corpus(cfg);
  synth::write_raw_inputs(a.out, corpus);
  fmt::print("wrote {} screens to {}\n", a.train + a.validation + a.test, a.out);
  return 0;
}

struct IngestArgs {
  std::string hierarchies, captions, manifest, annotations, app_descriptions, out;
  double separator_threshold = ingest::kSeparatorThreshold;
};

int run_ingest(const IngestArgs& a) {
  ingest::CorpusInputs in;
  in.hierarchy_dir = a.hierarchies;
  in.captions = a.captions;
  in.manifest = a.manifest;
  if (!a.annotations.empty()) in.annotations = a.annotations;
  if (!a.app_descriptions.empty()) in.app_descriptions = a.app_descriptions;
  in.separator_threshold = a.separator_threshold;
  const auto corpus = ingest::build_corpus(in);
  ingest::write_corpus(a.out, corpus);
  fmt::print("split\tscreens\ntrain\t{}\nvalidation\t{}\ntest\t{}\n", corpus.train.screens.size(),
             corpus.validation.screens.size(), corpus.test.screens.size());
  return 0;
}

struct ModelShape {
  std::size_t hidden = 64, intermediate = 256, layers = 0, heads = 4;
  double dropout = 0.1;
};

nn::TransformerConfig shaped(nn::TransformerConfig base, const ModelShape& s) {
  base.hidden = s.hidden;
  base.intermediate = s.intermediate;
  if (s.layers) base.layers = s.layers;
  base.heads = s.heads;
  base.dropout = s.dropout;
  return base;
}

struct TrainRetrieverArgs {
  std::string corpus, out, embeddings, log;
  std::size_t embedding_dim = 64;
  ModelShape shape;
  retrieval::RetrieverTrainConfig train;
  std::size_t ui_max_len = 512;
  bool literal_loss = false;
};

int run_train_retriever(TrainRetrieverArgs a, const Common& c) {
  const auto corpus = ingest::load_corpus(a.corpus);
  auto provider = make_provider(a.embeddings, a.embedding_dim, corpus.train.screens);
  retrieval::DualEncoderConfig cfg;
  cfg.text = shaped(cfg.text, a.shape);
  cfg.ui = shaped(cfg.ui, a.shape);
  cfg.ui.max_len = a.ui_max_len;
  retrieval::DualEncoder enc(cfg, provider, corpus.vocab.size(), c.seed);

  auto views_of = [&](const ingest::CorpusSplit& split) {
    std::vector<ingest::RetrievalTokenView> v;
    for (const auto& s : split.screens) v.push_back(ingest::build_retrieval_token_view(s, *provider, cfg.ui.max_len));
    return v;
  };
  const auto train_views = views_of(corpus.train);
  const auto val_views = views_of(corpus.validation);
  auto pairs_of = [](const ingest::CorpusSplit& split, const std::vector<ingest::RetrievalTokenView>& views) {
    std::vector<retrieval::PairExample> out;
    for (std::size_t i = 0; i < split.screens.size(); ++i) {
      if (split.screens[i].captions.empty()) continue;
      out.push_back({&views[i], caption_docs(std::span(&split.screens[i], 1))});
    }
    return out;
  };
  a.train.seed = c.seed;
  a.train.include_positive = !a.literal_loss;
  const auto log = retrieval::train_dual_encoder(enc, pairs_of(corpus.train, train_views),
                                                 pairs_of(corpus.validation, val_views), a.train);
  artifact::save_dual_encoder(a.out, enc, corpus.vocab, {{"seed", c.seed}, {"best_epoch", log.best_epoch}});
  if (!a.log.empty()) write_text(a.log, log.to_json().dump(2) + "\n");
  fmt::print("saved {} (best epoch {}, {:.1f}s)\n", a.out, log.best_epoch, log.seconds);
  return 0;
}

struct TrainGeneratorArgs {
  std::string corpus, out, embeddings, log;
  std::size_t embedding_dim = 64;
  ModelShape shape;
  std::size_t mixtures = 5, max_elements = 128;
  generator::GeneratorTrainConfig train;
  double lr = 1e-3;
  bool calibrate = true;
};

int run_train_generator(TrainGeneratorArgs a, const Common& c) {
  const auto corpus = ingest::load_corpus(a.corpus);
  auto provider = make_provider(a.embeddings, a.embedding_dim, corpus.train.screens);
  generator::GeneratorConfig cfg;
  cfg.encoder = shaped(cfg.encoder, a.shape);
  cfg.decoder = shaped(cfg.decoder, a.shape);
  cfg.decoder.max_len = a.max_elements + 2;
  cfg.mixtures = a.mixtures;
  generator::GeneratorModel model(cfg, provider, corpus.vocab, c.seed);
  const auto train = generator::prepare_generator_data(corpus.train.screens, model.max_elements());
  const auto val = generator::prepare_generator_data(corpus.validation.screens, model.max_elements());
  a.train.seed = c.seed;
  a.train.lr_stages = {a.lr, a.lr / 10, a.lr / 100};
  const auto log = generator::train_generator(model, train, val, a.train);
  std::optional<quality::MetricCalibration> cal;
  if (a.calibrate) cal = quality::calibrate(leaf_views(corpus.validation.screens));
  artifact::save_generator(a.out, model, cal ? &*cal : nullptr, {{"seed", c.seed}, {"best_epoch", log.best_epoch}});
  if (!a.log.empty()) write_text(a.log, log.to_json().dump(2) + "\n");
  fmt::print("saved {} (best epoch {}, {:.1f}s)\n", a.out, log.best_epoch, log.seconds);
  return 0;
}

struct BuildIndexArgs {
  std::string corpus, out, dual_encoder, embeddings, split = "train";
  std::size_t embedding_dim = 256;
};

int run_build_index(const BuildIndexArgs& a) {
  const auto corpus = ingest::load_corpus(a.corpus);
  const auto& screens = corpus.split(a.split).screens;
  auto provider = make_provider(a.embeddings, a.embedding_dim, screens);
  std::optional<artifact::LoadedDualEncoder> dual;
  if (!a.dual_encoder.empty()) dual = artifact::load_dual_encoder(a.dual_encoder);
  if (dual && !(dual->vocab == corpus.vocab)) throw DataError("dual encoder and corpus use different vocabularies");
  const auto bundle = artifact::build_index_bundle(screens, corpus.vocab, provider, dual ? dual->model.get() : nullptr);
  artifact::save_index_bundle(a.out, bundle);
  fmt::print("indexed {} screens ({} caption rows{}) into {}\n", screens.size(), bundle.text_index.size(),
             bundle.ui_index ? ", UI embeddings" : "", a.out);
  return 0;
}

struct CalibrateArgs {
  std::string corpus, generator, out, split = "validation";
};

int run_calibrate(const CalibrateArgs& a) {
  if (a.generator.empty() && a.out.empty()) throw UsageError("give --generator and/or --out");
  const auto corpus = ingest::load_corpus(a.corpus);
  const auto cal = quality::calibrate(leaf_views(corpus.split(a.split).screens));
  if (!a.generator.empty()) artifact::set_calibration(a.generator, cal);
  if (!a.out.empty()) write_text(a.out, cal.to_json().dump(2) + "\n");
  fmt::print("metric\tmean\n");
  for (auto m : {quality::Metric::overlap, quality::Metric::iou, quality::Metric::alignment}) {
    fmt::print("{}\t{:.6f}\n", quality::metric_name(m), cal.mean(m));
  }
  return 0;
}

struct RetrieveArgs {
  std::string index, dual_encoder, prompt, mode = "text-only", out;
  std::size_t k = 5;
};

int run_retrieve(const RetrieveArgs& a) {
  service::ArtifactPaths paths;
  paths.index = a.index;
  if (!a.dual_encoder.empty()) paths.dual_encoder = a.dual_encoder;
  const auto arts = service::load_artifacts(paths);
  const auto req = service::RetrieveRequest::from_json({{"prompt", a.prompt}, {"mode", a.mode}, {"k", a.k}});
  const auto out = service::retrieve(arts, req);
  if (!a.out.empty()) write_mockups(a.out, out, arts.index->vocab, a.prompt);
  fmt::print("rank\tscreen\tsimilarity\n");
  for (std::size_t i = 0; i < out.size(); ++i) {
    fmt::print("{}\t{}\t{:.6f}\n", i + 1, out[i].source_screen_id.value_or("-"), out[i].similarity.value_or(0.0));
  }
  return 0;
}

struct GenerateArgs {
  std::string generator, prompt, pins, out;
  std::size_t n = 10;
  double temperature = 0.1;
  bool postprocess = true;
};

int run_generate(const GenerateArgs& a, const Common& c) {
  auto loaded = artifact::load_generator(a.generator);
  json body = {{"prompt", a.prompt}, {"n", a.n}, {"temperature", a.temperature}, {"seed", c.seed},
               {"postprocess", a.postprocess}};
  if (!a.pins.empty()) body["pins"] = read_json(a.pins);
  const auto req = service::GenerateRequest::from_json(body, loaded.model->vocab());
  const auto out = service::generate(*loaded.model, loaded.calibration ? &*loaded.calibration : nullptr, req);
  if (!a.out.empty()) write_mockups(a.out, out.candidates, loaded.model->vocab(), a.prompt);
  fmt::print("sampled\t{}\npassed_filter\t{}\nreturned\t{}\n", out.sampled, out.passed_filter, out.candidates.size());
  return 0;
}

struct EvaluateArgs {
  std::string what, corpus, dual_encoder, generator, index, out;
  evaluate::Table1Config t1;
  evaluate::Table2Config t2;
  std::size_t max_queries = 0;
};

int run_evaluate(EvaluateArgs a, const Common& c) {
  const auto corpus = ingest::load_corpus(a.corpus);
  std::string table;
  if (a.what == "retrieval") {
    if (a.dual_encoder.empty()) throw UsageError("--what retrieval needs --dual-encoder");
    const auto dual = artifact::load_dual_encoder(a.dual_encoder);
    a.t1.seed = c.seed;
    table = retrieval::format_table1(evaluate::table1(*dual.model, corpus.test.screens, a.t1));
  } else if (a.what == "generation") {
    std::optional<artifact::LoadedGenerator> gen;
    std::optional<artifact::LoadedDualEncoder> dual;
    std::optional<artifact::IndexBundle> index;
    if (!a.generator.empty()) gen = artifact::load_generator(a.generator);
    if (!a.index.empty()) index = artifact::load_index_bundle(a.index);
    if (!a.dual_encoder.empty()) {
      if (!index) throw UsageError("--dual-encoder needs --index for the multi-modal row");
      dual = artifact::load_dual_encoder(a.dual_encoder);
      if (!index->ui_index) {
        *index = artifact::build_index_bundle(std::move(index->screens), index->vocab, index->provider, dual->model.get());
      }
    }
    std::optional<quality::MetricCalibration> cal;
    if (gen) cal = gen->calibration ? *gen->calibration : quality::calibrate(leaf_views(corpus.validation.screens));
    evaluate::Table2Inputs in{corpus.test.screens, gen ? gen->model.get() : nullptr, cal ? &*cal : nullptr,
                              index ? &*index : nullptr, dual ? dual->model.get() : nullptr};
    a.t2.seed = c.seed;
    if (a.max_queries) a.t2.max_queries = a.max_queries;
    evaluate::Table2Counts counts;
    const auto rows = evaluate::table2(in, a.t2, &counts);
    if (gen) {
      spdlog::info("generator: {} queries, {} samples, {} passed the filter, {} empty post-processed sets",
                   counts.queries, counts.generator_samples, counts.generator_passed, counts.generator_empty_sets);
    }
    table = quality::format_table2(rows);
  } else {
    throw UsageError("--what must be retrieval or generation");
  }
  std::cout << table;
  if (!a.out.empty()) write_text(a.out, table);
  return 0;
}

struct RenderArgs {
  std::string candidates, vocab, out, prompt;
};

int run_render(const RenderArgs& a) {
  const auto vocab = a.vocab.empty() ? ClassVocabulary::rico_default() : vocab_from_json(read_json(a.vocab));
  const auto cands = read_candidates(a.candidates, vocab);
  const std::string prompt = a.prompt.empty() && !cands.empty() ? cands.front().prompt : a.prompt;
  write_mockups(a.out, cands, vocab, prompt);
  fmt::print("rendered {} candidates into {}\n", cands.size(), a.out);
  return 0;
}

struct ServeArgs {
  std::string generator, dual_encoder, index, host = "127.0.0.1";
  int port = 8080;
  std::size_t threads = 4, cache = service::kCacheCapacity;
};

std::atomic<int> g_signal{0};
extern "C" void on_signal(int sig) { g_signal = sig; }

int run_serve(const ServeArgs& a) {
  service::ArtifactPaths paths;
  if (!a.generator.empty()) paths.generator = a.generator;
  if (!a.dual_encoder.empty()) paths.dual_encoder = a.dual_encoder;
  if (!a.index.empty()) paths.index = a.index;
  service::Service svc(service::load_artifacts(paths), a.cache);
  service::HttpServer server(svc, a.threads);
  const int port = server.bind(a.host, a.port);
  fmt::print("listening on http://{}:{}\n", a.host, port);
  std::fflush(stdout);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::signal(SIGHUP, on_signal);
  std::thread loop([&] { server.listen(); });
  for (;;) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    const int sig = g_signal.exchange(0);
    if (sig == SIGHUP) {
      try {
        svc.swap_artifacts(service::load_artifacts(paths));
        spdlog::info("artifacts reloaded");
      } catch (const std::exception& e) {
        spdlog::error("reload failed, keeping the current artifacts: {}", e.what());
      }
    } else if (sig != 0) {
      break;
    }
  }
  server.stop();
  loop.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-to-mock-up pipeline: ingest, train, retrieve, generate, evaluate, render, serve."};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  std::string config;
  app.add_option("--config", config, "JSON config file (flag > MOCKFORGE_* env > config)")->envname("MOCKFORGE_CONFIG");
  app.add_option("--seed", common.seed, "Seed for every random choice")->envname("MOCKFORGE_SEED");
  app.add_option("--log-level", common.log_level, "trace|debug|info|warn|error|off")
      ->envname("MOCKFORGE_LOG_LEVEL")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  // synth
  SynthArgs sy;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic raw corpus (hierarchies + TSVs)");
  synth_cmd->add_option("--out", sy.out, "Output directory")->required();
  synth_cmd->add_option("--train", sy.train, "Train screens");
  synth_cmd->add_option("--validation", sy.validation, "Validation screens");
  synth_cmd->add_option("--test", sy.test, "Test screens");
  synth_cmd->add_option("--jitter", sy.jitter, "Geometry jitter (unit square)");

  // ingest
  IngestArgs in;
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a corpus from view hierarchies and captions");
  ingest_cmd->add_option("--hierarchies", in.hierarchies, "Directory of <screen_id>.json")->required();
  ingest_cmd->add_option("--captions", in.captions, "screen_id<TAB>caption")->required();
  ingest_cmd->add_option("--manifest", in.manifest, "screen_id<TAB>split[<TAB>app_id]")->required();
  ingest_cmd->add_option("--annotations", in.annotations, "screen_id<TAB>dfs index<TAB>class");
  ingest_cmd->add_option("--app-descriptions", in.app_descriptions, "app_id<TAB>description");
  ingest_cmd->add_option("--separator-threshold", in.separator_threshold, "Relative size below which a box is a separator");
  ingest_cmd->add_option("--out", in.out, "Corpus directory")->required()->envname("MOCKFORGE_CORPUS");

  auto add_shape = [](CLI::App* cmd, ModelShape& s) {
    cmd->add_option("--hidden", s.hidden, "Hidden width");
    cmd->add_option("--intermediate", s.intermediate, "Feed-forward width");
    cmd->add_option("--layers", s.layers, "Layers (0 = model default)");
    cmd->add_option("--heads", s.heads, "Attention heads");
    cmd->add_option("--dropout", s.dropout, "Training dropout");
  };

  // train-retriever
  TrainRetrieverArgs tr;
  auto* tr_cmd = app.add_subcommand("train-retriever", "Train the dual encoder");
  tr_cmd->add_option("--corpus", tr.corpus, "Corpus directory")->required()->envname("MOCKFORGE_CORPUS");
  tr_cmd->add_option("--out", tr.out, "Artifact path")->required();
  tr_cmd->add_option("--embeddings", tr.embeddings, "EMBV token vectors (default: hashed tf-idf)");
  tr_cmd->add_option("--embedding-dim", tr.embedding_dim, "Hashed tf-idf width");
  add_shape(tr_cmd, tr.shape);
  tr_cmd->add_option("--ui-max-len", tr.ui_max_len, "UI token limit");
  tr_cmd->add_option("--batch-size", tr.train.batch_size, "Pairs per batch");
  tr_cmd->add_option("--epochs", tr.train.max_epochs, "Maximum epochs");
  tr_cmd->add_option("--patience", tr.train.patience, "Stale epochs before stopping");
  tr_cmd->add_option("--lr", tr.train.learning_rate, "Adam learning rate");
  tr_cmd->add_option("--max-seconds", tr.train.max_seconds, "Wall-clock budget (0 = none)");
  tr_cmd->add_flag("--literal-loss", tr.literal_loss, "Leave the positive pair out of the softmax denominators");
  tr_cmd->add_option("--log", tr.log, "Write the training log as JSON");

  // train-generator
  TrainGeneratorArgs tg;
  auto* tg_cmd = app.add_subcommand("train-generator", "Train the UI generator");
  tg_cmd->add_option("--corpus", tg.corpus, "Corpus directory")->required()->envname("MOCKFORGE_CORPUS");
  tg_cmd->add_option("--out", tg.out, "Artifact path")->required();
  tg_cmd->add_option("--embeddings", tg.embeddings, "EMBV token vectors (default: hashed tf-idf)");
  tg_cmd->add_option("--embedding-dim", tg.embedding_dim, "Hashed tf-idf width");
  add_shape(tg_cmd, tg.shape);
  tg_cmd->add_option("--mixtures", tg.mixtures, "Gaussian mixture components");
  tg_cmd->add_option("--max-elements", tg.max_elements, "Longest element sequence");
  tg_cmd->add_option("--batch-size", tg.train.batch_size, "Screens per batch");
  tg_cmd->add_option("--epochs", tg.train.max_epochs, "Maximum epochs");
  tg_cmd->add_option("--patience", tg.train.patience, "Stale epochs before the next learning-rate stage");
  tg_cmd->add_option("--lr", tg.lr, "First learning rate (then /10, /100)");
  tg_cmd->add_option("--geometry-weight", tg.train.geometry_weight, "Weight of the geometry terms in the objective");
  tg_cmd->add_option("--max-seconds", tg.train.max_seconds, "Wall-clock budget (0 = none)");
  tg_cmd->add_option("--max-steps", tg.train.max_steps, "Optimizer step budget (0 = none)");
  tg_cmd->add_flag("!--no-calibrate", tg.calibrate, "Do not store a validation calibration");
  tg_cmd->add_option("--log", tg.log, "Write the training log as JSON");

  // build-index
  BuildIndexArgs bi;
  auto* bi_cmd = app.add_subcommand("build-index", "Index a split for retrieval");
  bi_cmd->add_option("--corpus", bi.corpus, "Corpus directory")->required()->envname("MOCKFORGE_CORPUS");
  bi_cmd->add_option("--out", bi.out, "Index directory")->required()->envname("MOCKFORGE_INDEX");
  bi_cmd->add_option("--split", bi.split, "Split to index")->check(CLI::IsMember({"train", "validation", "test"}));
  bi_cmd->add_option("--dual-encoder", bi.dual_encoder, "Also store UI embeddings")->envname("MOCKFORGE_DUAL_ENCODER");
  bi_cmd->add_option("--embeddings", bi.embeddings, "EMBV token vectors for the text-only retriever");
  bi_cmd->add_option("--embedding-dim", bi.embedding_dim, "Hashed tf-idf width");

  // calibrate
  CalibrateArgs ca;
  auto* ca_cmd = app.add_subcommand("calibrate", "Fit the filter/rerank calibration on a split");
  ca_cmd->add_option("--corpus", ca.corpus, "Corpus directory")->required()->envname("MOCKFORGE_CORPUS");
  ca_cmd->add_option("--split", ca.split, "Split")->check(CLI::IsMember({"train", "validation", "test"}));
  ca_cmd->add_option("--generator", ca.generator, "Store into this generator artifact")->envname("MOCKFORGE_GENERATOR");
  ca_cmd->add_option("--out", ca.out, "Also write calibration JSON here");

  // retrieve
  RetrieveArgs re;
  auto* re_cmd = app.add_subcommand("retrieve", "Retrieve mock-ups for a description");
  re_cmd->add_option("--index", re.index, "Index directory")->required()->envname("MOCKFORGE_INDEX");
  re_cmd->add_option("--dual-encoder", re.dual_encoder, "Needed for multi-modal")->envname("MOCKFORGE_DUAL_ENCODER");
  re_cmd->add_option("--prompt", re.prompt, "Description")->required();
  re_cmd->add_option("--mode", re.mode, "text-only|multi-modal");
  re_cmd->add_option("--k", re.k, "Results (1..50)");
  re_cmd->add_option("--out", re.out, "Write candidates.json, SVGs and a gallery here");

  // generate
  GenerateArgs ge;
  auto* ge_cmd = app.add_subcommand("generate", "Generate mock-ups for a description");
  ge_cmd->add_option("--generator", ge.generator, "Generator artifact")->required()->envname("MOCKFORGE_GENERATOR");
  ge_cmd->add_option("--prompt", ge.prompt, "Description")->required();
  ge_cmd->add_option("--n", ge.n, "Samples (1..50)");
  ge_cmd->add_option("--temperature", ge.temperature, "Sampling temperature");
  ge_cmd->add_flag("--postprocess,!--no-postprocess", ge.postprocess, "Filter, keep the top half, snap (default on)");
  ge_cmd->add_option("--pins", ge.pins, "JSON array of elements to keep fixed");
  ge_cmd->add_option("--out", ge.out, "Write candidates.json, SVGs and a gallery here");

  // evaluate
  EvaluateArgs ev;
  std::size_t ev_subset = ev.t1.subset_size;
  auto* ev_cmd = app.add_subcommand("evaluate", "Print Table 1 (retrieval) or Table 2 (generation) as TSV");
  ev_cmd->add_option("--what", ev.what, "retrieval|generation")->required()->check(CLI::IsMember({"retrieval", "generation"}));
  ev_cmd->add_option("--corpus", ev.corpus, "Corpus directory")->required()->envname("MOCKFORGE_CORPUS");
  ev_cmd->add_option("--dual-encoder", ev.dual_encoder, "Dual encoder artifact")->envname("MOCKFORGE_DUAL_ENCODER");
  ev_cmd->add_option("--generator", ev.generator, "Generator artifact")->envname("MOCKFORGE_GENERATOR");
  ev_cmd->add_option("--index", ev.index, "Train-split index directory")->envname("MOCKFORGE_INDEX");
  ev_cmd->add_option("--subset-size", ev_subset, "Table 1 candidate subset size");
  ev_cmd->add_option("--trials", ev.t1.trials, "Table 1 subsets averaged");
  ev_cmd->add_option("--samples", ev.t2.samples, "Generator samples per description");
  ev_cmd->add_option("--k", ev.t2.k, "Retrieved UIs per description");
  ev_cmd->add_option("--temperature", ev.t2.temperature, "Sampling temperature");
  ev_cmd->add_option("--max-queries", ev.max_queries, "Use only the first N test screens (0 = all)");
  ev_cmd->add_option("--out", ev.out, "Also write the table here");

  // render
  RenderArgs rn;
  auto* rn_cmd = app.add_subcommand("render", "Render candidate JSON to SVG and an HTML gallery");
  rn_cmd->add_option("--candidates", rn.candidates, "Candidate JSON (object, array or {candidates: [...]})")->required();
  rn_cmd->add_option("--vocab", rn.vocab, "Class vocabulary JSON (default: built-in)");
  rn_cmd->add_option("--prompt", rn.prompt, "Gallery title prompt");
  rn_cmd->add_option("--out", rn.out, "Output directory")->required();

  // serve
  ServeArgs sv;
  auto* sv_cmd = app.add_subcommand("serve", "HTTP API (SIGHUP reloads the artifacts)");
  sv_cmd->add_option("--generator", sv.generator, "Generator artifact")->envname("MOCKFORGE_GENERATOR");
  sv_cmd->add_option("--dual-encoder", sv.dual_encoder, "Dual encoder artifact")->envname("MOCKFORGE_DUAL_ENCODER");
  sv_cmd->add_option("--index", sv.index, "Index directory")->envname("MOCKFORGE_INDEX");
  sv_cmd->add_option("--host", sv.host, "Bind address")->envname("MOCKFORGE_HOST");
  sv_cmd->add_option("--port", sv.port, "Port (0 = any free port)")->envname("MOCKFORGE_PORT");
  sv_cmd->add_option("--threads", sv.threads, "Worker threads")->envname("MOCKFORGE_THREADS");
  sv_cmd->add_option("--cache", sv.cache, "Candidate cache capacity");

  try {
    if (auto path = config_path(argc, argv)) apply_config(app, read_json(*path));
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", 1, e.what());
  } catch (const DataError& e) {
    return fail("data", 2, e.what());
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("mockforge"));
  spdlog::set_level(spdlog::level::from_str(common.log_level));

  try {
    if (*synth_cmd) return run_synth(sy, common);
    if (*ingest_cmd) return run_ingest(in);
    if (*tr_cmd) return run_train_retriever(tr, common);
    if (*tg_cmd) return run_train_generator(tg, common);
    if (*bi_cmd) return run_build_index(bi);
    if (*ca_cmd) return run_calibrate(ca);
    if (*re_cmd) return run_retrieve(re);
    if (*ge_cmd) return run_generate(ge, common);
    if (*ev_cmd) {
      ev.t1.subset_size = ev_subset;
      return run_evaluate(ev, common);
    }
    if (*rn_cmd) return run_render(rn);
    if (*sv_cmd) return run_serve(sv);
  } catch (const service::RequestError& e) {
    return fail("usage", 1, e.what());
  } catch (const UsageError& e) {
    return fail("usage", 1, e.what());
  } catch (const DataError& e) {
    return fail("data", 2, e.what());
  } catch (const NumericalError& e) {
    return fail("numerical", 3, e.what());
  } catch (const std::exception& e) {
    return fail("data", 2, e.what());
  }
  return fail("usage", 1, "no command");
}
