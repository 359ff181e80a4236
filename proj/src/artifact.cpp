#include "mockforge/artifact.hpp"

#include <fstream>

#include <fmt/format.h>

namespace mockforge::artifact {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kArchiveVersion = 1;
constexpr std::string_view kFormat = "mockforge-artifact";

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated archive " + path.string());
  return v;
}

const std::string& entry(const Archive& a, std::string_view name, const fs::path& path) {
  auto it = a.find(std::string(name));
  if (it == a.end()) throw DataError(fmt::format("{} has no {}", path.string(), name));
  return it->second;
}

json parse_entry(const Archive& a, std::string_view name, const fs::path& path) {
  try {
    return json::parse(entry(a, name, path));
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: bad {}: {}", path.string(), name, e.what()));
  }
}

Archive pack(Kind kind, const json& config, const textfeat::EmbeddingProvider& provider, const ClassVocabulary& vocab,
             const tensor::ParameterStore& params, const quality::MetricCalibration* calibration, const json& extra) {
  auto [weights_manifest, blob] = tensor::snapshot(params);
  json manifest = {{"format", kFormat},
                   {"kind", to_string(kind)},
                   {"config", config},
                   {"provider", provider.to_json()},
                   {"weights", weights_manifest},
                   {"weights_hash", content_hash(blob)}};
  if (!extra.is_null()) manifest["extra"] = extra;
  Archive a;
  a[std::string(kManifest)] = manifest.dump();
  a[std::string(kWeights)] = std::move(blob);
  a[std::string(kCalibration)] = calibration ? calibration->to_json().dump() : "{}";
  a[std::string(kVocab)] = vocab_to_json(vocab).dump();
  return a;
}

// Manifest checks shared by both kinds; returns the weights blob.
const std::string& unpack_checked(const Archive& a, const json& manifest, Kind kind, const fs::path& path) {
  if (manifest.value("format", "") != kFormat) throw DataError(path.string() + " is not a mockforge artifact");
  if (manifest.value("kind", "") != to_string(kind)) {
    throw DataError(fmt::format("{} holds a {} artifact, expected {}", path.string(), manifest.value("kind", "?"),
                                to_string(kind)));
  }
  const auto& blob = entry(a, kWeights, path);
  if (content_hash(blob) != manifest.value("weights_hash", "")) {
    throw DataError(path.string() + ": weights do not match the manifest hash");
  }
  return blob;
}

}  // namespace

std::string_view to_string(Kind k) { return k == Kind::generator ? "generator" : "dual-encoder"; }

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

void write_archive(const fs::path& path, const Archive& entries) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write("MFAR", 4);
    put(out, kArchiveVersion);
    put(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, bytes] : entries) {
      put(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put(out, static_cast<std::uint64_t>(bytes.size()));
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

Archive read_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "MFAR") throw DataError(path.string() + " is not an archive");
  if (const auto v = get<std::uint32_t>(in, path); v != kArchiveVersion) {
    throw DataError(fmt::format("{}: unsupported archive version {}", path.string(), v));
  }
  const auto count = get<std::uint32_t>(in, path);
  Archive a;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in, path), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) throw DataError("truncated archive " + path.string());
    std::string bytes(get<std::uint64_t>(in, path), '\0');
    if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
      throw DataError("truncated archive " + path.string());
    }
    a.emplace(std::move(name), std::move(bytes));
  }
  return a;
}

json read_manifest(const fs::path& path) { return parse_entry(read_archive(path), kManifest, path); }

void save_generator(const fs::path& path, const generator::GeneratorModel& model,
                    const quality::MetricCalibration* calibration, const json& extra) {
  write_archive(path, pack(Kind::generator, model.config().to_json(), model.provider(), model.vocab(), model.params(),
                           calibration, extra));
}

LoadedGenerator load_generator(const fs::path& path) {
  const auto a = read_archive(path);
  LoadedGenerator out;
  out.manifest = parse_entry(a, kManifest, path);
  const auto& blob = unpack_checked(a, out.manifest, Kind::generator, path);
  auto provider = std::make_shared<const textfeat::EmbeddingProvider>(
      textfeat::EmbeddingProvider::from_json(out.manifest.at("provider")));
  out.model = std::make_unique<generator::GeneratorModel>(
      generator::GeneratorConfig::from_json(out.manifest.at("config")), std::move(provider),
      vocab_from_json(parse_entry(a, kVocab, path)), 0);
  tensor::restore(out.model->params(), out.manifest.at("weights"), blob);
  const auto cal = parse_entry(a, kCalibration, path);
  if (!cal.empty()) out.calibration = quality::MetricCalibration::from_json(cal);
  return out;
}

void save_dual_encoder(const fs::path& path, const retrieval::DualEncoder& model, const ClassVocabulary& vocab,
                       const json& extra) {
  if (vocab.size() != model.num_classes()) {
    throw UsageError(fmt::format("vocabulary has {} classes, the encoder {}", vocab.size(), model.num_classes()));
  }
  write_archive(path,
                pack(Kind::dual_encoder, model.config().to_json(), model.provider(), vocab, model.params(), nullptr, extra));
}

LoadedDualEncoder load_dual_encoder(const fs::path& path) {
  const auto a = read_archive(path);
  LoadedDualEncoder out;
  out.manifest = parse_entry(a, kManifest, path);
  const auto& blob = unpack_checked(a, out.manifest, Kind::dual_encoder, path);
  out.vocab = vocab_from_json(parse_entry(a, kVocab, path));
  auto provider = std::make_shared<const textfeat::EmbeddingProvider>(
      textfeat::EmbeddingProvider::from_json(out.manifest.at("provider")));
  out.model = std::make_unique<retrieval::DualEncoder>(retrieval::DualEncoderConfig::from_json(out.manifest.at("config")),
                                                       std::move(provider), out.vocab.size(), 0);
  tensor::restore(out.model->params(), out.manifest.at("weights"), blob);
  return out;
}

void set_calibration(const fs::path& path, const quality::MetricCalibration& calibration) {
  auto a = read_archive(path);
  entry(a, kManifest, path);
  a[std::string(kCalibration)] = calibration.to_json().dump();
  write_archive(path, a);
}

// ---- index bundle ----------------------------------------------------------------

IndexBundle build_index_bundle(std::vector<UiScreen> screens, const ClassVocabulary& vocab,
                               std::shared_ptr<const textfeat::EmbeddingProvider> provider,
                               const retrieval::DualEncoder* dual) {
  if (!provider) throw UsageError("index bundle needs an embedding provider");
  IndexBundle b;
  b.provider = std::move(provider);
  b.vocab = vocab;
  b.text_index = retrieval::text_index_build(screens, *b.provider);
  if (dual) {
    std::vector<ingest::RetrievalTokenView> views;
    views.reserve(screens.size());
    for (const auto& s : screens) views.push_back(ingest::build_retrieval_token_view(s, dual->provider()));
    b.ui_index = retrieval::ui_index_build(*dual, screens, views);
  }
  b.catalog = retrieval::ScreenCatalog(screens);
  b.screens = std::move(screens);
  return b;
}

void save_index_bundle(const fs::path& dir, const IndexBundle& bundle) {
  fs::create_directories(dir);
  std::ofstream(dir / "provider.json") << bundle.provider->to_json().dump();
  std::ofstream(dir / "vocab.json") << vocab_to_json(bundle.vocab).dump(2);
  {
    std::ofstream out(dir / "catalog.jsonl");
    for (const auto& s : bundle.screens) out << screen_to_json(s, bundle.vocab).dump() << '\n';
    if (!out) throw DataError("cannot write " + (dir / "catalog.jsonl").string());
  }
  bundle.text_index.save(dir / "text_index.uiix");
  if (bundle.ui_index) {
    bundle.ui_index->save(dir / "ui_index.uiix");
  } else {
    fs::remove(dir / "ui_index.uiix");
  }
}

IndexBundle load_index_bundle(const fs::path& dir) {
  auto read_json = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) throw DataError("cannot open " + (dir / name).string());
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}: {}", (dir / name).string(), e.what()));
    }
  };
  IndexBundle b;
  b.provider = std::make_shared<const textfeat::EmbeddingProvider>(
      textfeat::EmbeddingProvider::from_json(read_json("provider.json")));
  b.vocab = vocab_from_json(read_json("vocab.json"));
  std::ifstream in(dir / "catalog.jsonl");
  if (!in) throw DataError("cannot open " + (dir / "catalog.jsonl").string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) b.screens.push_back(screen_from_json(json::parse(line), b.vocab));
  }
  b.catalog = retrieval::ScreenCatalog(b.screens);
  b.text_index = retrieval::VectorIndex::load(dir / "text_index.uiix");
  if (fs::exists(dir / "ui_index.uiix")) b.ui_index = retrieval::VectorIndex::load(dir / "ui_index.uiix");
  return b;
}

}  // namespace mockforge::artifact
