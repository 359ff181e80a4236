#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mockforge/generator.hpp"
#include "mockforge/quality.hpp"
#include "mockforge/retrieval.hpp"

// Model artifacts: one file holding manifest.json, weights.bin, calibration.json
// and vocab.json as named entries.
namespace mockforge::artifact {

inline constexpr std::string_view kManifest = "manifest.json";
inline constexpr std::string_view kWeights = "weights.bin";
inline constexpr std::string_view kCalibration = "calibration.json";
inline constexpr std::string_view kVocab = "vocab.json";

/// "MFAR", u32 version, u32 entry count, then per entry u32 name length, name,
/// u64 size, bytes. Little-endian.
using Archive = std::map<std::string, std::string>;
void write_archive(const std::filesystem::path& path, const Archive& entries);
Archive read_archive(const std::filesystem::path& path);

/// FNV-1a 64, hex. Recorded in the manifest to catch a weights/manifest mix-up.
std::string content_hash(std::string_view bytes);

enum class Kind { dual_encoder, generator };
std::string_view to_string(Kind k);

struct LoadedGenerator {
  std::unique_ptr<generator::GeneratorModel> model;
  std::optional<quality::MetricCalibration> calibration;
  nlohmann::json manifest;
};

struct LoadedDualEncoder {
  std::unique_ptr<retrieval::DualEncoder> model;
  ClassVocabulary vocab;
  nlohmann::json manifest;
};

void save_generator(const std::filesystem::path& path, const generator::GeneratorModel& model,
                    const quality::MetricCalibration* calibration = nullptr, const nlohmann::json& extra = {});
LoadedGenerator load_generator(const std::filesystem::path& path);

void save_dual_encoder(const std::filesystem::path& path, const retrieval::DualEncoder& model,
                       const ClassVocabulary& vocab, const nlohmann::json& extra = {});
LoadedDualEncoder load_dual_encoder(const std::filesystem::path& path);

/// Replaces calibration.json in an existing archive.
void set_calibration(const std::filesystem::path& path, const quality::MetricCalibration& calibration);

/// Reads only the manifest, e.g. to find out what an archive holds.
nlohmann::json read_manifest(const std::filesystem::path& path);

// ---- retrieval index bundle (a directory) --------------------------------------

/// provider.json + text_index.uiix + catalog.jsonl + vocab.json, plus ui_index.uiix
/// when built with a dual encoder.
struct IndexBundle {
  std::shared_ptr<const textfeat::EmbeddingProvider> provider;  // text-only embeddings
  retrieval::VectorIndex text_index;
  std::optional<retrieval::VectorIndex> ui_index;
  std::vector<UiScreen> screens;
  retrieval::ScreenCatalog catalog;
  ClassVocabulary vocab;
};

IndexBundle build_index_bundle(std::vector<UiScreen> screens, const ClassVocabulary& vocab,
                               std::shared_ptr<const textfeat::EmbeddingProvider> provider,
                               const retrieval::DualEncoder* dual = nullptr);
void save_index_bundle(const std::filesystem::path& dir, const IndexBundle& bundle);
IndexBundle load_index_bundle(const std::filesystem::path& dir);

}  // namespace mockforge::artifact
