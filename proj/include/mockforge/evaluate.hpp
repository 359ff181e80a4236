#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mockforge/artifact.hpp"

// Table 1 and Table 2 harnesses shared by the CLI and the acceptance checks.
namespace mockforge::evaluate {

inline constexpr const char* kRowGenerator = "UI Generator";
inline constexpr const char* kRowMultiModal = "Multi-modal Retriever";
inline constexpr const char* kRowTextOnly = "Text-only Retriever";
inline constexpr const char* kRowData = "Data (test set)";

struct Table1Config {
  std::size_t subset_size = 276;
  std::size_t trials = 5;
  std::uint64_t seed = 0;
};

/// "Multi-modal Retriever (N subsets avg.)" when the split has more screens than
/// subset_size, then "Multi-modal Retriever (entire test set)".
std::vector<retrieval::Table1Row> table1(const retrieval::DualEncoder& enc, std::span<const UiScreen> test,
                                         const Table1Config& cfg);

struct Table2Config {
  std::size_t samples = 10;  // generator samples per description
  std::size_t k = 5;         // retrieved UIs per description (= top half of the samples)
  double temperature = 0.1;
  std::uint64_t seed = 0;
  std::optional<std::size_t> max_queries;  // first caption of the first N test screens
};

/// What each row's set-level metrics were computed over.
struct Table2Counts {
  std::size_t queries = 0;
  std::size_t generator_samples = 0;
  std::size_t generator_passed = 0;
  std::size_t generator_empty_sets = 0;  // queries whose post-processed set was empty
};

struct Table2Inputs {
  std::span<const UiScreen> test;
  const generator::GeneratorModel* generator = nullptr;
  const quality::MetricCalibration* calibration = nullptr;
  const artifact::IndexBundle* index = nullptr;  // train split
  const retrieval::DualEncoder* dual_encoder = nullptr;
};

/// Well-formedness is averaged over every UI a method returns (all generator
/// samples; every retrieved UI; every test screen). Diversity and relevance use
/// the set shown to the user: the post-processed generator set, the k retrieved
/// UIs. Diversity needs two UIs, so smaller sets are left out of that average.
/// Rows whose inputs are missing are skipped.
std::vector<quality::Table2Row> table2(const Table2Inputs& in, const Table2Config& cfg, Table2Counts* counts = nullptr);

}  // namespace mockforge::evaluate
