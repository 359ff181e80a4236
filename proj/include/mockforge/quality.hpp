#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mockforge/core.hpp"

namespace mockforge::quality {

// ---- well-formedness metrics (lower is better) ---------------------------------

/// Area covered by at least two elements, exact (coordinate-compression sweep).
double metric_overlap(std::span<const ElementBox> elements);
double pair_iou(const ElementBox& a, const ElementBox& b);
/// Mean IoU over unordered pairs; 0 for fewer than two elements.
double metric_iou(std::span<const ElementBox> elements);
/// Mean over elements of the nearest distance between matching alignment lines
/// (left/center/right, top/middle/bottom) of any other element.
double metric_alignment(std::span<const ElementBox> elements);

QualityScores score(std::span<const ElementBox> elements);

enum class Metric { overlap = 0, iou = 1, alignment = 2 };
inline constexpr std::array<Metric, 3> kAllMetrics{Metric::overlap, Metric::iou, Metric::alignment};
const char* metric_name(Metric m);
double metric_value(const QualityScores& s, Metric m);

// ---- calibration, filtering, reranking ---------------------------------------

class MetricCalibration {
 public:
  MetricCalibration() = default;
  /// samples[m] are raw validation values; they are sorted here.
  explicit MetricCalibration(std::array<std::vector<double>, 3> samples);

  double mean(Metric m) const { return means_[static_cast<int>(m)]; }
  std::span<const double> samples(Metric m) const { return samples_[static_cast<int>(m)]; }
  std::size_t size() const { return samples_[0].size(); }

  /// Empirical CDF over the sorted support s_0..s_{n-1}: F(s_i) = i/(n-1) at the
  /// lowest index of a run of ties, linear between support points, 0 below and 1 above.
  double cdf(Metric m, double x) const;

  nlohmann::json to_json() const;
  static MetricCalibration from_json(const nlohmann::json& j);

 private:
  std::array<double, 3> means_{};
  std::array<std::vector<double>, 3> samples_;
};

/// Throws DataError on an empty split.
MetricCalibration calibrate(std::span<const std::vector<ElementBox>> validation_views);

bool passes_filter(const QualityScores& s, const MetricCalibration& cal);

/// Fills in missing scores, then keeps candidates at or below every validation mean.
std::vector<MockupCandidate> filter_candidates(std::vector<MockupCandidate> candidates, const MetricCalibration& cal);

enum class RerankMode {
  survival,  // prod (1 - F): lower metrics score higher
  literal,   // prod F, as the sentence reads
};

double rerank_score(const QualityScores& s, const MetricCalibration& cal, RerankMode mode = RerankMode::survival);

/// Scores, sorts descending (stable) and keeps ceil(n/2).
std::vector<MockupCandidate> rerank_candidates(std::vector<MockupCandidate> candidates, const MetricCalibration& cal,
                                               RerankMode mode = RerankMode::survival);

inline constexpr int kSnapGrid = 32;

ElementBox snap_element(const ElementBox& e, int grid = kSnapGrid);
MockupCandidate snap_to_grid(MockupCandidate candidate, int grid = kSnapGrid);

// ---- DocSim ------------------------------------------------------------------

struct DocSimParams {
  double base = 2.0;          // weight decays as base^-(distance + shape_weight * shape difference)
  double shape_weight = 2.0;
};

/// Maximum-weight assignment on a rows x cols weight matrix (Hungarian, O(n^3)).
/// Returns the column matched to each row, or -1.
std::vector<int> max_weight_matching(const std::vector<std::vector<double>>& weight);

double docsim_pair_weight(const ElementBox& p, const ElementBox& q, const DocSimParams& params = {});
double docsim(std::span<const ElementBox> a, std::span<const ElementBox> b, const DocSimParams& params = {});
/// Mean pairwise docsim; throws UsageError for fewer than two candidates.
double diversity(std::span<const MockupCandidate> set, const DocSimParams& params = {});
/// Max docsim to the ground truth; throws UsageError on an empty set.
double relevance(std::span<const MockupCandidate> set, std::span<const ElementBox> ground_truth,
                 const DocSimParams& params = {});

// ---- Table 2 -----------------------------------------------------------------

struct Table2Row {
  std::string method;
  double iou = 0.0;
  double overlap = 0.0;
  double alignment = 0.0;
  std::optional<double> diversity;
  std::optional<double> relevance;
};

inline constexpr const char* kTable2Header = "method\tIoU\tOverlap\tAlignment\tDiversity\tRelevance";

std::string format_table2(std::span<const Table2Row> rows);

}  // namespace mockforge::quality
