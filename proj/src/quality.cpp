#include "mockforge/quality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace mockforge::quality {

using json = nlohmann::json;

namespace {

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

double metric_overlap(std::span<const ElementBox> elements) {
  const std::size_t n = elements.size();
  if (n < 2) return 0.0;
  std::vector<double> xs;
  xs.reserve(2 * n);
  for (const auto& e : elements) {
    xs.push_back(clip01(e.x));
    xs.push_back(clip01(e.right()));
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  // For each vertical strip between consecutive x cuts, sweep the y events of the
  // boxes spanning it and accumulate the length covered at least twice.
  std::vector<std::pair<double, int>> events;
  double area = 0.0;
  for (std::size_t s = 0; s + 1 < xs.size(); ++s) {
    const double x0 = xs[s], x1 = xs[s + 1];
    const double mid = 0.5 * (x0 + x1);
    events.clear();
    for (const auto& e : elements) {
      if (clip01(e.x) <= mid && mid < clip01(e.right())) {
        const double y0 = clip01(e.y), y1 = clip01(e.bottom());
        if (y1 > y0) {
          events.emplace_back(y0, +1);
          events.emplace_back(y1, -1);
        }
      }
    }
    if (events.size() < 4) continue;
    std::sort(events.begin(), events.end());
    int depth = 0;
    double covered = 0.0;
    double prev = events.front().first;
    for (const auto& [y, d] : events) {
      if (depth >= 2) covered += y - prev;
      depth += d;
      prev = y;
    }
    area += covered * (x1 - x0);
  }
  return area;
}

double pair_iou(const ElementBox& a, const ElementBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double metric_iou(std::span<const ElementBox> elements) {
  const std::size_t n = elements.size();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) total += pair_iou(elements[i], elements[j]);
  return total / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double metric_alignment(std::span<const ElementBox> elements) {
  const std::size_t n = elements.size();
  if (n < 2) return 0.0;
  auto lines = [](const ElementBox& e) {
    return std::array<double, 6>{e.x, e.x + 0.5 * e.w, e.right(), e.y, e.y + 0.5 * e.h, e.bottom()};
  };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto li = lines(elements[i]);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto lj = lines(elements[j]);
      for (int k = 0; k < 6; ++k) best = std::min(best, std::abs(li[k] - lj[k]));
    }
    total += best;
  }
  return total / static_cast<double>(n);
}

QualityScores score(std::span<const ElementBox> elements) {
  QualityScores s;
  s.overlap = metric_overlap(elements);
  s.iou = metric_iou(elements);
  s.alignment = metric_alignment(elements);
  return s;
}

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::overlap: return "overlap";
    case Metric::iou: return "iou";
    case Metric::alignment: return "alignment";
  }
  return "?";
}

double metric_value(const QualityScores& s, Metric m) {
  switch (m) {
    case Metric::overlap: return s.overlap;
    case Metric::iou: return s.iou;
    case Metric::alignment: return s.alignment;
  }
  return 0.0;
}

MetricCalibration::MetricCalibration(std::array<std::vector<double>, 3> samples) : samples_(std::move(samples)) {
  for (int m = 0; m < 3; ++m) {
    auto& v = samples_[m];
    if (v.empty()) throw DataError("calibration needs at least one validation value");
    if (v.size() != samples_[0].size()) throw DataError("calibration metric sample counts differ");
    std::sort(v.begin(), v.end());
    means_[m] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
}

double MetricCalibration::cdf(Metric m, double x) const {
  const auto& s = samples_[static_cast<int>(m)];
  const std::size_t n = s.size();
  if (x < s.front()) return 0.0;
  if (x > s.back()) return 1.0;
  if (n == 1) return 0.0;  // x equals the single support point
  const auto it = std::lower_bound(s.begin(), s.end(), x);
  const auto i = static_cast<std::size_t>(it - s.begin());
  const double denom = static_cast<double>(n - 1);
  if (*it == x) return static_cast<double>(i) / denom;
  // s[i-1] < x < s[i]; i >= 1 here because x >= s.front()
  const double lo = s[i - 1], hi = s[i];
  return (static_cast<double>(i - 1) + (x - lo) / (hi - lo)) / denom;
}

json MetricCalibration::to_json() const {
  json j = json::object();
  for (Metric m : kAllMetrics) {
    j[metric_name(m)] = {{"mean", mean(m)}, {"samples", samples_[static_cast<int>(m)]}};
  }
  return j;
}

MetricCalibration MetricCalibration::from_json(const json& j) {
  std::array<std::vector<double>, 3> samples;
  for (Metric m : kAllMetrics) {
    if (!j.contains(metric_name(m))) throw DataError(std::string("calibration missing metric ") + metric_name(m));
    samples[static_cast<int>(m)] = j.at(metric_name(m)).at("samples").get<std::vector<double>>();
  }
  return MetricCalibration(std::move(samples));
}

MetricCalibration calibrate(std::span<const std::vector<ElementBox>> validation_views) {
  if (validation_views.empty()) throw DataError("cannot calibrate on an empty validation split");
  std::array<std::vector<double>, 3> samples;
  for (const auto& view : validation_views) {
    const auto s = score(view);
    for (Metric m : kAllMetrics) samples[static_cast<int>(m)].push_back(metric_value(s, m));
  }
  return MetricCalibration(std::move(samples));
}

bool passes_filter(const QualityScores& s, const MetricCalibration& cal) {
  return std::all_of(kAllMetrics.begin(), kAllMetrics.end(),
                     [&](Metric m) { return metric_value(s, m) <= cal.mean(m); });
}

namespace {

void ensure_scores(MockupCandidate& c) {
  if (!c.scores) c.scores = score(c.elements);
}

}  // namespace

std::vector<MockupCandidate> filter_candidates(std::vector<MockupCandidate> candidates, const MetricCalibration& cal) {
  std::vector<MockupCandidate> kept;
  for (auto& c : candidates) {
    ensure_scores(c);
    if (passes_filter(*c.scores, cal)) kept.push_back(std::move(c));
  }
  return kept;
}

double rerank_score(const QualityScores& s, const MetricCalibration& cal, RerankMode mode) {
  double p = 1.0;
  for (Metric m : kAllMetrics) {
    const double f = cal.cdf(m, metric_value(s, m));
    p *= mode == RerankMode::survival ? 1.0 - f : f;
  }
  return p;
}

std::vector<MockupCandidate> rerank_candidates(std::vector<MockupCandidate> candidates, const MetricCalibration& cal,
                                               RerankMode mode) {
  for (auto& c : candidates) {
    ensure_scores(c);
    c.scores->rerank_score = rerank_score(*c.scores, cal, mode);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const MockupCandidate& a, const MockupCandidate& b) {
    return a.scores->rerank_score > b.scores->rerank_score;
  });
  candidates.resize((candidates.size() + 1) / 2);
  return candidates;
}

ElementBox snap_element(const ElementBox& e, int grid) {
  const double g = static_cast<double>(grid);
  auto snap = [g](double v) { return std::round(v * g) / g; };
  ElementBox out = e;
  out.w = std::clamp(snap(e.w), 1.0 / g, 1.0);
  out.h = std::clamp(snap(e.h), 1.0 / g, 1.0);
  out.x = std::clamp(snap(e.x), 0.0, 1.0 - out.w);
  out.y = std::clamp(snap(e.y), 0.0, 1.0 - out.h);
  return out;
}

MockupCandidate snap_to_grid(MockupCandidate candidate, int grid) {
  for (auto& e : candidate.elements) e = snap_element(e, grid);
  if (candidate.scores) {
    const double rerank = candidate.scores->rerank_score;
    candidate.scores = score(candidate.elements);
    candidate.scores->rerank_score = rerank;
  }
  return candidate;
}

std::vector<int> max_weight_matching(const std::vector<std::vector<double>>& weight) {
  const std::size_t rows = weight.size();
  const std::size_t cols = rows ? weight[0].size() : 0;
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
  // Square min-cost assignment on cost = max_w - w, padded with max_w (weight 0).
  const std::size_t n = std::max(rows, cols);
  double max_w = 0.0;
  for (const auto& r : weight) max_w = std::max(max_w, *std::max_element(r.begin(), r.end()));
  auto cost = [&](std::size_t i, std::size_t j) {
    return (i < rows && j < cols) ? max_w - weight[i][j] : max_w;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> match(rows, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] >= 1 && p[j] <= rows && j <= cols) match[p[j] - 1] = static_cast<int>(j - 1);
  }
  return match;
}

double docsim_pair_weight(const ElementBox& p, const ElementBox& q, const DocSimParams& params) {
  if (p.class_id != q.class_id) return 0.0;
  const double dx = (p.x + 0.5 * p.w) - (q.x + 0.5 * q.w);
  const double dy = (p.y + 0.5 * p.h) - (q.y + 0.5 * q.h);
  const double shape = std::abs(p.w - q.w) + std::abs(p.h - q.h);
  return std::sqrt(std::min(p.area(), q.area())) *
         std::pow(params.base, -(std::hypot(dx, dy) + params.shape_weight * shape));
}

double docsim(std::span<const ElementBox> a, std::span<const ElementBox> b, const DocSimParams& params) {
  if (a.empty() || b.empty()) return 0.0;
  std::vector<std::vector<double>> w(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) w[i][j] = docsim_pair_weight(a[i], b[j], params);
  const auto match = max_weight_matching(w);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (match[i] >= 0) total += w[i][static_cast<std::size_t>(match[i])];
  }
  return total / static_cast<double>(std::max(a.size(), b.size()));
}

double diversity(std::span<const MockupCandidate> set, const DocSimParams& params) {
  if (set.size() < 2) throw UsageError("diversity needs at least two candidates");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = i + 1; j < set.size(); ++j) {
      total += docsim(set[i].elements, set[j].elements, params);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

double relevance(std::span<const MockupCandidate> set, std::span<const ElementBox> ground_truth,
                 const DocSimParams& params) {
  if (set.empty()) throw UsageError("relevance needs at least one candidate");
  double best = 0.0;
  for (const auto& c : set) best = std::max(best, docsim(c.elements, ground_truth, params));
  return best;
}

std::string format_table2(std::span<const Table2Row> rows) {
  std::string out = std::string(kTable2Header) + "\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : std::string("-"); };
  for (const auto& r : rows) {
    out += fmt::format("{}\t{:.4f}\t{:.4f}\t{:.4f}\t{}\t{}\n", r.method, r.iou, r.overlap, r.alignment,
                       opt(r.diversity), opt(r.relevance));
  }
  return out;
}

}  // namespace mockforge::quality
