#pragma once

#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mockforge/artifact.hpp"

namespace mockforge::service {

inline constexpr std::size_t kMaxRequestCount = 50;
inline constexpr std::size_t kCacheCapacity = 1024;

/// Invalid request body; one message per offending field (HTTP 400).
class RequestError : public UsageError {
 public:
  explicit RequestError(std::map<std::string, std::string> fields);
  const std::map<std::string, std::string>& fields() const { return fields_; }

 private:
  std::map<std::string, std::string> fields_;
};

/// The request needs an artifact the service was started without (HTTP 409).
class ArtifactMissing : public UsageError {
 public:
  explicit ArtifactMissing(std::string artifact);
  const std::string& artifact() const { return artifact_; }

 private:
  std::string artifact_;
};

struct GenerateRequest {
  std::string prompt;
  std::size_t n = 10;
  double temperature = 0.1;
  std::uint64_t seed = 0;
  std::vector<ElementBox> pins;
  bool postprocess = true;

  static GenerateRequest from_json(const nlohmann::json& j, const ClassVocabulary& vocab);
};

struct RetrieveRequest {
  std::string prompt;
  Method mode = Method::text_only;
  std::size_t k = 5;

  static RetrieveRequest from_json(const nlohmann::json& j);
};

/// Immutable once loaded; the service swaps whole snapshots.
struct Artifacts {
  std::shared_ptr<const generator::GeneratorModel> generator;
  std::optional<quality::MetricCalibration> calibration;
  std::string generator_id;
  std::shared_ptr<const retrieval::DualEncoder> dual_encoder;
  std::string dual_encoder_id;
  std::shared_ptr<const artifact::IndexBundle> index;

  bool has_text_index() const { return index != nullptr; }
  bool has_ui_index() const { return index && index->ui_index && dual_encoder; }
};

struct ArtifactPaths {
  std::optional<std::filesystem::path> generator;
  std::optional<std::filesystem::path> dual_encoder;
  std::optional<std::filesystem::path> index;
};

/// Loads whatever is given. A dual encoder plus an index without UI embeddings
/// gets them computed here.
Artifacts load_artifacts(const ArtifactPaths& paths);

struct GenerateOutcome {
  std::vector<MockupCandidate> candidates;
  std::size_t sampled = 0;
  std::size_t passed_filter = 0;
};

/// Samples n candidates (seeds seed..seed+n-1). With postprocess: filter against
/// the calibration, keep the top half by rerank score, snap to the grid. Pinned
/// boxes are left exactly as given. Scores describe the returned geometry.
GenerateOutcome generate(const generator::GeneratorModel& model, const quality::MetricCalibration* calibration,
                         const GenerateRequest& request);

/// Distinct screens, best first.
std::vector<MockupCandidate> retrieve(const Artifacts& artifacts, const RetrieveRequest& request);

/// Content hash of the candidate, so equal candidates share an id.
std::string candidate_id(const MockupCandidate& c, const ClassVocabulary& vocab);

class CandidateCache {
 public:
  explicit CandidateCache(std::size_t capacity = kCacheCapacity);

  struct Entry {
    MockupCandidate candidate;
    ClassVocabulary vocab;
  };
  void put(const std::string& id, Entry entry);
  std::optional<Entry> get(const std::string& id);
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<std::pair<std::string, Entry>> order_;  // most recent first
  std::unordered_map<std::string, std::list<std::pair<std::string, Entry>>::iterator> where_;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Transport-independent request handling for the /v1 API.
class Service {
 public:
  explicit Service(Artifacts artifacts, std::size_t cache_capacity = kCacheCapacity);

  HttpResponse handle(std::string_view method, std::string_view path, std::string_view body);

  void swap_artifacts(Artifacts artifacts);
  std::shared_ptr<const Artifacts> artifacts() const;
  std::size_t cached_candidates() const { return cache_.size(); }

 private:
  HttpResponse generate(const Artifacts& a, std::string_view body);
  HttpResponse retrieve(const Artifacts& a, std::string_view body);
  HttpResponse svg(std::string_view id);
  HttpResponse classes(const Artifacts& a) const;
  nlohmann::json publish(const MockupCandidate& c, const ClassVocabulary& vocab, nlohmann::json provenance);

  mutable std::mutex artifacts_mu_;
  std::shared_ptr<const Artifacts> artifacts_;
  CandidateCache cache_;
};

/// cpp-httplib front end over a Service.
class HttpServer {
 public:
  explicit HttpServer(Service& service, std::size_t threads = 4);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws UsageError on failure.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mockforge::service
