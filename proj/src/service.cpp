#include "mockforge/service.hpp"

#include <atomic>
#include <chrono>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mockforge/render.hpp"

namespace mockforge::service {

using nlohmann::json;

namespace {

std::string field_summary(const std::map<std::string, std::string>& fields) {
  std::string out;
  for (const auto& [k, v] : fields) out += (out.empty() ? "" : "; ") + k + ": " + v;
  return out;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

// Collects field problems while reading a request object.
class FieldReader {
 public:
  FieldReader(const json& j, std::initializer_list<const char*> known) : j_(j) {
    if (!j.is_object()) {
      errors_["body"] = "must be a JSON object";
      return;
    }
    for (const auto& [k, v] : j.items()) {
      if (std::find_if(known.begin(), known.end(), [&](const char* n) { return k == n; }) == known.end()) {
        errors_[k] = "unknown field";
      }
    }
  }

  const json* find(const char* name) const {
    if (!j_.is_object()) return nullptr;
    auto it = j_.find(name);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string prompt() {
    const json* v = find("prompt");
    if (!v) {
      fail("prompt", "required");
    } else if (!v->is_string() || blank(v->get<std::string>())) {
      fail("prompt", "must be a non-empty string");
    } else {
      return v->get<std::string>();
    }
    return {};
  }

  std::size_t count(const char* name, std::size_t fallback) {
    const json* v = find(name);
    if (!v) return fallback;
    if (!v->is_number_integer() || v->get<std::int64_t>() < 1 ||
        v->get<std::int64_t>() > static_cast<std::int64_t>(kMaxRequestCount)) {
      fail(name, fmt::format("must be an integer in 1..{}", kMaxRequestCount));
      return fallback;
    }
    return v->get<std::size_t>();
  }

  void fail(const std::string& field, std::string message) { errors_.emplace(field, std::move(message)); }
  void finish() const {
    if (!errors_.empty()) throw RequestError(errors_);
  }

 private:
  const json& j_;
  std::map<std::string, std::string> errors_;
};

std::string incident_id() {
  static std::atomic<std::uint64_t> counter{0};
  const auto now = std::chrono::system_clock::now().time_since_epoch().count();
  return fmt::format("{:x}-{:x}", static_cast<std::uint64_t>(now) & 0xffffffffffULL, ++counter);
}

HttpResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

HttpResponse error_response(int status, const std::string& code, const std::string& message, json extra = json::object()) {
  extra["error"] = code;
  extra["message"] = message;
  return json_response(status, extra);
}

}  // namespace

RequestError::RequestError(std::map<std::string, std::string> fields)
    : UsageError("invalid request: " + field_summary(fields)), fields_(std::move(fields)) {}

ArtifactMissing::ArtifactMissing(std::string artifact)
    : UsageError("artifact not loaded: " + artifact), artifact_(std::move(artifact)) {}

GenerateRequest GenerateRequest::from_json(const json& j, const ClassVocabulary& vocab) {
  FieldReader r(j, {"prompt", "n", "temperature", "seed", "pins", "postprocess"});
  GenerateRequest req;
  req.prompt = r.prompt();
  req.n = r.count("n", req.n);
  if (const json* v = r.find("temperature")) {
    if (!v->is_number() || !(v->get<double>() > 0.0) || v->get<double>() > 10.0) {
      r.fail("temperature", "must be a number in (0, 10]");
    } else {
      req.temperature = v->get<double>();
    }
  }
  if (const json* v = r.find("seed")) {
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
      r.fail("seed", "must be a non-negative integer");
    } else {
      req.seed = v->get<std::uint64_t>();
    }
  }
  if (const json* v = r.find("postprocess")) {
    if (!v->is_boolean()) {
      r.fail("postprocess", "must be a boolean");
    } else {
      req.postprocess = v->get<bool>();
    }
  }
  if (const json* v = r.find("pins")) {
    if (!v->is_array()) {
      r.fail("pins", "must be an array of elements");
    } else {
      for (std::size_t i = 0; i < v->size(); ++i) {
        const auto field = fmt::format("pins[{}]", i);
        const auto& p = (*v)[i];
        try {
          if (!p.is_object() || !p.contains("class")) throw DataError("needs class, x, y, w, h");
          ElementBox e = element_from_json(p, vocab);
          e.parent_idx.reset();
          e.is_leaf = true;
          if (vocab.is_control(e.class_id)) throw DataError("control classes cannot be pinned");
          if (!box_is_valid(e)) throw DataError("box outside the unit square or empty");
          req.pins.push_back(std::move(e));
        } catch (const std::exception& ex) {
          r.fail(field, ex.what());
        }
      }
    }
  }
  r.finish();
  return req;
}

RetrieveRequest RetrieveRequest::from_json(const json& j) {
  FieldReader r(j, {"prompt", "mode", "k"});
  RetrieveRequest req;
  req.prompt = r.prompt();
  req.k = r.count("k", req.k);
  if (const json* v = r.find("mode")) {
    const std::string mode = v->is_string() ? v->get<std::string>() : "";
    if (mode == "text-only") {
      req.mode = Method::text_only;
    } else if (mode == "multi-modal") {
      req.mode = Method::multi_modal;
    } else {
      r.fail("mode", "must be \"text-only\" or \"multi-modal\"");
    }
  }
  r.finish();
  return req;
}

Artifacts load_artifacts(const ArtifactPaths& paths) {
  Artifacts a;
  if (paths.generator) {
    auto g = artifact::load_generator(*paths.generator);
    a.generator = std::move(g.model);
    a.calibration = std::move(g.calibration);
    a.generator_id = g.manifest.value("weights_hash", "");
    spdlog::info("loaded generator {} ({})", paths.generator->string(), a.generator_id);
  }
  if (paths.dual_encoder) {
    auto d = artifact::load_dual_encoder(*paths.dual_encoder);
    a.dual_encoder = std::move(d.model);
    a.dual_encoder_id = d.manifest.value("weights_hash", "");
    spdlog::info("loaded dual encoder {} ({})", paths.dual_encoder->string(), a.dual_encoder_id);
  }
  if (paths.index) {
    auto bundle = artifact::load_index_bundle(*paths.index);
    if (a.dual_encoder && !bundle.ui_index) {
      spdlog::info("computing UI embeddings for {} indexed screens", bundle.screens.size());
      bundle = artifact::build_index_bundle(std::move(bundle.screens), bundle.vocab, bundle.provider, a.dual_encoder.get());
    }
    a.index = std::make_shared<const artifact::IndexBundle>(std::move(bundle));
    spdlog::info("loaded index {} ({} screens)", paths.index->string(), a.index->screens.size());
  }
  return a;
}

GenerateOutcome generate(const generator::GeneratorModel& model, const quality::MetricCalibration* calibration,
                         const GenerateRequest& request) {
  if (request.postprocess && !calibration) throw ArtifactMissing("calibration");
  if (request.pins.size() > model.max_elements()) {
    throw RequestError({{"pins", fmt::format("at most {} elements can be pinned", model.max_elements())}});
  }
  generator::SamplerConfig cfg;
  cfg.temperature = request.temperature;
  cfg.seed = request.seed;
  cfg.n_samples = request.n;
  cfg.max_elements = model.max_elements();
  GenerateOutcome out;
  auto samples = generator::sample_uis(model, request.prompt, cfg, request.pins);
  out.sampled = samples.size();
  if (!request.postprocess) {
    for (auto& c : samples) c.scores = quality::score(c.elements);
    out.passed_filter = out.sampled;
    out.candidates = std::move(samples);
    return out;
  }
  auto kept = quality::filter_candidates(std::move(samples), *calibration);
  out.passed_filter = kept.size();
  kept = quality::rerank_candidates(std::move(kept), *calibration);
  auto pinned = [&](const ElementBox& e) {
    return std::find(request.pins.begin(), request.pins.end(), e) != request.pins.end();
  };
  for (auto& c : kept) {
    for (auto& e : c.elements) {
      if (!pinned(e)) e = quality::snap_element(e);
    }
    c.elements = canonical_sort(c.elements);
    const double rerank = c.scores ? c.scores->rerank_score : 0.0;
    c.scores = quality::score(c.elements);
    c.scores->rerank_score = rerank;
  }
  out.candidates = std::move(kept);
  return out;
}

std::vector<MockupCandidate> retrieve(const Artifacts& a, const RetrieveRequest& request) {
  if (!a.index) throw ArtifactMissing("text_index");
  const auto& idx = *a.index;
  std::vector<MockupCandidate> out;
  if (request.mode == Method::text_only) {
    out = retrieval::retrieve_text_only(request.prompt, idx.text_index, *idx.provider, idx.catalog, request.k, true);
  } else {
    if (!a.dual_encoder) throw ArtifactMissing("dual_encoder");
    if (!idx.ui_index) throw ArtifactMissing("ui_index");
    out = retrieval::retrieve_multimodal(request.prompt, *a.dual_encoder, *idx.ui_index, idx.catalog, request.k);
  }
  for (auto& c : out) c.scores = quality::score(c.elements);
  return out;
}

std::string candidate_id(const MockupCandidate& c, const ClassVocabulary& vocab) {
  return "c" + artifact::content_hash(candidate_to_json(c, vocab).dump());
}

// ---- cache ---------------------------------------------------------------------

CandidateCache::CandidateCache(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw UsageError("candidate cache needs a positive capacity");
}

void CandidateCache::put(const std::string& id, Entry entry) {
  std::lock_guard lock(mu_);
  if (auto it = where_.find(id); it != where_.end()) {
    order_.splice(order_.begin(), order_, it->second);
    it->second->second = std::move(entry);
    return;
  }
  order_.emplace_front(id, std::move(entry));
  where_[id] = order_.begin();
  if (order_.size() > capacity_) {
    where_.erase(order_.back().first);
    order_.pop_back();
  }
}

std::optional<CandidateCache::Entry> CandidateCache::get(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = where_.find(id);
  if (it == where_.end()) return std::nullopt;
  order_.splice(order_.begin(), order_, it->second);
  return it->second->second;
}

std::size_t CandidateCache::size() const {
  std::lock_guard lock(mu_);
  return order_.size();
}

// ---- service -------------------------------------------------------------------

Service::Service(Artifacts artifacts, std::size_t cache_capacity)
    : artifacts_(std::make_shared<const Artifacts>(std::move(artifacts))), cache_(cache_capacity) {}

void Service::swap_artifacts(Artifacts artifacts) {
  auto next = std::make_shared<const Artifacts>(std::move(artifacts));
  std::lock_guard lock(artifacts_mu_);
  artifacts_ = std::move(next);
}

std::shared_ptr<const Artifacts> Service::artifacts() const {
  std::lock_guard lock(artifacts_mu_);
  return artifacts_;
}

HttpResponse Service::handle(std::string_view method, std::string_view path, std::string_view body) {
  const auto snapshot = artifacts();  // one snapshot for the whole request
  try {
    if (path == "/v1/health") {
      if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
      return json_response(200, {{"status", "ok"},
                                 {"artifacts",
                                  {{"generator", snapshot->generator != nullptr},
                                   {"dual_encoder", snapshot->dual_encoder != nullptr},
                                   {"text_index", snapshot->has_text_index()}}}});
    }
    if (path == "/v1/classes") {
      if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
      return classes(*snapshot);
    }
    if (path == "/v1/generate") {
      if (method != "POST") return error_response(405, "method_not_allowed", "use POST");
      return generate(*snapshot, body);
    }
    if (path == "/v1/retrieve") {
      if (method != "POST") return error_response(405, "method_not_allowed", "use POST");
      return retrieve(*snapshot, body);
    }
    constexpr std::string_view prefix = "/v1/candidates/", suffix = "/svg";
    if (path.starts_with(prefix) && path.ends_with(suffix) && path.size() > prefix.size() + suffix.size()) {
      if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
      return svg(path.substr(prefix.size(), path.size() - prefix.size() - suffix.size()));
    }
    return error_response(404, "not_found", "no such endpoint: " + std::string(path));
  } catch (const RequestError& e) {
    return error_response(400, "invalid_request", e.what(), {{"fields", e.fields()}});
  } catch (const ArtifactMissing& e) {
    return error_response(409, "artifact_missing", e.what(), {{"artifact", e.artifact()}});
  } catch (const std::exception& e) {
    const auto incident = incident_id();
    spdlog::error("incident {}: {} {}: {}", incident, method, path, e.what());
    return error_response(500, "internal", "internal error", {{"incident", incident}});
  }
}

json Service::publish(const MockupCandidate& c, const ClassVocabulary& vocab, json provenance) {
  const auto id = candidate_id(c, vocab);
  cache_.put(id, {c, vocab});
  json j = candidate_to_json(c, vocab);
  j["id"] = id;
  j["provenance"] = std::move(provenance);
  return j;
}

namespace {

json parse_body(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw RequestError({{"body", std::string("not valid JSON: ") + e.what()}});
  }
}

}  // namespace

HttpResponse Service::generate(const Artifacts& a, std::string_view body) {
  const json j = parse_body(body);
  if (!a.generator) throw ArtifactMissing("generator");
  const auto req = GenerateRequest::from_json(j, a.generator->vocab());
  const auto out = service::generate(*a.generator, a.calibration ? &*a.calibration : nullptr, req);
  json list = json::array();
  for (const auto& c : out.candidates) {
    list.push_back(publish(c, a.generator->vocab(),
                           {{"method", "generator"},
                            {"model", a.generator_id},
                            {"seed", c.seed.value_or(0)},
                            {"temperature", req.temperature},
                            {"postprocessed", req.postprocess}}));
  }
  return json_response(200, {{"candidates", std::move(list)},
                             {"sampled", out.sampled},
                             {"passed_filter", out.passed_filter}});
}

HttpResponse Service::retrieve(const Artifacts& a, std::string_view body) {
  const auto req = RetrieveRequest::from_json(parse_body(body));
  const auto out = service::retrieve(a, req);
  const auto& vocab = a.index->vocab;
  json list = json::array();
  for (const auto& c : out) {
    json prov = {{"method", std::string(to_string(c.method))}, {"source_screen_id", c.source_screen_id.value_or("")}};
    if (c.method == Method::multi_modal) prov["model"] = a.dual_encoder_id;
    list.push_back(publish(c, vocab, std::move(prov)));
  }
  return json_response(200, {{"candidates", std::move(list)}});
}

HttpResponse Service::svg(std::string_view id) {
  auto entry = cache_.get(std::string(id));
  if (!entry) return error_response(404, "not_found", "unknown candidate id " + std::string(id));
  return {200, "image/svg+xml", render::render_svg(entry->candidate, entry->vocab).svg};
}

HttpResponse Service::classes(const Artifacts& a) const {
  const ClassVocabulary vocab = a.generator ? a.generator->vocab()
                                : a.index   ? a.index->vocab
                                            : ClassVocabulary::rico_default();
  json list = json::array();
  for (const auto& c : vocab.classes()) {
    const char* kind = c.kind == ClassKind::content     ? "content"
                       : c.kind == ClassKind::separator ? "separator"
                       : c.kind == ClassKind::unknown   ? "unknown"
                                                        : "control";
    list.push_back({{"id", c.id}, {"name", c.name}, {"kind", kind}, {"renderable", render::has_template(c.name)}});
  }
  return json_response(200, {{"classes", std::move(list)}});
}

}  // namespace mockforge::service
