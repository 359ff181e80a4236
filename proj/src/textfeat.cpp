#include "mockforge/textfeat.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

namespace mockforge::textfeat {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // splitmix64 finalizer
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

constexpr std::uint64_t kSignSalt = 0x5bd1e9955bd1e995ULL;
constexpr char kMagic[4] = {'E', 'M', 'B', 'V'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("embedding file truncated reading " + what);
  return v;
}

}  // namespace

std::string TokenSequence::joined() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) seq.tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      seq.tokens.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return seq;
}

std::string_view to_string(ProviderMode m) {
  switch (m) {
    case ProviderMode::hashed_tfidf: return "hashed-tfidf";
    case ProviderMode::file_backed: return "file-backed";
    case ProviderMode::learned_table: return "learned-table";
  }
  return "hashed-tfidf";
}

void l2_normalize(std::span<float> v) {
  double ss = 0.0;
  for (float x : v) ss += static_cast<double>(x) * x;
  if (ss <= 0.0) return;
  const double inv = 1.0 / std::sqrt(ss);
  for (float& x : v) x = static_cast<float>(x * inv);
}

EmbeddingFile read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw DataError("bad embedding file magic in " + path.string());
  EmbeddingFile f;
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kVersion) throw DataError("unsupported embedding file version " + std::to_string(version));
  f.dim = get<std::uint32_t>(in, "dim");
  const auto flags = get<std::uint32_t>(in, "flags");
  if (flags > 1) throw DataError("unknown embedding key kind " + std::to_string(flags));
  f.key_kind = static_cast<EmbeddingKeyKind>(flags);
  const auto count = get<std::uint64_t>(in, "count");
  if (f.dim == 0) throw DataError("embedding file has dim 0");
  f.keys.reserve(count);
  f.values.resize(count * f.dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = get<std::uint32_t>(in, "key length");
    std::string key(len, '\0');
    if (!in.read(key.data(), len)) throw DataError("embedding file truncated in key " + std::to_string(r));
    f.keys.push_back(std::move(key));
    if (!in.read(reinterpret_cast<char*>(f.values.data() + r * f.dim), static_cast<std::streamsize>(f.dim * sizeof(float)))) {
      throw DataError("embedding file truncated in vector " + std::to_string(r));
    }
  }
  return f;
}

void write_embedding_file(const std::filesystem::path& path, const EmbeddingFile& f) {
  if (f.values.size() != f.keys.size() * f.dim) throw DataError("embedding file: values/keys size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, f.dim);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.key_kind));
  put<std::uint64_t>(out, f.keys.size());
  for (std::size_t r = 0; r < f.keys.size(); ++r) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(f.keys[r].size()));
    out.write(f.keys[r].data(), static_cast<std::streamsize>(f.keys[r].size()));
    out.write(reinterpret_cast<const char*>(f.values.data() + r * f.dim), static_cast<std::streamsize>(f.dim * sizeof(float)));
  }
}

EmbeddingProvider EmbeddingProvider::hashed_tfidf(std::span<const TokenSequence> corpus, std::size_t dim,
                                                  std::uint64_t seed) {
  if (dim == 0) throw UsageError("embedding dim must be positive");
  EmbeddingProvider p;
  p.mode_ = ProviderMode::hashed_tfidf;
  p.dim_ = dim;
  p.seed_ = seed;
  p.doc_count_ = corpus.size();
  for (const auto& doc : corpus) {
    std::set<std::string> seen(doc.tokens.begin(), doc.tokens.end());
    for (const auto& t : seen) ++p.doc_freq_[t];
  }
  return p;
}

EmbeddingProvider EmbeddingProvider::file_backed(const std::filesystem::path& path) {
  return file_backed(read_embedding_file(path));
}

EmbeddingProvider EmbeddingProvider::file_backed(EmbeddingFile file) {
  EmbeddingProvider p;
  p.mode_ = ProviderMode::file_backed;
  p.dim_ = file.dim;
  p.key_kind_ = file.key_kind;
  for (std::size_t r = 0; r < file.keys.size(); ++r) p.rows_.emplace(file.keys[r], r);
  p.file_keys_ = std::move(file.keys);
  p.file_values_ = std::move(file.values);
  return p;
}

EmbeddingProvider EmbeddingProvider::learned_table(std::span<const TokenSequence> corpus, std::size_t dim,
                                                   std::size_t min_count) {
  if (dim == 0) throw UsageError("embedding dim must be positive");
  EmbeddingProvider p;
  p.mode_ = ProviderMode::learned_table;
  p.dim_ = dim;
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus) {
    for (const auto& t : doc.tokens) ++counts[t];
  }
  p.vocab_.push_back("<unk>");
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) p.vocab_.push_back(tok);
  }
  for (std::size_t i = 0; i < p.vocab_.size(); ++i) p.vocab_index_.emplace(p.vocab_[i], static_cast<int>(i));
  p.table_.assign(p.vocab_.size() * dim, 0.0f);
  return p;
}

std::size_t EmbeddingProvider::hash_slot(std::string_view token) const { return fnv1a(token, seed_) % dim_; }

float EmbeddingProvider::hash_sign(std::string_view token) const {
  return (fnv1a(token, seed_ ^ kSignSalt) & 1U) ? 1.0f : -1.0f;
}

double EmbeddingProvider::idf(std::string_view token) const {
  auto it = doc_freq_.find(std::string(token));
  const double df = it == doc_freq_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((static_cast<double>(doc_count_) + 1.0) / (df + 1.0)) + 1.0;
}

std::vector<int> EmbeddingProvider::token_ids(const TokenSequence& seq) const {
  std::vector<int> ids;
  ids.reserve(seq.size());
  for (const auto& t : seq.tokens) {
    auto it = vocab_index_.find(t);
    ids.push_back(it == vocab_index_.end() ? 0 : it->second);
  }
  return ids;
}

void EmbeddingProvider::set_table(std::vector<float> table) {
  if (table.size() != vocab_.size() * dim_) throw DataError("learned table has wrong size");
  table_ = std::move(table);
}

std::vector<EmbeddingVector> EmbeddingProvider::embed_tokens(const TokenSequence& seq) const {
  std::vector<EmbeddingVector> out;
  out.reserve(seq.size());
  switch (mode_) {
    case ProviderMode::hashed_tfidf:
      for (const auto& t : seq.tokens) {
        EmbeddingVector v(dim_, 0.0f);
        v[hash_slot(t)] = hash_sign(t) * static_cast<float>(idf(t));
        out.push_back(std::move(v));
      }
      break;
    case ProviderMode::file_backed:
      for (const auto& t : seq.tokens) {
        auto it = key_kind_ == EmbeddingKeyKind::token ? rows_.find(t) : rows_.end();
        if (it == rows_.end()) throw MissingEmbedding("no token embedding for '" + t + "'");
        const float* row = file_values_.data() + it->second * dim_;
        out.emplace_back(row, row + dim_);
      }
      break;
    case ProviderMode::learned_table:
      for (int id : token_ids(seq)) {
        const float* row = table_.data() + static_cast<std::size_t>(id) * dim_;
        out.emplace_back(row, row + dim_);
      }
      break;
  }
  return out;
}

EmbeddingVector EmbeddingProvider::pool_description(const TokenSequence& seq) const {
  EmbeddingVector out(dim_, 0.0f);
  if (seq.empty()) return out;
  if (mode_ == ProviderMode::file_backed && key_kind_ == EmbeddingKeyKind::sentence) {
    auto it = rows_.find(seq.joined());
    if (it == rows_.end()) throw MissingEmbedding("no sentence embedding for '" + seq.joined() + "'");
    const float* row = file_values_.data() + it->second * dim_;
    return EmbeddingVector(row, row + dim_);
  }
  std::vector<double> acc(dim_, 0.0);
  for (const auto& v : embed_tokens(seq)) {
    for (std::size_t i = 0; i < dim_; ++i) acc[i] += v[i];
  }
  for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(acc[i]);
  l2_normalize(out);
  return out;
}

json EmbeddingProvider::to_json() const {
  json j;
  j["mode"] = std::string(to_string(mode_));
  j["dim"] = dim_;
  switch (mode_) {
    case ProviderMode::hashed_tfidf: {
      j["seed"] = seed_;
      j["document_count"] = doc_count_;
      // sorted for a stable manifest
      std::map<std::string, std::uint32_t> sorted(doc_freq_.begin(), doc_freq_.end());
      j["document_frequency"] = sorted;
      break;
    }
    case ProviderMode::file_backed:
      j["key_kind"] = key_kind_ == EmbeddingKeyKind::token ? "token" : "sentence";
      j["keys"] = file_keys_;
      j["values"] = file_values_;
      break;
    case ProviderMode::learned_table:
      j["vocab"] = vocab_;
      j["table"] = table_;
      break;
  }
  return j;
}

EmbeddingProvider EmbeddingProvider::from_json(const json& j) {
  const auto mode = j.at("mode").get<std::string>();
  EmbeddingProvider p;
  p.dim_ = j.at("dim").get<std::size_t>();
  if (mode == "hashed-tfidf") {
    p.mode_ = ProviderMode::hashed_tfidf;
    p.seed_ = j.at("seed").get<std::uint64_t>();
    p.doc_count_ = j.at("document_count").get<std::size_t>();
    for (const auto& [k, v] : j.at("document_frequency").items()) p.doc_freq_.emplace(k, v.get<std::uint32_t>());
  } else if (mode == "file-backed") {
    EmbeddingFile f;
    f.dim = static_cast<std::uint32_t>(p.dim_);
    f.key_kind = j.at("key_kind").get<std::string>() == "token" ? EmbeddingKeyKind::token : EmbeddingKeyKind::sentence;
    f.keys = j.at("keys").get<std::vector<std::string>>();
    f.values = j.at("values").get<std::vector<float>>();
    return file_backed(std::move(f));
  } else if (mode == "learned-table") {
    p.mode_ = ProviderMode::learned_table;
    p.vocab_ = j.at("vocab").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < p.vocab_.size(); ++i) p.vocab_index_.emplace(p.vocab_[i], static_cast<int>(i));
    p.table_ = j.at("table").get<std::vector<float>>();
  } else {
    throw DataError("unknown embedding provider mode '" + mode + "'");
  }
  return p;
}

}  // namespace mockforge::textfeat
