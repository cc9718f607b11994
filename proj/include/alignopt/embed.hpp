// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "alignopt/tai.hpp"

namespace alignopt {

/// Per-node token embeddings (N x S x D), their validity mask and the pooled rows.
struct EmbeddingMatrix {
  int n = 0;
  int s = 0;
  int d = 0;
  std::vector<float> node_tokens;
  std::vector<float> token_mask;
  std::vector<float> pooled;

  float token(int i, int t, int k) const { return node_tokens[(static_cast<std::size_t>(i) * s + t) * d + k]; }
  float mask(int i, int t) const { return token_mask[static_cast<std::size_t>(i) * s + t]; }
  float pooled_at(int i, int k) const { return pooled[static_cast<std::size_t>(i) * d + k]; }
};

struct TaskEmbedding {
  std::vector<float> vector;
};

enum class ProviderMode { HashStub, FileStore, HttpService };

inline std::string_view to_string(ProviderMode m) {
  switch (m) {
    case ProviderMode::HashStub: return "hash_stub";
    case ProviderMode::FileStore: return "file_store";
    case ProviderMode::HttpService: return "http_service";
  }
  return "?";
}

inline ProviderMode parse_provider_mode(std::string_view s) {
  if (s == "hash_stub") return ProviderMode::HashStub;
  if (s == "file_store") return ProviderMode::FileStore;
  if (s == "http_service" || s == "http") return ProviderMode::HttpService;
  throw Error(ErrorCode::InvalidArgument, "unknown provider mode '" + std::string(s) + "'");
}

struct ProviderConfig {
  ProviderMode mode = ProviderMode::HashStub;
  int dim = 32;
  std::uint64_t seed = 0;
  std::string endpoint;    // http_service, e.g. http://127.0.0.1:8080
  std::string store_path;  // file_store directory
  int max_in_flight = 4;
  int retries = 3;
  int timeout_ms = 10000;
};

namespace detail {

inline std::vector<std::string_view> whitespace_tokens(std::string_view text) {
  std::vector<std::string_view> out;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32s(std::string& out, const std::vector<float>& v) {
  for (float f : v) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

inline std::vector<float> get_f32s(const unsigned char*& p, std::size_t count) {
  std::vector<float> v(count);
  for (std::size_t i = 0; i < count; ++i, p += 4) {
    const std::uint32_t bits = get_u32(p);
    std::memcpy(&v[i], &bits, 4);
  }
  return v;
}

}  // namespace detail

/// Feature-hashed token vector: every byte prefix of the token votes into one
/// signed bucket, weighted by prefix length, then the vector is unit-normalized.
inline std::vector<double> hash_token_vector(std::string_view token, int dim, std::uint64_t seed) {
  std::vector<double> v(dim, 0.0);
  const std::uint64_t basis = mix_seed(seed, static_cast<std::uint64_t>(dim));
  for (std::size_t len = 1; len <= token.size(); ++len) {
    const std::uint64_t h = splitmix64(fnv1a64(token.substr(0, len), basis));
    const auto idx = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim));
    v[idx] += ((h >> 40) & 1 ? -1.0 : 1.0) * static_cast<double>(len);
  }
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0)
    for (double& x : v) x /= norm;
  return v;
}

inline std::vector<float> mean_pool(const std::vector<float>& tokens, const std::vector<float>& mask, int n, int s,
                                    int d) {
  if (tokens.size() != static_cast<std::size_t>(n) * s * d || mask.size() != static_cast<std::size_t>(n) * s)
    throw Error(ErrorCode::ShapeMismatch, "token/mask sizes do not match N x S x D");
  std::vector<float> out(static_cast<std::size_t>(n) * d);
  std::vector<double> acc(d);
  for (int i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    double weight = 0;
    for (int t = 0; t < s; ++t) {
      const double m = mask[static_cast<std::size_t>(i) * s + t];
      if (m == 0) continue;
      weight += m;
      const float* row = &tokens[(static_cast<std::size_t>(i) * s + t) * d];
      for (int k = 0; k < d; ++k) acc[k] += m * row[k];
    }
    if (weight <= 0) throw Error(ErrorCode::FullyMaskedRow, "row " + std::to_string(i) + " has no valid token");
    for (int k = 0; k < d; ++k) out[static_cast<std::size_t>(i) * d + k] = static_cast<float>(acc[k] / weight);
  }
  return out;
}

/// Row-major N x 2D matrix [pooled_i ; task].
struct NodeInputs {
  int n = 0;
  int dim = 0;
  std::vector<double> data;
  double at(int i, int k) const { return data[static_cast<std::size_t>(i) * dim + k]; }
};

inline NodeInputs build_node_inputs(const EmbeddingMatrix& m, const TaskEmbedding& task) {
  if (static_cast<int>(task.vector.size()) != m.d)
    throw Error(ErrorCode::DimensionMismatch,
                "task dimension " + std::to_string(task.vector.size()) + " vs pooled " + std::to_string(m.d));
  NodeInputs out{m.n, 2 * m.d, std::vector<double>(static_cast<std::size_t>(m.n) * 2 * m.d)};
  for (int i = 0; i < m.n; ++i) {
    double* row = &out.data[static_cast<std::size_t>(i) * out.dim];
    for (int k = 0; k < m.d; ++k) {
      row[k] = m.pooled_at(i, k);
      row[m.d + k] = task.vector[k];
    }
  }
  return out;
}

/// Content digest of a document, 16 lowercase hex digits.
inline std::string document_digest(const TaiDocument& doc) {
  std::string bytes(to_string(doc.kind));
  bytes += '\n';
  bytes += doc.task_text;
  bytes += '\0';
  for (const auto& t : doc.node_texts) {
    bytes += t;
    bytes += '\0';
  }
  static const char* hex = "0123456789abcdef";
  std::uint64_t h = fnv1a64(bytes);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[i] = hex[h & 0xf];
  return out;
}

inline constexpr char kEmbeddingMagic[8] = {'A', 'L', 'O', 'P', 'E', 'M', 'B', '1'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 24;

inline std::string serialize_embeddings(const EmbeddingMatrix& m, const TaskEmbedding& task) {
  std::string out(kEmbeddingMagic, 8);
  detail::put_u32(out, kEmbeddingVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(m.n));
  detail::put_u32(out, static_cast<std::uint32_t>(m.s));
  detail::put_u32(out, static_cast<std::uint32_t>(m.d));
  detail::put_f32s(out, m.node_tokens);
  detail::put_f32s(out, m.token_mask);
  detail::put_f32s(out, m.pooled);
  detail::put_f32s(out, task.vector);
  return out;
}

inline std::pair<EmbeddingMatrix, TaskEmbedding> deserialize_embeddings(std::string_view bytes) {
  if (bytes.size() < 8) throw Error(ErrorCode::TruncatedPayload, "file shorter than magic");
  if (std::memcmp(bytes.data(), kEmbeddingMagic, 8) != 0) throw Error(ErrorCode::BadMagic, "not an ALOPEMB1 file");
  if (bytes.size() < kEmbeddingHeaderBytes) throw Error(ErrorCode::TruncatedPayload, "header cut short");
  auto p = reinterpret_cast<const unsigned char*>(bytes.data()) + 8;
  const std::uint32_t version = detail::get_u32(p);
  if (version != kEmbeddingVersion)
    throw Error(ErrorCode::VersionMismatch, "version " + std::to_string(version) + ", expected 1");
  EmbeddingMatrix m;
  m.n = static_cast<int>(detail::get_u32(p + 4));
  m.s = static_cast<int>(detail::get_u32(p + 8));
  m.d = static_cast<int>(detail::get_u32(p + 12));
  p += 16;
  const std::size_t ns = static_cast<std::size_t>(m.n) * m.s;
  const std::size_t floats = ns * m.d + ns + static_cast<std::size_t>(m.n) * m.d + m.d;
  const std::size_t expected = kEmbeddingHeaderBytes + 4 * floats;
  if (bytes.size() < expected)
    throw Error(ErrorCode::TruncatedPayload,
                "expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  if (bytes.size() > expected) throw Error(ErrorCode::ParseError, "trailing bytes after payload");
  m.node_tokens = detail::get_f32s(p, ns * m.d);
  m.token_mask = detail::get_f32s(p, ns);
  m.pooled = detail::get_f32s(p, static_cast<std::size_t>(m.n) * m.d);
  TaskEmbedding task{detail::get_f32s(p, m.d)};
  return {std::move(m), std::move(task)};
}

inline void save_embeddings(const std::string& path, const EmbeddingMatrix& m, const TaskEmbedding& task) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path);
  const auto bytes = serialize_embeddings(m, task);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline std::pair<EmbeddingMatrix, TaskEmbedding> load_embeddings(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_embeddings(bytes);
}

class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(ProviderConfig cfg)
      : cfg_(std::move(cfg)),
        slots_(std::make_shared<std::counting_semaphore<1024>>(std::clamp(cfg_.max_in_flight, 1, 1024))) {
    if (cfg_.dim < 1) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be positive");
    if (cfg_.mode == ProviderMode::HttpService && cfg_.endpoint.empty())
      throw Error(ErrorCode::InvalidArgument, "http_service needs an endpoint");
    if (cfg_.mode == ProviderMode::FileStore && cfg_.store_path.empty())
      throw Error(ErrorCode::InvalidArgument, "file_store needs a store path");
  }

  const ProviderConfig& config() const { return cfg_; }

  std::pair<EmbeddingMatrix, TaskEmbedding> encode(const TaiDocument& doc) const {
    switch (cfg_.mode) {
      case ProviderMode::HashStub: return encode_hash(doc);
      case ProviderMode::FileStore: return encode_file(doc);
      case ProviderMode::HttpService: return encode_http(doc);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown provider mode");
  }

  std::string store_file(const TaiDocument& doc) const {
    return (std::filesystem::path(cfg_.store_path) / (document_digest(doc) + ".emb")).string();
  }

 private:
  std::pair<EmbeddingMatrix, TaskEmbedding> encode_hash(const TaiDocument& doc) const {
    const int d = cfg_.dim;
    std::vector<std::vector<std::string_view>> toks(doc.node_texts.size());
    int s = 1;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      toks[i] = detail::whitespace_tokens(doc.node_texts[i]);
      s = std::max(s, static_cast<int>(toks[i].size()));
    }
    EmbeddingMatrix m;
    m.n = static_cast<int>(toks.size());
    m.s = s;
    m.d = d;
    m.node_tokens.assign(static_cast<std::size_t>(m.n) * s * d, 0.0f);
    m.token_mask.assign(static_cast<std::size_t>(m.n) * s, 0.0f);
    for (int i = 0; i < m.n; ++i) {
      for (std::size_t t = 0; t < toks[i].size(); ++t) {
        const auto v = hash_token_vector(toks[i][t], d, cfg_.seed);
        float* row = &m.node_tokens[(static_cast<std::size_t>(i) * s + t) * d];
        for (int k = 0; k < d; ++k) row[k] = static_cast<float>(v[k]);
        m.token_mask[static_cast<std::size_t>(i) * s + t] = 1.0f;
      }
    }
    m.pooled = mean_pool(m.node_tokens, m.token_mask, m.n, m.s, m.d);

    TaskEmbedding task{std::vector<float>(d, 0.0f)};
    const auto task_toks = detail::whitespace_tokens(doc.task_text);
    if (!task_toks.empty()) {
      std::vector<double> acc(d, 0.0);
      for (auto tok : task_toks) {
        const auto v = hash_token_vector(tok, d, cfg_.seed);
        for (int k = 0; k < d; ++k) acc[k] += v[k];
      }
      for (int k = 0; k < d; ++k) task.vector[k] = static_cast<float>(acc[k] / static_cast<double>(task_toks.size()));
    }
    return {std::move(m), std::move(task)};
  }

  std::pair<EmbeddingMatrix, TaskEmbedding> encode_file(const TaiDocument& doc) const {
    const auto path = store_file(doc);
    if (!std::filesystem::exists(path))
      throw Error(ErrorCode::StoreMiss, "no stored embeddings for digest " + document_digest(doc));
    auto out = load_embeddings(path);
    if (out.first.d != cfg_.dim)
      throw Error(ErrorCode::DimensionMismatch,
                  "stored D=" + std::to_string(out.first.d) + ", configured " + std::to_string(cfg_.dim));
    if (out.first.n != static_cast<int>(doc.node_texts.size()))
      throw Error(ErrorCode::DimensionMismatch, "stored N does not match document");
    return out;
  }

  std::vector<std::vector<float>> post_texts(const std::vector<std::string>& texts) const {
    const nlohmann::json body = {{"texts", texts}, {"dim", cfg_.dim}};
    const std::string payload = body.dump();
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(20 << std::min(attempt, 6)));
      httplib::Result res;
      {
        slots_->acquire();
        httplib::Client cli(cfg_.endpoint);
        cli.set_connection_timeout(std::chrono::milliseconds(cfg_.timeout_ms));
        cli.set_read_timeout(std::chrono::milliseconds(cfg_.timeout_ms));
        res = cli.Post("/embed", payload, "application/json");
        slots_->release();
      }
      if (!res) {
        last_error = "transport: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "status " + std::to_string(res->status);
        if (res->status >= 500) continue;
        break;
      }
      std::vector<std::vector<float>> rows;
      try {
        rows = nlohmann::json::parse(res->body).at("embeddings").get<std::vector<std::vector<float>>>();
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("bad embedding response: ") + e.what());
      }
      if (rows.size() != texts.size())
        throw Error(ErrorCode::DimensionMismatch, "service returned " + std::to_string(rows.size()) + " rows for " +
                                                      std::to_string(texts.size()) + " texts");
      for (const auto& r : rows)
        if (static_cast<int>(r.size()) != cfg_.dim)
          throw Error(ErrorCode::DimensionMismatch,
                      "service returned D=" + std::to_string(r.size()) + ", expected " + std::to_string(cfg_.dim));
      return rows;
    }
    throw Error(ErrorCode::TransportFailure, cfg_.endpoint + "/embed: " + last_error);
  }

  std::pair<EmbeddingMatrix, TaskEmbedding> encode_http(const TaiDocument& doc) const {
    const auto rows = post_texts(doc.node_texts);
    const auto task_rows = post_texts({doc.task_text});
    EmbeddingMatrix m;
    m.n = static_cast<int>(rows.size());
    m.s = 1;
    m.d = cfg_.dim;
    for (const auto& r : rows) m.node_tokens.insert(m.node_tokens.end(), r.begin(), r.end());
    m.token_mask.assign(m.n, 1.0f);
    m.pooled = m.node_tokens;
    return {std::move(m), TaskEmbedding{task_rows.front()}};
  }

  ProviderConfig cfg_;
  std::shared_ptr<std::counting_semaphore<1024>> slots_;
};

inline std::pair<EmbeddingMatrix, TaskEmbedding> encode_document(const EmbeddingProvider& provider,
                                                                  const TaiDocument& doc) {
  return provider.encode(doc);
}

/// Writes embeddings into a file_store directory under the document digest.
inline std::string store_embeddings(const std::string& store_path, const TaiDocument& doc, const EmbeddingMatrix& m,
                                    const TaskEmbedding& task) {
  std::filesystem::create_directories(store_path);
  const auto path = (std::filesystem::path(store_path) / (document_digest(doc) + ".emb")).string();
  save_embeddings(path, m, task);
  return path;
}

}  // namespace alignopt
