// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "alignopt/instances.hpp"
#include "alignopt/tensor.hpp"

namespace alignopt {

struct ModelConfig {
  int d_model = 64;
  int heads = 4;
  int layers = 3;
  int rank = 0;  // 0 means d_model / 8
  int d_h = 64;
  int ff_hidden = 128;
  int d_text = 0;  // per-node text width D; the text head maps 2D -> d_h. 0 disables it.
  int edge_dim = 1;
  double clip = 10.0;
  std::vector<ProblemKind> kinds = {kAllKinds.begin(), kAllKinds.end()};

  int adapter_rank() const { return rank > 0 ? rank : std::max(1, d_model / 8); }
  int head_dim() const { return d_model / heads; }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : c.kinds) kinds.push_back(std::string(to_string(k)));
  return {{"d_model", c.d_model}, {"heads", c.heads},         {"layers", c.layers},
          {"rank", c.adapter_rank()}, {"d_h", c.d_h},         {"ff_hidden", c.ff_hidden},
          {"d_text", c.d_text},   {"edge_dim", c.edge_dim}, {"clip", c.clip},
          {"kinds", kinds}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.heads = j.at("heads").get<int>();
    c.layers = j.at("layers").get<int>();
    c.rank = j.at("rank").get<int>();
    c.d_h = j.at("d_h").get<int>();
    c.ff_hidden = j.at("ff_hidden").get<int>();
    c.d_text = j.at("d_text").get<int>();
    c.edge_dim = j.at("edge_dim").get<int>();
    c.clip = j.at("clip").get<double>();
    c.kinds.clear();
    for (const auto& k : j.at("kinds")) c.kinds.push_back(parse_kind(k.get<std::string>()));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model config: ") + e.what());
  }
}

/// Scalar context features per kind, appended after the node slots.
inline int context_scalars(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::TSP: return 0;
    case ProblemKind::SMTWTP: return 1;  // elapsed time
    case ProblemKind::CVRP: return 1;    // remaining capacity
    case ProblemKind::VRPB: return 2;    // delivery headroom, pickup headroom
    case ProblemKind::KP: return 1;      // remaining capacity
    case ProblemKind::MVC: return 1;     // covered-edge fraction
    case ProblemKind::MIS: return 0;
  }
  return 0;
}

/// Node embeddings in the context: first and last for tours and schedules,
/// last for vehicle routes, none for subset problems.
inline int context_slots(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::TSP:
    case ProblemKind::SMTWTP: return 2;
    case ProblemKind::CVRP:
    case ProblemKind::VRPB: return 1;
    default: return 0;
  }
}

inline int context_dim(const ModelConfig& cfg, ProblemKind kind) {
  return cfg.d_model * (1 + context_slots(kind)) + context_scalars(kind);
}

/// Owns the configuration and every named parameter of the network.
class AlignModel {
 public:
  AlignModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    if (cfg_.d_model % cfg_.heads != 0) throw Error(ErrorCode::InvalidArgument, "d_model must be divisible by heads");
    const int d = cfg_.d_model, r = cfg_.adapter_rank();
    auto lin = [&](const std::string& name, int in, int out, bool bias = true) {
      store_.add(name + ".W", in, out, Init::Uniform, seed);
      if (bias) store_.add(name + ".b", 1, out, Init::Zeros, seed);
    };
    for (auto kind : cfg_.kinds) {
      const std::string k(to_string(kind));
      lin("adapter." + k + ".down", node_feature_dim(kind), r);
      lin("adapter." + k + ".up", r, d);
      lin("dec." + k + ".ctx", context_dim(cfg_, kind), d);
      if (context_slots(kind) > 0) store_.add("dec." + k + ".placeholder", 1, d, Init::Uniform, seed);
    }
    lin("codebook", d, d);
    for (int l = 0; l < cfg_.layers; ++l) {
      const std::string p = "enc." + std::to_string(l);
      lin(p + ".q", d, d, false);
      lin(p + ".k", d, d, false);
      lin(p + ".v", d, d, false);
      lin(p + ".o", d, d);
      if (cfg_.edge_dim > 0) {
        lin(p + ".qe", cfg_.edge_dim, d, false);
        lin(p + ".ke", cfg_.edge_dim, d, false);
      }
      store_.add(p + ".ln1.g", 1, d, Init::Ones, seed);
      store_.add(p + ".ln1.b", 1, d, Init::Zeros, seed);
      lin(p + ".ff1", d, cfg_.ff_hidden);
      lin(p + ".ff2", cfg_.ff_hidden, d);
      store_.add(p + ".ln2.g", 1, d, Init::Ones, seed);
      store_.add(p + ".ln2.b", 1, d, Init::Zeros, seed);
    }
    lin("head.graph", d, cfg_.d_h);
    if (cfg_.d_text > 0) lin("head.text", 2 * cfg_.d_text, cfg_.d_h);
    lin("match.1", 2 * cfg_.d_h, cfg_.d_h);
    lin("match.2", cfg_.d_h, 1);
    lin("dec.glimpse.q", d, d, false);
    lin("dec.glimpse.k", d, d, false);
    lin("dec.glimpse.v", d, d, false);
    lin("dec.glimpse.o", d, d, false);
    lin("dec.pointer.k", d, d, false);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  bool has_kind(ProblemKind kind) const {
    return std::find(cfg_.kinds.begin(), cfg_.kinds.end(), kind) != cfg_.kinds.end();
  }

 private:
  ModelConfig cfg_;
  ParamStore store_;
};

/// True for parameters that belong to exactly one problem kind.
inline bool is_kind_specific(const std::string& name) {
  return name.rfind("adapter.", 0) == 0 ||
         (name.rfind("dec.", 0) == 0 && name.rfind("dec.glimpse.", 0) != 0 && name.rfind("dec.pointer.", 0) != 0);
}

inline Tensor linear(Tape& tape, const std::string& name, const Tensor& x, bool bias = true) {
  Tensor y = matmul(x, tape.param(name + ".W"));
  return bias ? add(y, tape.param(name + ".b")) : y;
}

/// Converts the additive 0 / -inf structure mask of GraphTensors to 0/1.
inline Mask attention_mask(const GraphTensors& g) {
  Mask m(g.mask.size());
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = std::isinf(g.mask[k]) ? 0 : 1;
  return m;
}

/// One encoder block: mixed multi-head attention with edge terms, residual,
/// normalization, feed-forward, residual, normalization.
inline Tensor mixed_attention(const ModelConfig& cfg, Tape& tape, int layer, const Tensor& h, const Tensor& edges,
                              const Mask& mask) {
  const int n = h.rows(), dh = cfg.head_dim();
  if (h.cols() != cfg.d_model) throw Error(ErrorCode::ShapeMismatch, "node states must be N x d_model");
  if (mask.size() != static_cast<std::size_t>(n) * n) throw Error(ErrorCode::ShapeMismatch, "mask must be N x N");
  const std::string p = "enc." + std::to_string(layer);
  const Tensor q = linear(tape, p + ".q", h, false);
  const Tensor k = linear(tape, p + ".k", h, false);
  const Tensor v = linear(tape, p + ".v", h, false);
  const bool use_edges = edges.defined() && edges.cols() > 0 && cfg.edge_dim > 0;
  if (use_edges && edges.cols() != cfg.edge_dim)
    throw Error(ErrorCode::ShapeMismatch, "edge feature width differs from the configured edge_dim");
  Tensor wqe, wke;
  if (use_edges) {
    wqe = tape.param(p + ".qe.W");
    wke = tape.param(p + ".ke.W");
  }
  const double scale_by = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  for (int hd = 0; hd < cfg.heads; ++hd) {
    const int off = hd * dh;
    const Tensor s = use_edges ? edge_augmented_scores(slice_cols(q, off, dh), slice_cols(k, off, dh), edges,
                                                       slice_cols(wqe, off, dh), slice_cols(wke, off, dh), scale_by)
                               : edge_augmented_scores(slice_cols(q, off, dh), slice_cols(k, off, dh), Tensor(),
                                                       Tensor(), Tensor(), scale_by);
    heads.push_back(matmul(masked_softmax_rows(s, mask), slice_cols(v, off, dh)));
  }
  const Tensor attn = linear(tape, p + ".o", cfg.heads == 1 ? heads[0] : concat_cols(heads));
  const Tensor h1 = layer_norm(add(h, attn), tape.param(p + ".ln1.g"), tape.param(p + ".ln1.b"));
  const Tensor ff = linear(tape, p + ".ff2", relu(linear(tape, p + ".ff1", h1)));
  return layer_norm(add(h1, ff), tape.param(p + ".ln2.g"), tape.param(p + ".ln2.b"));
}

/// Node features -> kind adapter (d_in -> r -> d) -> shared codebook ->
/// mixed-attention layers. Returns N x d_model.
inline Tensor encode_instance(const AlignModel& model, Tape& tape, const GraphTensors& g) {
  const auto& cfg = model.config();
  if (!model.has_kind(g.kind))
    throw Error(ErrorCode::UnregisteredKind, "no adapter for " + std::string(to_string(g.kind)));
  const std::string k(to_string(g.kind));
  const Tensor x = Tensor::make(g.n, g.d_in, g.node_features);
  Tensor h = linear(tape, "adapter." + k + ".up", linear(tape, "adapter." + k + ".down", x));
  h = linear(tape, "codebook", h);
  Tensor edges;
  if (g.d_e > 0 && cfg.edge_dim > 0) edges = Tensor::make(g.n * g.n, g.d_e, g.edge_features);
  const Mask mask = attention_mask(g);
  for (int l = 0; l < cfg.layers; ++l) h = mixed_attention(cfg, tape, l, h, edges, mask);
  return h;
}

enum class LatentHead { Text, Graph };

inline Tensor project_to_latent(const AlignModel& model, Tape& tape, LatentHead head, const Tensor& x) {
  const auto& cfg = model.config();
  const int expect = head == LatentHead::Text ? 2 * cfg.d_text : cfg.d_model;
  if (head == LatentHead::Text && cfg.d_text <= 0) throw Error(ErrorCode::DimensionMismatch, "text head disabled");
  if (x.cols() != expect)
    throw Error(ErrorCode::DimensionMismatch,
                "head expects width " + std::to_string(expect) + ", got " + std::to_string(x.cols()));
  return linear(tape, head == LatentHead::Text ? "head.text" : "head.graph", x);
}

// ------------------------------------------------------------------- decoder

/// Per-row decoding context. A slot value of -1 selects the learned placeholder.
struct DecodeContext {
  std::vector<int> slots;
  std::vector<double> scalars;
};

/// Step-invariant decoder tensors for one encoded instance.
struct DecoderCache {
  ProblemKind kind = ProblemKind::TSP;
  int n = 0;
  Tensor g;          // N x d
  Tensor g_ext;      // (N + 1) x d, last row is the placeholder when the kind has slots
  Tensor graph_mean; // 1 x d
  Tensor glimpse_k, glimpse_v, pointer_k;
};

inline DecoderCache prepare_decoder(const AlignModel& model, Tape& tape, ProblemKind kind, const Tensor& g) {
  DecoderCache c;
  c.kind = kind;
  c.n = g.rows();
  c.g = g;
  c.graph_mean = mean_rows(g);
  c.g_ext = context_slots(kind) > 0 ? concat_rows({g, tape.param("dec." + std::string(to_string(kind)) + ".placeholder")})
                                    : g;
  c.glimpse_k = linear(tape, "dec.glimpse.k", g, false);
  c.glimpse_v = linear(tape, "dec.glimpse.v", g, false);
  c.pointer_k = linear(tape, "dec.pointer.k", g, false);
  return c;
}

/// One pointer step for R rows sharing an instance. `feasible` is R x N (1 =
/// allowed). Returns R x N log-probabilities (masked entries are -inf). When
/// `clipped_logits` is given it receives the pre-mask C*tanh logits.
inline Tensor decode_step(const AlignModel& model, Tape& tape, const DecoderCache& cache,
                          const std::vector<DecodeContext>& rows, const Mask& feasible,
                          Tensor* clipped_logits = nullptr) {
  const auto& cfg = model.config();
  const int r = static_cast<int>(rows.size()), n = cache.n, d = cfg.d_model, dh = cfg.head_dim();
  if (feasible.size() != static_cast<std::size_t>(r) * n) throw Error(ErrorCode::ShapeMismatch, "feasible mask must be R x N");
  for (int i = 0; i < r; ++i) {
    bool any = false;
    for (int j = 0; j < n && !any; ++j) any = feasible[static_cast<std::size_t>(i) * n + j] != 0;
    if (!any) throw Error(ErrorCode::NoFeasibleAction, "row " + std::to_string(i) + " has no feasible node");
  }
  const int slots = context_slots(cache.kind), scalars = context_scalars(cache.kind);
  std::vector<Tensor> parts{gather_rows(cache.graph_mean, std::vector<int>(r, 0))};
  for (int s = 0; s < slots; ++s) {
    std::vector<int> idx(r);
    for (int i = 0; i < r; ++i) {
      const int v = rows[i].slots.at(s);
      idx[i] = v < 0 ? n : v;
    }
    parts.push_back(gather_rows(cache.g_ext, idx));
  }
  if (scalars > 0) {
    std::vector<double> sv;
    for (const auto& row : rows) {
      if (static_cast<int>(row.scalars.size()) != scalars) throw Error(ErrorCode::ShapeMismatch, "context scalar count");
      sv.insert(sv.end(), row.scalars.begin(), row.scalars.end());
    }
    parts.push_back(Tensor::make(r, scalars, std::move(sv)));
  }
  const Tensor q0 = linear(tape, "dec." + std::string(to_string(cache.kind)) + ".ctx", concat_cols(parts));
  const Tensor q = linear(tape, "dec.glimpse.q", q0, false);
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  for (int hd = 0; hd < cfg.heads; ++hd) {
    const int off = hd * dh;
    const Tensor s = scale(matmul(slice_cols(q, off, dh), transpose(slice_cols(cache.glimpse_k, off, dh))), head_scale);
    heads.push_back(matmul(masked_softmax_rows(s, feasible), slice_cols(cache.glimpse_v, off, dh)));
  }
  const Tensor q1 = linear(tape, "dec.glimpse.o", cfg.heads == 1 ? heads[0] : concat_cols(heads), false);
  const Tensor logits = scale(matmul(q1, transpose(cache.pointer_k)), 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor u = scale(tanh(logits), cfg.clip);
  if (clipped_logits) *clipped_logits = u;
  return masked_log_softmax_rows(u, feasible);
}

/// Highest-probability allowed column of row `i`; ties go to the lowest index.
inline int greedy_action(const Tensor& logp, int i) {
  int best = -1;
  for (int j = 0; j < logp.cols(); ++j) {
    const double v = logp.at(i, j);
    if (std::isinf(v)) continue;
    if (best < 0 || v > logp.at(i, best)) best = j;
  }
  return best;
}

/// Inverse-CDF draw from row `i` of a log-probability matrix.
inline int sample_action(const Tensor& logp, int i, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0;
  int last = -1;
  for (int j = 0; j < logp.cols(); ++j) {
    const double v = logp.at(i, j);
    if (std::isinf(v)) continue;
    acc += std::exp(v);
    last = j;
    if (u < acc) return j;
  }
  return last;
}

}  // namespace alignopt
