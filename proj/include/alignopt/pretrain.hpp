// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "alignopt/csv.hpp"
#include "alignopt/embed.hpp"
#include "alignopt/model.hpp"
#include "alignopt/tai.hpp"

namespace alignopt {

enum class TgcMode { PaperLiteral, StandardInfoNce };
enum class TgmNorm { PerM, PerMSquared };

inline TgcMode parse_tgc_mode(std::string_view s) {
  if (s == "paper_literal") return TgcMode::PaperLiteral;
  if (s == "standard_infonce") return TgcMode::StandardInfoNce;
  throw Error(ErrorCode::InvalidArgument, "unknown tgc_mode '" + std::string(s) + "'");
}

inline TgmNorm parse_tgm_norm(std::string_view s) {
  if (s == "per_M") return TgmNorm::PerM;
  if (s == "per_M2" || s == "per_M²") return TgmNorm::PerMSquared;
  throw Error(ErrorCode::InvalidArgument, "unknown tgm_norm '" + std::string(s) + "'");
}

struct PretrainConfig {
  double tau = 0.1;
  double lambda = 0.5;
  TgcMode tgc_mode = TgcMode::PaperLiteral;
  TgmNorm tgm_norm = TgmNorm::PerM;
  bool symmetric_tgc = false;  // adds the graph->text direction
  int batch = 16;
  int epochs = 1;
  int batches_per_epoch = 1;
  int max_anchors = 512;
  double lr = 1e-4;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(tau > 0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
    if (!(lambda >= 0)) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");
    if (batch < 2) throw Error(ErrorCode::BatchTooSmall, "batch must hold at least 2 instances");
    if (epochs < 0 || batches_per_epoch < 1 || max_anchors < 2) throw Error(ErrorCode::InvalidArgument, "bad schedule");
  }
};

// ------------------------------------------------------------------- losses

/// Contrastive loss between matched rows of `hx` and `hg` (cosine / tau).
inline Tensor tgc_loss(const Tensor& hx, const Tensor& hg, double tau, TgcMode mode, bool symmetric = false) {
  if (hx.rows() != hg.rows() || hx.cols() != hg.cols())
    throw Error(ErrorCode::ShapeMismatch, "tgc: text and graph latents differ in shape");
  const int b = hx.rows();
  if (b < 2) throw Error(ErrorCode::BatchTooSmall, "tgc needs at least 2 rows");
  const Tensor s = scale(matmul(l2_normalize_rows(hx), transpose(l2_normalize_rows(hg))), 1.0 / tau);
  Mask keep(static_cast<std::size_t>(b) * b, 1);
  if (mode == TgcMode::PaperLiteral)
    for (int i = 0; i < b; ++i) keep[static_cast<std::size_t>(i) * b + i] = 0;
  std::vector<int> diag(b);
  for (int i = 0; i < b; ++i) diag[i] = i;
  auto direction = [&](const Tensor& sim) { return mean(sub(masked_logsumexp_rows(sim, keep), pick(sim, diag))); };
  Tensor loss = direction(s);
  if (symmetric) loss = scale(add(loss, direction(transpose(s))), 0.5);
  return loss;
}

/// M x M matching logits, row i text mean, column j graph mean.
inline Tensor matching_logits(Tape& tape, const Tensor& hx_bar, const Tensor& hg_bar) {
  if (hx_bar.rows() != hg_bar.rows() || hx_bar.cols() != hg_bar.cols())
    throw Error(ErrorCode::ShapeMismatch, "tgm: text and graph means differ in shape");
  const int m = hx_bar.rows();
  std::vector<int> rows, cols;
  rows.reserve(static_cast<std::size_t>(m) * m);
  cols.reserve(static_cast<std::size_t>(m) * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      rows.push_back(i);
      cols.push_back(j);
    }
  const Tensor pairs = concat_cols({gather_rows(hx_bar, rows), gather_rows(hg_bar, cols)});
  const Tensor hidden = relu(linear(tape, "match.1", pairs));
  return linear(tape, "match.2", hidden);  // (M*M) x 1
}

/// Binary cross-entropy over all pair logits, label 1 on the diagonal.
inline Tensor tgm_loss_from_logits(const Tensor& logits, int m, TgmNorm norm) {
  if (logits.size() != m * m) throw Error(ErrorCode::ShapeMismatch, "tgm: expected M*M logits");
  std::vector<double> y(static_cast<std::size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i) y[static_cast<std::size_t>(i) * m + i] = 1.0;
  const Tensor bce = sub(softplus(logits), mul(logits, Tensor::make(logits.rows(), logits.cols(), y)));
  return scale(sum(bce), 1.0 / (norm == TgmNorm::PerM ? m : static_cast<double>(m) * m));
}

inline Tensor tgm_loss(Tape& tape, const Tensor& hx_bar, const Tensor& hg_bar, TgmNorm norm) {
  return tgm_loss_from_logits(matching_logits(tape, hx_bar, hg_bar), hx_bar.rows(), norm);
}

inline double combined_loss(double tgc, double tgm, double lambda) { return tgc + lambda * tgm; }

inline Tensor combined_loss(const Tensor& tgc, const Tensor& tgm, double lambda) {
  if (lambda == 0.0) return tgc;
  return add(tgc, scale(tgm, lambda));
}

// ------------------------------------------------------------------ sampler

struct SampledBatch {
  ProblemKind primary = ProblemKind::TSP;
  double p = 0;  // percent drawn from U(30, 50)
  int primary_count = 0;
  std::vector<std::pair<ProblemKind, int>> picks;  // (kind, index into that pool)
};

/// Heterogeneous batch: one randomly chosen kind supplies round(p*B/100)
/// instances, the rest come uniformly from the other kinds.
template <typename T>
SampledBatch sample_multitask_batch(const std::map<ProblemKind, std::vector<T>>& pools, int b, Rng& rng) {
  if (b < 2) throw Error(ErrorCode::BatchTooSmall, "batch must hold at least 2 instances");
  if (pools.size() < 2) throw Error(ErrorCode::InvalidArgument, "sampler needs at least 2 kinds");
  std::vector<ProblemKind> kinds;
  for (const auto& [k, _] : pools) kinds.push_back(k);
  SampledBatch out;
  out.p = uniform(rng, 30.0, 50.0);
  out.primary_count = static_cast<int>(std::lround(out.p * b / 100.0));
  out.primary = kinds[uniform_below(rng, kinds.size())];
  std::vector<ProblemKind> others;
  for (auto k : kinds)
    if (k != out.primary) others.push_back(k);
  auto draw = [&](ProblemKind k) {
    const auto& pool = pools.at(k);
    if (pool.empty()) throw Error(ErrorCode::EmptyPool, "no instances for " + std::string(to_string(k)));
    out.picks.emplace_back(k, static_cast<int>(uniform_below(rng, pool.size())));
  };
  for (int i = 0; i < out.primary_count; ++i) draw(out.primary);
  for (int i = out.primary_count; i < b; ++i) draw(others[uniform_below(rng, others.size())]);
  shuffle(out.picks.begin(), out.picks.end(), rng);
  return out;
}

// ------------------------------------------------------------------ training

/// One instance with both modalities ready: graph tensors and text inputs x'.
struct AlignmentItem {
  ProblemKind kind = ProblemKind::TSP;
  GraphTensors graph;
  NodeInputs text;
};

inline AlignmentItem make_alignment_item(const CopInstance& inst, const EmbeddingProvider& provider) {
  const auto [m, task] = encode_document(provider, render_instance_document(inst));
  return {inst.kind, to_graph(inst), build_node_inputs(m, task)};
}

using AlignmentPool = std::map<ProblemKind, std::vector<AlignmentItem>>;

struct PretrainStats {
  int epoch = 0;
  double tgc = 0, tgm = 0, combined = 0, lr = 0;
};

/// Loss and gradients for one batch. Encoders run per instance on their own
/// tapes, the losses on a head tape over detached copies, and the head-tape
/// gradients are pushed back into each instance tape.
inline PretrainStats pretrain_step(const AlignModel& model, const std::vector<const AlignmentItem*>& batch,
                                   const PretrainConfig& cfg, Rng& rng, Gradients& grads) {
  const int b = static_cast<int>(batch.size());
  if (b < 2) throw Error(ErrorCode::BatchTooSmall, "batch must hold at least 2 instances");
  std::vector<Tape> tapes;
  tapes.reserve(b);
  std::vector<Tensor> hg(b), hx(b), hg_leaf(b), hx_leaf(b);
  for (int i = 0; i < b; ++i) {
    const auto& item = *batch[i];
    if (item.text.n != item.graph.n) throw Error(ErrorCode::ShapeMismatch, "text and graph node counts differ");
    tapes.emplace_back(model.params());
    hg[i] = project_to_latent(model, tapes[i], LatentHead::Graph, encode_instance(model, tapes[i], item.graph));
    hx[i] = project_to_latent(model, tapes[i], LatentHead::Text, Tensor::make(item.text.n, item.text.dim, item.text.data));
    hg_leaf[i] = Tensor::make(hg[i].rows(), hg[i].cols(), hg[i].data(), true);
    hx_leaf[i] = Tensor::make(hx[i].rows(), hx[i].cols(), hx[i].data(), true);
  }

  Tape head(model.params());
  Tensor all_x = concat_rows(hx_leaf), all_g = concat_rows(hg_leaf);
  if (all_x.rows() > cfg.max_anchors) {
    std::vector<int> idx(all_x.rows());
    for (int k = 0; k < all_x.rows(); ++k) idx[k] = k;
    shuffle(idx.begin(), idx.end(), rng);
    idx.resize(cfg.max_anchors);
    std::sort(idx.begin(), idx.end());
    all_x = gather_rows(all_x, idx);
    all_g = gather_rows(all_g, idx);
  }
  const Tensor tgc = tgc_loss(all_x, all_g, cfg.tau, cfg.tgc_mode, cfg.symmetric_tgc);
  std::vector<Tensor> mx(b), mg(b);
  for (int i = 0; i < b; ++i) {
    mx[i] = mean_rows(hx_leaf[i]);
    mg[i] = mean_rows(hg_leaf[i]);
  }
  PretrainStats stats;
  Tensor loss;
  if (cfg.lambda == 0.0) {
    // The matching head takes no part in the objective and receives no gradient.
    Tape probe(model.params());
    stats.tgm = tgm_loss(probe, detach(concat_rows(mx)), detach(concat_rows(mg)), cfg.tgm_norm).item();
    loss = tgc;
  } else {
    const Tensor tgm = tgm_loss(head, concat_rows(mx), concat_rows(mg), cfg.tgm_norm);
    stats.tgm = tgm.item();
    loss = combined_loss(tgc, tgm, cfg.lambda);
  }
  stats.tgc = tgc.item();
  stats.combined = loss.item();
  backward(loss);
  head.collect(grads);

  for (int i = 0; i < b; ++i) {
    std::vector<Tensor> terms;
    if (!hg_leaf[i].grad().empty())
      terms.push_back(sum(mul(hg[i], Tensor::make(hg[i].rows(), hg[i].cols(), hg_leaf[i].grad()))));
    if (!hx_leaf[i].grad().empty())
      terms.push_back(sum(mul(hx[i], Tensor::make(hx[i].rows(), hx[i].cols(), hx_leaf[i].grad()))));
    if (terms.empty()) continue;
    backward(terms.size() == 1 ? terms[0] : add(terms[0], terms[1]));
    tapes[i].collect(grads);
  }
  return stats;
}

/// Runs `cfg.epochs` epochs from `first_epoch`, calling `on_epoch` after each.
/// Deterministic for a fixed seed.
template <typename OnEpoch>
std::vector<PretrainStats> pretrain(AlignModel& model, AdamW& opt, const AlignmentPool& pool, const PretrainConfig& cfg,
                                    OnEpoch&& on_epoch, int first_epoch = 1) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0x7072657472ULL));
  std::vector<PretrainStats> out;
  for (int e = first_epoch; e < first_epoch + cfg.epochs; ++e) {
    PretrainStats acc;
    acc.epoch = e;
    acc.lr = lr_at_epoch(cfg.lr, e - 1);
    for (int s = 0; s < cfg.batches_per_epoch; ++s) {
      const auto sampled = sample_multitask_batch(pool, cfg.batch, rng);
      std::vector<const AlignmentItem*> batch;
      for (const auto& [k, i] : sampled.picks) batch.push_back(&pool.at(k)[i]);
      Gradients grads;
      const auto st = pretrain_step(model, batch, cfg, rng, grads);
      opt.step(model.params(), grads, acc.lr);
      acc.tgc += st.tgc / cfg.batches_per_epoch;
      acc.tgm += st.tgm / cfg.batches_per_epoch;
      acc.combined += st.combined / cfg.batches_per_epoch;
    }
    out.push_back(acc);
    on_epoch(acc);
  }
  return out;
}

inline std::vector<PretrainStats> pretrain(AlignModel& model, AdamW& opt, const AlignmentPool& pool,
                                           const PretrainConfig& cfg) {
  return pretrain(model, opt, pool, cfg, [](const PretrainStats&) {});
}

inline void write_pretrain_csv_header(std::ostream& os) { os << "epoch,tgc,tgm,combined,lr\n"; }

inline void write_pretrain_csv_row(std::ostream& os, const PretrainStats& s) {
  os << s.epoch << ',' << format_real(s.tgc) << ',' << format_real(s.tgm) << ',' << format_real(s.combined) << ','
     << format_real(s.lr) << '\n';
}

}  // namespace alignopt
