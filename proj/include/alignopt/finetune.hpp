// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "alignopt/csv.hpp"
#include "alignopt/model.hpp"
#include "alignopt/oracles.hpp"
#include "alignopt/parallel.hpp"
#include "alignopt/pretrain.hpp"

namespace alignopt {

// ---------------------------------------------------------------- environment

/// Constructive MDP over one instance. Each step appends one node id.
class Env {
 public:
  explicit Env(const CopInstance& inst) : inst_(&inst), picked_(inst.n, 0) {
    switch (inst.kind) {
      case ProblemKind::CVRP:
      case ProblemKind::VRPB:
        seq_.push_back(inst.depot_index);
        picked_[inst.depot_index] = 1;
        break;
      case ProblemKind::MVC:
        uncovered_ = total_edges_ = inst.edge_count();
        break;
      case ProblemKind::SMTWTP:
        for (double p : inst.proc_times) total_proc_ += p;
        break;
      default:
        break;
    }
  }

  const CopInstance& instance() const { return *inst_; }
  const std::vector<int>& sequence() const { return seq_; }

  bool done() const {
    const int n = inst_->n;
    switch (inst_->kind) {
      case ProblemKind::TSP:
      case ProblemKind::SMTWTP: return static_cast<int>(seq_.size()) == n;
      case ProblemKind::CVRP:
      case ProblemKind::VRPB: return served_ == n - 1 && seq_.back() == inst_->depot_index;
      case ProblemKind::MVC: return uncovered_ == 0;
      case ProblemKind::KP:
      case ProblemKind::MIS: {
        const auto f = feasible();
        return std::find(f.begin(), f.end(), 1) == f.end();
      }
    }
    return true;
  }

  /// 1 for every node that may be appended next.
  Mask feasible() const {
    const auto& in = *inst_;
    const int n = in.n;
    Mask f(n, 0);
    switch (in.kind) {
      case ProblemKind::TSP:
      case ProblemKind::SMTWTP:
        for (int v = 0; v < n; ++v) f[v] = !picked_[v];
        break;
      case ProblemKind::CVRP:
      case ProblemKind::VRPB: {
        const int depot = in.depot_index;
        for (int v = 0; v < n; ++v)
          if (!picked_[v] && fits(v)) f[v] = 1;
        if (seq_.back() != depot) f[depot] = 1;
        break;
      }
      case ProblemKind::KP:
        for (int v = 0; v < n; ++v) f[v] = !picked_[v] && used_ + in.weights[v] <= in.capacity + kCapacityTolerance;
        break;
      case ProblemKind::MVC:
        for (int v = 0; v < n; ++v) {
          if (picked_[v]) continue;
          for (int u = 0; u < n && !f[v]; ++u) f[v] = in.adjacency[v][u] && !picked_[u];
        }
        break;
      case ProblemKind::MIS:
        for (int v = 0; v < n; ++v) {
          bool ok = !picked_[v];
          for (int u = 0; u < n && ok; ++u) ok = !(picked_[u] && in.adjacency[v][u]);
          f[v] = ok;
        }
        break;
    }
    return f;
  }

  DecodeContext context() const {
    const auto& in = *inst_;
    DecodeContext c;
    switch (in.kind) {
      case ProblemKind::TSP:
        c.slots = {seq_.empty() ? -1 : seq_.front(), seq_.empty() ? -1 : seq_.back()};
        break;
      case ProblemKind::SMTWTP:
        c.slots = {seq_.empty() ? -1 : seq_.front(), seq_.empty() ? -1 : seq_.back()};
        c.scalars = {total_proc_ > 0 ? elapsed_ / total_proc_ : 0.0};
        break;
      case ProblemKind::CVRP:
        c.slots = {seq_.back()};
        c.scalars = {in.capacity - used_};
        break;
      case ProblemKind::VRPB:
        c.slots = {seq_.back()};
        c.scalars = {in.capacity - peak_, in.capacity - pickups_};
        break;
      case ProblemKind::KP:
        c.scalars = {in.capacity > 0 ? (in.capacity - used_) / in.capacity : 0.0};
        break;
      case ProblemKind::MVC:
        c.scalars = {total_edges_ > 0 ? 1.0 - static_cast<double>(uncovered_) / total_edges_ : 1.0};
        break;
      case ProblemKind::MIS:
        break;
    }
    return c;
  }

  void step(int a) {
    const auto& in = *inst_;
    if (a < 0 || a >= in.n) throw Error(ErrorCode::IndexOutOfRange, "action " + std::to_string(a));
    if (done() || !feasible()[a]) throw Error(ErrorCode::InvalidArgument, "infeasible action " + std::to_string(a));
    seq_.push_back(a);
    switch (in.kind) {
      case ProblemKind::TSP:
        picked_[a] = 1;
        break;
      case ProblemKind::SMTWTP:
        picked_[a] = 1;
        elapsed_ += in.proc_times[a];
        break;
      case ProblemKind::CVRP:
      case ProblemKind::VRPB:
        if (a == in.depot_index) {
          used_ = peak_ = pickups_ = 0;
          break;
        }
        picked_[a] = 1;
        ++served_;
        if (in.kind == ProblemKind::CVRP) {
          used_ += in.demands[a];
        } else if (in.demands[a] >= 0) {
          // A delivery raises the load at every earlier point of the route.
          peak_ = std::max(peak_ + in.demands[a], pickups_);
        } else {
          pickups_ -= in.demands[a];
          peak_ = std::max(peak_, pickups_);
        }
        break;
      case ProblemKind::KP:
        picked_[a] = 1;
        used_ += in.weights[a];
        break;
      case ProblemKind::MVC:
        for (int u = 0; u < in.n; ++u)
          if (in.adjacency[a][u] && !picked_[u]) --uncovered_;
        picked_[a] = 1;
        break;
      case ProblemKind::MIS:
        picked_[a] = 1;
        break;
    }
  }

  Solution solution() const {
    Solution s{inst_->kind, seq_};
    if (is_subset_kind(inst_->kind)) std::sort(s.nodes.begin(), s.nodes.end());
    return s;
  }

 private:
  bool fits(int v) const {
    const auto& in = *inst_;
    const double d = in.demands[v];
    if (in.kind == ProblemKind::CVRP) return used_ + d <= in.capacity + kCapacityTolerance;
    return d >= 0 ? peak_ + d <= in.capacity + kCapacityTolerance : pickups_ - d <= in.capacity + kCapacityTolerance;
  }

  const CopInstance* inst_;
  std::vector<int> seq_;
  std::vector<std::uint8_t> picked_;
  int served_ = 0;
  double used_ = 0;     // CVRP load, KP weight
  double peak_ = 0;     // VRPB: highest load along the open route
  double pickups_ = 0;  // VRPB: load collected so far on the open route
  int uncovered_ = 0, total_edges_ = 0;
  double elapsed_ = 0, total_proc_ = 0;
};

/// Objective with maximization kinds negated, so lower is always better.
inline double signed_cost(const CopInstance& inst, const Solution& sol) {
  const double obj = evaluate_objective(inst, sol);
  return sense_of(inst.kind) == GapSense::Maximize ? -obj : obj;
}

// ------------------------------------------------------------------- rollout

enum class DecodeMode { Sample, Greedy };

struct Rollouts {
  std::vector<std::vector<int>> actions;
  std::vector<Solution> solutions;
  std::vector<double> costs;  // signed
  Tensor log_prob;            // R x 1, sum of per-step log-probabilities
};

/// Decodes `rows` trajectories on one instance in lockstep. Finished rows see
/// a mask with only node 0 allowed, which contributes log 1 = 0. When
/// `forced` is given its actions are replayed instead of chosen.
inline Rollouts run_policy(const AlignModel& model, Tape& tape, const CopInstance& inst, int rows, DecodeMode mode,
                           Rng* rng, const std::vector<std::vector<int>>* forced = nullptr) {
  if (rows < 1) throw Error(ErrorCode::InvalidArgument, "need at least one rollout");
  if (mode == DecodeMode::Sample && !rng && !forced) throw Error(ErrorCode::InvalidArgument, "sampling needs an rng");
  if (forced && static_cast<int>(forced->size()) != rows) throw Error(ErrorCode::ShapeMismatch, "forced action rows");
  const int n = inst.n;
  std::vector<Env> envs(rows, Env(inst));
  Rollouts out;
  out.actions.resize(rows);
  const auto cache = prepare_decoder(model, tape, inst.kind, encode_instance(model, tape, to_graph(inst)));
  const int limit = 2 * n + 2;
  for (int t = 0;; ++t) {
    bool all_done = true;
    for (const auto& e : envs) all_done = all_done && e.done();
    if (all_done) break;
    if (t >= limit) throw Error(ErrorCode::NoFeasibleAction, "episode did not terminate");
    Mask feas(static_cast<std::size_t>(rows) * n, 0);
    std::vector<DecodeContext> ctx(rows);
    std::vector<bool> active(rows);
    for (int r = 0; r < rows; ++r) {
      active[r] = !envs[r].done();
      ctx[r] = envs[r].context();
      if (!active[r]) {
        feas[static_cast<std::size_t>(r) * n] = 1;
        continue;
      }
      const auto f = envs[r].feasible();
      if (std::find(f.begin(), f.end(), 1) == f.end())
        throw Error(ErrorCode::NoFeasibleAction, "no feasible action before the episode ended");
      std::copy(f.begin(), f.end(), feas.begin() + static_cast<std::ptrdiff_t>(r) * n);
    }
    const Tensor logp = decode_step(model, tape, cache, ctx, feas);
    std::vector<int> chosen(rows, 0);
    for (int r = 0; r < rows; ++r) {
      if (!active[r]) continue;
      if (forced) {
        const auto& f = (*forced)[r];
        if (static_cast<int>(out.actions[r].size()) >= static_cast<int>(f.size()))
          throw Error(ErrorCode::InvalidArgument, "forced trajectory ended early");
        chosen[r] = f[out.actions[r].size()];
      } else {
        chosen[r] = mode == DecodeMode::Greedy ? greedy_action(logp, r) : sample_action(logp, r, *rng);
      }
      envs[r].step(chosen[r]);
      out.actions[r].push_back(chosen[r]);
    }
    const Tensor step_lp = pick(logp, chosen);
    out.log_prob = out.log_prob.defined() ? add(out.log_prob, step_lp) : step_lp;
  }
  if (!out.log_prob.defined()) out.log_prob = Tensor::zeros(rows, 1);
  for (const auto& e : envs) {
    out.solutions.push_back(e.solution());
    out.costs.push_back(signed_cost(inst, out.solutions.back()));
  }
  return out;
}

/// Greedy solutions for a list of instances.
inline std::vector<Solution> solve_greedy(const AlignModel& model, const std::vector<CopInstance>& instances,
                                          int workers = 1) {
  std::vector<Solution> out(instances.size());
  parallel_for(static_cast<int>(instances.size()), workers, [&](int i) {
    Tape tape(model.params());
    out[i] = run_policy(model, tape, instances[i], 1, DecodeMode::Greedy, nullptr).solutions[0];
  });
  return out;
}

// ----------------------------------------------------------------- REINFORCE

/// c - mean(c) for each sample.
inline std::vector<double> advantages(const std::vector<double>& costs) {
  if (costs.size() < 2) throw Error(ErrorCode::InvalidArgument, "baseline needs at least 2 samples");
  const double b = std::accumulate(costs.begin(), costs.end(), 0.0) / static_cast<double>(costs.size());
  std::vector<double> a(costs.size());
  for (std::size_t r = 0; r < costs.size(); ++r) a[r] = costs[r] - b;
  return a;
}

/// mean_r adv_r * log p(pi_r); its gradient is the policy-gradient estimate.
inline Tensor reinforce_surrogate(const Tensor& log_prob, const std::vector<double>& adv) {
  const int r = log_prob.rows();
  return scale(sum(mul(log_prob, Tensor::make(r, 1, adv))), 1.0 / r);
}

struct ReinforceResult {
  double mean_cost = 0;       // signed
  double mean_objective = 0;  // as reported by evaluate_objective
  std::vector<double> objectives;  // one mean per instance
};

/// Gradient averaged over instances, R samples each, added into `grads`.
inline ReinforceResult reinforce_gradient(const AlignModel& model, const std::vector<CopInstance>& instances,
                                          int samples, std::uint64_t seed, Gradients& grads, int workers = 1) {
  if (samples < 2) throw Error(ErrorCode::InvalidArgument, "baseline needs at least 2 samples");
  const int count = static_cast<int>(instances.size());
  if (count == 0) throw Error(ErrorCode::InvalidArgument, "no instances");
  std::vector<Gradients> local(count);
  std::vector<double> cost(count), obj(count);
  parallel_for(count, workers, [&](int i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    Tape tape(model.params());
    const auto ro = run_policy(model, tape, instances[i], samples, DecodeMode::Sample, &rng);
    const auto adv = advantages(ro.costs);
    cost[i] = std::accumulate(ro.costs.begin(), ro.costs.end(), 0.0) / samples;
    double o = 0;
    for (const auto& s : ro.solutions) o += evaluate_objective(instances[i], s);
    obj[i] = o / samples;
    if (std::all_of(adv.begin(), adv.end(), [](double a) { return a == 0.0; })) return;
    backward(reinforce_surrogate(ro.log_prob, adv));
    tape.collect(local[i], 1.0 / count);
  });
  ReinforceResult res;
  res.objectives = obj;
  for (int i = 0; i < count; ++i) {
    accumulate(grads, local[i]);
    res.mean_cost += cost[i] / count;
    res.mean_objective += obj[i] / count;
  }
  return res;
}

// ------------------------------------------------------------ conflict erasure

struct ErasureResult {
  std::vector<std::vector<double>> projected;
  std::vector<double> mean;
  int projections = 0;
  std::vector<int> projections_per_task;
  int zero_norm_skipped = 0;
  /// Final dot of each projected gradient with every original it was projected on.
  double min_post_dot = std::numeric_limits<double>::infinity();
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

/// Each task gradient is projected off every other task's original gradient
/// it conflicts with, visiting the others in a shuffled order.
inline ErasureResult erase_conflicts(const std::vector<std::vector<double>>& g, Rng& rng) {
  const int k = static_cast<int>(g.size());
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "conflict erasure needs at least 2 task gradients");
  for (const auto& v : g)
    if (v.size() != g[0].size()) throw Error(ErrorCode::ShapeMismatch, "task gradients differ in length");
  std::vector<double> norm2(k);
  for (int j = 0; j < k; ++j) norm2[j] = dot(g[j], g[j]);
  ErasureResult res;
  res.projected = g;
  res.projections_per_task.assign(k, 0);
  for (int i = 0; i < k; ++i) {
    std::vector<int> order;
    for (int j = 0; j < k; ++j)
      if (j != i) order.push_back(j);
    shuffle(order.begin(), order.end(), rng);
    auto& gi = res.projected[i];
    std::vector<int> used;
    for (int j : order) {
      const double d = dot(gi, g[j]);
      if (!(d < 0)) continue;
      if (norm2[j] == 0) {
        ++res.zero_norm_skipped;
        continue;
      }
      const double c = d / norm2[j];
      for (std::size_t e = 0; e < gi.size(); ++e) gi[e] -= c * g[j][e];
      ++res.projections;
      ++res.projections_per_task[i];
      used.push_back(j);
    }
    for (int j : used) res.min_post_dot = std::min(res.min_post_dot, dot(gi, g[j]));
  }
  res.mean.assign(g[0].size(), 0.0);
  for (const auto& v : res.projected)
    for (std::size_t e = 0; e < v.size(); ++e) res.mean[e] += v[e] / k;
  return res;
}

// ------------------------------------------------------------------ training

enum class Scheme { STFT, MTFT };

inline Scheme parse_scheme(std::string_view s) {
  if (s == "stft" || s == "STFT") return Scheme::STFT;
  if (s == "mtft" || s == "MTFT") return Scheme::MTFT;
  throw Error(ErrorCode::InvalidArgument, "unknown scheme '" + std::string(s) + "'");
}

struct FinetuneConfig {
  std::vector<ProblemKind> kinds = {ProblemKind::TSP};
  Scheme scheme = Scheme::STFT;
  int n = 20;
  int batch = 64;
  int samples = 8;
  int epochs = 1;
  int batches_per_epoch = 1;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const {
    if (kinds.empty()) throw Error(ErrorCode::InvalidArgument, "no kinds to fine-tune");
    if (scheme == Scheme::STFT && kinds.size() != 1) throw Error(ErrorCode::InvalidArgument, "STFT takes one kind");
    if (scheme == Scheme::MTFT && kinds.size() < 2) throw Error(ErrorCode::InvalidArgument, "MTFT needs two kinds");
    if (samples < 2) throw Error(ErrorCode::InvalidArgument, "baseline needs at least 2 samples");
    if (batch < 1 || epochs < 0 || batches_per_epoch < 1) throw Error(ErrorCode::InvalidArgument, "bad schedule");
  }
};

struct FinetuneStats {
  int epoch = 0;
  ProblemKind kind = ProblemKind::TSP;
  double mean_cost = 0;  // mean objective of sampled solutions
  double gap_vs_heuristic = 0;
  double lr = 0;
  int conflicts_erased = 0;
};

/// Names of parameters shared across kinds that appear in any task gradient.
inline std::vector<std::string> shared_names(const std::vector<Gradients>& tasks) {
  std::vector<std::string> names;
  for (const auto& t : tasks)
    for (const auto& [name, _] : t)
      if (!is_kind_specific(name)) names.push_back(name);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

/// Conflict-erased update over shared parameters; kind-specific gradients
/// pass through from their own task.
inline Gradients combine_task_gradients(const AlignModel& model, const std::vector<Gradients>& tasks, Rng& rng,
                                        ErasureResult* info = nullptr) {
  const auto names = shared_names(tasks);
  std::vector<std::vector<double>> flat(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (const auto& name : names) {
      const auto it = tasks[t].find(name);
      if (it != tasks[t].end())
        flat[t].insert(flat[t].end(), it->second.begin(), it->second.end());
      else
        flat[t].resize(flat[t].size() + model.params().get(name).value.size(), 0.0);
    }
  auto res = erase_conflicts(flat, rng);
  Gradients out;
  std::size_t off = 0;
  for (const auto& name : names) {
    const std::size_t len = model.params().get(name).value.size();
    out[name].assign(res.mean.begin() + static_cast<std::ptrdiff_t>(off),
                     res.mean.begin() + static_cast<std::ptrdiff_t>(off + len));
    off += len;
  }
  for (const auto& t : tasks)
    for (const auto& [name, g] : t)
      if (is_kind_specific(name)) out[name] = g;
  if (info) *info = std::move(res);
  return out;
}

/// Mean reference-heuristic objective over instances.
inline double mean_reference_objective(const std::vector<CopInstance>& instances) {
  double total = 0;
  for (const auto& inst : instances)
    total += evaluate_objective(inst, heuristic_solve(reference_heuristic(inst.kind), inst));
  return total / static_cast<double>(instances.size());
}

inline double gap_or_nan(double obj, double ref, ProblemKind kind) {
  return ref > 0 ? optimality_gap(obj, ref, sense_of(kind)) : std::numeric_limits<double>::quiet_NaN();
}

/// Training instances are generated on the fly from (seed, epoch, batch, slot).
inline CopInstance training_instance(const FinetuneConfig& cfg, ProblemKind kind, int epoch, int batch, int slot) {
  const std::uint64_t s = mix_seed(mix_seed(mix_seed(cfg.seed, 0x66696e65ULL + static_cast<std::uint64_t>(epoch)),
                                            static_cast<std::uint64_t>(batch)),
                                   static_cast<std::uint64_t>(slot) * 8 + static_cast<std::uint64_t>(kind));
  return generate_instance(kind, cfg.n, s);
}

template <typename OnEpoch>
std::vector<FinetuneStats> finetune(AlignModel& model, AdamW& opt, const FinetuneConfig& cfg, OnEpoch&& on_epoch,
                                    int first_epoch = 1) {
  cfg.validate();
  for (auto k : cfg.kinds)
    if (!model.has_kind(k)) throw Error(ErrorCode::UnregisteredKind, std::string(to_string(k)));
  Rng rng(mix_seed(cfg.seed, 0x6d746674ULL));
  std::vector<FinetuneStats> out;
  for (int e = first_epoch; e < first_epoch + cfg.epochs; ++e) {
    const double lr = lr_at_epoch(cfg.lr, e - 1);
    std::map<ProblemKind, double> obj_sum, ref_sum;
    std::map<ProblemKind, int> count, erased;
    for (int b = 0; b < cfg.batches_per_epoch; ++b) {
      std::map<ProblemKind, std::vector<CopInstance>> by_kind;
      if (cfg.scheme == Scheme::STFT) {
        for (int i = 0; i < cfg.batch; ++i) by_kind[cfg.kinds[0]].push_back(training_instance(cfg, cfg.kinds[0], e, b, i));
      } else {
        std::map<ProblemKind, std::vector<int>> pools;
        for (auto k : cfg.kinds) pools[k] = {0};
        const auto sampled = sample_multitask_batch(pools, std::max(cfg.batch, 2), rng);
        for (std::size_t i = 0; i < sampled.picks.size(); ++i) {
          const auto k = sampled.picks[i].first;
          by_kind[k].push_back(training_instance(cfg, k, e, b, static_cast<int>(i)));
        }
      }
      const std::uint64_t step_seed = rng();
      std::vector<Gradients> task_grads;
      std::vector<ProblemKind> task_kinds;
      for (const auto& [k, insts] : by_kind) {
        Gradients g;
        const auto res = reinforce_gradient(model, insts, cfg.samples, mix_seed(step_seed, static_cast<std::uint64_t>(k)),
                                            g, cfg.workers);
        obj_sum[k] += res.mean_objective * static_cast<double>(insts.size());
        ref_sum[k] += mean_reference_objective(insts) * static_cast<double>(insts.size());
        count[k] += static_cast<int>(insts.size());
        task_grads.push_back(std::move(g));
        task_kinds.push_back(k);
      }
      Gradients update;
      if (task_grads.size() >= 2) {
        ErasureResult info;
        update = combine_task_gradients(model, task_grads, rng, &info);
        for (std::size_t t = 0; t < task_kinds.size(); ++t) erased[task_kinds[t]] += info.projections_per_task[t];
      } else {
        update = std::move(task_grads[0]);
      }
      opt.step(model.params(), update, lr);
    }
    for (auto k : cfg.kinds) {
      if (!count[k]) continue;
      FinetuneStats s;
      s.epoch = e;
      s.kind = k;
      s.mean_cost = obj_sum[k] / count[k];
      s.gap_vs_heuristic = gap_or_nan(s.mean_cost, ref_sum[k] / count[k], k);
      s.lr = lr;
      s.conflicts_erased = erased[k];
      out.push_back(s);
      on_epoch(s);
    }
  }
  return out;
}

inline std::vector<FinetuneStats> finetune(AlignModel& model, AdamW& opt, const FinetuneConfig& cfg) {
  return finetune(model, opt, cfg, [](const FinetuneStats&) {});
}

inline void write_finetune_csv_header(std::ostream& os) {
  os << "epoch,kind,mean_cost,gap_vs_heuristic,lr,conflicts_erased\n";
}

inline void write_finetune_csv_row(std::ostream& os, const FinetuneStats& s) {
  os << s.epoch << ',' << to_string(s.kind) << ',' << format_real(s.mean_cost) << ','
     << format_real(s.gap_vs_heuristic) << ',' << format_real(s.lr) << ',' << s.conflicts_erased << '\n';
}

}  // namespace alignopt
