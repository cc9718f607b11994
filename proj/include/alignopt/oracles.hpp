// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "alignopt/instances.hpp"

namespace alignopt {

enum class HeuristicName {
  NearestNeighbor,
  FarthestInsertion,
  Sweep,
  ParallelSavings,
  GreedyKP,
  MVCApprox,
  REH,
  EDD,
};

inline std::string_view to_string(HeuristicName h) {
  switch (h) {
    case HeuristicName::NearestNeighbor: return "NearestNeighbor";
    case HeuristicName::FarthestInsertion: return "FarthestInsertion";
    case HeuristicName::Sweep: return "Sweep";
    case HeuristicName::ParallelSavings: return "ParallelSavings";
    case HeuristicName::GreedyKP: return "GreedyKP";
    case HeuristicName::MVCApprox: return "MVCApprox";
    case HeuristicName::REH: return "REH";
    case HeuristicName::EDD: return "EDD";
  }
  return "?";
}

inline HeuristicName parse_heuristic(std::string_view text) {
  for (auto h : {HeuristicName::NearestNeighbor, HeuristicName::FarthestInsertion, HeuristicName::Sweep,
                 HeuristicName::ParallelSavings, HeuristicName::GreedyKP, HeuristicName::MVCApprox, HeuristicName::REH,
                 HeuristicName::EDD})
    if (to_string(h) == text) return h;
  throw Error(ErrorCode::InvalidArgument, "unknown heuristic '" + std::string(text) + "'");
}

inline bool heuristic_supports(HeuristicName h, ProblemKind k) {
  switch (h) {
    case HeuristicName::NearestNeighbor:
    case HeuristicName::FarthestInsertion: return k == ProblemKind::TSP;
    case HeuristicName::Sweep:
    case HeuristicName::ParallelSavings: return has_depot(k);
    case HeuristicName::GreedyKP: return k == ProblemKind::KP;
    case HeuristicName::MVCApprox:
    case HeuristicName::REH: return is_graph_kind(k);
    case HeuristicName::EDD: return k == ProblemKind::SMTWTP;
  }
  return false;
}

inline std::vector<HeuristicName> heuristics_for(ProblemKind k) {
  std::vector<HeuristicName> out;
  for (auto h : {HeuristicName::NearestNeighbor, HeuristicName::FarthestInsertion,
                 HeuristicName::Sweep, HeuristicName::ParallelSavings, HeuristicName::GreedyKP,
                 HeuristicName::MVCApprox, HeuristicName::REH, HeuristicName::EDD})
    if (heuristic_supports(h, k)) out.push_back(h);
  return out;
}

/// Heuristic each kind's training log reports its gap against.
inline HeuristicName reference_heuristic(ProblemKind k) {
  switch (k) {
    case ProblemKind::TSP: return HeuristicName::NearestNeighbor;
    case ProblemKind::CVRP: return HeuristicName::ParallelSavings;
    case ProblemKind::VRPB: return HeuristicName::Sweep;
    case ProblemKind::KP: return HeuristicName::GreedyKP;
    case ProblemKind::MVC:
    case ProblemKind::MIS: return HeuristicName::MVCApprox;
    case ProblemKind::SMTWTP: return HeuristicName::EDD;
  }
  return HeuristicName::NearestNeighbor;
}

/// Relative gap; positive means worse than the reference.
inline double optimality_gap(double obj, double reference, GapSense sense) {
  if (!(reference > 0.0)) {
    throw Error(ErrorCode::NonpositiveReference, "reference must be > 0, got " + std::to_string(reference));
  }
  return sense == GapSense::Minimize ? (obj - reference) / reference : (reference - obj) / reference;
}

// ---------------------------------------------------------------------------
// Exact solvers

inline constexpr int kExactTspMax = 15;
inline constexpr int kExactSmtwtpMax = 9;
inline constexpr int kExactGraphMax = 22;
inline constexpr int kExactKpMax = 60;
inline constexpr int kExactVrpMax = 8;

inline int exact_size_limit(ProblemKind k) {
  switch (k) {
    case ProblemKind::TSP: return kExactTspMax;
    case ProblemKind::SMTWTP: return kExactSmtwtpMax;
    case ProblemKind::MVC:
    case ProblemKind::MIS: return kExactGraphMax;
    case ProblemKind::KP: return kExactKpMax;
    case ProblemKind::CVRP:
    case ProblemKind::VRPB: return kExactVrpMax;
  }
  return 0;
}

namespace detail {

inline bool nearly_le(double a, double b) { return a <= b + 1e-12 * std::max(1.0, std::abs(b)); }

// Held-Karp over "cost to finish" states so the tour can be rebuilt forward,
// choosing the smallest next node among equal-cost continuations.
inline std::vector<int> held_karp(const CopInstance& inst) {
  const int n = inst.n;
  if (n <= 2) {
    std::vector<int> t(n);
    std::iota(t.begin(), t.end(), 0);
    return t;
  }
  const std::uint32_t full = (1u << n) - 1;
  std::vector<double> dist(static_cast<std::size_t>(n) * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) dist[a * n + b] = inst.distance(a, b);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> togo(static_cast<std::size_t>(full + 1) * n, inf);
  auto at = [&](std::uint32_t mask, int j) -> double& { return togo[static_cast<std::size_t>(mask) * n + j]; };

  for (int j = 0; j < n; ++j) at(full, j) = dist[j * n];
  for (std::uint32_t mask = full - 1; mask >= 1; --mask) {
    if (!(mask & 1u)) continue;
    for (int j = 0; j < n; ++j) {
      if (!(mask >> j & 1u)) continue;
      if (j == 0 && mask != 1u) continue;
      double best = inf;
      for (int k = 1; k < n; ++k) {
        if (mask >> k & 1u) continue;
        best = std::min(best, dist[j * n + k] + at(mask | (1u << k), k));
      }
      at(mask, j) = best;
    }
  }

  std::vector<int> tour{0};
  std::uint32_t mask = 1u;
  int j = 0;
  while (mask != full) {
    const double target = at(mask, j);
    for (int k = 1; k < n; ++k) {
      if (mask >> k & 1u) continue;
      if (nearly_le(dist[j * n + k] + at(mask | (1u << k), k), target)) {
        tour.push_back(k);
        mask |= 1u << k;
        j = k;
        break;
      }
    }
  }
  return tour;
}

inline std::vector<int> smtwtp_enumerate(const CopInstance& inst) {
  std::vector<int> perm(inst.n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = weighted_tardiness(inst, perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double c = weighted_tardiness(inst, perm);
    if (c < best_cost - 1e-12 * std::max(1.0, best_cost)) {
      best_cost = c;
      best = perm;
    }
  }
  return best;
}

struct KnapsackSearch {
  std::vector<int> order;
  std::vector<double> w, v;
  double capacity = 0;
  double best_value = -1;
  std::vector<char> take, best_take;

  double bound(std::size_t pos, double room, double value) const {
    for (; pos < order.size(); ++pos) {
      if (w[pos] <= room) {
        room -= w[pos];
        value += v[pos];
      } else {
        return value + v[pos] * (room / w[pos]);
      }
    }
    return value;
  }

  void dfs(std::size_t pos, double room, double value) {
    if (value > best_value) {
      best_value = value;
      best_take = take;
    }
    if (pos == order.size()) return;
    if (bound(pos, room, value) <= best_value) return;
    if (w[pos] <= room + kCapacityTolerance) {
      take[pos] = 1;
      dfs(pos + 1, room - w[pos], value + v[pos]);
      take[pos] = 0;
    }
    dfs(pos + 1, room, value);
  }
};

inline std::vector<int> knapsack_branch_and_bound(const CopInstance& inst) {
  KnapsackSearch s;
  s.order.resize(inst.n);
  std::iota(s.order.begin(), s.order.end(), 0);
  auto ratio = [&](int i) {
    return inst.weights[i] > 0 ? inst.values[i] / inst.weights[i] : std::numeric_limits<double>::infinity();
  };
  std::stable_sort(s.order.begin(), s.order.end(), [&](int a, int b) { return ratio(a) > ratio(b); });
  for (int i : s.order) {
    s.w.push_back(inst.weights[i]);
    s.v.push_back(inst.values[i]);
  }
  s.capacity = inst.capacity;
  s.take.assign(inst.n, 0);
  s.best_take = s.take;
  s.dfs(0, inst.capacity, 0.0);
  std::vector<int> chosen;
  for (int p = 0; p < inst.n; ++p)
    if (s.best_take[p]) chosen.push_back(s.order[p]);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

inline std::vector<std::uint32_t> adjacency_masks(const CopInstance& inst) {
  std::vector<std::uint32_t> adj(inst.n, 0);
  for (int i = 0; i < inst.n; ++i)
    for (int j = 0; j < inst.n; ++j)
      if (inst.adjacency[i][j]) adj[i] |= 1u << j;
  return adj;
}

// Minimum vertex cover size by branching on a maximum-degree vertex.
inline void mvc_branch(std::vector<std::uint32_t> adj, int size, int& best) {
  int v = -1, maxdeg = 0, edges2 = 0;
  for (std::size_t i = 0; i < adj.size(); ++i) {
    const int d = std::popcount(adj[i]);
    edges2 += d;
    if (d > maxdeg) {
      maxdeg = d;
      v = static_cast<int>(i);
    }
  }
  if (maxdeg == 0) {
    best = std::min(best, size);
    return;
  }
  const int edges = edges2 / 2;
  if (size + (edges + maxdeg - 1) / maxdeg >= best) return;

  auto remove = [](std::vector<std::uint32_t>& a, int u) {
    std::uint32_t nb = a[u];
    a[u] = 0;
    while (nb) {
      const int w = std::countr_zero(nb);
      nb &= nb - 1;
      a[w] &= ~(1u << u);
    }
  };
  {
    auto with_v = adj;
    remove(with_v, v);
    mvc_branch(std::move(with_v), size + 1, best);
  }
  {
    auto without_v = adj;
    std::uint32_t nb = adj[v];
    int added = 0;
    while (nb) {
      const int u = std::countr_zero(nb);
      nb &= nb - 1;
      remove(without_v, u);
      ++added;
    }
    mvc_branch(std::move(without_v), size + added, best);
  }
}

// First cover of exactly k vertices in lexicographic order of sorted ids.
inline bool mvc_lex(const std::vector<std::uint32_t>& adj, int n, int i, std::uint32_t cover,
                    std::uint32_t forced, int count, int k, std::uint32_t& out) {
  if (i == n) {
    out = cover;
    return true;
  }
  const std::uint32_t rest = ~((1u << i) - 1u);
  if (count + std::popcount(forced & rest) > k) return false;
  const std::uint32_t bit = 1u << i;
  if (count < k && mvc_lex(adj, n, i + 1, cover | bit, forced, count + 1, k, out)) return true;
  if (forced & bit) return false;
  const std::uint32_t lower = bit - 1u;
  if ((adj[i] & lower & ~cover) != 0) return false;
  return mvc_lex(adj, n, i + 1, cover, forced | (adj[i] & ~lower & ~bit), count, k, out);
}

inline bool mis_lex(const std::vector<std::uint32_t>& adj, int n, int i, std::uint32_t set, int count,
                    int k, std::uint32_t& out) {
  if (count == k) {
    out = set;
    return true;
  }
  if (i == n || count + (n - i) < k) return false;
  if (!(adj[i] & set) && mis_lex(adj, n, i + 1, set | (1u << i), count + 1, k, out)) return true;
  return mis_lex(adj, n, i + 1, set, count, k, out);
}

inline std::vector<int> mask_to_list(std::uint32_t mask) {
  std::vector<int> out;
  while (mask) {
    out.push_back(std::countr_zero(mask));
    mask &= mask - 1;
  }
  return out;
}

inline int minimum_cover_size(const CopInstance& inst) {
  int best = inst.n;
  mvc_branch(adjacency_masks(inst), 0, best);
  return best;
}

// Set-partition dynamic program over customer subsets; each subset's route is
// the cheapest feasible visiting order found by enumeration.
inline std::vector<int> vrp_exact(const CopInstance& inst) {
  std::vector<int> customers;
  for (int i = 0; i < inst.n; ++i)
    if (i != inst.depot_index) customers.push_back(i);
  const int c = static_cast<int>(customers.size());
  const std::uint32_t full = (1u << c) - 1;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> route_cost(full + 1, inf);
  std::vector<std::vector<int>> route_order(full + 1);
  route_cost[0] = 0.0;
  for (std::uint32_t s = 1; s <= full; ++s) {
    std::vector<int> perm;
    for (int b = 0; b < c; ++b)
      if (s >> b & 1u) perm.push_back(customers[b]);
    do {
      if (!route_feasible(inst, perm)) continue;
      double len = inst.distance(inst.depot_index, perm.front()) + inst.distance(perm.back(), inst.depot_index);
      for (std::size_t t = 0; t + 1 < perm.size(); ++t) len += inst.distance(perm[t], perm[t + 1]);
      if (len < route_cost[s] - 1e-12 * std::max(1.0, route_cost[s] == inf ? 1.0 : route_cost[s])) {
        route_cost[s] = len;
        route_order[s] = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  std::vector<double> best(full + 1, inf);
  std::vector<std::uint32_t> pick(full + 1, 0);
  best[0] = 0.0;
  for (std::uint32_t s = 1; s <= full; ++s) {
    const std::uint32_t low = s & (~s + 1);
    // subsets of s containing its lowest customer, visited in increasing order
    const std::uint32_t rest = s ^ low;
    for (std::uint32_t sub = 0;; sub = (sub - rest) & rest) {
      const std::uint32_t t = sub | low;
      if (route_cost[t] < inf) {
        const double total = route_cost[t] + best[s ^ t];
        if (total < best[s] - 1e-12 * std::max(1.0, best[s] == inf ? 1.0 : best[s])) {
          best[s] = total;
          pick[s] = t;
        }
      }
      if (sub == rest) break;
    }
  }
  std::vector<std::vector<int>> routes;
  for (std::uint32_t s = full; s != 0; s ^= pick[s]) routes.push_back(route_order[pick[s]]);
  return join_routes(routes, inst.depot_index);
}

}  // namespace detail

/// Provably optimal solution for small instances.
inline Solution exact_solve(const CopInstance& inst) {
  const int limit = exact_size_limit(inst.kind);
  if (inst.n > limit) {
    throw Error(ErrorCode::SizeLimitExceeded, "exact " + std::string(to_string(inst.kind)) +
                                                  " supports n <= " + std::to_string(limit) +
                                                  ", got " + std::to_string(inst.n));
  }
  Solution sol{inst.kind, {}};
  switch (inst.kind) {
    case ProblemKind::TSP:
      sol.nodes = detail::held_karp(inst);
      break;
    case ProblemKind::SMTWTP:
      sol.nodes = detail::smtwtp_enumerate(inst);
      break;
    case ProblemKind::KP:
      sol.nodes = detail::knapsack_branch_and_bound(inst);
      break;
    case ProblemKind::MVC: {
      const auto adj = detail::adjacency_masks(inst);
      const int k = detail::minimum_cover_size(inst);
      std::uint32_t cover = 0;
      detail::mvc_lex(adj, inst.n, 0, 0u, 0u, 0, k, cover);
      sol.nodes = detail::mask_to_list(cover);
      break;
    }
    case ProblemKind::MIS: {
      const auto adj = detail::adjacency_masks(inst);
      const int k = inst.n - detail::minimum_cover_size(inst);
      std::uint32_t set = 0;
      detail::mis_lex(adj, inst.n, 0, 0u, 0, k, set);
      sol.nodes = detail::mask_to_list(set);
      break;
    }
    case ProblemKind::CVRP:
    case ProblemKind::VRPB:
      sol.nodes = detail::vrp_exact(inst);
      break;
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Heuristics

namespace detail {

inline std::vector<int> nearest_neighbor_from(const CopInstance& inst, int start) {
  const int n = inst.n;
  std::vector<char> used(n, 0);
  std::vector<int> tour{start};
  used[start] = 1;
  int cur = start;
  for (int step = 1; step < n; ++step) {
    int next = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int v = 0; v < n; ++v) {
      if (used[v]) continue;
      const double d = inst.distance(cur, v);
      if (d < best) {
        best = d;
        next = v;
      }
    }
    used[next] = 1;
    tour.push_back(next);
    cur = next;
  }
  return tour;
}

inline std::vector<int> farthest_insertion(const CopInstance& inst) {
  const int n = inst.n;
  if (n <= 2) {
    std::vector<int> t(n);
    std::iota(t.begin(), t.end(), 0);
    return t;
  }
  int a = 0, b = 1;
  double far = -1;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (inst.distance(i, j) > far) {
        far = inst.distance(i, j);
        a = i;
        b = j;
      }
  std::vector<int> tour{a, b};
  std::vector<char> in(n, 0);
  in[a] = in[b] = 1;
  std::vector<double> near(n);
  for (int v = 0; v < n; ++v) near[v] = std::min(inst.distance(v, a), inst.distance(v, b));
  for (int step = 2; step < n; ++step) {
    int pick = -1;
    double worst = -1;
    for (int v = 0; v < n; ++v)
      if (!in[v] && near[v] > worst) {
        worst = near[v];
        pick = v;
      }
    std::size_t pos = 0;
    double cheapest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tour.size(); ++i) {
      const int p = tour[i], q = tour[(i + 1) % tour.size()];
      const double delta = inst.distance(p, pick) + inst.distance(pick, q) - inst.distance(p, q);
      if (delta < cheapest) {
        cheapest = delta;
        pos = i + 1;
      }
    }
    tour.insert(tour.begin() + static_cast<std::ptrdiff_t>(pos), pick);
    in[pick] = 1;
    for (int v = 0; v < n; ++v) near[v] = std::min(near[v], inst.distance(v, pick));
  }
  return tour;
}

inline std::vector<int> sweep(const CopInstance& inst) {
  struct Polar {
    double angle, radius;
    int id;
  };
  const auto& depot = inst.coords[inst.depot_index];
  std::vector<Polar> order;
  for (int i = 0; i < inst.n; ++i) {
    if (i == inst.depot_index) continue;
    const double dx = inst.coords[i][0] - depot[0], dy = inst.coords[i][1] - depot[1];
    double ang = std::atan2(dy, dx);
    if (ang < 0) ang += 2.0 * std::acos(-1.0);
    order.push_back({ang, std::hypot(dx, dy), i});
  }
  std::sort(order.begin(), order.end(), [](const Polar& x, const Polar& y) {
    if (x.angle != y.angle) return x.angle < y.angle;
    if (x.radius != y.radius) return x.radius < y.radius;
    return x.id < y.id;
  });
  std::vector<std::vector<int>> routes;
  std::vector<int> cur;
  for (const auto& p : order) {
    cur.push_back(p.id);
    if (!route_feasible(inst, cur)) {
      cur.pop_back();
      routes.push_back(cur);
      cur = {p.id};
    }
  }
  if (!cur.empty()) routes.push_back(cur);
  return join_routes(routes, inst.depot_index);
}

inline std::vector<int> parallel_savings(const CopInstance& inst) {
  const int n = inst.n, depot = inst.depot_index;
  struct Saving {
    double s;
    int i, j;
  };
  std::vector<Saving> savings;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (i != depot && j != depot)
        savings.push_back({inst.distance(i, depot) + inst.distance(depot, j) - inst.distance(i, j), i, j});
  std::stable_sort(savings.begin(), savings.end(), [](const Saving& a, const Saving& b) { return a.s > b.s; });

  std::vector<std::vector<int>> routes;
  std::vector<int> route_of(n, -1);
  for (int i = 0; i < n; ++i) {
    if (i == depot) continue;
    route_of[i] = static_cast<int>(routes.size());
    routes.push_back({i});
  }
  for (const auto& sv : savings) {
    const int ra = route_of[sv.i], rb = route_of[sv.j];
    if (ra == rb) continue;
    auto A = routes[ra], B = routes[rb];
    const bool i_end = A.back() == sv.i, i_start = A.front() == sv.i;
    const bool j_end = B.back() == sv.j, j_start = B.front() == sv.j;
    if (!(i_end || i_start) || !(j_end || j_start)) continue;
    if (!i_end) std::reverse(A.begin(), A.end());
    if (!j_start) std::reverse(B.begin(), B.end());
    std::vector<int> merged = A;
    merged.insert(merged.end(), B.begin(), B.end());
    if (!route_feasible(inst, merged)) {
      std::reverse(merged.begin(), merged.end());
      if (!route_feasible(inst, merged)) continue;
    }
    routes[ra] = std::move(merged);
    routes[rb].clear();
    for (int v : routes[ra]) route_of[v] = ra;
  }
  std::vector<std::vector<int>> kept;
  for (auto& r : routes)
    if (!r.empty()) kept.push_back(std::move(r));
  return join_routes(kept, depot);
}

inline std::vector<int> greedy_knapsack(const CopInstance& inst) {
  std::vector<int> order(inst.n);
  std::iota(order.begin(), order.end(), 0);
  auto ratio = [&](int i) {
    return inst.weights[i] > 0 ? inst.values[i] / inst.weights[i] : std::numeric_limits<double>::infinity();
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ratio(a) > ratio(b); });
  double room = inst.capacity;
  std::vector<int> chosen;
  for (int i : order) {
    if (inst.weights[i] <= room + kCapacityTolerance) {
      room -= inst.weights[i];
      chosen.push_back(i);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

// Randomized covers: repeatedly draw an uncovered edge; MVCApprox adds one
// endpoint chosen uniformly, REH adds both endpoints.
inline std::vector<int> random_edge_cover(const CopInstance& inst, bool both_endpoints) {
  Rng rng(mix_seed(inst.seed, both_endpoints ? 0x52454855ULL : 0x4d564341ULL));
  std::vector<std::pair<int, int>> open;
  for (int i = 0; i < inst.n; ++i)
    for (int j = i + 1; j < inst.n; ++j)
      if (inst.adjacency[i][j]) open.emplace_back(i, j);
  std::vector<char> in(inst.n, 0);
  while (!open.empty()) {
    const auto [a, b] = open[uniform_below(rng, open.size())];
    if (both_endpoints) {
      in[a] = in[b] = 1;
    } else {
      in[uniform01(rng) < 0.5 ? a : b] = 1;
    }
    std::erase_if(open, [&](const auto& e) { return in[e.first] || in[e.second]; });
  }
  std::vector<int> out;
  for (int v = 0; v < inst.n; ++v)
    if (in[v]) out.push_back(v);
  return out;
}

inline std::vector<int> complement(const std::vector<int>& set, int n) {
  std::vector<char> in(n, 0);
  for (int v : set) in[v] = 1;
  std::vector<int> out;
  for (int v = 0; v < n; ++v)
    if (!in[v]) out.push_back(v);
  return out;
}

}  // namespace detail

/// Classical constructive heuristics. For MIS instances the vertex-cover
/// heuristics return the complement of the cover, which is independent.
inline Solution heuristic_solve(HeuristicName name, const CopInstance& inst,
                                std::optional<int> start = std::nullopt) {
  if (!heuristic_supports(name, inst.kind)) {
    throw Error(ErrorCode::IncompatibleHeuristic, std::string(to_string(name)) + " does not apply to " +
                                                      std::string(to_string(inst.kind)));
  }
  if (start && name != HeuristicName::NearestNeighbor) {
    throw Error(ErrorCode::InvalidArgument, "start node only applies to NearestNeighbor");
  }
  Solution sol{inst.kind, {}};
  switch (name) {
    case HeuristicName::NearestNeighbor: {
      if (inst.n == 0) break;
      if (start) {
        if (*start < 0 || *start >= inst.n) throw Error(ErrorCode::IndexOutOfRange, "start node");
        sol.nodes = detail::nearest_neighbor_from(inst, *start);
        break;
      }
      double best = std::numeric_limits<double>::infinity();
      for (int s = 0; s < inst.n; ++s) {
        auto t = detail::nearest_neighbor_from(inst, s);
        const double len = tour_length(inst, t);
        if (len < best) {
          best = len;
          sol.nodes = std::move(t);
        }
      }
      break;
    }
    case HeuristicName::FarthestInsertion:
      sol.nodes = detail::farthest_insertion(inst);
      break;
    case HeuristicName::Sweep:
      sol.nodes = detail::sweep(inst);
      break;
    case HeuristicName::ParallelSavings:
      sol.nodes = detail::parallel_savings(inst);
      break;
    case HeuristicName::GreedyKP:
      sol.nodes = detail::greedy_knapsack(inst);
      break;
    case HeuristicName::MVCApprox:
    case HeuristicName::REH: {
      auto cover = detail::random_edge_cover(inst, name == HeuristicName::REH);
      sol.nodes = inst.kind == ProblemKind::MIS ? detail::complement(cover, inst.n) : std::move(cover);
      break;
    }
    case HeuristicName::EDD: {
      sol.nodes.resize(inst.n);
      std::iota(sol.nodes.begin(), sol.nodes.end(), 0);
      std::stable_sort(sol.nodes.begin(), sol.nodes.end(),
                       [&](int a, int b) { return inst.due_times[a] < inst.due_times[b]; });
      break;
    }
  }
  return sol;
}

/// First-improvement 2-opt until no improving move remains.
inline Solution two_opt(const CopInstance& inst, Solution tour) {
  if (inst.kind != ProblemKind::TSP || tour.kind != ProblemKind::TSP) {
    throw Error(ErrorCode::KindMismatch, "two_opt requires a TSP instance and tour");
  }
  auto& t = tour.nodes;
  const int n = static_cast<int>(t.size());
  if (n < 4) return tour;
  bool improved = true;
  while (improved) {
    improved = false;
    for (int i = 0; i < n - 1; ++i) {
      for (int j = i + 2; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;
        const int a = t[i], b = t[i + 1], c = t[j], d = t[(j + 1) % n];
        const double delta = inst.distance(a, c) + inst.distance(b, d) - inst.distance(a, b) - inst.distance(c, d);
        if (delta < -1e-12) {
          std::reverse(t.begin() + i + 1, t.begin() + j + 1);
          improved = true;
        }
      }
    }
  }
  return tour;
}

}  // namespace alignopt
