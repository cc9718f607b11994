// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "alignopt/error.hpp"
#include "alignopt/random.hpp"

namespace alignopt {

enum class ProblemKind { TSP, CVRP, VRPB, KP, MVC, MIS, SMTWTP };

inline constexpr std::array<ProblemKind, 7> kAllKinds = {
    ProblemKind::TSP, ProblemKind::CVRP, ProblemKind::VRPB, ProblemKind::KP,
    ProblemKind::MVC, ProblemKind::MIS,  ProblemKind::SMTWTP};

inline std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::TSP: return "TSP";
    case ProblemKind::CVRP: return "CVRP";
    case ProblemKind::VRPB: return "VRPB";
    case ProblemKind::KP: return "KP";
    case ProblemKind::MVC: return "MVC";
    case ProblemKind::MIS: return "MIS";
    case ProblemKind::SMTWTP: return "SMTWTP";
  }
  return "?";
}

inline ProblemKind parse_kind(std::string_view text) {
  for (auto k : kAllKinds) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown problem kind '" + std::string(text) + "'");
}

inline bool is_routing(ProblemKind k) {
  return k == ProblemKind::TSP || k == ProblemKind::CVRP || k == ProblemKind::VRPB;
}
inline bool has_depot(ProblemKind k) { return k == ProblemKind::CVRP || k == ProblemKind::VRPB; }
inline bool is_graph_kind(ProblemKind k) { return k == ProblemKind::MVC || k == ProblemKind::MIS; }
inline bool is_permutation_kind(ProblemKind k) {
  return k == ProblemKind::TSP || k == ProblemKind::SMTWTP;
}
inline bool is_subset_kind(ProblemKind k) {
  return k == ProblemKind::KP || k == ProblemKind::MVC || k == ProblemKind::MIS;
}

enum class GapSense { Minimize, Maximize };

inline GapSense sense_of(ProblemKind k) {
  return (k == ProblemKind::KP || k == ProblemKind::MIS) ? GapSense::Maximize : GapSense::Minimize;
}

using Point = std::array<double, 2>;

/// One concrete problem instance. Only the fields relevant to `kind` are
/// populated; the rest stay empty.
struct CopInstance {
  ProblemKind kind = ProblemKind::TSP;
  int n = 0;
  std::vector<Point> coords;                       // TSP, CVRP, VRPB
  int depot_index = 0;                             // CVRP, VRPB
  std::vector<double> demands;                     // CVRP (>= 0), VRPB (signed); normalized by capacity
  double capacity = 0.0;                           // CVRP/VRPB: 1; KP: weight units
  std::vector<double> weights, values;             // KP
  std::vector<std::vector<std::uint8_t>> adjacency;  // MVC, MIS
  std::vector<double> job_weights, due_times, proc_times;  // SMTWTP
  std::uint64_t seed = 0;

  bool operator==(const CopInstance&) const = default;

  int edge_count() const {
    int m = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) m += adjacency[i][j] ? 1 : 0;
    return m;
  }

  double distance(int a, int b) const {
    return std::hypot(coords[a][0] - coords[b][0], coords[a][1] - coords[b][1]);
  }
};

/// Kind-matched solution encoding:
///   TSP, SMTWTP  -> permutation of node ids
///   CVRP, VRPB   -> flat route list delimited by the depot, e.g. 0 3 1 0 2 0
///   KP, MVC, MIS -> ascending list of selected ids
struct Solution {
  ProblemKind kind = ProblemKind::TSP;
  std::vector<int> nodes;

  bool operator==(const Solution&) const = default;
};

/// Splits a depot-delimited route list into customer sequences.
inline std::vector<std::vector<int>> split_routes(const std::vector<int>& nodes, int depot) {
  std::vector<std::vector<int>> routes;
  std::vector<int> current;
  for (int v : nodes) {
    if (v == depot) {
      if (!current.empty()) routes.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(v);
    }
  }
  if (!current.empty()) routes.push_back(std::move(current));
  return routes;
}

/// Joins customer sequences into the depot-delimited encoding.
inline std::vector<int> join_routes(const std::vector<std::vector<int>>& routes, int depot) {
  std::vector<int> out{depot};
  for (const auto& r : routes) {
    if (r.empty()) continue;
    out.insert(out.end(), r.begin(), r.end());
    out.push_back(depot);
  }
  return out;
}

inline double tour_length(const CopInstance& inst, const std::vector<int>& tour) {
  if (tour.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < tour.size(); ++i) total += inst.distance(tour[i], tour[i + 1]);
  return total + inst.distance(tour.back(), tour.front());
}

/// Capacity used for CVRP/VRPB demand normalization.
inline int vrp_capacity_units(int customers) {
  if (customers <= 20) return 30;
  if (customers <= 50) return 40;
  return 50;
}

// ---------------------------------------------------------------------------
// Generation

inline int minimum_size(ProblemKind kind) { return has_depot(kind) ? 2 : 1; }

/// Number of uniform endpoint draws used to build MVC/MIS graphs.
inline int graph_edge_draws(ProblemKind kind, int n) {
  return kind == ProblemKind::MVC ? 3 * n : 2 * n;
}

inline CopInstance generate_instance(ProblemKind kind, int n, std::uint64_t seed) {
  if (n < minimum_size(kind)) {
    throw Error(ErrorCode::SizeTooSmall, std::string(to_string(kind)) + " needs n >= " +
                                             std::to_string(minimum_size(kind)) + ", got " +
                                             std::to_string(n));
  }
  Rng rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(kind) + 1),
                   static_cast<std::uint64_t>(n)));
  CopInstance inst;
  inst.kind = kind;
  inst.n = n;
  inst.seed = seed;

  auto sample_coords = [&] {
    inst.coords.resize(n);
    for (auto& p : inst.coords) {
      p[0] = uniform01(rng);
      p[1] = uniform01(rng);
    }
  };

  switch (kind) {
    case ProblemKind::TSP:
      sample_coords();
      break;
    case ProblemKind::CVRP:
    case ProblemKind::VRPB: {
      sample_coords();
      inst.depot_index = 0;
      inst.capacity = 1.0;
      const double cap = vrp_capacity_units(n - 1);
      inst.demands.assign(n, 0.0);
      for (int i = 1; i < n; ++i) {
        const double units = 1.0 + static_cast<double>(uniform_below(rng, 9));
        double d = units / cap;
        if (kind == ProblemKind::VRPB && uniform01(rng) < 0.2) d = -d;
        inst.demands[i] = d;
      }
      break;
    }
    case ProblemKind::KP:
      inst.weights.resize(n);
      inst.values.resize(n);
      for (int i = 0; i < n; ++i) {
        inst.weights[i] = uniform01(rng);
        inst.values[i] = uniform01(rng);
      }
      inst.capacity = n / 4.0;
      break;
    case ProblemKind::MVC:
    case ProblemKind::MIS: {
      inst.adjacency.assign(n, std::vector<std::uint8_t>(n, 0));
      if (n >= 2) {
        const int draws = graph_edge_draws(kind, n);
        for (int e = 0; e < draws; ++e) {
          const int a = static_cast<int>(uniform_below(rng, n));
          int b = static_cast<int>(uniform_below(rng, n - 1));
          if (b >= a) ++b;
          inst.adjacency[a][b] = inst.adjacency[b][a] = 1;
        }
      }
      break;
    }
    case ProblemKind::SMTWTP:
      inst.job_weights.resize(n);
      inst.due_times.resize(n);
      inst.proc_times.resize(n);
      for (int i = 0; i < n; ++i) {
        inst.job_weights[i] = uniform01(rng);
        inst.due_times[i] = uniform01(rng);
        inst.proc_times[i] = uniform01(rng);
      }
      break;
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Objective

namespace detail {

inline void require_kind(const CopInstance& inst, const Solution& sol) {
  if (inst.kind != sol.kind) {
    throw Error(ErrorCode::KindMismatch, "solution kind " + std::string(to_string(sol.kind)) +
                                             " does not match instance kind " +
                                             std::string(to_string(inst.kind)));
  }
}

inline void require_indices(const CopInstance& inst, const Solution& sol) {
  for (int v : sol.nodes) {
    if (v < 0 || v >= inst.n) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "node " + std::to_string(v) + " outside [0, " + std::to_string(inst.n) + ")");
    }
  }
}

}  // namespace detail

inline double weighted_tardiness(const CopInstance& inst, const std::vector<int>& order) {
  double t = 0.0, total = 0.0;
  for (int j : order) {
    t += inst.proc_times[j];
    total += inst.job_weights[j] * std::max(0.0, t - inst.due_times[j]);
  }
  return total;
}

inline double evaluate_objective(const CopInstance& inst, const Solution& sol) {
  detail::require_kind(inst, sol);
  detail::require_indices(inst, sol);
  switch (inst.kind) {
    case ProblemKind::TSP:
      return tour_length(inst, sol.nodes);
    case ProblemKind::CVRP:
    case ProblemKind::VRPB: {
      double total = 0.0;
      for (std::size_t i = 0; i + 1 < sol.nodes.size(); ++i)
        total += inst.distance(sol.nodes[i], sol.nodes[i + 1]);
      return total;
    }
    case ProblemKind::KP: {
      double total = 0.0;
      for (int v : sol.nodes) total += inst.values[v];
      return total;
    }
    case ProblemKind::MVC:
    case ProblemKind::MIS:
      return static_cast<double>(sol.nodes.size());
    case ProblemKind::SMTWTP:
      return weighted_tardiness(inst, sol.nodes);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Feasibility

enum class ViolationKind {
  IndexOutOfRange,
  UnvisitedNode,
  DuplicateVisit,
  MalformedRoute,
  CapacityExceeded,
  WeightExceeded,
  UncoveredEdge,
  AdjacentPairSelected,
};

inline std::string_view to_string(ViolationKind v) {
  switch (v) {
    case ViolationKind::IndexOutOfRange: return "IndexOutOfRange";
    case ViolationKind::UnvisitedNode: return "UnvisitedNode";
    case ViolationKind::DuplicateVisit: return "DuplicateVisit";
    case ViolationKind::MalformedRoute: return "MalformedRoute";
    case ViolationKind::CapacityExceeded: return "CapacityExceeded";
    case ViolationKind::WeightExceeded: return "WeightExceeded";
    case ViolationKind::UncoveredEdge: return "UncoveredEdge";
    case ViolationKind::AdjacentPairSelected: return "AdjacentPairSelected";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  int node = -1;
  int other = -1;

  bool operator==(const Violation&) const = default;
};

inline constexpr double kCapacityTolerance = 1e-9;

/// Vehicle load along a VRPB route: the vehicle leaves the depot carrying all
/// deliveries (positive demands) of the route and each visit subtracts the
/// signed demand. Returns false if the load leaves [0, 1] at any prefix.
inline bool vrpb_route_feasible(const CopInstance& inst, const std::vector<int>& route) {
  double load = 0.0;
  for (int v : route) load += std::max(0.0, inst.demands[v]);
  if (load > inst.capacity + kCapacityTolerance) return false;
  for (int v : route) {
    load -= inst.demands[v];
    if (load > inst.capacity + kCapacityTolerance || load < -kCapacityTolerance) return false;
  }
  return true;
}

inline bool cvrp_route_feasible(const CopInstance& inst, const std::vector<int>& route) {
  double load = 0.0;
  for (int v : route) load += inst.demands[v];
  return load <= inst.capacity + kCapacityTolerance;
}

inline bool route_feasible(const CopInstance& inst, const std::vector<int>& route) {
  return inst.kind == ProblemKind::VRPB ? vrpb_route_feasible(inst, route)
                                        : cvrp_route_feasible(inst, route);
}

inline std::vector<Violation> check_feasibility(const CopInstance& inst, const Solution& sol) {
  detail::require_kind(inst, sol);
  std::vector<Violation> out;
  std::vector<int> seen(inst.n, 0);
  bool indices_ok = true;
  for (int v : sol.nodes) {
    if (v < 0 || v >= inst.n) {
      out.push_back({ViolationKind::IndexOutOfRange, v});
      indices_ok = false;
    }
  }
  if (!indices_ok) return out;

  auto count_visits = [&](bool skip_depot) {
    for (int v : sol.nodes) {
      if (skip_depot && v == inst.depot_index) continue;
      if (++seen[v] == 2) out.push_back({ViolationKind::DuplicateVisit, v});
    }
  };

  switch (inst.kind) {
    case ProblemKind::TSP:
    case ProblemKind::SMTWTP:
      count_visits(false);
      for (int v = 0; v < inst.n; ++v)
        if (seen[v] == 0) out.push_back({ViolationKind::UnvisitedNode, v});
      break;
    case ProblemKind::CVRP:
    case ProblemKind::VRPB: {
      if (sol.nodes.empty() || sol.nodes.front() != inst.depot_index ||
          sol.nodes.back() != inst.depot_index) {
        out.push_back({ViolationKind::MalformedRoute, inst.depot_index});
      }
      count_visits(true);
      for (int v = 0; v < inst.n; ++v)
        if (v != inst.depot_index && seen[v] == 0) out.push_back({ViolationKind::UnvisitedNode, v});
      for (const auto& r : split_routes(sol.nodes, inst.depot_index)) {
        if (!route_feasible(inst, r)) out.push_back({ViolationKind::CapacityExceeded, r.front()});
      }
      break;
    }
    case ProblemKind::KP: {
      count_visits(false);
      double w = 0.0;
      for (int v : sol.nodes) w += inst.weights[v];
      if (w > inst.capacity + kCapacityTolerance) out.push_back({ViolationKind::WeightExceeded});
      break;
    }
    case ProblemKind::MVC: {
      count_visits(false);
      for (int i = 0; i < inst.n; ++i)
        for (int j = i + 1; j < inst.n; ++j)
          if (inst.adjacency[i][j] && !seen[i] && !seen[j])
            out.push_back({ViolationKind::UncoveredEdge, i, j});
      break;
    }
    case ProblemKind::MIS: {
      count_visits(false);
      for (int i = 0; i < inst.n; ++i)
        for (int j = i + 1; j < inst.n; ++j)
          if (inst.adjacency[i][j] && seen[i] && seen[j])
            out.push_back({ViolationKind::AdjacentPairSelected, i, j});
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graph tensors

/// Dense encoder input. Row-major: node_features[i * d_in + f],
/// edge_features[(m * n + k) * d_e + f], mask[q * n + k] (0 allowed, -inf forbidden).
struct GraphTensors {
  ProblemKind kind = ProblemKind::TSP;
  int n = 0;
  int d_in = 0;
  int d_e = 0;
  std::vector<double> node_features;
  std::vector<double> edge_features;
  std::vector<double> mask;

  double node(int i, int f) const { return node_features[i * d_in + f]; }
  double edge(int m, int k, int f) const { return edge_features[(m * n + k) * d_e + f]; }
};

struct GraphOptions {
  bool restrict_attention_to_edges = false;  // MVC/MIS only
};

inline int node_feature_dim(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::TSP: return 2;
    case ProblemKind::CVRP:
    case ProblemKind::VRPB: return 4;
    case ProblemKind::KP: return 2;
    case ProblemKind::MVC:
    case ProblemKind::MIS: return 1;
    case ProblemKind::SMTWTP: return 3;
  }
  return 0;
}

inline int edge_feature_dim(ProblemKind kind) {
  return (kind == ProblemKind::KP || kind == ProblemKind::SMTWTP) ? 0 : 1;
}

inline GraphTensors to_graph(const CopInstance& inst, const GraphOptions& opts = {}) {
  GraphTensors g;
  g.kind = inst.kind;
  g.n = inst.n;
  g.d_in = node_feature_dim(inst.kind);
  g.d_e = edge_feature_dim(inst.kind);
  const int n = inst.n;
  g.node_features.assign(static_cast<std::size_t>(n) * g.d_in, 0.0);
  g.edge_features.assign(static_cast<std::size_t>(n) * n * g.d_e, 0.0);
  g.mask.assign(static_cast<std::size_t>(n) * n, 0.0);

  for (int i = 0; i < n; ++i) {
    double* row = g.node_features.data() + static_cast<std::size_t>(i) * g.d_in;
    switch (inst.kind) {
      case ProblemKind::TSP:
        row[0] = inst.coords[i][0];
        row[1] = inst.coords[i][1];
        break;
      case ProblemKind::CVRP:
      case ProblemKind::VRPB:
        row[0] = inst.coords[i][0];
        row[1] = inst.coords[i][1];
        row[2] = inst.demands[i];
        row[3] = i == inst.depot_index ? 1.0 : 0.0;
        break;
      case ProblemKind::KP:
        row[0] = inst.weights[i];
        row[1] = inst.values[i];
        break;
      case ProblemKind::MVC:
      case ProblemKind::MIS: {
        int deg = 0;
        for (int j = 0; j < n; ++j) deg += inst.adjacency[i][j];
        row[0] = static_cast<double>(deg) / n;
        break;
      }
      case ProblemKind::SMTWTP:
        row[0] = inst.job_weights[i];
        row[1] = inst.due_times[i];
        row[2] = inst.proc_times[i];
        break;
    }
  }

  if (g.d_e == 1) {
    for (int m = 0; m < n; ++m)
      for (int k = 0; k < n; ++k)
        g.edge_features[static_cast<std::size_t>(m) * n + k] =
            is_routing(inst.kind) ? inst.distance(m, k) : static_cast<double>(inst.adjacency[m][k]);
  }

  if (is_graph_kind(inst.kind) && opts.restrict_attention_to_edges) {
    const double ninf = -std::numeric_limits<double>::infinity();
    for (int q = 0; q < n; ++q)
      for (int k = 0; k < n; ++k)
        if (q != k && !inst.adjacency[q][k]) g.mask[static_cast<std::size_t>(q) * n + k] = ninf;
  }
  return g;
}

// ---------------------------------------------------------------------------
// TSPLIB

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

/// Reads a TSPLIB TSP document with EUC_2D weights. Coordinates are kept as
/// written; distances are later evaluated as exact Euclidean reals.
inline CopInstance parse_tsplib(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::optional<int> dimension;
  std::string type, weight_type;
  bool in_coords = false, saw_coords = false;
  CopInstance inst;
  inst.kind = ProblemKind::TSP;

  while (std::getline(in, line)) {
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (in_coords) {
      if (t == "EOF") break;
      std::istringstream row(t);
      long id;
      double x, y;
      if (!(row >> id >> x >> y)) {
        if (std::isalpha(static_cast<unsigned char>(t[0]))) {
          in_coords = false;  // next section
        } else {
          throw Error(ErrorCode::ParseError, "bad coordinate line '" + t + "'");
        }
      } else {
        inst.coords.push_back({x, y});
        continue;
      }
    }
    if (t == "EOF") break;
    if (t.rfind("NODE_COORD_SECTION", 0) == 0) {
      in_coords = saw_coords = true;
      continue;
    }
    const auto colon = t.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = detail::trim(std::string_view(t).substr(0, colon));
    const std::string value = detail::trim(std::string_view(t).substr(colon + 1));
    if (key == "TYPE") {
      type = value;
    } else if (key == "DIMENSION") {
      try {
        dimension = std::stoi(value);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "bad DIMENSION '" + value + "'");
      }
    } else if (key == "EDGE_WEIGHT_TYPE") {
      weight_type = value;
    }
  }

  if (!type.empty() && type != "TSP") {
    throw Error(ErrorCode::ParseError, "unsupported TYPE '" + type + "'");
  }
  if (weight_type != "EUC_2D") {
    throw Error(ErrorCode::UnsupportedWeightType,
                "EDGE_WEIGHT_TYPE '" + weight_type + "' (only EUC_2D is supported)");
  }
  if (!saw_coords) throw Error(ErrorCode::MissingCoordSection, "no NODE_COORD_SECTION");
  inst.n = static_cast<int>(inst.coords.size());
  if (dimension && *dimension != inst.n) {
    throw Error(ErrorCode::DimensionMismatch, "DIMENSION " + std::to_string(*dimension) +
                                                  " but " + std::to_string(inst.n) +
                                                  " coordinates");
  }
  return inst;
}

// ---------------------------------------------------------------------------
// JSON-lines

inline nlohmann::json to_json(const CopInstance& inst) {
  nlohmann::json j;
  j["kind"] = std::string(to_string(inst.kind));
  j["n"] = inst.n;
  if (is_routing(inst.kind)) {
    auto arr = nlohmann::json::array();
    for (const auto& p : inst.coords) arr.push_back({p[0], p[1]});
    j["coords"] = std::move(arr);
  }
  if (has_depot(inst.kind)) {
    j["depot_index"] = inst.depot_index;
    j["demands"] = inst.demands;
  }
  if (has_depot(inst.kind) || inst.kind == ProblemKind::KP) j["capacity"] = inst.capacity;
  if (inst.kind == ProblemKind::KP) {
    j["weights"] = inst.weights;
    j["values"] = inst.values;
  }
  if (is_graph_kind(inst.kind)) j["adjacency"] = inst.adjacency;
  if (inst.kind == ProblemKind::SMTWTP) {
    j["job_weights"] = inst.job_weights;
    j["due_times"] = inst.due_times;
    j["proc_times"] = inst.proc_times;
  }
  j["seed"] = inst.seed;
  return j;
}

inline CopInstance instance_from_json(const nlohmann::json& j) {
  try {
    CopInstance inst;
    inst.kind = parse_kind(j.at("kind").get<std::string>());
    inst.n = j.at("n").get<int>();
    inst.seed = j.value("seed", std::uint64_t{0});
    const auto n = static_cast<std::size_t>(inst.n);
    auto sized = [&](const char* key, std::vector<double>& out) {
      out = j.at(key).get<std::vector<double>>();
      if (out.size() != n) throw Error(ErrorCode::ShapeMismatch, std::string(key) + " length");
    };
    if (is_routing(inst.kind)) {
      for (const auto& p : j.at("coords")) inst.coords.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      if (inst.coords.size() != n) throw Error(ErrorCode::ShapeMismatch, "coords length");
    }
    if (has_depot(inst.kind)) {
      inst.depot_index = j.at("depot_index").get<int>();
      sized("demands", inst.demands);
    }
    if (has_depot(inst.kind) || inst.kind == ProblemKind::KP) inst.capacity = j.at("capacity").get<double>();
    if (inst.kind == ProblemKind::KP) {
      sized("weights", inst.weights);
      sized("values", inst.values);
    }
    if (is_graph_kind(inst.kind)) {
      inst.adjacency = j.at("adjacency").get<std::vector<std::vector<std::uint8_t>>>();
      if (inst.adjacency.size() != n) throw Error(ErrorCode::ShapeMismatch, "adjacency rows");
      for (std::size_t a = 0; a < n; ++a) {
        if (inst.adjacency[a].size() != n) throw Error(ErrorCode::ShapeMismatch, "adjacency cols");
        if (inst.adjacency[a][a]) throw Error(ErrorCode::InvalidArgument, "adjacency diagonal");
        for (std::size_t b = 0; b < a; ++b)
          if (inst.adjacency[a][b] != inst.adjacency[b][a])
            throw Error(ErrorCode::InvalidArgument, "adjacency not symmetric");
      }
    }
    if (inst.kind == ProblemKind::SMTWTP) {
      sized("job_weights", inst.job_weights);
      sized("due_times", inst.due_times);
      sized("proc_times", inst.proc_times);
    }
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

inline nlohmann::json to_json(const Solution& sol) {
  return {{"kind", std::string(to_string(sol.kind))}, {"nodes", sol.nodes}};
}

}  // namespace alignopt
