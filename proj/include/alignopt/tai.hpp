// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "alignopt/instances.hpp"

namespace alignopt {

struct TaiDocument {
  ProblemKind kind = ProblemKind::TSP;
  std::string task_text;
  std::vector<std::string> node_texts;
  int k_neighbors = 3;
};

struct TaskParams {
  double capacity = 1.0;
  int edges = 0;
};

/// Fixed-point with four decimals, independent of the C locale.
inline std::string fixed4(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 4);
  std::string out(buf, res.ptr);
  if (out == "-0.0000") out = "0.0000";
  return out;
}

/// Shortest round-trip rendering, used for capacities such as 12.5 or 25.
inline std::string compact_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string number_word(int k) {
  static const char* words[] = {"zero", "one", "two",   "three", "four", "five",
                                "six",  "seven", "eight", "nine",  "ten"};
  if (k >= 0 && k <= 10) return words[k];
  return std::to_string(k);
}

inline std::string render_task_description(ProblemKind kind, int n, const TaskParams& params = {}) {
  const std::string ns = std::to_string(n);
  const std::string cap = compact_number(params.capacity);
  const std::string es = std::to_string(params.edges);
  switch (kind) {
    case ProblemKind::TSP:
      return "For a traveling salesman problem (TSP), there will be a list of nodes distributed in a unit square, "
             "representing a series of cities.\n"
             "The attribution in the form of (x, y) of each node denotes the x-location and y-location of the city.\n"
             "The goal is to find the shortest route that visits each city exactly once and returns to the origin "
             "city.\n"
             "The following are the descriptions of " + ns + " nodes of a TSP:";
    case ProblemKind::CVRP:
      return "For a capacitated vehicle routing problem (CVRP), there will be a depot node and a list of customer "
             "nodes distributed in an unit square. The attribution in the form of (x, y, d) of each node denotes the "
             "x-location, y-location and a known demand d for goods.\n"
             "Multiple routes should be created, each starting and ending at the depot.\n"
             "The vehicle have a limited capacity D=" + cap + ", and the goal is to minimize total distance traveled "
             "while ensuring that each customer's demand is satisfied and the capacity constraints is not exceeded.\n"
             "The following are the descriptions of a depot node and " + std::to_string(n - 1) +
             " nodes of a CVRP:";
    case ProblemKind::VRPB:
      return "For a vehicle routing problem with backhauls (VRPB), there will be a depot node and a list of customer "
             "nodes distributed in an unit square.\n"
             "The attribution in the form of (x, y, d) of each node denotes the x-location, y-location and a known "
             "demand d for goods.\n"
             "The demand for each node can be positive or negative, indicating the vehicle should unload or load "
             "good.\n"
             "Multiple routes should be created, each starting and ending at the depot.\n"
             "The vehicle have a limited capacity D=" + cap + ", and the goal is to minimize total distance traveled "
             "while ensuring that each customer's demand is satisfied and the capacity constraints is not exceeded.\n"
             "The following are the descriptions of a depot node and " + std::to_string(n - 1) +
             " nodes of a VRPB:";
    case ProblemKind::KP:
      return "For a knapsack problem (KP), there will be a list of nodes distributed in an unit square, representing "
             "a series of items.\n"
             "The attribution in the form of (x, y) of each node denotes the weight x and profit y of the item.\n"
             "Given a bag with capacity " + cap + ", the goal is to put the items into the bag such that the sum of "
             "profits is the maximum possible.\n"
             "The following are the descriptions of " + ns + " nodes of a KP:";
    case ProblemKind::MVC:
      return "For a minimum vertex cover (MVC) problem, there will be a graph with " + ns + " nodes and " + es +
             " edges.\n"
             "A minimum vertex cover is a node cover having the smallest possible number of nodes for a given "
             "graph.\n"
             "The attribution in the form of (x1,x2,...,x_" + ns + ") of a node denotes the adjacency relationship "
             "of itself and other nodes.\n"
             "If there is an edge between a node and node x_n, the corresponding value is set to 1, otherwise 0.\n"
             "The following are the descriptions of " + ns + " nodes of an MVC problem:";
    case ProblemKind::MIS:
      return "The maximum independent set (MIS) problem is defined on a graph with " + ns + " nodes and " + es +
             " edges.\n"
             "A maximum independent set is a set of nodes having the largest possible number of nodes such that no "
             "two nodes in the set are adjacent for the given graph.\n"
             "The attribution of a node in MIS is as (x1,x2,...,x_" + ns + "), which denotes if it is adjacent to "
             "other nodes.\n"
             "If there is an edge between a node and other node, the corresponding value is set to 1, otherwise 0.\n"
             "The following are the descriptions of " + ns + " nodes of a MIS problem:";
    case ProblemKind::SMTWTP:
      return "For a single machine total weighted tardiness problem (SMTWTP), there will be a list of nodes, "
             "representing a set of jobs must be processed by a single machine.\n"
             "The attribution in the form of (w, d, p) of each node denotes the weight, the due time, and the "
             "processing time.\n"
             "The goal is to find the optimal sequence in which to process the jobs in order to minimize the total "
             "weighted tardiness, where tardiness refers to the amount of time a job completes after its due date.\n"
             "The following are the description of " + ns + " nodes of a SMTWTP:";
  }
  throw Error(ErrorCode::InvalidArgument, "unknown kind");
}

/// 1-based ordinal ranks by descending key; equal keys rank the lower index first.
inline std::vector<int> descending_ranks(const std::vector<double>& key) {
  std::vector<int> order(key.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key[a] > key[b]; });
  std::vector<int> rank(key.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r) + 1;
  return rank;
}

/// The k nearest other nodes of i, ties broken by index.
inline std::vector<int> nearest_nodes(const CopInstance& inst, int i, int k) {
  std::vector<int> others;
  for (int j = 0; j < inst.n; ++j)
    if (j != i) others.push_back(j);
  std::stable_sort(others.begin(), others.end(),
                   [&](int a, int b) { return inst.distance(i, a) < inst.distance(i, b); });
  others.resize(std::min<std::size_t>(others.size(), static_cast<std::size_t>(k)));
  return others;
}

inline TaskParams task_params_of(const CopInstance& inst) {
  TaskParams p;
  p.capacity = inst.capacity;
  if (is_graph_kind(inst.kind)) p.edges = inst.edge_count();
  return p;
}

inline TaiDocument render_instance_document(const CopInstance& inst, int k = 3) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be positive");
  if (is_routing(inst.kind) && k >= inst.n)
    throw Error(ErrorCode::NeighborCountTooLarge,
                "k=" + std::to_string(k) + " needs more than " + std::to_string(inst.n) + " nodes");
  TaiDocument doc;
  doc.kind = inst.kind;
  doc.k_neighbors = k;
  doc.task_text = render_task_description(inst.kind, inst.n, task_params_of(inst));
  doc.node_texts.resize(inst.n);

  std::vector<int> rank;
  if (inst.kind == ProblemKind::KP) {
    std::vector<double> ratio(inst.n);
    for (int i = 0; i < inst.n; ++i) ratio[i] = inst.values[i] / inst.weights[i];
    rank = descending_ranks(ratio);
  } else if (is_graph_kind(inst.kind)) {
    std::vector<double> deg(inst.n, 0.0);
    for (int i = 0; i < inst.n; ++i)
      for (int j = 0; j < inst.n; ++j) deg[i] += inst.adjacency[i][j];
    rank = descending_ranks(deg);
  } else if (inst.kind == ProblemKind::SMTWTP) {
    std::vector<double> ratio(inst.n);
    for (int i = 0; i < inst.n; ++i) ratio[i] = inst.job_weights[i] / inst.proc_times[i];
    rank = descending_ranks(ratio);
  }

  const std::string k_word = number_word(k);
  for (int i = 0; i < inst.n; ++i) {
    std::string line = "Node(" + std::to_string(i) + ").";
    switch (inst.kind) {
      case ProblemKind::TSP:
      case ProblemKind::CVRP:
      case ProblemKind::VRPB: {
        const bool depot = has_depot(inst.kind) && i == inst.depot_index;
        if (has_depot(inst.kind)) line += depot ? " Depot node." : " Customer node.";
        line += " Attribution:[" + fixed4(inst.coords[i][0]) + ", " + fixed4(inst.coords[i][1]);
        if (has_depot(inst.kind) && !depot) line += ", " + fixed4(inst.demands[i]);
        line += "].";
        if (!depot) {
          line += " The " + k_word + " nearest nodes and distances:[";
          const auto near = nearest_nodes(inst, i, k);
          for (std::size_t t = 0; t < near.size(); ++t) {
            if (t) line += ", ";
            line += "(" + std::to_string(near[t]) + "):" + fixed4(inst.distance(i, near[t]));
          }
          line += "];";
        }
        break;
      }
      case ProblemKind::KP:
        line += " Attribution:[" + fixed4(inst.weights[i]) + ", " + fixed4(inst.values[i]) + "].";
        line += " Value-to-weight ratio and importance rank:[" + fixed4(inst.values[i] / inst.weights[i]) + ", " +
                std::to_string(rank[i]) + "];";
        break;
      case ProblemKind::MVC:
      case ProblemKind::MIS: {
        line += " Attribution:[";
        int deg = 0;
        for (int j = 0; j < inst.n; ++j) {
          if (j) line += ", ";
          line += inst.adjacency[i][j] ? "1" : "0";
          deg += inst.adjacency[i][j];
        }
        line += "].";
        line += inst.kind == ProblemKind::MVC ? " Node degree and importance rank: [" : " Degree of the node and its rank: [";
        line += std::to_string(deg) + ", " + std::to_string(rank[i]) + "];";
        break;
      }
      case ProblemKind::SMTWTP:
        line += " Attribution:[" + fixed4(inst.job_weights[i]) + ", " + fixed4(inst.due_times[i]) + ", " +
                fixed4(inst.proc_times[i]) + "].";
        line += " Node importance rank: [" + std::to_string(rank[i]) + "].";
        break;
    }
    doc.node_texts[i] = std::move(line);
  }
  return doc;
}

inline nlohmann::json to_json(const TaiDocument& doc) {
  return {{"kind", std::string(to_string(doc.kind))},
          {"task_text", doc.task_text},
          {"node_texts", doc.node_texts},
          {"k", doc.k_neighbors}};
}

inline TaiDocument tai_from_json(const nlohmann::json& j) {
  TaiDocument doc;
  try {
    doc.kind = parse_kind(j.at("kind").get<std::string>());
    doc.task_text = j.at("task_text").get<std::string>();
    doc.node_texts = j.at("node_texts").get<std::vector<std::string>>();
    doc.k_neighbors = j.value("k", 3);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (doc.task_text.empty()) throw Error(ErrorCode::ParseError, "empty task_text");
  return doc;
}

}  // namespace alignopt
