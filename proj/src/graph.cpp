#include "gcib/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace gcib {

namespace {

void finalize(BipartiteGraph& g) {
  g.user_degree.assign(g.num_users, 0);
  g.item_degree.assign(g.num_items, 0);
  for (const auto& [u, i] : g.edges) {
    ++g.user_degree[u];
    ++g.item_degree[i];
  }
  g.norm_coeff.resize(g.edges.size());
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const auto& [u, i] = g.edges[e];
    g.norm_coeff[e] = 1.0 / std::sqrt(static_cast<double>(g.user_degree[u]) *
                                      static_cast<double>(g.item_degree[i]));
  }
}

}  // namespace

BipartiteGraph build_behavior_graph(const Dataset& ds, int behavior) {
  if (behavior < 0 || behavior >= ds.behaviors())
    throw std::runtime_error("build_behavior_graph: bad behavior index");
  if (ds.edges[behavior].empty())
    throw std::runtime_error("behavior has zero training edges: " + ds.behavior_names[behavior]);
  BipartiteGraph g;
  g.num_users = ds.num_users;
  g.num_items = ds.num_items;
  g.edges = ds.edges[behavior];  // already sorted and unique
  finalize(g);
  return g;
}

BipartiteGraph build_global_graph(const Dataset& ds) {
  if (ds.behaviors() == 0) throw std::runtime_error("build_global_graph: no behaviors");
  std::set<Edge> merged;
  for (const auto& behavior : ds.edges) merged.insert(behavior.begin(), behavior.end());
  BipartiteGraph g;
  g.num_users = ds.num_users;
  g.num_items = ds.num_items;
  g.edges.assign(merged.begin(), merged.end());
  finalize(g);
  return g;
}

GatedGraph gate_graph(const BipartiteGraph& g, std::vector<double> gates) {
  if (gates.size() != g.edges.size())
    throw std::runtime_error("gate_graph: gate count does not match edge count");
  for (double v : gates)
    if (!(v >= 0.0 && v <= 1.0)) throw std::runtime_error("gate_graph: gate outside [0,1]");
  return GatedGraph{&g, std::move(gates)};
}

}  // namespace gcib
