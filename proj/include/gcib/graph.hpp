#pragma once

#include <vector>

#include "gcib/dataset.hpp"

namespace gcib {

// User-item interaction graph with precomputed symmetric normalization.
// Node indexing convention everywhere: users occupy rows 0..M-1, items rows
// M..M+N-1.
struct BipartiteGraph {
  int num_users = 0;
  int num_items = 0;
  std::vector<Edge> edges;  // sorted by (user, item)
  std::vector<int> user_degree;
  std::vector<int> item_degree;
  std::vector<double> norm_coeff;  // per edge: 1/sqrt(deg_u * deg_i)

  int nodes() const { return num_users + num_items; }
  int edge_count() const { return static_cast<int>(edges.size()); }
};

// A graph view with a per-edge multiplier in [0, 1]. Normalization
// coefficients stay those of the ungated base graph so the relaxation is
// differentiable in the gates alone.
struct GatedGraph {
  const BipartiteGraph* base = nullptr;
  std::vector<double> gates;
};

BipartiteGraph build_behavior_graph(const Dataset& ds, int behavior);

// Set-union of all behaviors' training edges; an edge present in several
// behaviors appears once.
BipartiteGraph build_global_graph(const Dataset& ds);

GatedGraph gate_graph(const BipartiteGraph& g, std::vector<double> gates);

}  // namespace gcib
