#pragma once

#include <cstddef>
#include <vector>

#include "fedsheaf/graph.hpp"
#include "fedsheaf/tensor.hpp"

namespace fedsheaf {

/// Server-side graph over clients. Node i carries client i's graph-level
/// embedding in row i of x0.
struct CollaborationGraph {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;  // undirected, u < v, sorted, no self-loops
  Tensor x0;                // N x h
};

/// Cosine similarity; zero-norm vectors are similarity 0 to everything.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Connects every client to its K most cosine-similar clients (ties to the
/// lower index) and symmetrizes by union.
CollaborationGraph knn_graph(const Tensor& x0, std::size_t k);

/// Appends a node for `x_new` linked to its K nearest existing nodes. Existing
/// edges are left untouched.
CollaborationGraph attach_node(const CollaborationGraph& g, const Tensor& x_new, std::size_t k);

/// Default K = ceil(log2 N), clamped to [1, N-1].
std::size_t default_knn_k(std::size_t num_clients);

}  // namespace fedsheaf
