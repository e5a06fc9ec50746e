#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsheaf/tensor.hpp"

namespace fedsheaf {

/// Undirected edge stored with u < v.
struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  auto operator<=>(const Edge&) const = default;
};

/// Undirected node-classified graph with dense features.
///
/// Construction canonicalizes the edge list: (u, v) and (v, u) collapse to a
/// single edge, duplicates are removed and self-loops are dropped. Edge
/// endpoints and labels are range-checked.
class Graph {
 public:
  Graph() = default;
  Graph(std::size_t num_nodes, std::vector<Edge> edges, Tensor features, std::vector<int> labels,
        std::size_t num_classes);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t feature_dim() const { return features_.cols(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Tensor& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }

  /// Sorted neighbor lists.
  std::vector<std::vector<std::size_t>> adjacency() const;

  /// Subgraph on `nodes` (any order; result is indexed in ascending global
  /// order) with every edge whose endpoints are both kept.
  Graph induced_subgraph(std::span<const std::size_t> nodes) const;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  Tensor features_;
  std::vector<int> labels_;
  std::size_t num_classes_ = 0;
};

/// One client's portion of the global graph plus its node splits.
struct GraphShard {
  int client_id = 0;
  Graph graph;
  std::vector<std::size_t> global_ids;  // local index -> global node id, ascending
  std::vector<std::size_t> train;       // local node indices
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

enum class PartitionMode { non_overlapping, overlapping };

struct PartitionSpec {
  PartitionMode mode = PartitionMode::non_overlapping;
  std::size_t num_clients = 1;
  std::uint64_t seed = 0;
  std::size_t base_parts = 0;        // overlapping only; 0 -> num_clients / samples_per_part
  std::size_t samples_per_part = 5;  // overlapping only
};

PartitionMode parse_partition_mode(const std::string& name);

}  // namespace fedsheaf
