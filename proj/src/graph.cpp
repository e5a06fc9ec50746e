#include "fedsheaf/graph.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedsheaf {

Graph::Graph(std::size_t num_nodes, std::vector<Edge> edges, Tensor features,
             std::vector<int> labels, std::size_t num_classes)
    : num_nodes_(num_nodes),
      features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes) {
  if (features_.rank() != 2 || features_.rows() != num_nodes_) {
    throw ShapeError("graph: feature matrix must have one row per node");
  }
  if (labels_.size() != num_nodes_) throw ShapeError("graph: one label per node required");
  for (int label : labels_) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes_) {
      throw std::invalid_argument("graph: label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(num_classes_) + ")");
    }
  }
  edges_.reserve(edges.size());
  for (Edge e : edges) {
    if (e.u >= num_nodes_ || e.v >= num_nodes_) {
      throw std::invalid_argument("graph: edge endpoint out of range");
    }
    if (e.u == e.v) continue;
    if (e.u > e.v) std::swap(e.u, e.v);
    edges_.push_back(e);
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

std::vector<std::vector<std::size_t>> Graph::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(num_nodes_);
  for (const Edge& e : edges_) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  for (auto& nb : adj) std::sort(nb.begin(), nb.end());
  return adj;
}

Graph Graph::induced_subgraph(std::span<const std::size_t> nodes) const {
  std::vector<std::size_t> kept(nodes.begin(), nodes.end());
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
  std::vector<std::size_t> local(num_nodes_, kAbsent);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (kept[i] >= num_nodes_) throw std::invalid_argument("induced_subgraph: node out of range");
    local[kept[i]] = i;
  }
  std::vector<Edge> sub_edges;
  for (const Edge& e : edges_) {
    if (local[e.u] != kAbsent && local[e.v] != kAbsent) sub_edges.push_back({local[e.u], local[e.v]});
  }
  const std::size_t f = feature_dim();
  Tensor feats = Tensor::matrix(kept.size(), f);
  std::vector<int> sub_labels(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (std::size_t j = 0; j < f; ++j) feats(i, j) = features_(kept[i], j);
    sub_labels[i] = labels_[kept[i]];
  }
  return Graph(kept.size(), std::move(sub_edges), std::move(feats), std::move(sub_labels),
               num_classes_);
}

PartitionMode parse_partition_mode(const std::string& name) {
  if (name == "non_overlapping") return PartitionMode::non_overlapping;
  if (name == "overlapping") return PartitionMode::overlapping;
  throw std::invalid_argument("unknown partition mode '" + name + "'");
}

}  // namespace fedsheaf
