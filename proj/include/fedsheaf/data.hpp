#pragma once

// Dataset ingestion, synthetic generation, partitioning and node splits.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsheaf/graph.hpp"

namespace fedsheaf {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Planetoid-style text dataset.
///
///   nodes.txt    <id> <features...> <label>   one node per line
///   edges.txt    <id> <id>                    one undirected edge per line
///   classes.txt  <label>                      optional; fixes class order and
///                                             rejects labels not listed
///
/// Without classes.txt, classes are numbered in sorted label order.
struct PlanetoidDataset {
  Graph graph;
  std::vector<std::string> node_ids;
  std::vector<std::string> class_names;
  std::size_t edge_lines = 0;  // edge records read, before deduplication
};

PlanetoidDataset read_planetoid(const std::filesystem::path& dir);
Graph load_planetoid(const std::filesystem::path& dir);

struct SbmParams {
  std::vector<std::size_t> blocks;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t features = 16;
  double feature_signal = 1.0;  // magnitude of the class-mean one-hot
  double feature_noise = 1.0;   // stddev of the additive Gaussian noise
  std::uint64_t seed = 0;
};

/// Stochastic block model. Node label = block id; features are the block's
/// one-hot mean (feature index block mod features) plus Gaussian noise.
Graph sbm_generate(const SbmParams& params);

/// Greedy edge-cut partition into `parts` regions: BFS growth from spread-out
/// seeds, leftovers to the smallest adjacent region, then one boundary
/// refinement pass keeping sizes within +-10% of balanced. Returns the region
/// of each node.
std::vector<std::size_t> greedy_partition(const Graph& g, std::size_t parts, std::uint64_t seed);

std::size_t edge_cut(const Graph& g, const std::vector<std::size_t>& assignment);

/// Client shards without masks (see split_masks).
std::vector<GraphShard> partition(const Graph& g, const PartitionSpec& spec);

/// Seeded 40/30/30 train/val/test split of the shard's nodes.
GraphShard split_masks(GraphShard shard, std::uint64_t seed);

}  // namespace fedsheaf
