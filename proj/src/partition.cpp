#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "fedsheaf/data.hpp"
#include "fedsheaf/random.hpp"

namespace fedsheaf {

namespace {

constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();

std::vector<std::size_t> pick_seeds(const std::vector<std::vector<std::size_t>>& adj,
                                    std::size_t parts, Rng& rng) {
  const std::size_t n = adj.size();
  std::vector<std::size_t> seeds;
  seeds.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();
  while (seeds.size() < parts) {
    std::vector<std::size_t> dist(n, kInf);
    std::deque<std::size_t> queue;
    for (std::size_t s : seeds) {
      dist[s] = 0;
      queue.push_back(s);
    }
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      for (std::size_t w : adj[v]) {
        if (dist[w] == kInf) {
          dist[w] = dist[v] + 1;
          queue.push_back(w);
        }
      }
    }
    std::size_t best = kUnassigned;
    for (std::size_t v = 0; v < n; ++v) {
      if (dist[v] == 0) continue;
      if (best == kUnassigned || dist[v] > dist[best]) best = v;
    }
    seeds.push_back(best);
  }
  return seeds;
}

std::size_t smallest_region(const std::vector<std::size_t>& sizes,
                            const std::vector<std::size_t>& candidates) {
  std::size_t best = kUnassigned;
  for (std::size_t r : candidates) {
    if (best == kUnassigned || sizes[r] < sizes[best] || (sizes[r] == sizes[best] && r < best)) best = r;
  }
  return best;
}

}  // namespace

std::vector<std::size_t> greedy_partition(const Graph& g, std::size_t parts, std::uint64_t seed) {
  const std::size_t n = g.num_nodes();
  if (parts == 0) throw std::invalid_argument("partition: need at least one part");
  if (parts > n) throw std::invalid_argument("partition: more parts than nodes");
  const auto adj = g.adjacency();
  Rng rng = make_rng(seed, {tag(Stream::partition)});

  std::vector<std::size_t> region(n, kUnassigned);
  std::vector<std::size_t> sizes(parts, 0);
  const std::size_t cap = (n + parts - 1) / parts;

  // Grow regions round-robin, one node per region per sweep.
  std::vector<std::deque<std::size_t>> frontier(parts);
  const auto seeds = pick_seeds(adj, parts, rng);
  for (std::size_t r = 0; r < parts; ++r) frontier[r].push_back(seeds[r]);
  std::size_t next_free = 0;  // scan position for reseeding
  bool grew = true;
  while (grew) {
    grew = false;
    for (std::size_t r = 0; r < parts; ++r) {
      if (sizes[r] >= cap) continue;
      // a region stuck in a small component jumps to the next free node
      bool stuck = true;
      for (std::size_t v : frontier[r]) stuck = stuck && region[v] != kUnassigned;
      if (stuck) {
        frontier[r].clear();
        while (next_free < n && region[next_free] != kUnassigned) ++next_free;
        if (next_free < n) frontier[r].push_back(next_free);
      }
      while (!frontier[r].empty()) {
        const std::size_t v = frontier[r].front();
        frontier[r].pop_front();
        if (region[v] != kUnassigned) continue;
        region[v] = r;
        ++sizes[r];
        for (std::size_t w : adj[v])
          if (region[w] == kUnassigned) frontier[r].push_back(w);
        grew = true;
        break;
      }
    }
  }

  // Leftovers: smallest adjacent region, or the smallest region overall when
  // the node has no assigned neighbor at all.
  std::vector<std::size_t> all_regions(parts);
  std::iota(all_regions.begin(), all_regions.end(), 0);
  for (;;) {
    bool changed = false;
    bool pending = false;
    for (std::size_t v = 0; v < n; ++v) {
      if (region[v] != kUnassigned) continue;
      std::vector<std::size_t> adjacent;
      for (std::size_t w : adj[v])
        if (region[w] != kUnassigned) adjacent.push_back(region[w]);
      if (adjacent.empty()) {
        pending = true;
        continue;
      }
      const std::size_t r = smallest_region(sizes, adjacent);
      region[v] = r;
      ++sizes[r];
      changed = true;
    }
    if (!pending) break;
    if (!changed) {
      const auto first = static_cast<std::size_t>(
          std::find(region.begin(), region.end(), kUnassigned) - region.begin());
      const std::size_t r = smallest_region(sizes, all_regions);
      region[first] = r;
      ++sizes[r];
    }
  }

  // One refinement pass over boundary nodes.
  const double balanced = static_cast<double>(n) / static_cast<double>(parts);
  const std::size_t lo = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(0.9 * balanced)));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(1.1 * balanced));
  std::vector<std::size_t> count(parts);
  for (std::size_t v = 0; v < n; ++v) {
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t w : adj[v]) ++count[region[w]];
    const std::size_t a = region[v];
    std::size_t best = a;
    for (std::size_t r = 0; r < parts; ++r) {
      if (r != a && (best == a || count[r] > count[best])) best = r;
    }
    if (best == a || count[best] <= count[a]) continue;
    if (sizes[a] - 1 < lo || sizes[best] + 1 > hi) continue;
    region[v] = best;
    --sizes[a];
    ++sizes[best];
  }
  return region;
}

std::size_t edge_cut(const Graph& g, const std::vector<std::size_t>& assignment) {
  std::size_t cut = 0;
  for (const Edge& e : g.edges()) cut += assignment.at(e.u) != assignment.at(e.v);
  return cut;
}

namespace {

GraphShard make_shard(const Graph& g, std::vector<std::size_t> nodes, int client_id) {
  std::sort(nodes.begin(), nodes.end());
  GraphShard shard;
  shard.client_id = client_id;
  shard.graph = g.induced_subgraph(nodes);
  shard.global_ids = std::move(nodes);
  return shard;
}

}  // namespace

std::vector<GraphShard> partition(const Graph& g, const PartitionSpec& spec) {
  if (spec.num_clients == 0) throw std::invalid_argument("partition: num_clients must be >= 1");
  if (spec.num_clients > g.num_nodes()) {
    throw std::invalid_argument("partition: num_clients (" + std::to_string(spec.num_clients) +
                                ") exceeds num_nodes (" + std::to_string(g.num_nodes()) + ")");
  }
  std::vector<GraphShard> shards;
  if (spec.mode == PartitionMode::non_overlapping) {
    const auto region = greedy_partition(g, spec.num_clients, spec.seed);
    std::vector<std::vector<std::size_t>> members(spec.num_clients);
    for (std::size_t v = 0; v < region.size(); ++v) members[region[v]].push_back(v);
    for (std::size_t r = 0; r < spec.num_clients; ++r)
      shards.push_back(make_shard(g, std::move(members[r]), static_cast<int>(r)));
    return shards;
  }

  if (spec.samples_per_part == 0) throw std::invalid_argument("partition: samples_per_part must be >= 1");
  const std::size_t base = spec.base_parts != 0 ? spec.base_parts : spec.num_clients / spec.samples_per_part;
  if (base == 0 || base * spec.samples_per_part != spec.num_clients) {
    throw std::invalid_argument("partition: overlapping mode needs num_clients = base_parts * samples_per_part");
  }
  const auto region = greedy_partition(g, base, spec.seed);
  std::vector<std::vector<std::size_t>> members(base);
  for (std::size_t v = 0; v < region.size(); ++v) members[region[v]].push_back(v);
  for (std::size_t p = 0; p < base; ++p) {
    const std::size_t half = (members[p].size() + 1) / 2;
    for (std::size_t s = 0; s < spec.samples_per_part; ++s) {
      Rng rng = make_rng(spec.seed, {tag(Stream::partition), p + 1, s});
      std::vector<std::size_t> pool = members[p];
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(half);
      shards.push_back(make_shard(g, std::move(pool), static_cast<int>(p * spec.samples_per_part + s)));
    }
  }
  return shards;
}

GraphShard split_masks(GraphShard shard, std::uint64_t seed) {
  const std::size_t n = shard.graph.num_nodes();
  if (n < 3) throw std::invalid_argument("split_masks: shard needs at least 3 nodes, has " + std::to_string(n));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed, {tag(Stream::split)});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.4 * static_cast<double>(n))));
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.3 * static_cast<double>(n))));
  shard.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  shard.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                   perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  shard.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  std::sort(shard.train.begin(), shard.train.end());
  std::sort(shard.val.begin(), shard.val.end());
  std::sort(shard.test.begin(), shard.test.end());
  return shard;
}

}  // namespace fedsheaf
