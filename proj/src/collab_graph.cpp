#include "fedsheaf/collab_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fedsheaf {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

std::span<const double> row_span(const Tensor& x, std::size_t r) {
  return x.data().subspan(r * x.cols(), x.cols());
}

// The k most similar candidates to `query`, similarity descending, index ascending.
std::vector<std::size_t> nearest(const Tensor& x, std::span<const double> query,
                                 std::vector<std::size_t> candidates, std::size_t k) {
  std::vector<double> sim(x.rows(), 0.0);
  for (std::size_t c : candidates) sim[c] = cosine_similarity(query, row_span(x, c));
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    if (sim[a] != sim[b]) return sim[a] > sim[b];
    return a < b;
  });
  candidates.resize(std::min(k, candidates.size()));
  return candidates;
}

}  // namespace

CollaborationGraph knn_graph(const Tensor& x0, std::size_t k) {
  if (x0.rank() != 2) throw ShapeError("knn_graph: embeddings must be N x h");
  const std::size_t n = x0.rows();
  if (n < 2) throw std::invalid_argument("knn_graph: need at least 2 clients");
  if (k < 1 || k >= n) {
    throw std::invalid_argument("knn_graph: K must satisfy 1 <= K < N (K=" + std::to_string(k) +
                                ", N=" + std::to_string(n) + ")");
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    for (std::size_t j : nearest(x0, row_span(x0, i), std::move(others), k))
      edges.push_back({std::min(i, j), std::max(i, j)});
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return {n, std::move(edges), x0};
}

CollaborationGraph attach_node(const CollaborationGraph& g, const Tensor& x_new, std::size_t k) {
  const std::size_t n = g.num_nodes;
  const std::size_t h = g.x0.cols();
  if (x_new.size() != h) throw ShapeError("attach_node: embedding width mismatch");
  if (k < 1 || k > n) throw std::invalid_argument("attach_node: K must satisfy 1 <= K <= N");
  std::vector<std::size_t> others(n);
  std::iota(others.begin(), others.end(), 0);
  CollaborationGraph out = g;
  for (std::size_t j : nearest(g.x0, x_new.data(), std::move(others), k)) out.edges.push_back({j, n});
  std::sort(out.edges.begin(), out.edges.end());
  std::vector<double> data(g.x0.values());
  data.insert(data.end(), x_new.values().begin(), x_new.values().end());
  out.x0 = Tensor({n + 1, h}, std::move(data));
  out.num_nodes = n + 1;
  return out;
}

std::size_t default_knn_k(std::size_t num_clients) {
  if (num_clients < 2) return 1;
  const auto k = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(num_clients))));
  return std::clamp<std::size_t>(k, 1, num_clients - 1);
}

}  // namespace fedsheaf
