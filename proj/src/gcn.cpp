#include <cmath>

#include "fedsheaf/client.hpp"

namespace fedsheaf {

std::size_t backbone_size(std::size_t feature_dim, std::size_t hidden_dim) {
  return feature_dim * hidden_dim + hidden_dim;
}

std::size_t head_size(std::size_t hidden_dim, std::size_t num_classes) {
  return hidden_dim * num_classes + num_classes;
}

namespace {

Tensor pack_layer(const Tensor& w, const Tensor& b) {
  std::vector<double> flat(w.values());
  flat.insert(flat.end(), b.values().begin(), b.values().end());
  const std::size_t n = flat.size();
  return Tensor({n}, std::move(flat));
}

void unpack_layer(const Tensor& flat, Tensor& w, Tensor& b) {
  if (flat.size() != w.size() + b.size()) {
    throw ShapeError("unpack: expected " + std::to_string(w.size() + b.size()) + " values, got " +
                     std::to_string(flat.size()));
  }
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = flat[i];
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = flat[w.size() + i];
}

}  // namespace

Tensor ClientParams::pack_backbone() const { return pack_layer(w1, b1); }
Tensor ClientParams::pack_head() const { return pack_layer(w2, b2); }
void ClientParams::unpack_backbone(const Tensor& flat) { unpack_layer(flat, w1, b1); }
void ClientParams::unpack_head(const Tensor& flat) { unpack_layer(flat, w2, b2); }

void ClientParams::assign(const std::vector<Tensor>& ts) {
  if (ts.size() != 4) throw ShapeError("ClientParams::assign expects 4 tensors");
  for (int i = 0; i < 4; ++i) {
    Tensor& dst = i == 0 ? w1 : i == 1 ? b1 : i == 2 ? w2 : b2;
    if (!dst.same_shape(ts[static_cast<std::size_t>(i)])) throw ShapeError("ClientParams::assign shape mismatch");
    dst = ts[static_cast<std::size_t>(i)];
  }
}

ClientParams init_client_params(std::size_t feature_dim, std::size_t hidden_dim,
                                std::size_t num_classes, Rng& rng) {
  ClientParams p;
  const double b1 = std::sqrt(6.0 / static_cast<double>(feature_dim + hidden_dim));
  const double b2 = std::sqrt(6.0 / static_cast<double>(hidden_dim + num_classes));
  p.w1 = uniform_tensor({feature_dim, hidden_dim}, b1, rng);
  p.b1 = Tensor({hidden_dim}, 0.0);
  p.w2 = uniform_tensor({hidden_dim, num_classes}, b2, rng);
  p.b2 = Tensor({num_classes}, 0.0);
  return p;
}

std::shared_ptr<const kernels::CsrMatrix> normalized_adjacency(const Graph& g) {
  const std::size_t n = g.num_nodes();
  const auto adj = g.adjacency();
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(adj[i].size() + 1));
  auto csr = std::make_shared<kernels::CsrMatrix>();
  csr->rows = csr->cols = n;
  csr->row_ptr.reserve(n + 1);
  csr->row_ptr.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    // neighbors are sorted; splice the self-loop in column order
    bool self_done = false;
    for (std::size_t j : adj[i]) {
      if (!self_done && i < j) {
        csr->col_idx.push_back(i);
        csr->values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
        self_done = true;
      }
      csr->col_idx.push_back(j);
      csr->values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    if (!self_done) {
      csr->col_idx.push_back(i);
      csr->values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
    }
    csr->row_ptr.push_back(csr->col_idx.size());
  }
  return csr;
}

GcnVars gcn_forward(ad::Tape& tape, const std::shared_ptr<const kernels::CsrMatrix>& adjacency,
                    const Tensor& features, const ClientParams& params, const Tensor& feature_mask) {
  if (features.cols() != params.feature_dim()) {
    throw ShapeError("gcn: shard has " + std::to_string(features.cols()) +
                     " features, model expects " + std::to_string(params.feature_dim()));
  }
  GcnVars v;
  v.w1 = tape.leaf(params.w1);
  v.b1 = tape.leaf(params.b1);
  v.w2 = tape.leaf(params.w2);
  v.b2 = tape.leaf(params.b2);
  ad::Var x = tape.constant(features);
  if (feature_mask.size() != 0) x = ad::hadamard(x, tape.constant(feature_mask));
  v.hidden = ad::relu(ad::add_row_bias(ad::spmm(adjacency, ad::matmul(x, v.w1)), v.b1));
  v.logits = ad::add_row_bias(ad::spmm(adjacency, ad::matmul(v.hidden, v.w2)), v.b2);
  return v;
}

GcnOutput gcn_forward(const GraphShard& shard, const ClientParams& params) {
  ad::Tape tape;
  auto v = gcn_forward(tape, normalized_adjacency(shard.graph), shard.graph.features(), params);
  return {v.hidden.value(), v.logits.value()};
}

Tensor mean_pool(const Tensor& hidden) {
  if (hidden.rank() != 2 || hidden.rows() == 0) throw ShapeError("mean_pool: need at least one row");
  const std::size_t n = hidden.rows(), h = hidden.cols();
  Tensor out({h}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) out[j] += hidden(i, j);
  for (std::size_t j = 0; j < h; ++j) out[j] /= static_cast<double>(n);
  return out;
}

double accuracy(const Tensor& logits, const std::vector<int>& labels,
                const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw std::invalid_argument("accuracy: empty mask");
  const std::size_t c = logits.cols();
  std::size_t correct = 0;
  for (std::size_t i : rows) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    correct += static_cast<int>(best) == labels.at(i);
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace fedsheaf
