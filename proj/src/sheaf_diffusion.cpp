#include "fedsheaf/sheaf_diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "fedsheaf/client.hpp"

namespace fedsheaf {

namespace {

constexpr std::size_t kTensorsPerLayer = 6;

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform_tensor({fan_in, fan_out}, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

Tensor block(const Tensor& dense, std::size_t r0, std::size_t c0, std::size_t d) {
  Tensor b = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) b(i, j) = dense(r0 + i, c0 + j);
  return b;
}

Tensor map_row(const Tensor& maps, std::size_t r, std::size_t d) {
  Tensor m = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d * d; ++i) m[i] = maps(r, i);
  return m;
}

// out += a * b (d x d)
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& out, double s) {
  const std::size_t d = a.rows();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < d; ++j) out(i, j) += s * a(i, k) * b(k, j);
}

void check_stack_shape(const SheafStack& stack) {
  if (stack.stalk_dim == 0 || stack.channels == 0) throw ShapeError("sheaf stack: zero stalk or channel dim");
}

}  // namespace

std::vector<Tensor> SheafStack::tensors() const {
  std::vector<Tensor> out;
  out.reserve(layers.size() * kTensorsPerLayer);
  for (const auto& l : layers) {
    out.push_back(l.map_w1);
    out.push_back(l.map_b1);
    out.push_back(l.map_w2);
    out.push_back(l.map_b2);
    out.push_back(l.w1);
    out.push_back(l.w2);
  }
  return out;
}

void SheafStack::assign(const std::vector<Tensor>& ts) {
  if (ts.size() != layers.size() * kTensorsPerLayer) throw ShapeError("SheafStack::assign: tensor count");
  for (std::size_t t = 0; t < layers.size(); ++t) {
    Tensor* dst[] = {&layers[t].map_w1, &layers[t].map_b1, &layers[t].map_w2,
                     &layers[t].map_b2, &layers[t].w1,     &layers[t].w2};
    for (std::size_t k = 0; k < kTensorsPerLayer; ++k) {
      const Tensor& src = ts[t * kTensorsPerLayer + k];
      if (!dst[k]->same_shape(src)) throw ShapeError("SheafStack::assign: shape mismatch");
      *dst[k] = src;
    }
  }
}

SheafStack init_sheaf_stack(std::size_t embedding_dim, std::size_t stalk_dim, std::size_t num_layers,
                            std::size_t map_hidden, Rng& rng) {
  if (stalk_dim == 0 || embedding_dim % stalk_dim != 0) {
    throw std::invalid_argument("sheaf stack: embedding dim " + std::to_string(embedding_dim) +
                                " not divisible by stalk dim " + std::to_string(stalk_dim));
  }
  SheafStack s;
  s.stalk_dim = stalk_dim;
  s.channels = embedding_dim / stalk_dim;
  for (std::size_t t = 0; t < num_layers; ++t) {
    SheafLayerParams l;
    l.map_w1 = glorot(2 * embedding_dim, map_hidden, rng);
    l.map_b1 = Tensor({map_hidden}, 0.0);
    l.map_w2 = glorot(map_hidden, stalk_dim * stalk_dim, rng);
    l.map_b2 = Tensor({stalk_dim * stalk_dim}, 0.0);
    l.w1 = glorot(stalk_dim, stalk_dim, rng);
    l.w2 = glorot(s.channels, s.channels, rng);
    s.layers.push_back(std::move(l));
  }
  return s;
}

SheafStack zero_sheaf_stack(std::size_t embedding_dim, std::size_t stalk_dim, std::size_t num_layers,
                            std::size_t map_hidden) {
  Rng rng = make_rng(0);
  SheafStack s = init_sheaf_stack(embedding_dim, stalk_dim, num_layers, map_hidden, rng);
  for (auto& l : s.layers) {
    l.w1 = Tensor(l.w1.shape(), 0.0);
    l.w2 = Tensor(l.w2.shape(), 0.0);
  }
  return s;
}

std::vector<ad::Var> sheaf_leaves(ad::Tape& tape, const SheafStack& stack) {
  std::vector<ad::Var> leaves;
  for (Tensor& t : stack.tensors()) leaves.push_back(tape.leaf(std::move(t)));
  return leaves;
}

ad::Var restriction_maps(ad::Var x, const std::vector<Edge>& edges, std::size_t stalk_dim,
                         std::span<const ad::Var> layer_leaves) {
  const Tensor& xv = x.value();
  const std::size_t num_nodes = xv.rows() / stalk_dim;
  const std::size_t h = stalk_dim * xv.cols();
  ad::Var nodes = ad::reshape(x, {num_nodes, h});
  std::vector<std::size_t> self_rows, other_rows;
  for (const Edge& e : edges) {
    self_rows.push_back(e.u);
    other_rows.push_back(e.v);
    self_rows.push_back(e.v);
    other_rows.push_back(e.u);
  }
  ad::Var input = ad::hconcat(ad::gather_rows(nodes, std::move(self_rows)),
                              ad::gather_rows(nodes, std::move(other_rows)));
  ad::Var hidden = ad::elu(ad::add_row_bias(ad::matmul(input, layer_leaves[0]), layer_leaves[1]));
  return ad::tanh(ad::add_row_bias(ad::matmul(hidden, layer_leaves[2]), layer_leaves[3]));
}

ad::Var assemble_laplacian(ad::Var maps, std::size_t num_nodes, const std::vector<Edge>& edges,
                           std::size_t stalk_dim) {
  const std::size_t d = stalk_dim;
  const Tensor& mv = maps.value();
  if (mv.rows() != 2 * edges.size() || mv.cols() != d * d) {
    throw ShapeError("assemble_laplacian: expected " + std::to_string(2 * edges.size()) + " x " +
                     std::to_string(d * d) + " maps, got " + mv.shape_string());
  }
  RestrictionMaps rm;
  rm.stalk_dim = d;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    rm.source.push_back(map_row(mv, 2 * e, d));
    rm.target.push_back(map_row(mv, 2 * e + 1, d));
  }
  Tensor dense = build_sheaf_laplacian(num_nodes, edges, rm).to_dense();
  ad::Tape& tape = maps.tape();
  const std::size_t im = maps.id();
  return tape.record("assemble_laplacian", std::move(dense), {im},
                     [im, edges, d](const Tensor& g, ad::Tape& t) {
                       const Tensor& mv = t.value(im);
                       Tensor gm(mv.shape());
                       for (std::size_t e = 0; e < edges.size(); ++e) {
                         const std::size_t u = edges[e].u, v = edges[e].v;
                         const Tensor fu = map_row(mv, 2 * e, d), fv = map_row(mv, 2 * e + 1, d);
                         const Tensor guu = block(g, u * d, u * d, d), gvv = block(g, v * d, v * d, d);
                         const Tensor guv = block(g, u * d, v * d, d), gvu = block(g, v * d, u * d, d);
                         Tensor dfu = Tensor::matrix(d, d), dfv = Tensor::matrix(d, d);
                         // F_u^T F_u on (u,u)
                         gemm_acc(fu, guu, dfu, 1.0);
                         gemm_acc(fu, guu.transposed(), dfu, 1.0);
                         gemm_acc(fv, gvv, dfv, 1.0);
                         gemm_acc(fv, gvv.transposed(), dfv, 1.0);
                         // -F_u^T F_v on (u,v) and -F_v^T F_u on (v,u)
                         gemm_acc(fv, guv.transposed(), dfu, -1.0);
                         gemm_acc(fu, guv, dfv, -1.0);
                         gemm_acc(fu, gvu.transposed(), dfv, -1.0);
                         gemm_acc(fv, gvu, dfu, -1.0);
                         for (std::size_t i = 0; i < d * d; ++i) {
                           gm(2 * e, i) = dfu[i];
                           gm(2 * e + 1, i) = dfv[i];
                         }
                       }
                       t.accumulate(im, gm);
                     });
}

ad::Var block_diag_inv_sqrt(ad::Var laplacian, std::size_t num_nodes, std::size_t stalk_dim, double eps) {
  const std::size_t d = stalk_dim;
  const Tensor& lv = laplacian.value();
  if (lv.rows() != num_nodes * d || lv.cols() != num_nodes * d) {
    throw ShapeError("block_diag_inv_sqrt: laplacian shape mismatch");
  }
  Tensor out = Tensor::matrix(num_nodes * d, num_nodes * d);
  for (std::size_t n = 0; n < num_nodes; ++n) {
    const Tensor s = sym_inv_sqrt(block(lv, n * d, n * d, d), eps);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) out(n * d + i, n * d + j) = s(i, j);
  }
  ad::Tape& tape = laplacian.tape();
  const std::size_t il = laplacian.id();
  return tape.record("block_diag_inv_sqrt", std::move(out), {il},
                     [il, num_nodes, d, eps](const Tensor& g, ad::Tape& t) {
                       const Tensor& lv = t.value(il);
                       Tensor gl = Tensor::matrix(lv.rows(), lv.cols());
                       for (std::size_t n = 0; n < num_nodes; ++n) {
                         const Tensor gb = sym_inv_sqrt_backward(block(lv, n * d, n * d, d),
                                                                 block(g, n * d, n * d, d), eps);
                         for (std::size_t i = 0; i < d; ++i)
                           for (std::size_t j = 0; j < d; ++j) gl(n * d + i, n * d + j) = gb(i, j);
                       }
                       t.accumulate(il, gl);
                     });
}

ad::Var sheaf_layer(ad::Var x, const std::vector<Edge>& edges, std::size_t num_nodes,
                    std::size_t stalk_dim, std::span<const ad::Var> layer_leaves) {
  if (layer_leaves.size() != kTensorsPerLayer) throw std::invalid_argument("sheaf_layer: expected 6 leaves");
  if (x.value().rows() != num_nodes * stalk_dim) throw ShapeError("sheaf_layer: x must be N d x f_c");
  if (edges.empty()) return x;  // Delta_F = 0, so the residual update is the identity
  ad::Var maps = restriction_maps(x, edges, stalk_dim, layer_leaves);
  ad::Var lap = assemble_laplacian(maps, num_nodes, edges, stalk_dim);
  ad::Var dm = block_diag_inv_sqrt(lap, num_nodes, stalk_dim);
  ad::Var normalized = ad::matmul(ad::matmul(dm, lap), dm);
  ad::Var mixed = ad::matmul(ad::block_left_mul(layer_leaves[4], x), layer_leaves[5]);
  return ad::sub(x, ad::elu(ad::matmul(normalized, mixed)));
}

ad::Var diffuse(ad::Var x0, const std::vector<Edge>& edges, const SheafStack& stack,
                std::span<const ad::Var> leaves) {
  check_stack_shape(stack);
  const Tensor& xv = x0.value();
  const std::size_t n = xv.rows(), h = xv.cols();
  if (h != stack.embedding_dim()) {
    throw ShapeError("diffuse: embedding width " + std::to_string(h) + " != stalk_dim*channels " +
                     std::to_string(stack.embedding_dim()));
  }
  if (leaves.size() != stack.num_layers() * kTensorsPerLayer) throw std::invalid_argument("diffuse: leaf count");
  ad::Var x = ad::reshape(x0, {n * stack.stalk_dim, stack.channels});
  for (std::size_t t = 0; t < stack.num_layers(); ++t) {
    x = sheaf_layer(x, edges, n, stack.stalk_dim, leaves.subspan(t * kTensorsPerLayer, kTensorsPerLayer));
  }
  return ad::reshape(x, {n, h});
}

Tensor diffuse(const CollaborationGraph& g, const SheafStack& stack) {
  ad::Tape tape;
  auto leaves = sheaf_leaves(tape, stack);
  return diffuse(tape.constant(g.x0), g.edges, stack, leaves).value();
}

void CollabGcn::assign(const std::vector<Tensor>& ts) {
  if (ts.size() != 2 || !ts[0].same_shape(w1) || !ts[1].same_shape(w2)) throw ShapeError("CollabGcn::assign");
  w1 = ts[0];
  w2 = ts[1];
}

CollabGcn init_collab_gcn(std::size_t embedding_dim, Rng& rng) {
  return {glorot(embedding_dim, embedding_dim, rng), glorot(embedding_dim, embedding_dim, rng)};
}

ad::Var collab_gcn_forward(ad::Var x0, std::size_t num_nodes, const std::vector<Edge>& edges,
                           std::span<const ad::Var> leaves) {
  const Graph structure(num_nodes, edges, Tensor::matrix(num_nodes, 1), std::vector<int>(num_nodes, 0), 1);
  const auto adj = normalized_adjacency(structure);
  ad::Var hidden = ad::relu(ad::spmm(adj, ad::matmul(x0, leaves[0])));
  return ad::spmm(adj, ad::matmul(hidden, leaves[1]));
}

}  // namespace fedsheaf
