#pragma once

// Learnable sheaf diffusion over the collaboration graph.
//
// Each layer learns restriction maps from the current stalk features with a
// one-hidden-layer MLP, forms the normalized sheaf Laplacian, and applies the
// residual update
//   X <- X - elu(Delta_F (I kron W1) X W2)
// where X is the N d x f_c reshaping of the N x h client embeddings.

#include <cstddef>
#include <vector>

#include "fedsheaf/autodiff.hpp"
#include "fedsheaf/collab_graph.hpp"
#include "fedsheaf/random.hpp"
#include "fedsheaf/sheaf_laplacian.hpp"

namespace fedsheaf {

struct SheafLayerParams {
  Tensor map_w1;  // 2h x m
  Tensor map_b1;  // m
  Tensor map_w2;  // m x d*d
  Tensor map_b2;  // d*d
  Tensor w1;      // d x d, acts on the stalk dimension
  Tensor w2;      // f_c x f_c, acts on the channel dimension
};

struct SheafStack {
  std::size_t stalk_dim = 2;
  std::size_t channels = 0;  // f_c; stalk_dim * channels = embedding width
  std::vector<SheafLayerParams> layers;

  std::size_t embedding_dim() const { return stalk_dim * channels; }
  std::size_t num_layers() const { return layers.size(); }

  /// All parameter tensors, layer by layer in SheafLayerParams field order.
  std::vector<Tensor> tensors() const;
  void assign(const std::vector<Tensor>& ts);
};

SheafStack init_sheaf_stack(std::size_t embedding_dim, std::size_t stalk_dim, std::size_t num_layers,
                            std::size_t map_hidden, Rng& rng);

/// Stack whose W1 and W2 are zero in every layer, i.e. the identity map.
SheafStack zero_sheaf_stack(std::size_t embedding_dim, std::size_t stalk_dim, std::size_t num_layers,
                            std::size_t map_hidden);

/// Tape leaves for one stack, in SheafStack::tensors() order.
std::vector<ad::Var> sheaf_leaves(ad::Tape& tape, const SheafStack& stack);

/// Restriction maps for every edge, computed from x (N d x f_c) by the layer's
/// MLP; rows 2e and 2e+1 hold F_{u<e} and F_{v<e} flattened row-major.
ad::Var restriction_maps(ad::Var x, const std::vector<Edge>& edges, std::size_t stalk_dim,
                         std::span<const ad::Var> layer_leaves);

/// Dense sheaf Laplacian assembled from per-edge maps (rows as above).
ad::Var assemble_laplacian(ad::Var maps, std::size_t num_nodes, const std::vector<Edge>& edges,
                           std::size_t stalk_dim);

/// Block-diagonal matrix of D_n^-1/2 for the diagonal blocks D_n of `laplacian`.
ad::Var block_diag_inv_sqrt(ad::Var laplacian, std::size_t num_nodes, std::size_t stalk_dim,
                            double eps = kEigenFloor);

/// One residual sheaf layer on x (N d x f_c). `layer_leaves` are the six
/// tensors of one SheafLayerParams.
ad::Var sheaf_layer(ad::Var x, const std::vector<Edge>& edges, std::size_t num_nodes,
                    std::size_t stalk_dim, std::span<const ad::Var> layer_leaves);

/// Runs the whole stack on x0 (N x h) and returns N x h.
ad::Var diffuse(ad::Var x0, const std::vector<Edge>& edges, const SheafStack& stack,
                std::span<const ad::Var> leaves);

/// Value-only convenience wrapper.
Tensor diffuse(const CollaborationGraph& g, const SheafStack& stack);

/// Two-layer GCN over the collaboration graph, used by the gcn_collab ablation.
struct CollabGcn {
  Tensor w1;  // h x h
  Tensor w2;  // h x h
  std::vector<Tensor> tensors() const { return {w1, w2}; }
  void assign(const std::vector<Tensor>& ts);
};

CollabGcn init_collab_gcn(std::size_t embedding_dim, Rng& rng);
ad::Var collab_gcn_forward(ad::Var x0, std::size_t num_nodes, const std::vector<Edge>& edges,
                           std::span<const ad::Var> leaves);

}  // namespace fedsheaf
