#pragma once

// Attention hypernetwork: maps enriched client embeddings (N x h) to every
// client's flat backbone (N x P) in one batch.
//
//   att = softmax_rows((X Aq)(X Ak)^T) X Av     (no score scaling)
//   out = relu(dropout(att) W1 + b1) W2 + b2

#include <cstddef>
#include <vector>

#include "fedsheaf/autodiff.hpp"
#include "fedsheaf/random.hpp"

namespace fedsheaf {

struct HyperNet {
  Tensor aq;  // h x h
  Tensor ak;  // h x h
  Tensor av;  // h x h
  Tensor w1;  // h x m
  Tensor b1;  // m
  Tensor w2;  // m x P
  Tensor b2;  // P
  bool use_attention = true;

  std::size_t embedding_dim() const { return aq.rows(); }
  std::size_t output_dim() const { return w2.cols(); }

  /// aq, ak, av, w1, b1, w2, b2
  std::vector<Tensor> tensors() const { return {aq, ak, av, w1, b1, w2, b2}; }
  void assign(const std::vector<Tensor>& ts);
};

HyperNet init_hypernet(std::size_t embedding_dim, std::size_t hidden_dim, std::size_t output_dim,
                       Rng& rng);

std::vector<ad::Var> hypernet_leaves(ad::Tape& tape, const HyperNet& hn);

ad::Var attention(ad::Var x, std::span<const ad::Var> leaves);
Tensor attention(const Tensor& x, const HyperNet& hn);

/// Hypernetwork forward on tape. `dropout_mask` (N x h, inverted scaling) is
/// applied after the attention layer when non-empty.
ad::Var generate(ad::Var x, const HyperNet& hn, std::span<const ad::Var> leaves,
                 const Tensor& dropout_mask = Tensor());
Tensor generate(const Tensor& x, const HyperNet& hn);

/// Inverted-dropout mask with keep probability 1 - rate.
Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

/// <omega, delta> with delta held constant: its gradient with respect to
/// omega is delta, so backpropagating it yields J^T delta for every upstream
/// parameter.
ad::Var server_surrogate_loss(ad::Var omega, const Tensor& delta);

}  // namespace fedsheaf
