#include "fedsheaf/hypernet.hpp"

#include <cmath>
#include <random>

namespace fedsheaf {

void HyperNet::assign(const std::vector<Tensor>& ts) {
  Tensor* dst[] = {&aq, &ak, &av, &w1, &b1, &w2, &b2};
  if (ts.size() != 7) throw ShapeError("HyperNet::assign: expected 7 tensors");
  for (std::size_t i = 0; i < 7; ++i) {
    if (!dst[i]->same_shape(ts[i])) throw ShapeError("HyperNet::assign: shape mismatch");
    *dst[i] = ts[i];
  }
}

HyperNet init_hypernet(std::size_t embedding_dim, std::size_t hidden_dim, std::size_t output_dim,
                       Rng& rng) {
  auto glorot = [&rng](std::size_t in, std::size_t out) {
    return uniform_tensor({in, out}, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
  };
  HyperNet hn;
  hn.aq = glorot(embedding_dim, embedding_dim);
  hn.ak = glorot(embedding_dim, embedding_dim);
  hn.av = glorot(embedding_dim, embedding_dim);
  hn.w1 = glorot(embedding_dim, hidden_dim);
  hn.b1 = Tensor({hidden_dim}, 0.0);
  hn.w2 = glorot(hidden_dim, output_dim);
  hn.b2 = Tensor({output_dim}, 0.0);
  return hn;
}

std::vector<ad::Var> hypernet_leaves(ad::Tape& tape, const HyperNet& hn) {
  std::vector<ad::Var> leaves;
  for (Tensor& t : hn.tensors()) leaves.push_back(tape.leaf(std::move(t)));
  return leaves;
}

ad::Var attention(ad::Var x, std::span<const ad::Var> leaves) {
  if (x.value().rows() == 0) throw ShapeError("attention: need at least one row");
  ad::Var q = ad::matmul(x, leaves[0]);
  ad::Var k = ad::matmul(x, leaves[1]);
  ad::Var scores = ad::row_softmax(ad::matmul(q, ad::transpose(k)));
  return ad::matmul(scores, ad::matmul(x, leaves[2]));
}

Tensor attention(const Tensor& x, const HyperNet& hn) {
  ad::Tape tape;
  auto leaves = hypernet_leaves(tape, hn);
  return attention(tape.constant(x), leaves).value();
}

ad::Var generate(ad::Var x, const HyperNet& hn, std::span<const ad::Var> leaves,
                 const Tensor& dropout) {
  if (x.value().cols() != hn.embedding_dim()) {
    throw ShapeError("generate: embedding width " + std::to_string(x.value().cols()) +
                     " != hypernetwork input " + std::to_string(hn.embedding_dim()));
  }
  ad::Var z = hn.use_attention ? attention(x, leaves) : x;
  if (dropout.size() != 0) z = ad::hadamard(z, x.tape().constant(dropout));
  ad::Var hidden = ad::relu(ad::add_row_bias(ad::matmul(z, leaves[3]), leaves[4]));
  return ad::add_row_bias(ad::matmul(hidden, leaves[5]), leaves[6]);
}

Tensor generate(const Tensor& x, const HyperNet& hn) {
  ad::Tape tape;
  auto leaves = hypernet_leaves(tape, hn);
  return generate(tape.constant(x), hn, leaves).value();
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
  Tensor mask = Tensor::matrix(rows, cols);
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? inv : 0.0;
  return mask;
}

ad::Var server_surrogate_loss(ad::Var omega, const Tensor& delta) {
  if (!omega.value().same_shape(delta)) {
    throw ShapeError("server_surrogate_loss: omega " + omega.value().shape_string() + " vs delta " +
                     delta.shape_string());
  }
  return ad::inner_const(omega, delta);
}

}  // namespace fedsheaf
