#include <gtest/gtest.h>

#include <cmath>

#include "fedsheaf/client.hpp"
#include "fedsheaf/hypernet.hpp"
#include "fedsheaf/optim.hpp"
#include "fedsheaf/sheaf_diffusion.hpp"
#include "test_util.hpp"

using namespace fedsheaf;
using fedsheaf::tu::naive_matmul;
using fedsheaf::tu::random_tensor;

namespace {

HyperNet small_hn(std::size_t h, std::size_t m, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  HyperNet hn = init_hypernet(h, m, p, rng);
  hn.b1 = random_tensor({m}, seed + 1, 0.1);
  hn.b2 = random_tensor({p}, seed + 2, 0.1);
  return hn;
}

// Loop oracle for the attention block.
Tensor dense_attention(const Tensor& x, const HyperNet& hn) {
  Tensor q = naive_matmul(x, hn.aq), k = naive_matmul(x, hn.ak), v = naive_matmul(x, hn.av);
  Tensor s = naive_matmul(q, k.transposed());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double mx = s(i, 0), z = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j) mx = std::max(mx, s(i, j));
    for (std::size_t j = 0; j < s.cols(); ++j) z += std::exp(s(i, j) - mx);
    for (std::size_t j = 0; j < s.cols(); ++j) s(i, j) = std::exp(s(i, j) - mx) / z;
  }
  return naive_matmul(s, v);
}

Tensor dense_generate(const Tensor& x, const HyperNet& hn, const Tensor& mask) {
  Tensor z = hn.use_attention ? dense_attention(x, hn) : x;
  if (mask.size() != 0)
    for (std::size_t i = 0; i < z.size(); ++i) z[i] *= mask[i];
  Tensor hid = naive_matmul(z, hn.w1);
  for (std::size_t i = 0; i < hid.rows(); ++i)
    for (std::size_t j = 0; j < hid.cols(); ++j) hid(i, j) = std::max(0.0, hid(i, j) + hn.b1[j]);
  Tensor out = naive_matmul(hid, hn.w2);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += hn.b2[j];
  return out;
}

}  // namespace

TEST(HyperNet, AttentionMatchesOracle) {
  HyperNet hn = small_hn(4, 6, 5, 1);
  Tensor x = random_tensor({3, 4}, 2);
  EXPECT_LE(max_abs_diff(attention(x, hn), dense_attention(x, hn)), 1e-12);
}

TEST(HyperNet, AttentionIsPermutationEquivariant) {
  HyperNet hn = small_hn(4, 6, 5, 3);
  Tensor x = random_tensor({5, 4}, 4);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Tensor xp = Tensor::matrix(5, 4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) xp(i, j) = x(perm[i], j);
  Tensor a = generate(x, hn), ap = generate(xp, hn);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) EXPECT_NEAR(ap(i, j), a(perm[i], j), 1e-12);
}

TEST(HyperNet, GenerateShapeAndOracle) {
  const std::size_t f = 3, h = 4, p = backbone_size(f, h);
  HyperNet hn = small_hn(h, 8, p, 5);
  Tensor x = random_tensor({6, h}, 6);
  Tensor out = generate(x, hn);
  EXPECT_EQ(out.rows(), 6u);
  EXPECT_EQ(out.cols(), f * h + h);
  EXPECT_LE(max_abs_diff(out, dense_generate(x, hn, Tensor())), 1e-12);
  hn.use_attention = false;
  EXPECT_LE(max_abs_diff(generate(x, hn), dense_generate(x, hn, Tensor())), 1e-12);
  EXPECT_THROW(generate(random_tensor({6, h + 1}, 7), hn), ShapeError);
}

TEST(HyperNet, DropoutMaskIsDeterministicAndScaled) {
  Rng a(9), b(9), c(10);
  Tensor ma = dropout_mask(20, 30, 0.3, a), mb = dropout_mask(20, 30, 0.3, b), mc = dropout_mask(20, 30, 0.3, c);
  EXPECT_EQ(ma, mb);
  EXPECT_NE(ma, mc);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    EXPECT_TRUE(ma[i] == 0.0 || std::abs(ma[i] - 1.0 / 0.7) < 1e-15);
    kept += ma[i] != 0.0;
  }
  // 600 Bernoulli(0.7) trials: mean 420, sd ~11.2
  EXPECT_NEAR(static_cast<double>(kept), 420.0, 4 * 11.3);
  Rng r(1);
  EXPECT_THROW(dropout_mask(2, 2, 1.0, r), std::invalid_argument);
  EXPECT_EQ(dropout_mask(2, 2, 0.0, r), Tensor::matrix(2, 2, 1.0));
}

TEST(HyperNet, MaskedForwardMatchesOracleAndGradients) {
  HyperNet hn = small_hn(3, 5, 4, 11);
  Tensor x = random_tensor({4, 3}, 12);
  Rng rng(13);
  Tensor mask = dropout_mask(4, 3, 0.3, rng);
  ad::Tape tape;
  auto leaves = hypernet_leaves(tape, hn);
  EXPECT_LE(max_abs_diff(generate(tape.constant(x), hn, leaves, mask).value(), dense_generate(x, hn, mask)), 1e-12);

  std::vector<Tensor> params = hn.tensors();
  params.push_back(x);
  auto r = tu::check_gradients(params, [&](ad::Tape&, const std::vector<ad::Var>& v) {
    std::vector<ad::Var> l(v.begin(), v.end() - 1);
    return ad::inner_const(generate(v.back(), hn, l, mask), random_tensor({4, 4}, 14));
  });
  EXPECT_LE(r.max_rel_error, 1e-5);
}

TEST(HyperNet, SurrogateGradientThroughSheafAndHypernetwork) {
  // 3 clients on a triangle; the gradient of <Omega(theta, phi), target>
  // must match finite differences of the composed map for every parameter.
  Rng rng(21);
  SheafStack stack = init_sheaf_stack(4, 2, 1, 3, rng);
  HyperNet hn = small_hn(4, 5, 6, 22);
  const std::vector<Edge> edges{{0, 1}, {0, 2}, {1, 2}};
  Tensor x0 = random_tensor({3, 4}, 23);
  Tensor delta = random_tensor({3, 6}, 24);
  std::vector<Tensor> params = stack.tensors();
  const std::size_t ns = params.size();
  for (auto& t : hn.tensors()) params.push_back(t);
  auto r = tu::check_gradients(params, [&](ad::Tape& tape, const std::vector<ad::Var>& v) {
    std::vector<ad::Var> theta(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(ns));
    std::vector<ad::Var> phi(v.begin() + static_cast<std::ptrdiff_t>(ns), v.end());
    ad::Var h = diffuse(tape.constant(x0), edges, stack, theta);
    return server_surrogate_loss(generate(h, hn, phi), delta);
  });
  EXPECT_LE(r.max_rel_error, 1e-5);
  EXPECT_THROW(
      {
        ad::Tape t;
        server_surrogate_loss(t.leaf(random_tensor({3, 5}, 1)), delta);
      },
      ShapeError);
}

TEST(HyperNet, DescentOnNegatedDeltaMovesOmegaTowardTrainedBackbones) {
  // A small step on <Omega, -Delta> must increase <Omega, Delta> to first order.
  HyperNet hn = small_hn(4, 8, 5, 31);
  Tensor x = random_tensor({3, 4}, 32);
  Tensor delta = random_tensor({3, 5}, 33);
  Tensor neg = delta;
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
  Tensor before = generate(x, hn);
  ad::Tape tape;
  auto leaves = hypernet_leaves(tape, hn);
  tape.backward(server_surrogate_loss(generate(tape.constant(x), hn, leaves), neg));
  std::vector<Tensor> ts = hn.tensors(), grads;
  for (auto& l : leaves) grads.push_back(tape.grad(l));
  Optimizer(OptimizerKind::sgd, 1e-3).step(ts, grads);
  hn.assign(ts);
  Tensor after = generate(x, hn);
  double moved = 0.0;
  for (std::size_t i = 0; i < after.size(); ++i) moved += (after[i] - before[i]) * delta[i];
  EXPECT_GT(moved, 0.0);
}

TEST(HyperNet, AssignValidatesShapes) {
  HyperNet hn = small_hn(3, 4, 5, 1);
  auto ts = hn.tensors();
  ts[6] = Tensor({4}, 0.0);
  EXPECT_THROW(hn.assign(ts), ShapeError);
  ts.pop_back();
  EXPECT_THROW(hn.assign(ts), ShapeError);
}
