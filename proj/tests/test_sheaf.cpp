#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fedsheaf/collab_graph.hpp"
#include "fedsheaf/sheaf_diffusion.hpp"
#include "fedsheaf/sheaf_laplacian.hpp"
#include "test_util.hpp"

using namespace fedsheaf;
using fedsheaf::tu::naive_matmul;
using fedsheaf::tu::random_tensor;

namespace {

using Mat = Eigen::MatrixXd;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t(i, j);
  return m;
}

Tensor from_mat(const Mat& m) {
  Tensor t = Tensor::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) = m(i, j);
  return t;
}

// Denman-Beavers iteration: Z_k -> A^-1/2 for SPD A.
Mat db_inv_sqrt(const Mat& a) {
  Mat y = a, z = Mat::Identity(a.rows(), a.cols());
  for (int k = 0; k < 60; ++k) {
    Mat yn = 0.5 * (y + z.inverse());
    Mat zn = 0.5 * (z + y.inverse());
    y = yn;
    z = zn;
  }
  return z;
}

Tensor random_spd(std::size_t d, std::uint64_t seed) {
  Tensor a = random_tensor({d, d}, seed);
  Tensor s = naive_matmul(a, a.transposed());
  for (std::size_t i = 0; i < d; ++i) s(i, i) += 0.5;
  return s;
}

const std::vector<Edge> kEdges{{0, 1}, {0, 3}, {1, 2}, {2, 3}, {1, 3}};

RestrictionMaps random_maps(std::size_t d, std::size_t edges, std::uint64_t seed) {
  RestrictionMaps m;
  m.stalk_dim = d;
  for (std::size_t e = 0; e < edges; ++e) {
    m.source.push_back(random_tensor({d, d}, seed + 2 * e));
    m.target.push_back(random_tensor({d, d}, seed + 2 * e + 1));
  }
  return m;
}

// L = delta^T delta with (delta x)_e = F_u x_u - F_v x_v.
Tensor coboundary_laplacian(std::size_t n, const std::vector<Edge>& edges, const RestrictionMaps& maps) {
  const std::size_t d = maps.stalk_dim;
  Tensor delta = Tensor::matrix(edges.size() * d, n * d);
  for (std::size_t e = 0; e < edges.size(); ++e)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        delta(e * d + i, edges[e].u * d + j) = maps.source[e](i, j);
        delta(e * d + i, edges[e].v * d + j) = -maps.target[e](i, j);
      }
  return naive_matmul(delta.transposed(), delta);
}

// Dense, loop-based reimplementation of one sheaf layer.
Tensor dense_sheaf_layer(const Tensor& x, const std::vector<Edge>& edges, std::size_t n, std::size_t d,
                         const SheafLayerParams& p) {
  const std::size_t fc = x.cols(), h = d * fc;
  Tensor nodes = x.reshaped({n, h});
  RestrictionMaps maps;
  maps.stalk_dim = d;
  auto mlp = [&](std::size_t a, std::size_t b) {
    Tensor in = Tensor::matrix(1, 2 * h);
    for (std::size_t j = 0; j < h; ++j) {
      in(0, j) = nodes(a, j);
      in(0, h + j) = nodes(b, j);
    }
    Tensor hid = naive_matmul(in, p.map_w1);
    for (std::size_t j = 0; j < hid.size(); ++j) {
      const double z = hid[j] + p.map_b1[j];
      hid[j] = z > 0 ? z : std::expm1(z);
    }
    Tensor out = naive_matmul(hid, p.map_w2);
    Tensor f = Tensor::matrix(d, d);
    for (std::size_t j = 0; j < d * d; ++j) f[j] = std::tanh(out[j] + p.map_b2[j]);
    return f;
  };
  for (const Edge& e : edges) {
    maps.source.push_back(mlp(e.u, e.v));
    maps.target.push_back(mlp(e.v, e.u));
  }
  Tensor lap = coboundary_laplacian(n, edges, maps);
  Mat dinv = Mat::Zero(n * d, n * d);
  for (std::size_t v = 0; v < n; ++v)
    dinv.block(v * d, v * d, d, d) = db_inv_sqrt(to_mat(lap).block(v * d, v * d, d, d));
  Tensor norm = from_mat(dinv * to_mat(lap) * dinv);
  Tensor kron = Tensor::matrix(n * d, n * d);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) kron(v * d + i, v * d + j) = p.w1(i, j);
  Tensor z = naive_matmul(norm, naive_matmul(naive_matmul(kron, x), p.w2));
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= z[i] > 0 ? z[i] : std::expm1(z[i]);
  return out;
}

}  // namespace

TEST(SheafLaplacian, UnitMapsReduceToGraphLaplacian) {
  const std::size_t n = 4;
  RestrictionMaps m;
  m.stalk_dim = 1;
  for (std::size_t e = 0; e < kEdges.size(); ++e) {
    m.source.push_back(Tensor::from_rows({{1.0}}));
    m.target.push_back(Tensor::from_rows({{1.0}}));
  }
  Tensor l = build_sheaf_laplacian(n, kEdges, m).to_dense();
  Tensor expect = Tensor::matrix(n, n);
  for (const Edge& e : kEdges) {
    expect(e.u, e.u) += 1;
    expect(e.v, e.v) += 1;
    expect(e.u, e.v) -= 1;
    expect(e.v, e.u) -= 1;
  }
  EXPECT_EQ(l, expect);
  // normalized version: I - D^-1/2 A D^-1/2
  Tensor nl = normalize(build_sheaf_laplacian(n, kEdges, m)).to_dense();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double want = i == j ? 1.0 : expect(i, j) / std::sqrt(expect(i, i) * expect(j, j));
      EXPECT_NEAR(nl(i, j), want, 1e-12);
    }
}

TEST(SheafLaplacian, EqualsCoboundaryGram) {
  for (std::size_t d : {1u, 2u, 3u}) {
    auto maps = random_maps(d, kEdges.size(), 10 * d);
    Tensor l = build_sheaf_laplacian(4, kEdges, maps).to_dense();
    EXPECT_LE(max_abs_diff(l, coboundary_laplacian(4, kEdges, maps)), 1e-12) << "d=" << d;
  }
}

TEST(SheafLaplacian, SymmetricPositiveSemidefiniteProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto maps = random_maps(2, kEdges.size(), 100 + seed * 17);
    SheafLaplacian lap = build_sheaf_laplacian(4, kEdges, maps);
    for (const Tensor& l : {lap.to_dense(), normalize(lap).to_dense()}) {
      EXPECT_LE(max_abs_diff(l, l.transposed()), 1e-12);
      Eigen::SelfAdjointEigenSolver<Mat> es(to_mat(l));
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
    }
    // x^T L x = ||delta x||^2 >= 0 and apply() agrees with the dense product
    Tensor x = random_tensor({8, 3}, seed);
    EXPECT_LE(max_abs_diff(lap.apply(x), naive_matmul(lap.to_dense(), x)), 1e-12);
  }
}

TEST(SheafLaplacian, IsolatedNodesHaveZeroBlocks) {
  auto maps = random_maps(2, 1, 3);
  Tensor l = build_sheaf_laplacian(3, {{0, 1}}, maps).to_dense();
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(l(4, i), 0.0);
    EXPECT_EQ(l(i, 5), 0.0);
  }
}

TEST(InvSqrt, MatchesDenmanBeaversOracle) {
  for (std::size_t d : {1u, 2u, 4u}) {
    Tensor a = random_spd(d, d);
    Tensor s = sym_inv_sqrt(a);
    EXPECT_LE(max_abs_diff(s, from_mat(db_inv_sqrt(to_mat(a)))), 1e-10);
    EXPECT_LE(max_abs_diff(naive_matmul(naive_matmul(s, a), s), from_mat(Mat::Identity(d, d))), 1e-10);
  }
}

TEST(InvSqrt, FloorsSmallEigenvalues) {
  Tensor zero = Tensor::matrix(2, 2);
  Tensor s = sym_inv_sqrt(zero, 1e-4);
  EXPECT_NEAR(s(0, 0), 100.0, 1e-9);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-9);
}

TEST(InvSqrt, BackwardMatchesFiniteDifferences) {
  for (std::size_t d : {1u, 2u, 3u}) {
    Tensor a = random_spd(d, 20 + d);
    Tensor g = random_tensor({d, d}, 30 + d);
    Tensor analytic = sym_inv_sqrt_backward(a, g);
    // perturb symmetric pairs together; gradient w.r.t. the symmetric entry
    const double h = 1e-6;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) {
        Tensor p = a, m = a;
        p(i, j) += h;
        m(i, j) -= h;
        if (i != j) {
          p(j, i) += h;
          m(j, i) -= h;
        }
        const double num =
            (frobenius_inner(sym_inv_sqrt(p), g) - frobenius_inner(sym_inv_sqrt(m), g)) / (2 * h);
        const double ana = i == j ? analytic(i, i) : analytic(i, j) + analytic(j, i);
        EXPECT_NEAR(ana, num, 1e-6 * std::max(1.0, std::abs(num))) << d << " " << i << j;
      }
  }
}

TEST(Sheaf, AssembleLaplacianMatchesBuilderAndGradients) {
  const std::size_t d = 2;
  Tensor maps = random_tensor({2 * kEdges.size(), d * d}, 5);
  ad::Tape tape;
  Tensor got = assemble_laplacian(tape.constant(maps), 4, kEdges, d).value();
  RestrictionMaps rm;
  rm.stalk_dim = d;
  for (std::size_t e = 0; e < kEdges.size(); ++e) {
    rm.source.push_back(maps.row(2 * e).reshaped({d, d}));
    rm.target.push_back(maps.row(2 * e + 1).reshaped({d, d}));
  }
  EXPECT_LE(max_abs_diff(got, coboundary_laplacian(4, kEdges, rm)), 1e-12);
  auto r = tu::check_gradients({maps}, [&](ad::Tape&, const std::vector<ad::Var>& v) {
    return ad::inner_const(assemble_laplacian(v[0], 4, kEdges, d), random_tensor({8, 8}, 6));
  });
  EXPECT_LE(r.max_rel_error, 1e-6);
}

TEST(Sheaf, BlockDiagInvSqrtGradient) {
  auto maps = random_maps(2, kEdges.size(), 40);
  Tensor l = build_sheaf_laplacian(4, kEdges, maps).to_dense();
  auto r = tu::check_gradients({l}, [&](ad::Tape&, const std::vector<ad::Var>& v) {
    // symmetrize so perturbations stay in the symmetric domain
    ad::Var s = ad::scale(v[0] + ad::transpose(v[0]), 0.5);
    return ad::inner_const(block_diag_inv_sqrt(s, 4, 2), random_tensor({8, 8}, 41));
  });
  EXPECT_LE(r.max_rel_error, 1e-5);
}

TEST(Sheaf, LayerMatchesDenseOracle) {
  Rng rng(7);
  SheafStack stack = init_sheaf_stack(6, 2, 1, 5, rng);
  Tensor x0 = random_tensor({4, 6}, 8);
  ad::Tape tape;
  auto leaves = sheaf_leaves(tape, stack);
  Tensor got = diffuse(tape.constant(x0), kEdges, stack, leaves).value();
  Tensor want = dense_sheaf_layer(x0.reshaped({8, 3}), kEdges, 4, 2, stack.layers[0]).reshaped({4, 6});
  EXPECT_LE(max_abs_diff(got, want), 1e-9);
}

TEST(Sheaf, DiffuseGradientsMatchFiniteDifferences) {
  Rng rng(9);
  SheafStack stack = init_sheaf_stack(4, 2, 2, 3, rng);
  Tensor x0 = random_tensor({4, 4}, 10);
  std::vector<Tensor> params = stack.tensors();
  params.push_back(x0);
  auto r = tu::check_gradients(params, [&](ad::Tape&, const std::vector<ad::Var>& v) {
    std::vector<ad::Var> leaves(v.begin(), v.end() - 1);
    return ad::inner_const(diffuse(v.back(), kEdges, stack, leaves), random_tensor({4, 4}, 11));
  });
  EXPECT_LE(r.max_rel_error, 1e-5);
}

TEST(Sheaf, NoEdgesIsIdentityAndZeroStackIsIdentity) {
  Rng rng(12);
  SheafStack stack = init_sheaf_stack(4, 2, 2, 3, rng);
  Tensor x0 = random_tensor({3, 4}, 13);
  EXPECT_EQ(diffuse(CollaborationGraph{3, {}, x0}, stack), x0);
  SheafStack zero = zero_sheaf_stack(4, 2, 2, 3);
  EXPECT_EQ(diffuse(CollaborationGraph{4, kEdges, random_tensor({4, 4}, 14)}, zero),
            random_tensor({4, 4}, 14));
}

TEST(Sheaf, StackShapeErrors) {
  Rng rng(1);
  EXPECT_THROW(init_sheaf_stack(5, 2, 1, 3, rng), std::invalid_argument);
  SheafStack stack = init_sheaf_stack(4, 2, 1, 3, rng);
  EXPECT_THROW(diffuse(CollaborationGraph{2, {{0, 1}}, random_tensor({2, 6}, 1)}, stack), ShapeError);
  SheafStack copy = stack;
  auto ts = stack.tensors();
  ts[0] = Tensor::matrix(1, 1);
  EXPECT_THROW(copy.assign(ts), ShapeError);
}

TEST(CollabGcn, MatchesDenseOracleAndGradients) {
  Rng rng(2);
  CollabGcn gcn = init_collab_gcn(3, rng);
  Tensor x0 = random_tensor({4, 3}, 3);
  Tensor a = Tensor::matrix(4, 4);
  for (std::size_t i = 0; i < 4; ++i) a(i, i) = 1.0;
  for (const Edge& e : kEdges) a(e.u, e.v) = a(e.v, e.u) = 1.0;
  std::vector<double> deg(4, 0.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) deg[i] += a(i, j);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) a(i, j) /= std::sqrt(deg[i] * deg[j]);
  Tensor hidden = naive_matmul(a, naive_matmul(x0, gcn.w1));
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = std::max(0.0, hidden[i]);
  Tensor want = naive_matmul(a, naive_matmul(hidden, gcn.w2));
  ad::Tape tape;
  std::vector<ad::Var> leaves{tape.leaf(gcn.w1), tape.leaf(gcn.w2)};
  EXPECT_LE(max_abs_diff(collab_gcn_forward(tape.constant(x0), 4, kEdges, leaves).value(), want), 1e-12);
  auto r = tu::check_gradients(gcn.tensors(), [&](ad::Tape& t, const std::vector<ad::Var>& v) {
    return ad::inner_const(collab_gcn_forward(t.constant(x0), 4, kEdges, v), random_tensor({4, 3}, 4));
  });
  EXPECT_LE(r.max_rel_error, 1e-6);
}

TEST(Knn, CosineSimilarity) {
  const std::vector<double> a{1, 0}, b{0, 2}, c{3, 0}, z{0, 0};
  EXPECT_DOUBLE_EQ(cosine_similarity(a, c), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_EQ(cosine_similarity(a, z), 0.0);
  EXPECT_EQ(cosine_similarity(z, z), 0.0);
}

TEST(Knn, MatchesBruteForceRanking) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 9, k = 1 + seed % 4;
    Tensor x = random_tensor({n, 5}, 200 + seed);
    std::set<Edge> want;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::pair<double, std::size_t>> ranked;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double dot = 0, ni = 0, nj = 0;
        for (std::size_t c = 0; c < 5; ++c) {
          dot += x(i, c) * x(j, c);
          ni += x(i, c) * x(i, c);
          nj += x(j, c) * x(j, c);
        }
        ranked.push_back({-dot / std::sqrt(ni * nj), j});
      }
      std::sort(ranked.begin(), ranked.end());
      for (std::size_t t = 0; t < k; ++t) want.insert({std::min(i, ranked[t].second), std::max(i, ranked[t].second)});
    }
    CollaborationGraph g = knn_graph(x, k);
    EXPECT_EQ(g.edges, std::vector<Edge>(want.begin(), want.end())) << "seed " << seed;
    EXPECT_EQ(g.x0, x);
    // every node has degree >= k
    std::vector<std::size_t> deg(n, 0);
    for (const Edge& e : g.edges) ++deg[e.u], ++deg[e.v];
    for (std::size_t v : deg) EXPECT_GE(v, k);
  }
}

TEST(Knn, TiesGoToLowerIndexAndErrors) {
  Tensor x = Tensor::from_rows({{1, 0}, {1, 0}, {1, 0}, {0, 1}});
  CollaborationGraph g = knn_graph(x, 1);
  // 0 -> 1, 1 -> 0, 2 -> 0, 3 -> 0 (all others orthogonal, tie to lowest)
  EXPECT_EQ(g.edges, (std::vector<Edge>{{0, 1}, {0, 2}, {0, 3}}));
  EXPECT_THROW(knn_graph(x, 0), std::invalid_argument);
  EXPECT_THROW(knn_graph(x, 4), std::invalid_argument);
  EXPECT_THROW(knn_graph(Tensor::matrix(1, 2, 1.0), 1), std::invalid_argument);
}

TEST(Knn, AttachNodeKeepsExistingEdges) {
  Tensor x = Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}});
  CollaborationGraph g = knn_graph(x, 1);
  CollaborationGraph a = attach_node(g, Tensor::vector({2, 0.1}), 2);
  EXPECT_EQ(a.num_nodes, 4u);
  EXPECT_EQ(a.x0.rows(), 4u);
  EXPECT_EQ(a.x0(3, 0), 2.0);
  for (const Edge& e : g.edges) EXPECT_TRUE(std::find(a.edges.begin(), a.edges.end(), e) != a.edges.end());
  EXPECT_TRUE(std::find(a.edges.begin(), a.edges.end(), Edge{0, 3}) != a.edges.end());
  EXPECT_TRUE(std::find(a.edges.begin(), a.edges.end(), Edge{2, 3}) != a.edges.end());
  EXPECT_EQ(a.edges.size(), g.edges.size() + 2);
  EXPECT_THROW(attach_node(g, Tensor::vector({1, 2, 3}), 1), ShapeError);
}

TEST(Knn, DefaultK) {
  EXPECT_EQ(default_knn_k(2), 1u);
  EXPECT_EQ(default_knn_k(8), 3u);
  EXPECT_EQ(default_knn_k(10), 4u);
  EXPECT_EQ(default_knn_k(3), 2u);
  EXPECT_EQ(default_knn_k(1), 1u);
}
