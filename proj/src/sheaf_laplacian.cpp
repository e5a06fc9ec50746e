#include "fedsheaf/sheaf_laplacian.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace fedsheaf {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat to_eigen(const Tensor& t) {
  Mat m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t(i, j);
  return m;
}

Tensor from_eigen(const Mat& m) {
  Tensor t = Tensor::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return t;
}

Tensor mat_tn(const Tensor& a, const Tensor& b) { return from_eigen(to_eigen(a).transpose() * to_eigen(b)); }

double inv_sqrt_floor(double lambda, double eps) { return 1.0 / std::sqrt(std::max(lambda, eps)); }

}  // namespace

SheafLaplacian::SheafLaplacian(std::size_t num_nodes, std::size_t stalk_dim, std::vector<Edge> edges)
    : num_nodes_(num_nodes),
      stalk_dim_(stalk_dim),
      edges_(std::move(edges)),
      diagonal_(num_nodes, Tensor::matrix(stalk_dim, stalk_dim)),
      off_diagonal_(edges_.size(), Tensor::matrix(stalk_dim, stalk_dim)) {
  for (const Edge& e : edges_) {
    if (e.u >= num_nodes_ || e.v >= num_nodes_ || e.u == e.v) {
      throw std::invalid_argument("sheaf laplacian: invalid edge");
    }
  }
}

Tensor SheafLaplacian::to_dense() const {
  const std::size_t d = stalk_dim_;
  const std::size_t dim = num_nodes_ * d;
  Tensor out = Tensor::matrix(dim, dim);
  for (std::size_t n = 0; n < num_nodes_; ++n)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) out(n * d + i, n * d + j) += diagonal_[n](i, j);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const std::size_t u = edges_[e].u, v = edges_[e].v;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        out(u * d + i, v * d + j) += off_diagonal_[e](i, j);
        out(v * d + j, u * d + i) += off_diagonal_[e](i, j);
      }
  }
  return out;
}

Tensor SheafLaplacian::apply(const Tensor& x) const {
  const std::size_t d = stalk_dim_;
  if (x.rows() != num_nodes_ * d) throw ShapeError("sheaf laplacian apply: row count mismatch");
  const std::size_t f = x.cols();
  Tensor y = Tensor::matrix(x.rows(), f);
  auto block_mul = [&](const Tensor& b, std::size_t out_node, std::size_t in_node, bool transpose) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        const double bik = transpose ? b(k, i) : b(i, k);
        for (std::size_t j = 0; j < f; ++j) y(out_node * d + i, j) += bik * x(in_node * d + k, j);
      }
  };
  for (std::size_t n = 0; n < num_nodes_; ++n) block_mul(diagonal_[n], n, n, false);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    block_mul(off_diagonal_[e], edges_[e].u, edges_[e].v, false);
    block_mul(off_diagonal_[e], edges_[e].v, edges_[e].u, true);
  }
  return y;
}

SheafLaplacian build_sheaf_laplacian(std::size_t num_nodes, const std::vector<Edge>& edges,
                                     const RestrictionMaps& maps) {
  const std::size_t d = maps.stalk_dim;
  if (maps.source.size() != edges.size() || maps.target.size() != edges.size()) {
    throw std::invalid_argument("build_sheaf_laplacian: missing restriction map (" +
                                std::to_string(maps.source.size()) + "/" +
                                std::to_string(maps.target.size()) + " maps for " +
                                std::to_string(edges.size()) + " edges)");
  }
  SheafLaplacian lap(num_nodes, d, edges);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Tensor& fu = maps.source[e];
    const Tensor& fv = maps.target[e];
    if (fu.rows() != d || fu.cols() != d || fv.rows() != d || fv.cols() != d) {
      throw ShapeError("build_sheaf_laplacian: restriction map must be d x d");
    }
    Tensor uu = mat_tn(fu, fu), vv = mat_tn(fv, fv), uv = mat_tn(fu, fv);
    Tensor& du = lap.diagonal(edges[e].u);
    Tensor& dv = lap.diagonal(edges[e].v);
    for (std::size_t i = 0; i < d * d; ++i) {
      du[i] += uu[i];
      dv[i] += vv[i];
      lap.off_diagonal(e)[i] = -uv[i];
    }
  }
  return lap;
}

Tensor sym_inv_sqrt(const Tensor& block, double eps) {
  Eigen::SelfAdjointEigenSolver<Mat> es(to_eigen(block));
  const auto& lam = es.eigenvalues();
  Eigen::VectorXd s(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) s(i) = inv_sqrt_floor(lam(i), eps);
  const Mat& u = es.eigenvectors();
  return from_eigen(u * s.asDiagonal() * u.transpose());
}

Tensor sym_inv_sqrt_backward(const Tensor& block, const Tensor& upstream, double eps) {
  // Daleckii-Krein: dA = U (K o (U^T sym(G) U)) U^T with K the divided
  // differences of f(l) = max(l, eps)^-1/2.
  Eigen::SelfAdjointEigenSolver<Mat> es(to_eigen(block));
  const auto& lam = es.eigenvalues();
  const Mat& u = es.eigenvectors();
  Mat g = to_eigen(upstream);
  g = 0.5 * (g + g.transpose()).eval();
  Mat inner = u.transpose() * g * u;
  const Eigen::Index d = lam.size();
  auto fprime = [eps](double l) { return l > eps ? -0.5 * std::pow(l, -1.5) : 0.0; };
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double li = lam(i), lj = lam(j);
      double k;
      const double scale = std::max({std::abs(li), std::abs(lj), eps});
      if (std::abs(li - lj) > 1e-9 * scale) {
        k = (inv_sqrt_floor(li, eps) - inv_sqrt_floor(lj, eps)) / (li - lj);
      } else {
        k = fprime(0.5 * (li + lj));
      }
      inner(i, j) *= k;
    }
  }
  return from_eigen(u * inner * u.transpose());
}

SheafLaplacian normalize(const SheafLaplacian& laplacian, double eps) {
  const std::size_t n = laplacian.num_nodes();
  std::vector<Tensor> inv_sqrt(n);
  std::vector<Mat> inv_sqrt_m(n);
  for (std::size_t i = 0; i < n; ++i) {
    inv_sqrt[i] = sym_inv_sqrt(laplacian.diagonal(i), eps);
    inv_sqrt_m[i] = to_eigen(inv_sqrt[i]);
  }
  SheafLaplacian out(n, laplacian.stalk_dim(), laplacian.edges());
  for (std::size_t i = 0; i < n; ++i) {
    out.diagonal(i) = from_eigen(inv_sqrt_m[i] * to_eigen(laplacian.diagonal(i)) * inv_sqrt_m[i]);
  }
  for (std::size_t e = 0; e < laplacian.edges().size(); ++e) {
    const Edge& ed = laplacian.edges()[e];
    out.off_diagonal(e) =
        from_eigen(inv_sqrt_m[ed.u] * to_eigen(laplacian.off_diagonal(e)) * inv_sqrt_m[ed.v]);
  }
  return out;
}

}  // namespace fedsheaf
