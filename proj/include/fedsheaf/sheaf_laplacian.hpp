#pragma once

// Cellular sheaf Laplacian over the collaboration graph.
//
// For an edge e = (u, v) with restriction maps F_u = F_{u<e}, F_v = F_{v<e}
// (d x d each), the Laplacian has
//   block (u,u) += F_u^T F_u,   block (v,v) += F_v^T F_v,
//   block (u,v)  = -F_u^T F_v,  block (v,u)  = -F_v^T F_u.
// The normalized Laplacian is D^-1/2 L D^-1/2 with D the block diagonal of L.

#include <cstddef>
#include <vector>

#include "fedsheaf/graph.hpp"
#include "fedsheaf/tensor.hpp"

namespace fedsheaf {

/// Restriction maps indexed by edge: source[e] = F_{u<e}, target[e] = F_{v<e}
/// for edge e = (u, v), u < v.
struct RestrictionMaps {
  std::size_t stalk_dim = 1;
  std::vector<Tensor> source;
  std::vector<Tensor> target;
};

class SheafLaplacian {
 public:
  SheafLaplacian(std::size_t num_nodes, std::size_t stalk_dim, std::vector<Edge> edges);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t stalk_dim() const { return stalk_dim_; }
  const std::vector<Edge>& edges() const { return edges_; }

  Tensor& diagonal(std::size_t n) { return diagonal_[n]; }
  const Tensor& diagonal(std::size_t n) const { return diagonal_[n]; }
  /// Block (u, v) for edges()[e]; block (v, u) is its transpose.
  Tensor& off_diagonal(std::size_t e) { return off_diagonal_[e]; }
  const Tensor& off_diagonal(std::size_t e) const { return off_diagonal_[e]; }

  /// (N d) x (N d) dense matrix.
  Tensor to_dense() const;
  /// L x for x of shape (N d) x f.
  Tensor apply(const Tensor& x) const;

 private:
  std::size_t num_nodes_;
  std::size_t stalk_dim_;
  std::vector<Edge> edges_;
  std::vector<Tensor> diagonal_;
  std::vector<Tensor> off_diagonal_;
};

SheafLaplacian build_sheaf_laplacian(std::size_t num_nodes, const std::vector<Edge>& edges,
                                     const RestrictionMaps& maps);

inline constexpr double kEigenFloor = 1e-8;

/// D^-1/2 L D^-1/2; each diagonal block's inverse square root comes from its
/// symmetric eigendecomposition with eigenvalues floored at `eps`.
SheafLaplacian normalize(const SheafLaplacian& laplacian, double eps = kEigenFloor);

/// Inverse square root of a symmetric d x d matrix, eigenvalues floored at eps.
Tensor sym_inv_sqrt(const Tensor& block, double eps = kEigenFloor);

/// Gradient of <G, sym_inv_sqrt(A)> with respect to symmetric A.
Tensor sym_inv_sqrt_backward(const Tensor& block, const Tensor& upstream, double eps = kEigenFloor);

}  // namespace fedsheaf
