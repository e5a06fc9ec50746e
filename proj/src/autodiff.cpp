#include "fedsheaf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace fedsheaf::ad {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::leaf(Tensor value) {
  require_finite(value, "leaf");
  nodes_.push_back(Node{"leaf", std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  require_finite(value, "constant");
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
                 BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("non-finite forward value in op " + std::string(op));
  bool needs = false;
  for (std::size_t id : inputs) needs = needs || nodes_.at(id).requires_grad;
  nodes_.push_back(
      Node{std::string(op), std::move(value), std::move(inputs), std::move(backward), needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& slot = grads_[id];
  if (slot.size() == 0 && slot.rank() == 0) {
    slot = g.reshaped(nodes_[id].value.shape());
    return;
  }
  if (slot.size() != g.size()) throw ShapeError("gradient size mismatch in accumulate");
  auto dst = slot.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
  const Tensor& root = nodes_[loss.id()].value;
  if (root.size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + root.shape_string());
  }
  grads_.assign(nodes_.size(), Tensor());
  if (!nodes_[loss.id()].requires_grad) return;
  grads_[loss.id()] = Tensor(root.shape(), 1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward) continue;
    if (grads_[id].rank() == 0) continue;
    require_finite(grads_[id], node.op.c_str());
    node.backward(grads_[id], *this);
  }
  for (const Tensor& g : grads_) require_finite(g, "gradient");
}

Tensor Tape::grad(Var v) const {
  if (v.id() < grads_.size() && grads_[v.id()].rank() != 0) return grads_[v.id()];
  return Tensor(nodes_[v.id()].value.shape(), 0.0);
}

namespace {

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree " + a.shape_string() + " * " +
                     b.shape_string());
  }
  Tensor c = Tensor::matrix(m, n);
  kernels::gemm(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

// a^T b with a[k x m], b[k x n]
Tensor matmul_tn_values(const Tensor& a, const Tensor& b) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Tensor c = Tensor::matrix(m, n);
  kernels::gemm_tn(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

// a b^T with a[m x k], b[n x k]
Tensor matmul_nt_values(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor c = Tensor::matrix(m, n);
  kernels::gemm_nt(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

template <typename F>
Tensor map_values(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Pointwise unary op whose derivative depends on the input value and output value.
template <typename F, typename DF>
Var unary(std::string_view name, Var a, F f, DF df) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  Tensor out = map_values(a.value(), f);
  const std::size_t io = t.size();
  return t.record(name, std::move(out), {ia}, [ia, io, df](const Tensor& g, Tape& tape) {
    const Tensor& x = tape.value(ia);
    const Tensor& y = tape.value(io);
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = g[i] * df(x[i], y[i]);
    tape.accumulate(ia, gx);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  Tensor c = matmul_values(a.value(), b.value());
  return t.record("matmul", std::move(c), {ia, ib}, [ia, ib](const Tensor& g, Tape& tape) {
    if (tape.requires_grad(ia)) tape.accumulate(ia, matmul_nt_values(g, tape.value(ib)));
    if (tape.requires_grad(ib)) tape.accumulate(ib, matmul_tn_values(tape.value(ia), g));
  });
}

Var transpose(Var a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.record("transpose", a.value().transposed(), {ia},
                  [ia](const Tensor& g, Tape& tape) { tape.accumulate(ia, g.transposed()); });
}

Var spmm(std::shared_ptr<const kernels::CsrMatrix> a, Var x) {
  Tape& t = x.tape();
  const std::size_t ix = x.id();
  const Tensor& xv = x.value();
  if (a->cols != xv.rows()) throw ShapeError("spmm: sparse cols != dense rows");
  const std::size_t f = xv.cols();
  Tensor y = Tensor::matrix(a->rows, f);
  kernels::spmm(*a, xv.data(), y.data(), f);
  return t.record("spmm", std::move(y), {ix}, [a, ix, f](const Tensor& g, Tape& tape) {
    // A^T g, accumulated column-wise through the CSR structure.
    Tensor gx = Tensor::matrix(a->cols, f);
    for (std::size_t i = 0; i < a->rows; ++i) {
      for (std::size_t q = a->row_ptr[i]; q < a->row_ptr[i + 1]; ++q) {
        const double v = a->values[q];
        const std::size_t c = a->col_idx[q];
        for (std::size_t j = 0; j < f; ++j) gx(c, j) += v * g(i, j);
      }
    }
    tape.accumulate(ix, gx);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return t.record("add", std::move(out), {ia, ib}, [ia, ib](const Tensor& g, Tape& tape) {
    tape.accumulate(ia, g);
    tape.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return t.record("sub", std::move(out), {ia, ib}, [ia, ib](const Tensor& g, Tape& tape) {
    tape.accumulate(ia, g);
    if (tape.requires_grad(ib)) {
      Tensor neg = g;
      for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
      tape.accumulate(ib, neg);
    }
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "hadamard");
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.record("hadamard", std::move(out), {ia, ib}, [ia, ib](const Tensor& g, Tape& tape) {
    const Tensor& av = tape.value(ia);
    const Tensor& bv = tape.value(ib);
    if (tape.requires_grad(ia)) {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv[i];
      tape.accumulate(ia, ga);
    }
    if (tape.requires_grad(ib)) {
      Tensor gb(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av[i];
      tape.accumulate(ib, gb);
    }
  });
}

Var scale(Var a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var elu(Var a) {
  return unary(
      "elu", a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var row_softmax(Var a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out(av.shape());
  kernels::row_softmax(av.data(), out.data(), m, n);
  const std::size_t io = t.size();
  return t.record("row_softmax", std::move(out), {ia}, [ia, io, m, n](const Tensor& g, Tape& tape) {
    const Tensor& y = tape.value(io);
    Tensor gx(y.shape());
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] = y[i * n + j] * (g[i * n + j] - dot);
    }
    tape.accumulate(ia, gx);
  });
}

Var add_row_bias(Var a, Var bias) {
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (bv.size() != n) throw ShapeError("add_row_bias: bias length != columns");
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = bias.id();
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += bv[j];
  return t.record("add_row_bias", std::move(out), {ia, ib}, [ia, ib, m, n](const Tensor& g, Tape& tape) {
    tape.accumulate(ia, g);
    if (tape.requires_grad(ib)) {
      Tensor gb({n}, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      tape.accumulate(ib, gb);
    }
  });
}

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (m == 0) throw ShapeError("mean_rows: no rows");
  Tensor out({n}, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av(i, j);
  for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.record("mean_rows", std::move(out), {ia}, [ia, m, n](const Tensor& g, Tape& tape) {
    Tensor gx = Tensor::matrix(m, n);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx(i, j) = g[j] * inv;
    tape.accumulate(ia, gx);
  });
}

Var gather_rows(Var a, std::vector<std::size_t> rows) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = Tensor::matrix(rows.size(), n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m) throw ShapeError("gather_rows: index out of range");
    for (std::size_t j = 0; j < n; ++j) out(r, j) = av(rows[r], j);
  }
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.record("gather_rows", std::move(out), {ia},
                  [ia, m, n, rows = std::move(rows)](const Tensor& g, Tape& tape) {
                    Tensor gx = Tensor::matrix(m, n);
                    for (std::size_t r = 0; r < rows.size(); ++r)
                      for (std::size_t j = 0; j < n; ++j) gx(rows[r], j) += g(r, j);
                    tape.accumulate(ia, gx);
                  });
}

Var hconcat(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows();
  if (bv.rows() != m) throw ShapeError("hconcat: row counts differ");
  const std::size_t na = av.cols(), nb = bv.cols();
  Tensor out = Tensor::matrix(m, na + nb);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < na; ++j) out(i, j) = av(i, j);
    for (std::size_t j = 0; j < nb; ++j) out(i, na + j) = bv(i, j);
  }
  Tape& t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("hconcat", std::move(out), {ia, ib}, [ia, ib, m, na, nb](const Tensor& g, Tape& tape) {
    Tensor ga = Tensor::matrix(m, na);
    Tensor gb = Tensor::matrix(m, nb);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < na; ++j) ga(i, j) = g(i, j);
      for (std::size_t j = 0; j < nb; ++j) gb(i, j) = g(i, na + j);
    }
    tape.accumulate(ia, ga);
    tape.accumulate(ib, gb);
  });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  Tensor out = a.value().reshaped(std::move(shape));
  return t.record("reshape", std::move(out), {ia},
                  [ia](const Tensor& g, Tape& tape) { tape.accumulate(ia, g); });
}

Var block_left_mul(Var w, Var x) {
  const Tensor& wv = w.value();
  const Tensor& xv = x.value();
  const std::size_t d = wv.rows();
  if (wv.cols() != d) throw ShapeError("block_left_mul: w must be square");
  const std::size_t rows = xv.rows(), f = xv.cols();
  if (d == 0 || rows % d != 0) throw ShapeError("block_left_mul: rows not divisible by block size");
  const std::size_t blocks = rows / d;
  Tensor out = Tensor::matrix(rows, f);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        const double wik = wv(i, k);
        for (std::size_t j = 0; j < f; ++j) out(b * d + i, j) += wik * xv(b * d + k, j);
      }
  Tape& t = w.tape();
  const std::size_t iw = w.id(), ix = x.id();
  return t.record("block_left_mul", std::move(out), {iw, ix},
                  [iw, ix, d, blocks, f](const Tensor& g, Tape& tape) {
                    const Tensor& wv = tape.value(iw);
                    const Tensor& xv = tape.value(ix);
                    if (tape.requires_grad(iw)) {
                      Tensor gw = Tensor::matrix(d, d);
                      for (std::size_t b = 0; b < blocks; ++b)
                        for (std::size_t i = 0; i < d; ++i)
                          for (std::size_t k = 0; k < d; ++k) {
                            double s = 0.0;
                            for (std::size_t j = 0; j < f; ++j) s += g(b * d + i, j) * xv(b * d + k, j);
                            gw(i, k) += s;
                          }
                      tape.accumulate(iw, gw);
                    }
                    if (tape.requires_grad(ix)) {
                      Tensor gx = Tensor::matrix(blocks * d, f);
                      for (std::size_t b = 0; b < blocks; ++b)
                        for (std::size_t i = 0; i < d; ++i)
                          for (std::size_t k = 0; k < d; ++k) {
                            const double wik = wv(i, k);
                            for (std::size_t j = 0; j < f; ++j) gx(b * d + k, j) += wik * g(b * d + i, j);
                          }
                      tape.accumulate(ix, gx);
                    }
                  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.record("sum", Tensor({1}, s), {ia}, [ia](const Tensor& g, Tape& tape) {
    tape.accumulate(ia, Tensor(tape.value(ia).shape(), g[0]));
  });
}

Var inner_const(Var a, const Tensor& c) {
  require_same_shape(a.value(), c, "inner_const");
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  const double s = frobenius_inner(a.value(), c);
  return t.record("inner_const", Tensor({1}, s), {ia}, [ia, c](const Tensor& g, Tape& tape) {
    if (g[0] == 1.0) {
      tape.accumulate(ia, c);
      return;
    }
    Tensor gc = c;
    for (std::size_t i = 0; i < gc.size(); ++i) gc[i] *= g[0];
    tape.accumulate(ia, gc);
  });
}

Var masked_cross_entropy(Var logits, std::vector<int> labels, std::vector<std::size_t> rows) {
  const Tensor& z = logits.value();
  const std::size_t m = z.rows(), c = z.cols();
  if (labels.size() != m) throw ShapeError("masked_cross_entropy: label count != rows");
  if (rows.empty()) throw std::invalid_argument("masked_cross_entropy: empty mask");
  Tensor probs = Tensor::matrix(rows.size(), c);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    if (i >= m) throw ShapeError("masked_cross_entropy: row out of range");
    const auto label = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || label >= c) throw std::invalid_argument("masked_cross_entropy: bad label");
    double mx = z(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z(i, j));
    double zsum = 0.0;
    for (std::size_t j = 0; j < c; ++j) zsum += std::exp(z(i, j) - mx);
    for (std::size_t j = 0; j < c; ++j) probs(r, j) = std::exp(z(i, j) - mx) / zsum;
    loss += mx + std::log(zsum) - z(i, label);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  Tape& t = logits.tape();
  const std::size_t il = logits.id();
  return t.record("masked_cross_entropy", Tensor({1}, loss * inv), {il},
                  [il, m, c, inv, probs = std::move(probs), labels = std::move(labels),
                   rows = std::move(rows)](const Tensor& g, Tape& tape) {
                    Tensor gz = Tensor::matrix(m, c);
                    for (std::size_t r = 0; r < rows.size(); ++r) {
                      const std::size_t i = rows[r];
                      for (std::size_t j = 0; j < c; ++j) gz(i, j) += g[0] * inv * probs(r, j);
                      gz(i, static_cast<std::size_t>(labels[i])) -= g[0] * inv;
                    }
                    tape.accumulate(il, gz);
                  });
}

}  // namespace fedsheaf::ad
