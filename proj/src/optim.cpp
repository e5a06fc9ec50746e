#include "fedsheaf/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace fedsheaf {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

Optimizer::Optimizer(OptimizerKind kind, double lr, double weight_decay)
    : kind_(kind), lr_(lr), weight_decay_(weight_decay) {}

void Optimizer::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: param/grad count mismatch");
  ++steps_;
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (params[p].size() != grads[p].size()) throw ShapeError("optimizer: grad shape mismatch");
      for (std::size_t i = 0; i < params[p].size(); ++i) params[p][i] -= lr_ * (grads[p][i] + weight_decay_ * params[p][i]);
    }
    return;
  }
  if (m_.empty()) {
    for (const Tensor& p : params) {
      m_.emplace_back(p.shape(), 0.0);
      v_.emplace_back(p.shape(), 0.0);
    }
  }
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].size() != grads[p].size()) throw ShapeError("optimizer: grad shape mismatch");
    Tensor& m = m_[p];
    Tensor& v = v_[p];
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double g = grads[p][i] + weight_decay_ * params[p][i];
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
      params[p][i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
    }
  }
}

}  // namespace fedsheaf
