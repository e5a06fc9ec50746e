#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsheaf/tensor.hpp"

namespace fedsheaf {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

/// First-order optimizer over a fixed list of parameter tensors.
///
/// SGD applies p -= lr * g. With weight decay wd the gradient becomes
/// g + wd * p before either rule (L2 penalty, not decoupled). Adam uses the usual bias-corrected moment
/// estimates (beta1 = 0.9, beta2 = 0.999, eps = 1e-8). The moment buffers are
/// exposed so checkpoints can restore a run exactly.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double lr, double weight_decay = 0.0);

  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  double weight_decay() const { return weight_decay_; }
  void set_weight_decay(double wd) { weight_decay_ = wd; }
  std::int64_t steps() const { return steps_; }

  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  OptimizerKind kind_ = OptimizerKind::sgd;
  double lr_ = 0.0;
  double weight_decay_ = 0.0;
  std::int64_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace fedsheaf
