#pragma once

// Client side: two-layer GCN, local training, graph-level embedding.

#include <cstdint>
#include <memory>
#include <vector>

#include "fedsheaf/autodiff.hpp"
#include "fedsheaf/graph.hpp"
#include "fedsheaf/kernels.hpp"
#include "fedsheaf/optim.hpp"
#include "fedsheaf/random.hpp"

namespace fedsheaf {

/// Parameters of a two-layer GCN. The backbone is layer 1 (weight f x h and
/// bias h), the head is layer 2 (weight h x C and bias C).
///
/// Flat packing order: weight row-major, then bias. pack/unpack are exact
/// inverses.
struct ClientParams {
  Tensor w1;  // f x h
  Tensor b1;  // h
  Tensor w2;  // h x C
  Tensor b2;  // C

  std::size_t feature_dim() const { return w1.rows(); }
  std::size_t hidden_dim() const { return w1.cols(); }
  std::size_t num_classes() const { return w2.cols(); }

  Tensor pack_backbone() const;
  Tensor pack_head() const;
  void unpack_backbone(const Tensor& flat);
  void unpack_head(const Tensor& flat);

  /// Parameter tensors in optimizer order: w1, b1, w2, b2.
  std::vector<Tensor> tensors() const { return {w1, b1, w2, b2}; }
  void assign(const std::vector<Tensor>& ts);

  bool operator==(const ClientParams&) const = default;
};

std::size_t backbone_size(std::size_t feature_dim, std::size_t hidden_dim);
std::size_t head_size(std::size_t hidden_dim, std::size_t num_classes);

/// Glorot-uniform weights, zero biases.
ClientParams init_client_params(std::size_t feature_dim, std::size_t hidden_dim,
                                std::size_t num_classes, Rng& rng);

/// D^-1/2 (A + I) D^-1/2 of the shard graph.
std::shared_ptr<const kernels::CsrMatrix> normalized_adjacency(const Graph& g);

struct GcnOutput {
  Tensor hidden;  // n x h, post-ReLU layer-1 embeddings
  Tensor logits;  // n x C
};

/// Tape variables of a GCN forward pass.
struct GcnVars {
  ad::Var w1, b1, w2, b2;
  ad::Var hidden;
  ad::Var logits;
};

/// Records the GCN on `tape`. Parameters become leaves. `feature_mask`, if
/// non-empty, multiplies the input features (inverted dropout).
GcnVars gcn_forward(ad::Tape& tape, const std::shared_ptr<const kernels::CsrMatrix>& adjacency,
                    const Tensor& features, const ClientParams& params,
                    const Tensor& feature_mask = Tensor());

GcnOutput gcn_forward(const GraphShard& shard, const ClientParams& params);

/// Graph-level embedding: mean over rows of the node embeddings.
Tensor mean_pool(const Tensor& hidden);

/// Fraction of `rows` whose argmax logit (lowest index on ties) equals the label.
double accuracy(const Tensor& logits, const std::vector<int>& labels,
                const std::vector<std::size_t>& rows);

struct LocalTrainOptions {
  std::size_t epochs = 1;
  double learning_rate = 0.01;
  double dropout = 0.0;          // input-feature dropout during training
  bool head_only = false;        // freeze the backbone
  std::uint64_t seed = 0;        // dropout stream
  std::uint64_t round = 0;
  double weight_decay = 0.0;     // L2 on every trained tensor
};

struct LocalTrainResult {
  Tensor delta_backbone;          // trained backbone - received backbone
  Tensor embedding;               // graph-level embedding after training
  std::vector<double> losses;     // training loss before each step
};

/// Per-client state held across rounds.
class ClientState {
 public:
  ClientState(GraphShard shard, ClientParams params, OptimizerKind optimizer);

  const GraphShard& shard() const { return shard_; }
  const ClientParams& params() const { return params_; }
  ClientParams& params() { return params_; }
  const Tensor& embedding() const { return embedding_; }
  Optimizer& optimizer() { return optimizer_; }
  const Optimizer& optimizer() const { return optimizer_; }
  const std::shared_ptr<const kernels::CsrMatrix>& adjacency() const { return adjacency_; }

  /// Sets the backbone to `backbone_in`, keeps the head, and runs full-batch
  /// gradient steps on the masked training cross-entropy.
  LocalTrainResult local_train(const Tensor& backbone_in, const LocalTrainOptions& options);

  /// Recomputes and caches the embedding from the current parameters.
  const Tensor& refresh_embedding();

  GcnOutput forward() const;
  double evaluate(const std::vector<std::size_t>& rows) const;
  double loss(const std::vector<std::size_t>& rows) const;

 private:
  GraphShard shard_;
  std::shared_ptr<const kernels::CsrMatrix> adjacency_;
  ClientParams params_;
  Optimizer optimizer_;
  Tensor embedding_;
};

}  // namespace fedsheaf
