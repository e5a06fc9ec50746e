#include <random>

#include "fedsheaf/client.hpp"

namespace fedsheaf {

ClientState::ClientState(GraphShard shard, ClientParams params, OptimizerKind optimizer)
    : shard_(std::move(shard)),
      adjacency_(normalized_adjacency(shard_.graph)),
      params_(std::move(params)),
      optimizer_(optimizer, 0.0) {
  if (shard_.graph.feature_dim() != params_.feature_dim()) {
    throw ShapeError("client " + std::to_string(shard_.client_id) + ": feature dimension mismatch");
  }
}

GcnOutput ClientState::forward() const {
  ad::Tape tape;
  auto v = gcn_forward(tape, adjacency_, shard_.graph.features(), params_);
  return {v.hidden.value(), v.logits.value()};
}

const Tensor& ClientState::refresh_embedding() {
  embedding_ = mean_pool(forward().hidden);
  return embedding_;
}

double ClientState::evaluate(const std::vector<std::size_t>& rows) const {
  if (rows.empty()) throw std::invalid_argument("evaluate: empty mask");
  return accuracy(forward().logits, shard_.graph.labels(), rows);
}

double ClientState::loss(const std::vector<std::size_t>& rows) const {
  ad::Tape tape;
  auto v = gcn_forward(tape, adjacency_, shard_.graph.features(), params_);
  return ad::masked_cross_entropy(v.logits, shard_.graph.labels(), rows).value()[0];
}

LocalTrainResult ClientState::local_train(const Tensor& backbone_in, const LocalTrainOptions& options) {
  if (options.epochs == 0) throw std::invalid_argument("local_train: epochs must be >= 1");
  if (shard_.train.empty()) {
    throw std::invalid_argument("local_train: client " + std::to_string(shard_.client_id) +
                                " has an empty train mask");
  }
  params_.unpack_backbone(backbone_in);
  optimizer_.set_learning_rate(options.learning_rate);
  optimizer_.set_weight_decay(options.weight_decay);
  Optimizer head_optimizer(optimizer_.kind(), options.learning_rate, options.weight_decay);

  const Graph& g = shard_.graph;
  LocalTrainResult result;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    Tensor mask;
    if (options.dropout > 0.0) {
      Rng rng = make_rng(options.seed, {tag(Stream::dropout), options.round,
                                        static_cast<std::uint64_t>(shard_.client_id), epoch});
      std::bernoulli_distribution keep(1.0 - options.dropout);
      mask = Tensor(g.features().shape());
      const double inv = 1.0 / (1.0 - options.dropout);
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? inv : 0.0;
    }
    ad::Tape tape;
    auto v = gcn_forward(tape, adjacency_, g.features(), params_, mask);
    auto loss = ad::masked_cross_entropy(v.logits, g.labels(), shard_.train);
    result.losses.push_back(loss.value()[0]);
    tape.backward(loss);
    if (options.head_only) {
      std::vector<Tensor> head{params_.w2, params_.b2};
      head_optimizer.step(head, {tape.grad(v.w2), tape.grad(v.b2)});
      params_.w2 = std::move(head[0]);
      params_.b2 = std::move(head[1]);
    } else {
      std::vector<Tensor> ts = params_.tensors();
      optimizer_.step(ts, {tape.grad(v.w1), tape.grad(v.b1), tape.grad(v.w2), tape.grad(v.b2)});
      params_.assign(ts);
    }
  }

  Tensor trained = params_.pack_backbone();
  result.delta_backbone = Tensor(trained.shape());
  for (std::size_t i = 0; i < trained.size(); ++i) result.delta_backbone[i] = trained[i] - backbone_in[i];
  result.embedding = refresh_embedding();
  return result;
}

}  // namespace fedsheaf
