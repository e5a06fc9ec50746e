#pragma once

// Federated training loops: FedSheafHN, its ablations, local-only and FedAvg.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsheaf/attack.hpp"
#include "fedsheaf/checkpoint.hpp"
#include "fedsheaf/client.hpp"
#include "fedsheaf/collab_graph.hpp"
#include "fedsheaf/hypernet.hpp"
#include "fedsheaf/optim.hpp"
#include "fedsheaf/sheaf_diffusion.hpp"

namespace fedsheaf {

/// Server-side variants. `none` is the full model; `mean_embedding` replaces
/// every client descriptor with the mean of all received descriptors and is
/// used as a non-graph aggregation baseline in robustness experiments.
enum class Ablation { none, no_sheaf, gcn_collab, no_attention, static_embedding, onehot_hn, mean_embedding };

Ablation parse_ablation(const std::string& name);
std::string to_string(Ablation a);

struct FedConfig {
  std::size_t rounds = 100;             // R
  std::size_t local_epochs = 3;         // T_c
  double client_lr = 0.01;              // gamma
  double sheaf_lr = 0.001;              // alpha
  double hn_lr = 0.01;                  // beta
  double client_weight_decay = 5e-4;
  double sheaf_weight_decay = 5e-4;
  double hn_weight_decay = 0.0;
  OptimizerKind client_optimizer = OptimizerKind::sgd;
  OptimizerKind server_optimizer = OptimizerKind::adam;
  std::size_t hidden = 128;             // h
  std::size_t hn_hidden = 128;
  std::size_t stalk_dim = 2;            // d
  std::size_t sheaf_layers = 2;         // T_s
  std::size_t sheaf_map_hidden = 16;
  std::size_t knn_k = 0;                // 0 -> ceil(log2 N)
  std::size_t refresh_interval = 5;     // r_in
  double hn_dropout = 0.3;
  double client_dropout = 0.0;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::none;
  AttackSpec attack;
  std::size_t threads = 1;              // client workers per round
};

struct ClientMetrics {
  int client_id = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double test_loss = 0.0;
};

struct RoundReport {
  std::size_t round = 0;
  std::vector<ClientMetrics> clients;
  double federated_accuracy = 0.0;      // mean test accuracy over clients
  double federated_val_accuracy = 0.0;
  double accuracy_std = 0.0;            // population std of client test accuracy
  double surrogate_loss = 0.0;
  double sheaf_grad_norm = 0.0;
  double hn_grad_norm = 0.0;
  double wall_seconds = 0.0;

  double server_grad_norm_sq() const { return sheaf_grad_norm * sheaf_grad_norm + hn_grad_norm * hn_grad_norm; }
};

/// Fills federated accuracy and std from the per-client entries.
void summarize(RoundReport& report);

/// Error raised by a training loop, tagged with the round it failed in.
class RunError : public std::runtime_error {
 public:
  RunError(std::size_t round, const std::string& what)
      : std::runtime_error("round " + std::to_string(round) + ": " + what), round_(round) {}
  std::size_t round() const { return round_; }

 private:
  std::size_t round_;
};

struct ServerState {
  SheafStack sheaf;            // theta
  CollabGcn collab_gcn;        // theta for the gcn_collab variant
  HyperNet hypernet;           // phi
  CollaborationGraph graph;    // G_s over the current x0
  Tensor x0;                   // descriptors used this refresh window
  Tensor pending_embeddings;   // latest descriptors received from clients
  std::size_t round = 0;
  Optimizer sheaf_optimizer;
  Optimizer hn_optimizer;
};

struct NewClientResult {
  std::vector<double> test_accuracy;  // per new client
  std::vector<Tensor> backbones;      // generated backbone per new client
  double mean_accuracy = 0.0;
};

/// The FedSheafHN training loop. Construction performs the initial client
/// update that produces the first descriptors; each run_round() is one
/// communication round.
class FedSheafHN {
 public:
  FedSheafHN(std::vector<GraphShard> shards, FedConfig config);

  /// As above, with the server parameters replaced before initialization.
  FedSheafHN(std::vector<GraphShard> shards, FedConfig config, SheafStack sheaf, HyperNet hypernet);

  RoundReport run_round();
  std::vector<RoundReport> run(std::size_t rounds);

  const ServerState& server() const { return server_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const FedConfig& config() const { return config_; }
  std::size_t num_clients() const { return clients_.size(); }
  std::size_t knn_k() const;

  /// Backbones the server would dispatch for the current x0 (no dropout).
  Tensor generate_backbones() const;
  /// Server output for an arbitrary descriptor matrix over `graph` (no dropout).
  Tensor generate_backbones(const CollaborationGraph& graph) const;
  /// Backbone for an extra descriptor attached to the current graph by KNN.
  Tensor generate_for_descriptor(const Tensor& x_new) const;

  /// Adds clients after training with theta and phi frozen. Each new client
  /// trains one round from the mean generated backbone to produce its
  /// descriptor, is attached to the collaboration graph by KNN, receives a
  /// generated backbone and trains its head. Throws std::logic_error if the
  /// server parameters change.
  NewClientResult add_new_clients(std::vector<GraphShard> new_shards);

  Checkpoint snapshot() const;
  void restore(const Checkpoint& ckpt);

 private:
  void initialize();
  bool refresh_round(std::size_t round) const;
  struct ServerForward {
    ad::Var omega;
    std::vector<ad::Var> theta;
    std::vector<ad::Var> phi;
  };
  ServerForward server_forward(ad::Tape& tape, const CollaborationGraph& graph, const Tensor& mask) const;
  Tensor server_input(const Tensor& embeddings) const;
  CollaborationGraph build_graph(const Tensor& x0) const;
  std::vector<LocalTrainResult> train_clients(const Tensor& backbones, std::size_t round);
  RoundReport evaluate_clients(std::size_t round) const;

  FedConfig config_;
  std::vector<ClientState> clients_;
  ServerState server_;
};

std::vector<RoundReport> run_fedsheafhn(std::vector<GraphShard> shards, const FedConfig& config);
std::vector<RoundReport> run_ablation(std::vector<GraphShard> shards, FedConfig config, Ablation variant);
std::vector<RoundReport> run_local_only(std::vector<GraphShard> shards, const FedConfig& config);
std::vector<RoundReport> run_fedavg(std::vector<GraphShard> shards, const FedConfig& config);

/// Node-count weighted mean of client parameters.
ClientParams weighted_average(const std::vector<ClientParams>& params, const std::vector<double>& weights);

/// One-hot client descriptors padded to width `width` (requires N <= width).
Tensor onehot_descriptors(std::size_t num_clients, std::size_t width);

/// Initial client parameters shared by every method for a given seed.
ClientParams initial_client_params(const GraphShard& shard, const FedConfig& config, std::uint64_t stream);

/// Applies split_masks to each shard with a per-client seed.
std::vector<GraphShard> split_all(std::vector<GraphShard> shards, std::uint64_t seed);

}  // namespace fedsheaf
