#pragma once

// Run configuration: INI-style sections of key = value pairs.
//
//   [run]        seed (required), method, out, threads
//   [data]       source = sbm | planetoid, path, sbm_blocks, sbm_p_in, sbm_p_out,
//                sbm_features, sbm_signal, sbm_noise, sbm_seed
//   [partition]  mode = non_overlapping | overlapping, clients, base_parts,
//                samples_per_part
//   [train]      rounds, local_epochs, client_lr, sheaf_lr, hn_lr, frozen,
//                client_optimizer, server_optimizer, hidden, hn_hidden, stalk_dim,
//                sheaf_layers, sheaf_map_hidden, knn_k, refresh_interval,
//                hn_dropout, client_dropout, checkpoint_interval, client_weight_decay,
//                sheaf_weight_decay, hn_weight_decay
//   [attack]     ratio, kind = same_value | gaussian, tau
//   [new_clients] holdout
//
// Learning rates must be positive unless `frozen = true`, which also permits 0.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "fedsheaf/data.hpp"
#include "fedsheaf/orchestrator.hpp"

namespace fedsheaf {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class DataSource { sbm, planetoid };

enum class Method { fedsheafhn, local, fedavg, ablation };

struct RunConfig {
  DataSource source = DataSource::sbm;
  std::filesystem::path planetoid_dir;
  SbmParams sbm;
  bool sbm_seed_set = false;
  PartitionSpec partition;
  FedConfig fed;
  Method method = Method::fedsheafhn;
  Ablation ablation = Ablation::none;  // used when method == ablation
  std::size_t holdout = 0;             // clients held back for new-clients
  std::size_t checkpoint_interval = 0; // 0 -> refresh_interval
  std::size_t threads = 0;             // 0 -> all available, capped by FSHN_THREADS
  std::filesystem::path out_dir = "out";
};

RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_string(const std::string& text);

/// Accepts fedsheafhn, local, fedavg or ablation:<variant>.
void set_method(RunConfig& config, const std::string& method);
std::string method_name(const RunConfig& config);

/// Loads or generates the graph, partitions it and splits every shard. The
/// last `holdout` shards are the ones reserved for new-client experiments.
struct ShardSet {
  std::vector<GraphShard> trained;
  std::vector<GraphShard> held_out;
};
ShardSet load_shards(const RunConfig& config);

/// Applies a new seed to every seeded component that was not pinned in the file.
void set_seed(RunConfig& config, std::uint64_t seed);

}  // namespace fedsheaf
