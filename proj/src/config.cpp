#include "fedsheaf/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fedsheaf {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"seed", "method", "out", "threads"}},
      {"data",
       {"source", "path", "sbm_blocks", "sbm_p_in", "sbm_p_out", "sbm_features", "sbm_signal", "sbm_noise",
        "sbm_seed"}},
      {"partition", {"mode", "clients", "base_parts", "samples_per_part"}},
      {"train",
       {"rounds", "local_epochs", "client_lr", "sheaf_lr", "hn_lr", "frozen", "client_optimizer",
        "server_optimizer", "hidden", "hn_hidden", "stalk_dim", "sheaf_layers", "sheaf_map_hidden", "knn_k",
        "refresh_interval", "hn_dropout", "client_dropout", "checkpoint_interval", "client_weight_decay",
        "sheaf_weight_decay", "hn_weight_decay"}},
      {"attack", {"ratio", "kind", "tau"}},
      {"new_clients", {"holdout"}},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }

  std::string raw(const std::string& key) const { return trim(tree_->get<std::string>(key)); }

  std::string full(const std::string& key) const { return name_ + "." + key; }

  std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback, std::uint64_t min = 0) const {
    if (!has(key)) return fallback;
    const std::string s = raw(key);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
      throw ConfigError(full(key), "expected an integer, got '" + s + "'");
    }
    if (v < 0 || static_cast<std::uint64_t>(v) < min) {
      throw ConfigError(full(key), "must be >= " + std::to_string(min) + ", got " + s);
    }
    return static_cast<std::uint64_t>(v);
  }

  double real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string s = raw(key);
    double v = 0.0;
    std::istringstream in(s);
    in >> v;
    if (s.empty() || in.fail() || !in.eof()) throw ConfigError(full(key), "expected a number, got '" + s + "'");
    if (!std::isfinite(v)) throw ConfigError(full(key), "must be finite");
    return v;
  }

  double real_in(const std::string& key, double fallback, double lo, double hi, bool hi_open = false) const {
    const double v = real(key, fallback);
    if (v < lo || v > hi || (hi_open && v == hi)) {
      std::ostringstream msg;
      msg << "must be in [" << lo << ", " << hi << (hi_open ? ")" : "]") << ", got " << v;
      throw ConfigError(full(key), msg.str());
    }
    return v;
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string s = raw(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(full(key), "expected true or false, got '" + s + "'");
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? raw(key) : fallback;
  }

  template <typename F>
  auto choice(const std::string& key, const std::string& fallback, F parse) const {
    const std::string s = text(key, fallback);
    try {
      return parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(full(key), e.what());
    }
  }

 private:
  std::string name_;
  const pt::ptree* tree_;
};

std::vector<std::size_t> parse_blocks(const Section& sec, const std::string& key) {
  std::vector<std::size_t> out;
  std::istringstream in(sec.raw(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || v == 0) {
      throw ConfigError(sec.full(key), "expected a comma-separated list of positive block sizes");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(sec.full(key), "needs at least one block");
  return out;
}

RunConfig from_tree(const pt::ptree& root) {
  for (const auto& [name, child] : root) {
    auto it = known_keys().find(name);
    if (child.empty() && !child.data().empty()) {
      throw ConfigError(name, "keys must appear inside a [section]");
    }
    if (it == known_keys().end()) throw ConfigError(name, "unknown section");
    for (const auto& [key, value] : child) {
      if (!it->second.count(key)) throw ConfigError(name + "." + key, "unknown key");
    }
  }
  auto section = [&](const std::string& name) {
    auto it = root.find(name);
    return Section(name, it == root.not_found() ? nullptr : &it->second);
  };

  RunConfig c;
  const Section run = section("run");
  if (!run.has("seed")) throw ConfigError("run.seed", "missing required key");
  c.fed.seed = run.unsigned_int("seed", 0);
  set_method(c, run.text("method", "fedsheafhn"));
  c.out_dir = run.text("out", "out");
  c.threads = run.unsigned_int("threads", 0);

  const Section data = section("data");
  const std::string source = data.text("source", "sbm");
  if (source == "sbm") {
    c.source = DataSource::sbm;
  } else if (source == "planetoid") {
    c.source = DataSource::planetoid;
    if (!data.has("path")) throw ConfigError("data.path", "missing required key for source = planetoid");
    c.planetoid_dir = data.raw("path");
  } else {
    throw ConfigError("data.source", "expected sbm or planetoid, got '" + source + "'");
  }
  c.sbm.blocks = data.has("sbm_blocks") ? parse_blocks(data, "sbm_blocks") : std::vector<std::size_t>{60, 60, 60, 60};
  c.sbm.p_in = data.real_in("sbm_p_in", 0.2, 0.0, 1.0);
  c.sbm.p_out = data.real_in("sbm_p_out", 0.02, 0.0, 1.0);
  c.sbm.features = data.unsigned_int("sbm_features", 16, 1);
  c.sbm.feature_signal = data.real("sbm_signal", 1.0);
  c.sbm.feature_noise = data.real_in("sbm_noise", 1.0, 0.0, 1e300);
  c.sbm_seed_set = data.has("sbm_seed");
  c.sbm.seed = data.unsigned_int("sbm_seed", c.fed.seed);

  const Section part = section("partition");
  c.partition.mode = part.choice("mode", "non_overlapping", parse_partition_mode);
  c.partition.num_clients = part.unsigned_int("clients", 10, 1);
  c.partition.base_parts = part.unsigned_int("base_parts", 0);
  c.partition.samples_per_part = part.unsigned_int("samples_per_part", 5, 1);
  c.partition.seed = c.fed.seed;

  const Section train = section("train");
  FedConfig& f = c.fed;
  f.rounds = train.unsigned_int("rounds", 100);
  f.local_epochs = train.unsigned_int("local_epochs", 3, 1);
  const bool frozen = train.boolean("frozen", false);
  auto rate = [&](const std::string& key, double fallback) {
    const double v = train.real(key, fallback);
    if (v < 0.0 || (!frozen && v == 0.0)) {
      throw ConfigError(train.full(key), frozen ? "must be >= 0" : "must be > 0 (set frozen = true to allow 0)");
    }
    return v;
  };
  f.client_lr = rate("client_lr", 0.01);
  f.sheaf_lr = rate("sheaf_lr", 0.001);
  f.hn_lr = rate("hn_lr", 0.01);
  f.client_optimizer = train.choice("client_optimizer", "sgd", parse_optimizer_kind);
  f.server_optimizer = train.choice("server_optimizer", "adam", parse_optimizer_kind);
  f.hidden = train.unsigned_int("hidden", 128, 1);
  f.hn_hidden = train.unsigned_int("hn_hidden", 128, 1);
  f.stalk_dim = train.unsigned_int("stalk_dim", 2, 1);
  if (f.hidden % f.stalk_dim != 0) throw ConfigError("train.stalk_dim", "must divide train.hidden");
  f.sheaf_layers = train.unsigned_int("sheaf_layers", 2);
  f.sheaf_map_hidden = train.unsigned_int("sheaf_map_hidden", 16, 1);
  f.knn_k = train.unsigned_int("knn_k", 0);
  f.refresh_interval = train.unsigned_int("refresh_interval", 5, 1);
  f.hn_dropout = train.real_in("hn_dropout", 0.3, 0.0, 1.0, true);
  f.client_dropout = train.real_in("client_dropout", 0.0, 0.0, 1.0, true);
  f.client_weight_decay = train.real_in("client_weight_decay", 5e-4, 0.0, 1e300);
  f.sheaf_weight_decay = train.real_in("sheaf_weight_decay", 5e-4, 0.0, 1e300);
  f.hn_weight_decay = train.real_in("hn_weight_decay", 0.0, 0.0, 1e300);
  c.checkpoint_interval = train.unsigned_int("checkpoint_interval", 0);

  const Section attack = section("attack");
  f.attack.ratio = attack.real_in("ratio", 0.0, 0.0, 1.0);
  f.attack.kind = attack.choice("kind", "same_value", parse_attack_kind);
  f.attack.tau = attack.real_in("tau", 1.0, 0.0, 1e300);

  const Section fresh = section("new_clients");
  c.holdout = fresh.unsigned_int("holdout", 0);
  if (c.holdout >= c.partition.num_clients) {
    throw ConfigError("new_clients.holdout", "must be smaller than partition.clients");
  }
  return c;
}

}  // namespace

void set_method(RunConfig& config, const std::string& method) {
  const std::string prefix = "ablation:";
  if (method == "fedsheafhn") {
    config.method = Method::fedsheafhn;
    config.ablation = Ablation::none;
  } else if (method == "local") {
    config.method = Method::local;
  } else if (method == "fedavg") {
    config.method = Method::fedavg;
  } else if (method.rfind(prefix, 0) == 0) {
    try {
      config.ablation = parse_ablation(method.substr(prefix.size()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("run.method", e.what());
    }
    config.method = Method::ablation;
  } else {
    throw ConfigError("run.method", "expected fedsheafhn, local, fedavg or ablation:<variant>, got '" + method + "'");
  }
  config.fed.ablation = config.method == Method::ablation ? config.ablation : Ablation::none;
}

std::string method_name(const RunConfig& config) {
  switch (config.method) {
    case Method::fedsheafhn: return "fedsheafhn";
    case Method::local: return "local";
    case Method::fedavg: return "fedavg";
    case Method::ablation: return "ablation:" + to_string(config.ablation);
  }
  return "fedsheafhn";
}

void set_seed(RunConfig& config, std::uint64_t seed) {
  config.fed.seed = seed;
  config.partition.seed = seed;
  if (!config.sbm_seed_set) config.sbm.seed = seed;
}

ShardSet load_shards(const RunConfig& config) {
  Graph g = config.source == DataSource::sbm ? sbm_generate(config.sbm) : load_planetoid(config.planetoid_dir);
  std::vector<GraphShard> shards = split_all(partition(g, config.partition), config.fed.seed);
  ShardSet set;
  const std::size_t keep = shards.size() - std::min(config.holdout, shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) (i < keep ? set.trained : set.held_out).push_back(std::move(shards[i]));
  return set;
}

RunConfig parse_config_string(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("<file>", std::string("parse error: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  return from_tree(tree);
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_string(buf.str());
}

}  // namespace fedsheaf
