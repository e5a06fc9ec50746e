#include "fedsheaf/orchestrator.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>

#include "fedsheaf/data.hpp"

namespace fedsheaf {

namespace {

// Round tag for the client update that runs before round 0.
constexpr std::uint64_t kInitRound = std::numeric_limits<std::uint64_t>::max();

bool uses_sheaf(Ablation a) {
  return a == Ablation::none || a == Ablation::static_embedding || a == Ablation::no_attention;
}

// Runs fn(i) for every client, optionally on several OpenMP threads. The
// first failing client (by index) is rethrown after all workers finish.
void for_each_client(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  const int workers = static_cast<int>(std::max<std::size_t>(1, std::min(threads, n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
#pragma omp parallel for num_threads(workers) schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw std::runtime_error("client " + std::to_string(i) + ": " + e.what());
    }
  }
}

double squared_norm(const std::vector<Tensor>& ts) {
  double s = 0.0;
  for (const auto& t : ts)
    for (double v : t.data()) s += v * v;
  return s;
}

double mean_nll(const Tensor& logits, const std::vector<int>& labels, const std::vector<std::size_t>& rows) {
  const std::size_t c = logits.cols();
  double total = 0.0;
  for (std::size_t r : rows) {
    double mx = logits(r, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits(r, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(logits(r, j) - mx);
    total += mx + std::log(z) - logits(r, static_cast<std::size_t>(labels[r]));
  }
  return total / static_cast<double>(rows.size());
}

ClientMetrics measure(const ClientState& c) {
  const GcnOutput out = c.forward();
  const auto& labels = c.shard().graph.labels();
  ClientMetrics m;
  m.client_id = c.shard().client_id;
  m.train_accuracy = accuracy(out.logits, labels, c.shard().train);
  m.val_accuracy = accuracy(out.logits, labels, c.shard().val);
  m.test_accuracy = accuracy(out.logits, labels, c.shard().test);
  m.train_loss = mean_nll(out.logits, labels, c.shard().train);
  m.val_loss = mean_nll(out.logits, labels, c.shard().val);
  m.test_loss = mean_nll(out.logits, labels, c.shard().test);
  return m;
}

RoundReport measure_all(const std::vector<ClientState>& clients, std::size_t round) {
  RoundReport report;
  report.round = round;
  for (const auto& c : clients) report.clients.push_back(measure(c));
  summarize(report);
  return report;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  const std::size_t w = rows.front().size();
  Tensor out({rows.size(), w});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != w) throw ShapeError("stack_rows: ragged rows");
    std::copy(rows[i].data().begin(), rows[i].data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * w));
  }
  return out;
}

Tensor column_mean(const Tensor& x) {
  Tensor m({x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) m[j] += x(i, j);
  for (std::size_t j = 0; j < x.cols(); ++j) m[j] /= static_cast<double>(x.rows());
  return m;
}

void check_shards(const std::vector<GraphShard>& shards) {
  if (shards.empty()) throw std::invalid_argument("no client shards");
  const std::size_t f = shards.front().graph.feature_dim();
  const std::size_t c = shards.front().graph.num_classes();
  for (const auto& s : shards) {
    if (s.graph.feature_dim() != f) throw ShapeError("client shards disagree on feature dimension");
    if (s.graph.num_classes() != c) throw ShapeError("client shards disagree on class count");
    if (s.train.empty() || s.test.empty()) {
      throw std::invalid_argument("client " + std::to_string(s.client_id) + " has no train/test split");
    }
  }
}

void check_config(const FedConfig& c) {
  if (c.local_epochs == 0) throw std::invalid_argument("local_epochs must be >= 1");
  if (c.hidden == 0 || c.stalk_dim == 0 || c.hidden % c.stalk_dim != 0) {
    throw std::invalid_argument("hidden must be a positive multiple of stalk_dim");
  }
  if (c.refresh_interval == 0) throw std::invalid_argument("refresh_interval must be >= 1");
  if (c.client_lr < 0 || c.sheaf_lr < 0 || c.hn_lr < 0) throw std::invalid_argument("learning rates must be >= 0");
  if (!(c.hn_dropout >= 0.0 && c.hn_dropout < 1.0)) throw std::invalid_argument("hn_dropout must be in [0, 1)");
  if (!(c.client_dropout >= 0.0 && c.client_dropout < 1.0)) {
    throw std::invalid_argument("client_dropout must be in [0, 1)");
  }
}

void save_optimizer(Checkpoint& ck, const std::string& prefix, const Optimizer& opt) {
  ck.put_scalar(prefix + "/steps", static_cast<double>(opt.steps()));
  ck.put_scalar(prefix + "/count", static_cast<double>(opt.first_moments().size()));
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    ck.put(prefix + "/m/" + std::to_string(i), opt.first_moments()[i]);
    ck.put(prefix + "/v/" + std::to_string(i), opt.second_moments()[i]);
  }
}

void load_optimizer(const Checkpoint& ck, const std::string& prefix, Optimizer& opt) {
  opt.set_steps(static_cast<std::int64_t>(ck.get_scalar(prefix + "/steps")));
  const auto count = static_cast<std::size_t>(ck.get_scalar(prefix + "/count"));
  opt.first_moments().clear();
  opt.second_moments().clear();
  for (std::size_t i = 0; i < count; ++i) {
    opt.first_moments().push_back(ck.get(prefix + "/m/" + std::to_string(i)));
    opt.second_moments().push_back(ck.get(prefix + "/v/" + std::to_string(i)));
  }
}

void save_tensors(Checkpoint& ck, const std::string& prefix, const std::vector<Tensor>& ts) {
  for (std::size_t i = 0; i < ts.size(); ++i) ck.put(prefix + "/" + std::to_string(i), ts[i]);
}

std::vector<Tensor> load_tensors(const Checkpoint& ck, const std::string& prefix, const std::vector<Tensor>& like) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < like.size(); ++i) {
    Tensor t = ck.get(prefix + "/" + std::to_string(i));
    if (!t.same_shape(like[i])) {
      throw CheckpointError("checkpoint: '" + prefix + "/" + std::to_string(i) + "' has shape " + t.shape_string() +
                            ", expected " + like[i].shape_string());
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<ClientState> make_clients(std::vector<GraphShard>& shards, const FedConfig& config) {
  std::vector<ClientState> clients;
  clients.reserve(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    ClientParams p = initial_client_params(shards[i], config, i);
    clients.emplace_back(std::move(shards[i]), std::move(p), config.client_optimizer);
  }
  return clients;
}

LocalTrainOptions train_options(const FedConfig& config, std::uint64_t round) {
  LocalTrainOptions o;
  o.epochs = config.local_epochs;
  o.learning_rate = config.client_lr;
  o.dropout = config.client_dropout;
  o.seed = config.seed;
  o.round = round;
  o.weight_decay = config.client_weight_decay;
  return o;
}

}  // namespace

Ablation parse_ablation(const std::string& name) {
  if (name == "none") return Ablation::none;
  if (name == "no_sheaf") return Ablation::no_sheaf;
  if (name == "gcn_collab") return Ablation::gcn_collab;
  if (name == "no_attention") return Ablation::no_attention;
  if (name == "static_embedding") return Ablation::static_embedding;
  if (name == "onehot_hn") return Ablation::onehot_hn;
  if (name == "mean_embedding") return Ablation::mean_embedding;
  throw std::invalid_argument("unknown ablation variant '" + name + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_sheaf: return "no_sheaf";
    case Ablation::gcn_collab: return "gcn_collab";
    case Ablation::no_attention: return "no_attention";
    case Ablation::static_embedding: return "static_embedding";
    case Ablation::onehot_hn: return "onehot_hn";
    case Ablation::mean_embedding: return "mean_embedding";
  }
  return "none";
}

void summarize(RoundReport& report) {
  const auto n = static_cast<double>(report.clients.size());
  if (report.clients.empty()) {
    report.federated_accuracy = report.federated_val_accuracy = report.accuracy_std = 0.0;
    return;
  }
  double test = 0.0, val = 0.0;
  for (const auto& c : report.clients) {
    test += c.test_accuracy;
    val += c.val_accuracy;
  }
  report.federated_accuracy = test / n;
  report.federated_val_accuracy = val / n;
  double var = 0.0;
  for (const auto& c : report.clients) var += (c.test_accuracy - report.federated_accuracy) * (c.test_accuracy - report.federated_accuracy);
  report.accuracy_std = std::sqrt(var / n);
}

ClientParams initial_client_params(const GraphShard& shard, const FedConfig& config, std::uint64_t stream) {
  Rng rng = make_rng(config.seed, {tag(Stream::client_init), stream});
  return init_client_params(shard.graph.feature_dim(), config.hidden, shard.graph.num_classes(), rng);
}

std::vector<GraphShard> split_all(std::vector<GraphShard> shards, std::uint64_t seed) {
  for (std::size_t i = 0; i < shards.size(); ++i) {
    const std::uint64_t s = make_rng(seed, {tag(Stream::split), i})();
    shards[i] = split_masks(std::move(shards[i]), s);
  }
  return shards;
}

Tensor onehot_descriptors(std::size_t num_clients, std::size_t width) {
  if (num_clients > width) {
    throw std::invalid_argument("onehot descriptors need num_clients <= hidden (" + std::to_string(num_clients) +
                                " > " + std::to_string(width) + ")");
  }
  Tensor x({num_clients, width});
  for (std::size_t i = 0; i < num_clients; ++i) x(i, i) = 1.0;
  return x;
}

ClientParams weighted_average(const std::vector<ClientParams>& params, const std::vector<double>& weights) {
  if (params.empty() || params.size() != weights.size()) {
    throw std::invalid_argument("weighted_average: need one weight per parameter set");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("weighted_average: weights must sum to a positive value");
  std::vector<Tensor> acc = params.front().tensors();
  for (auto& t : acc)
    for (double& v : t.data()) v = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto ts = params[k].tensors();
    const double w = weights[k] / total;
    for (std::size_t t = 0; t < ts.size(); ++t) {
      if (!ts[t].same_shape(acc[t])) throw ShapeError("weighted_average: parameter shapes differ");
      for (std::size_t i = 0; i < ts[t].size(); ++i) acc[t][i] += w * ts[t][i];
    }
  }
  ClientParams out = params.front();
  out.assign(acc);
  return out;
}

FedSheafHN::FedSheafHN(std::vector<GraphShard> shards, FedConfig config) : config_(std::move(config)) {
  check_config(config_);
  check_shards(shards);
  const std::size_t n = shards.size();
  const std::size_t f = shards.front().graph.feature_dim();
  const std::size_t h = config_.hidden;
  if (config_.ablation == Ablation::onehot_hn && n > h) {
    throw std::invalid_argument("onehot_hn needs num_clients <= hidden");
  }
  clients_ = make_clients(shards, config_);

  Rng sheaf_rng = make_rng(config_.seed, {tag(Stream::server_init), 0});
  Rng gcn_rng = make_rng(config_.seed, {tag(Stream::server_init), 1});
  Rng hn_rng = make_rng(config_.seed, {tag(Stream::server_init), 2});
  server_.sheaf = init_sheaf_stack(h, config_.stalk_dim, config_.sheaf_layers, config_.sheaf_map_hidden, sheaf_rng);
  server_.collab_gcn = init_collab_gcn(h, gcn_rng);
  server_.hypernet = init_hypernet(h, config_.hn_hidden, backbone_size(f, h), hn_rng);
  server_.hypernet.use_attention = config_.ablation != Ablation::no_attention;
  server_.sheaf_optimizer = Optimizer(config_.server_optimizer, config_.sheaf_lr, config_.sheaf_weight_decay);
  server_.hn_optimizer = Optimizer(config_.server_optimizer, config_.hn_lr, config_.hn_weight_decay);
  initialize();
}

FedSheafHN::FedSheafHN(std::vector<GraphShard> shards, FedConfig config, SheafStack sheaf, HyperNet hypernet)
    : FedSheafHN(std::move(shards), std::move(config)) {
  if (sheaf.embedding_dim() != config_.hidden || hypernet.embedding_dim() != config_.hidden ||
      hypernet.output_dim() != server_.hypernet.output_dim()) {
    throw ShapeError("server parameters do not match the configured model");
  }
  server_.sheaf = std::move(sheaf);
  server_.hypernet = std::move(hypernet);
  server_.hypernet.use_attention = config_.ablation != Ablation::no_attention;
}

void FedSheafHN::initialize() {
  std::vector<Tensor> embeddings(clients_.size());
  try {
    for_each_client(clients_.size(), config_.threads, [&](std::size_t i) {
      auto& c = clients_[i];
      embeddings[i] = c.local_train(c.params().pack_backbone(), train_options(config_, kInitRound)).embedding;
    });
  } catch (const std::exception& e) {
    throw RunError(0, std::string("initial client update: ") + e.what());
  }
  server_.pending_embeddings = stack_rows(embeddings);
  server_.x0 = server_input(server_.pending_embeddings);
  server_.graph = build_graph(server_.x0);
  server_.round = 0;
}

std::size_t FedSheafHN::knn_k() const {
  const std::size_t n = clients_.size();
  if (n < 2) return 0;
  const std::size_t k = config_.knn_k == 0 ? default_knn_k(n) : config_.knn_k;
  return std::min(k, n - 1);
}

bool FedSheafHN::refresh_round(std::size_t round) const {
  if (config_.ablation == Ablation::static_embedding || config_.ablation == Ablation::onehot_hn) return round == 0;
  return round % config_.refresh_interval == 0;
}

Tensor FedSheafHN::server_input(const Tensor& embeddings) const {
  const std::size_t n = embeddings.rows();
  switch (config_.ablation) {
    case Ablation::onehot_hn:
      return onehot_descriptors(n, config_.hidden);
    case Ablation::mean_embedding: {
      const Tensor m = column_mean(embeddings);
      Tensor x({n, m.size()});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m.size(); ++j) x(i, j) = m[j];
      return x;
    }
    default:
      return embeddings;
  }
}

CollaborationGraph FedSheafHN::build_graph(const Tensor& x0) const {
  if (x0.rows() < 2) return CollaborationGraph{x0.rows(), {}, x0};
  return knn_graph(x0, knn_k());
}

FedSheafHN::ServerForward FedSheafHN::server_forward(ad::Tape& tape, const CollaborationGraph& graph,
                                                     const Tensor& mask) const {
  ServerForward f;
  ad::Var x = tape.constant(graph.x0);
  ad::Var xts = x;
  if (uses_sheaf(config_.ablation)) {
    f.theta = sheaf_leaves(tape, server_.sheaf);
    xts = diffuse(x, graph.edges, server_.sheaf, f.theta);
  } else if (config_.ablation == Ablation::gcn_collab) {
    f.theta = {tape.leaf(server_.collab_gcn.w1), tape.leaf(server_.collab_gcn.w2)};
    xts = collab_gcn_forward(x, graph.num_nodes, graph.edges, f.theta);
  }
  f.phi = hypernet_leaves(tape, server_.hypernet);
  f.omega = generate(xts, server_.hypernet, f.phi, mask);
  return f;
}

Tensor FedSheafHN::generate_backbones(const CollaborationGraph& graph) const {
  ad::Tape tape;
  return server_forward(tape, graph, Tensor()).omega.value();
}

Tensor FedSheafHN::generate_backbones() const { return generate_backbones(server_.graph); }

Tensor FedSheafHN::generate_for_descriptor(const Tensor& x_new) const {
  if (config_.ablation == Ablation::onehot_hn) {
    throw std::invalid_argument("onehot_hn has no descriptor for clients unseen in training");
  }
  Tensor x = x_new.reshaped({x_new.size()});
  if (config_.ablation == Ablation::mean_embedding) x = server_.x0.row(0);
  CollaborationGraph g;
  if (server_.graph.num_nodes == 0) {
    g = CollaborationGraph{1, {}, x.reshaped({1, x.size()})};
  } else {
    const std::size_t k = std::max<std::size_t>(1, std::min(knn_k(), server_.graph.num_nodes));
    g = attach_node(server_.graph, x, k);
  }
  return generate_backbones(g).row(g.num_nodes - 1);
}

std::vector<LocalTrainResult> FedSheafHN::train_clients(const Tensor& backbones, std::size_t round) {
  std::vector<LocalTrainResult> results(clients_.size());
  const LocalTrainOptions opts = train_options(config_, round);
  for_each_client(clients_.size(), config_.threads,
                  [&](std::size_t i) { results[i] = clients_[i].local_train(backbones.row(i), opts); });
  return results;
}

RoundReport FedSheafHN::evaluate_clients(std::size_t round) const { return measure_all(clients_, round); }

RoundReport FedSheafHN::run_round() {
  const std::size_t r = server_.round;
  const auto start = std::chrono::steady_clock::now();
  RoundReport report;
  try {
    if (refresh_round(r)) {
      Tensor received = server_.pending_embeddings;
      if (config_.attack.ratio > 0.0) {
        const std::uint64_t s = make_rng(config_.seed, {tag(Stream::attack), r})();
        received = inject_malicious(received, config_.attack.ratio, config_.attack.kind, config_.attack.tau, s);
      }
      server_.x0 = server_input(received);
      server_.graph = build_graph(server_.x0);
    }

    ad::Tape tape;
    Tensor mask;
    if (config_.hn_dropout > 0.0) {
      Rng rng = make_rng(config_.seed, {tag(Stream::hn_dropout), r});
      mask = dropout_mask(clients_.size(), config_.hidden, config_.hn_dropout, rng);
    }
    ServerForward fwd = server_forward(tape, server_.graph, mask);
    const Tensor omega = fwd.omega.value();

    std::vector<LocalTrainResult> results = train_clients(omega, r);
    if (refresh_round(r)) {
      std::vector<Tensor> emb;
      emb.reserve(results.size());
      for (auto& res : results) emb.push_back(std::move(res.embedding));
      server_.pending_embeddings = stack_rows(emb);
    }
    report = evaluate_clients(r);

    // Descending on <Omega, -Delta> moves each generated backbone toward the
    // client's locally trained one.
    Tensor target(omega.shape());
    const std::size_t p = omega.cols();
    for (std::size_t i = 0; i < results.size(); ++i)
      for (std::size_t j = 0; j < p; ++j) target(i, j) = -results[i].delta_backbone[j];
    ad::Var loss = server_surrogate_loss(fwd.omega, target);
    report.surrogate_loss = loss.value()[0];
    tape.backward(loss);

    std::vector<Tensor> theta_grads, phi_grads;
    for (const auto& v : fwd.theta) theta_grads.push_back(tape.grad(v));
    for (const auto& v : fwd.phi) phi_grads.push_back(tape.grad(v));
    report.sheaf_grad_norm = std::sqrt(squared_norm(theta_grads));
    report.hn_grad_norm = std::sqrt(squared_norm(phi_grads));

    if (uses_sheaf(config_.ablation)) {
      auto ts = server_.sheaf.tensors();
      server_.sheaf_optimizer.step(ts, theta_grads);
      server_.sheaf.assign(ts);
    } else if (config_.ablation == Ablation::gcn_collab) {
      auto ts = server_.collab_gcn.tensors();
      server_.sheaf_optimizer.step(ts, theta_grads);
      server_.collab_gcn.assign(ts);
    }
    auto ps = server_.hypernet.tensors();
    server_.hn_optimizer.step(ps, phi_grads);
    server_.hypernet.assign(ps);
  } catch (const RunError&) {
    throw;
  } catch (const std::exception& e) {
    throw RunError(r, e.what());
  }
  ++server_.round;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<RoundReport> FedSheafHN::run(std::size_t rounds) {
  std::vector<RoundReport> reports;
  reports.reserve(rounds);
  for (std::size_t i = 0; i < rounds; ++i) reports.push_back(run_round());
  return reports;
}

NewClientResult FedSheafHN::add_new_clients(std::vector<GraphShard> new_shards) {
  if (server_.round == 0) throw std::logic_error("add_new_clients: server must be trained for at least one round");
  check_shards(new_shards);
  if (new_shards.front().graph.feature_dim() != clients_.front().shard().graph.feature_dim()) {
    throw ShapeError("add_new_clients: feature dimension differs from trained clients");
  }
  const auto theta_before = server_.sheaf.tensors();
  const auto gcn_before = server_.collab_gcn.tensors();
  const auto phi_before = server_.hypernet.tensors();

  const Tensor start = column_mean(generate_backbones());
  NewClientResult out;
  for (std::size_t j = 0; j < new_shards.size(); ++j) {
    ClientParams p = initial_client_params(new_shards[j], config_, clients_.size() + j);
    ClientState c(std::move(new_shards[j]), std::move(p), config_.client_optimizer);
    LocalTrainOptions opts = train_options(config_, server_.round);
    const Tensor x_new = c.local_train(start, opts).embedding;
    const Tensor backbone = generate_for_descriptor(x_new);
    opts.head_only = true;
    c.local_train(backbone, opts);
    out.test_accuracy.push_back(c.evaluate(c.shard().test));
    out.backbones.push_back(backbone);
  }
  if (server_.sheaf.tensors() != theta_before || server_.collab_gcn.tensors() != gcn_before ||
      server_.hypernet.tensors() != phi_before) {
    throw std::logic_error("add_new_clients: server parameters changed");
  }
  if (!out.test_accuracy.empty()) {
    out.mean_accuracy = std::accumulate(out.test_accuracy.begin(), out.test_accuracy.end(), 0.0) /
                        static_cast<double>(out.test_accuracy.size());
  }
  return out;
}

Checkpoint FedSheafHN::snapshot() const {
  Checkpoint ck;
  ck.put_scalar("meta/round", static_cast<double>(server_.round));
  ck.put_scalar("meta/num_clients", static_cast<double>(clients_.size()));
  ck.put_scalar("meta/hidden", static_cast<double>(config_.hidden));
  ck.put_scalar("meta/seed", static_cast<double>(config_.seed));
  save_tensors(ck, "server/sheaf", server_.sheaf.tensors());
  save_tensors(ck, "server/collab_gcn", server_.collab_gcn.tensors());
  save_tensors(ck, "server/hypernet", server_.hypernet.tensors());
  save_optimizer(ck, "server/sheaf_opt", server_.sheaf_optimizer);
  save_optimizer(ck, "server/hn_opt", server_.hn_optimizer);
  ck.put("server/x0", server_.x0);
  ck.put("server/pending", server_.pending_embeddings);
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    const std::string prefix = "client/" + std::to_string(i);
    save_tensors(ck, prefix + "/params", clients_[i].params().tensors());
    save_optimizer(ck, prefix + "/opt", clients_[i].optimizer());
  }
  return ck;
}

void FedSheafHN::restore(const Checkpoint& ck) {
  if (static_cast<std::size_t>(ck.get_scalar("meta/num_clients")) != clients_.size()) {
    throw CheckpointError("checkpoint: client count does not match the configuration");
  }
  if (static_cast<std::size_t>(ck.get_scalar("meta/hidden")) != config_.hidden) {
    throw CheckpointError("checkpoint: hidden width does not match the configuration");
  }
  // shards are rebuilt from the seed, so a different seed means different clients
  if (ck.get_scalar("meta/seed") != static_cast<double>(config_.seed)) {
    throw CheckpointError("checkpoint: seed does not match the configuration");
  }
  server_.sheaf.assign(load_tensors(ck, "server/sheaf", server_.sheaf.tensors()));
  server_.collab_gcn.assign(load_tensors(ck, "server/collab_gcn", server_.collab_gcn.tensors()));
  server_.hypernet.assign(load_tensors(ck, "server/hypernet", server_.hypernet.tensors()));
  load_optimizer(ck, "server/sheaf_opt", server_.sheaf_optimizer);
  load_optimizer(ck, "server/hn_opt", server_.hn_optimizer);
  server_.x0 = ck.get("server/x0");
  server_.pending_embeddings = ck.get("server/pending");
  if (server_.x0.rows() != clients_.size() || server_.pending_embeddings.rows() != clients_.size()) {
    throw CheckpointError("checkpoint: descriptor matrix has the wrong number of rows");
  }
  server_.graph = build_graph(server_.x0);
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    const std::string prefix = "client/" + std::to_string(i);
    auto& c = clients_[i];
    c.params().assign(load_tensors(ck, prefix + "/params", c.params().tensors()));
    load_optimizer(ck, prefix + "/opt", c.optimizer());
    c.refresh_embedding();
  }
  server_.round = static_cast<std::size_t>(ck.get_scalar("meta/round"));
}

std::vector<RoundReport> run_fedsheafhn(std::vector<GraphShard> shards, const FedConfig& config) {
  if (config.rounds == 0) return {};
  FedSheafHN runner(std::move(shards), config);
  return runner.run(config.rounds);
}

std::vector<RoundReport> run_ablation(std::vector<GraphShard> shards, FedConfig config, Ablation variant) {
  config.ablation = variant;
  return run_fedsheafhn(std::move(shards), config);
}

std::vector<RoundReport> run_local_only(std::vector<GraphShard> shards, const FedConfig& config) {
  check_config(config);
  check_shards(shards);
  std::vector<ClientState> clients = make_clients(shards, config);
  std::vector<RoundReport> reports;
  for (std::size_t r = 0; r < config.rounds; ++r) {
    const auto start = std::chrono::steady_clock::now();
    try {
      const LocalTrainOptions opts = train_options(config, r);
      for_each_client(clients.size(), config.threads,
                      [&](std::size_t i) { clients[i].local_train(clients[i].params().pack_backbone(), opts); });
      reports.push_back(measure_all(clients, r));
    } catch (const std::exception& e) {
      throw RunError(r, e.what());
    }
    reports.back().wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return reports;
}

std::vector<RoundReport> run_fedavg(std::vector<GraphShard> shards, const FedConfig& config) {
  check_config(config);
  check_shards(shards);
  std::vector<ClientState> clients = make_clients(shards, config);
  std::vector<double> weights;
  for (const auto& c : clients) weights.push_back(static_cast<double>(c.shard().graph.num_nodes()));
  ClientParams global = initial_client_params(clients.front().shard(), config, 0);
  std::vector<RoundReport> reports;
  for (std::size_t r = 0; r < config.rounds; ++r) {
    const auto start = std::chrono::steady_clock::now();
    try {
      const LocalTrainOptions opts = train_options(config, r);
      for_each_client(clients.size(), config.threads, [&](std::size_t i) {
        clients[i].params() = global;
        clients[i].local_train(global.pack_backbone(), opts);
      });
      reports.push_back(measure_all(clients, r));
      std::vector<ClientParams> trained;
      for (const auto& c : clients) trained.push_back(c.params());
      global = weighted_average(trained, weights);
    } catch (const std::exception& e) {
      throw RunError(r, e.what());
    }
    reports.back().wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return reports;
}

}  // namespace fedsheaf
