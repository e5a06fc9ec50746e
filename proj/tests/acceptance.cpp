// Acceptance suite: prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero if any gating criterion fails. `--allow-fail N` (repeatable) still
// prints criterion N's verdict but leaves it out of the exit status.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fedsheaf/client.hpp"
#include "fedsheaf/config.hpp"
#include "fedsheaf/hypernet.hpp"
#include "fedsheaf/orchestrator.hpp"
#include "fedsheaf/sheaf_diffusion.hpp"
#include "fedsheaf/sheaf_laplacian.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace fedsheaf;
using fedsheaf::tu::random_tensor;

namespace {

// Pinned tolerances and limits.
constexpr double kReductionTol = 1e-12;
constexpr double kCoboundaryTol = 1e-10;
constexpr double kSymmetryTol = 1e-10;
constexpr double kMinEigenvalue = -1e-8;
constexpr double kGradRelTol = 1e-4;
constexpr double kFedAvgMargin = 0.02;
constexpr double kNewClientGap = 0.05;
constexpr double kReductionSeconds = 1.0;
constexpr double kCoboundarySeconds = 5.0;
constexpr double kGradientSeconds = 30.0;
constexpr double kFixtureSeconds = 300.0;
constexpr std::array<std::uint64_t, 3> kSeeds{1, 2, 3};

// The desk-scale fixture. Free choices (features, noise, learning rates,
// optimizers, dropout) are fixed here and shared by every method.
const char* const kFixture = R"([run]
seed = 1
[data]
sbm_blocks = 60,60,60,60
sbm_p_in = 0.2
sbm_p_out = 0.02
sbm_features = 32
sbm_noise = 2.0
[partition]
clients = 8
[train]
rounds = 30
local_epochs = 3
hidden = 32
hn_hidden = 32
client_optimizer = sgd
client_lr = 0.02
server_optimizer = adam
sheaf_lr = 0.001
hn_lr = 0.001
hn_dropout = 0.3
)";

int failures = 0;
std::vector<int> allowed;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  const bool excused = std::find(allowed.begin(), allowed.end(), id) != allowed.end();
  std::cout << (pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << detail
            << (!pass && excused ? " (known failure, not gating)" : "") << std::endl;
  if (!pass && !excused) ++failures;
}

void skip(int id, const std::string& name, const std::string& why) {
  std::cout << "SKIP [" << id << "] " << name << ": " << why << std::endl;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << std::fixed << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---------------------------------------------------------------- sheaves

struct RandomSheaf {
  std::size_t n = 0;
  std::vector<Edge> edges;
  RestrictionMaps maps;
};

RandomSheaf random_sheaf(std::mt19937_64& rng, std::size_t d, bool unit_maps) {
  RandomSheaf s;
  s.n = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t u = 0; u < s.n; ++u)
    for (std::size_t v = u + 1; v < s.n; ++v)
      if (coin(rng)) s.edges.push_back({u, v});
  std::normal_distribution<double> normal;
  s.maps.stalk_dim = d;
  for (std::size_t e = 0; e < s.edges.size(); ++e) {
    Tensor a = Tensor::matrix(d, d), b = Tensor::matrix(d, d);
    for (std::size_t i = 0; i < d * d; ++i) {
      a[i] = unit_maps ? 1.0 : normal(rng);
      b[i] = unit_maps ? 1.0 : normal(rng);
    }
    s.maps.source.push_back(a);
    s.maps.target.push_back(b);
  }
  return s;
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t(i, j);
  return m;
}

// Dense coboundary: row block e holds F_u at column block u and -F_v at v.
Eigen::MatrixXd coboundary(const RandomSheaf& s) {
  const std::size_t d = s.maps.stalk_dim;
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(s.edges.size() * d, s.n * d);
  for (std::size_t e = 0; e < s.edges.size(); ++e) {
    delta.block(e * d, s.edges[e].u * d, d, d) = to_eigen(s.maps.source[e]);
    delta.block(e * d, s.edges[e].v * d, d, d) = -to_eigen(s.maps.target[e]);
  }
  return delta;
}

void criterion_reduction() {
  std::mt19937_64 rng(101);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    RandomSheaf s = random_sheaf(rng, 1, true);
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(s.n, s.n);
    for (const Edge& e : s.edges) {
      lap(e.u, e.u) += 1;
      lap(e.v, e.v) += 1;
      lap(e.u, e.v) -= 1;
      lap(e.v, e.u) -= 1;
    }
    const Eigen::MatrixXd got = to_eigen(build_sheaf_laplacian(s.n, s.edges, s.maps).to_dense());
    worst = std::max(worst, (got - lap).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  report(1, "unit d=1 sheaf Laplacian equals graph Laplacian (50 graphs)",
         worst <= kReductionTol && secs < kReductionSeconds,
         "max |diff| " + sci(worst) + " (tol " + sci(kReductionTol) + "), " + fmt(secs, 3) + " s");
}

void criteria_coboundary_and_psd() {
  std::mt19937_64 rng(202);
  const auto t0 = std::chrono::steady_clock::now();
  double worst_cob = 0.0, worst_sym = 0.0, min_eig = 1e300;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + static_cast<std::size_t>(trial % 3);
    RandomSheaf s = random_sheaf(rng, d, false);
    SheafLaplacian lap = build_sheaf_laplacian(s.n, s.edges, s.maps);
    const Eigen::MatrixXd dense = to_eigen(lap.to_dense());
    const Eigen::MatrixXd delta = coboundary(s);
    worst_cob = std::max(worst_cob, (dense - delta.transpose() * delta).cwiseAbs().maxCoeff());
    for (const Eigen::MatrixXd& m : {dense, to_eigen(normalize(lap).to_dense())}) {
      worst_sym = std::max(worst_sym, (m - m.transpose()).cwiseAbs().maxCoeff());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
      min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    }
  }
  const double secs = seconds_since(t0);
  report(2, "L equals coboundary^T coboundary (100 sheaves, d<=3)",
         worst_cob <= kCoboundaryTol && secs < kCoboundarySeconds,
         "max |diff| " + sci(worst_cob) + " (tol " + sci(kCoboundaryTol) + "), " + fmt(secs, 3) + " s");
  report(3, "Laplacian and normalized Laplacian symmetric PSD", worst_sym <= kSymmetryTol && min_eig >= kMinEigenvalue,
         "max asym " + sci(worst_sym) + ", min eigenvalue " + sci(min_eig));
}

// -------------------------------------------------------------- gradients

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> errs;

  {  // client GCN through the masked cross-entropy
    Graph g = sbm_generate({{6, 6}, 0.5, 0.1, 5, 1.0, 1.0, 7});
    GraphShard shard;
    shard.graph = g;
    shard.global_ids.resize(g.num_nodes());
    std::iota(shard.global_ids.begin(), shard.global_ids.end(), 0);
    shard = split_masks(shard, 3);
    Rng rng(4);
    ClientParams p = init_client_params(5, 6, 2, rng);
    p.b1 = random_tensor({6}, 5, 0.1);
    p.b2 = random_tensor({2}, 6, 0.1);
    auto adj = normalized_adjacency(shard.graph);
    auto r = tu::check_gradients(p.tensors(), [&](ad::Tape& tape, const std::vector<ad::Var>& v) {
      ad::Var x = tape.constant(shard.graph.features());
      ad::Var h = ad::relu(ad::add_row_bias(ad::spmm(adj, ad::matmul(x, v[0])), v[1]));
      ad::Var logits = ad::add_row_bias(ad::spmm(adj, ad::matmul(h, v[2])), v[3]);
      return ad::masked_cross_entropy(logits, shard.graph.labels(), shard.train);
    });
    errs.emplace_back("gcn", r.max_rel_error);
  }

  const std::vector<Edge> edges{{0, 1}, {0, 3}, {1, 2}, {2, 3}, {1, 3}};
  {  // two sheaf layers, parameters and input
    Rng rng(9);
    SheafStack stack = init_sheaf_stack(4, 2, 2, 3, rng);
    std::vector<Tensor> params = stack.tensors();
    params.push_back(random_tensor({4, 4}, 10));
    const Tensor probe = random_tensor({4, 4}, 11);
    auto r = tu::check_gradients(params, [&](ad::Tape&, const std::vector<ad::Var>& v) {
      std::vector<ad::Var> leaves(v.begin(), v.end() - 1);
      return ad::inner_const(diffuse(v.back(), edges, stack, leaves), probe);
    });
    errs.emplace_back("sheaf", r.max_rel_error);
  }

  Rng hrng(12);
  HyperNet hn = init_hypernet(4, 5, 6, hrng);
  hn.b1 = random_tensor({5}, 13, 0.1);
  hn.b2 = random_tensor({6}, 14, 0.1);
  {  // attention block alone
    std::vector<Tensor> params{hn.aq, hn.ak, hn.av, random_tensor({4, 4}, 15)};
    const Tensor probe = random_tensor({4, 4}, 16);
    auto r = tu::check_gradients(params, [&](ad::Tape&, const std::vector<ad::Var>& v) {
      std::vector<ad::Var> leaves(v.begin(), v.begin() + 3);
      return ad::inner_const(attention(v[3], leaves), probe);
    });
    errs.emplace_back("attention", r.max_rel_error);
  }
  {  // hypernetwork MLP with the dropout mask, attention off
    HyperNet mlp = hn;
    mlp.use_attention = false;
    Rng mrng(17);
    const Tensor mask = dropout_mask(4, 4, 0.3, mrng);
    std::vector<Tensor> params = mlp.tensors();
    params.push_back(random_tensor({4, 4}, 18));
    const Tensor probe = random_tensor({4, 6}, 19);
    auto r = tu::check_gradients(params, [&](ad::Tape&, const std::vector<ad::Var>& v) {
      std::vector<ad::Var> leaves(v.begin(), v.end() - 1);
      return ad::inner_const(generate(v.back(), mlp, leaves, mask), probe);
    });
    errs.emplace_back("hn_mlp", r.max_rel_error);
  }
  {  // full server surrogate <H(S(x0)), delta> over theta and phi
    Rng srng(20);
    SheafStack stack = init_sheaf_stack(4, 2, 2, 3, srng);
    const Tensor x0 = random_tensor({4, 4}, 21), delta = random_tensor({4, 6}, 22);
    Rng mrng(23);
    const Tensor mask = dropout_mask(4, 4, 0.3, mrng);
    std::vector<Tensor> params = stack.tensors();
    const std::size_t ns = params.size();
    for (const auto& t : hn.tensors()) params.push_back(t);
    auto r = tu::check_gradients(params, [&](ad::Tape& tape, const std::vector<ad::Var>& v) {
      std::vector<ad::Var> theta(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(ns));
      std::vector<ad::Var> phi(v.begin() + static_cast<std::ptrdiff_t>(ns), v.end());
      return server_surrogate_loss(generate(diffuse(tape.constant(x0), edges, stack, theta), hn, phi, mask), delta);
    });
    errs.emplace_back("surrogate", r.max_rel_error);
  }

  const double secs = seconds_since(t0);
  bool ok = secs < kGradientSeconds;
  std::string detail;
  for (const auto& [name, e] : errs) {
    ok = ok && e <= kGradRelTol;
    detail += name + " " + sci(e) + ", ";
  }
  report(4, "finite-difference gradient suite (rel err <= " + sci(kGradRelTol) + ")", ok, detail + fmt(secs, 2) + " s");
}

// ---------------------------------------------------------------- fixture

RunConfig fixture(std::uint64_t seed) {
  RunConfig cfg = parse_config_string(kFixture);
  set_seed(cfg, seed);
  return cfg;
}

std::vector<RoundReport> run_method(RunConfig cfg, const std::string& method) {
  set_method(cfg, method);
  ShardSet shards = load_shards(cfg);
  switch (cfg.method) {
    case Method::local:
      return run_local_only(std::move(shards.trained), cfg.fed);
    case Method::fedavg:
      return run_fedavg(std::move(shards.trained), cfg.fed);
    case Method::ablation:
      return run_ablation(std::move(shards.trained), cfg.fed, cfg.ablation);
    case Method::fedsheafhn:
      break;
  }
  return run_fedsheafhn(std::move(shards.trained), cfg.fed);
}

void criterion_frozen() {
  RunConfig cfg = fixture(kSeeds[0]);
  cfg.fed.client_lr = cfg.fed.sheaf_lr = cfg.fed.hn_lr = 0.0;
  FedSheafHN run(load_shards(cfg).trained, cfg.fed);
  const auto theta = run.server().sheaf.tensors();
  const auto phi = run.server().hypernet.tensors();
  std::vector<ClientParams> before;
  for (const auto& c : run.clients()) before.push_back(c.params());
  bool same = true;
  double surrogate = 0.0;
  for (int r = 0; r < 10; ++r) {
    RoundReport rep = run.run_round();
    surrogate = std::max(surrogate, std::abs(rep.surrogate_loss));
    same = same && run.server().sheaf.tensors() == theta && run.server().hypernet.tensors() == phi;
    for (std::size_t i = 0; i < run.num_clients(); ++i)
      same = same && run.clients()[i].params().pack_head() == before[i].pack_head();
  }
  report(5, "zero learning rates keep theta, phi and heads bit-identical (10 rounds)", same && surrogate == 0.0,
         std::string(same ? "bit-identical" : "changed") + ", max |surrogate| " + sci(surrogate));
}

struct MethodStats {
  std::vector<double> acc, std;
  std::vector<std::vector<RoundReport>> runs;
};

MethodStats collect(const std::string& method) {
  MethodStats s;
  for (std::uint64_t seed : kSeeds) {
    auto reports = run_method(fixture(seed), method);
    s.acc.push_back(reports.back().federated_accuracy);
    s.std.push_back(reports.back().accuracy_std);
    s.runs.push_back(std::move(reports));
  }
  return s;
}

std::string seeds_of(const std::vector<double>& v) {
  std::string out = "(";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(v[i], 3);
  return out + ")";
}

// Least-squares slope of y against 0..n-1.
double ls_slope(const std::vector<double>& y) {
  const double n = static_cast<double>(y.size());
  const double xm = (n - 1.0) / 2.0, ym = mean(y);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += (static_cast<double>(i) - xm) * (y[i] - ym);
    den += (static_cast<double>(i) - xm) * (static_cast<double>(i) - xm);
  }
  return num / den;
}

void criteria_fixture() {
  const auto t0 = std::chrono::steady_clock::now();
  MethodStats fshn = collect("fedsheafhn");
  MethodStats favg = collect("fedavg");
  MethodStats local = collect("local");
  const double secs = seconds_since(t0);
  const double f = mean(fshn.acc), a = mean(favg.acc), l = mean(local.acc);
  report(6, "fixture: FedSheafHN >= FedAvg + 2 points and >= local-only",
         f >= a + kFedAvgMargin && f >= l && secs < kFixtureSeconds,
         "FedSheafHN " + fmt(f) + " " + seeds_of(fshn.acc) + ", FedAvg " + fmt(a) + " " + seeds_of(favg.acc) +
             ", local " + fmt(l) + " " + seeds_of(local.acc) + ", " + fmt(secs, 2) + " s for 9 runs");

  const double fs_std = mean(fshn.std), fa_std = mean(favg.std);
  report(7, "per-client accuracy std: FedSheafHN <= FedAvg", fs_std <= fa_std,
         "FedSheafHN " + fmt(fs_std) + " " + seeds_of(fshn.std) + ", FedAvg " + fmt(fa_std) + " " +
             seeds_of(favg.std));

  MethodStats ns = collect("ablation:no_sheaf");
  report(8, "full model >= no_sheaf ablation", f >= mean(ns.acc),
         "full " + fmt(f) + ", no_sheaf " + fmt(mean(ns.acc)) + " " + seeds_of(ns.acc));

  // seed-averaged squared server gradient norm, second half of the rounds
  const std::size_t rounds = fshn.runs[0].size();
  std::vector<double> tail;
  for (std::size_t r = rounds / 2; r < rounds; ++r) {
    double g = 0.0;
    for (const auto& run : fshn.runs) g += run[r].server_grad_norm_sq();
    tail.push_back(g / static_cast<double>(fshn.runs.size()));
  }
  const double slope = ls_slope(tail);
  report(11, "LS slope of server grad-norm^2 over last 50% of rounds <= 0", slope <= 0.0,
         "slope " + sci(slope) + " per round over rounds " + std::to_string(rounds / 2) + ".." +
             std::to_string(rounds - 1) + ", first " + sci(tail.front()) + ", last " + sci(tail.back()));

  // attack robustness
  std::vector<double> drop_fshn, drop_mean;
  MethodStats mean_clean = collect("ablation:mean_embedding");
  for (std::size_t k = 0; k < kSeeds.size(); ++k) {
    RunConfig cfg = fixture(kSeeds[k]);
    cfg.fed.attack = {0.2, AttackKind::same_value, 1.0};
    drop_fshn.push_back(fshn.acc[k] - run_method(cfg, "fedsheafhn").back().federated_accuracy);
    drop_mean.push_back(mean_clean.acc[k] - run_method(cfg, "ablation:mean_embedding").back().federated_accuracy);
  }
  report(10, "same-value attack (ratio 0.2, tau 1): FedSheafHN drop <= mean-embedding drop",
         mean(drop_fshn) <= mean(drop_mean),
         "FedSheafHN drop " + fmt(mean(drop_fshn)) + " " + seeds_of(drop_fshn) + ", mean-embedding drop " +
             fmt(mean(drop_mean)) + " " + seeds_of(drop_mean));
}

void criterion_new_clients() {
  bool frozen = true;
  std::vector<double> trained, fresh;
  for (std::uint64_t seed : kSeeds) {
    RunConfig cfg = fixture(seed);
    cfg.partition.num_clients = 10;
    cfg.holdout = 2;
    ShardSet shards = load_shards(cfg);
    FedSheafHN run(std::move(shards.trained), cfg.fed);
    const RoundReport last = run.run(cfg.fed.rounds).back();
    const auto theta = run.server().sheaf.tensors();
    const auto phi = run.server().hypernet.tensors();
    NewClientResult res = run.add_new_clients(std::move(shards.held_out));
    frozen = frozen && run.server().sheaf.tensors() == theta && run.server().hypernet.tensors() == phi;
    trained.push_back(last.federated_accuracy);
    fresh.push_back(res.mean_accuracy);
  }
  const double gap = mean(trained) - mean(fresh);
  report(9, "2 of 10 clients added after training: theta/phi frozen, gap <= 5 points",
         frozen && std::abs(gap) <= kNewClientGap,
         std::string(frozen ? "theta/phi bit-identical" : "theta/phi changed") + ", trained " + fmt(mean(trained)) +
             " " + seeds_of(trained) + ", new " + fmt(mean(fresh)) + " " + seeds_of(fresh));
}

// ------------------------------------------------------- reproducibility

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion_reproducible() {
  char tmpl[] = "/tmp/fshn_accept_XXXXXX";
  const fs::path dir = mkdtemp(tmpl);
  { std::ofstream(dir / "fixture.ini") << kFixture; }
  std::vector<std::string> csv;
  int status = 0;
  for (const char* name : {"a", "b"}) {
    const std::string cmd = std::string(FEDSHEAF_CLI_PATH) + " run --config " + (dir / "fixture.ini").string() +
                            " --seed 7 --out " + (dir / name).string() + " > /dev/null 2>&1";
    status |= std::system(cmd.c_str());
    csv.push_back(slurp(dir / name / "metrics.csv"));
  }
  fs::remove_all(dir);
  const bool ok = status == 0 && !csv[0].empty() && csv[0] == csv[1];
  report(12, "two CLI invocations give byte-identical metrics.csv", ok,
         std::to_string(csv[0].size()) + " bytes, " + (csv[0] == csv[1] ? "identical" : "different") +
             (status ? ", CLI failed" : ""));
}

void criterion_cora() {
  fs::path dir = fs::path(FEDSHEAF_SOURCE_DIR) / "data" / "cora";
  if (const char* env = std::getenv("FSHN_CORA_DIR"); env && *env) dir = env;
  if (!fs::exists(dir)) {
    skip(13, "Cora 10 clients, 100 rounds (non-gating)", "no Planetoid files at " + dir.string());
    return;
  }
  const std::string text = "[run]\nseed = 1\n[data]\nsource = planetoid\npath = " + dir.string() +
                           "\n[partition]\nclients = 10\n[train]\nrounds = 100\nlocal_epochs = 3\n"
                           "hidden = 64\nhn_hidden = 32\nclient_lr = 0.02\nsheaf_lr = 0.01\nhn_lr = 0.01\n";
  RunConfig cfg = parse_config_string(text);
  const auto t0 = std::chrono::steady_clock::now();
  const double f = run_method(cfg, "fedsheafhn").back().federated_accuracy;
  const double a = run_method(cfg, "fedavg").back().federated_accuracy;
  const bool pass = f > a;
  std::cout << (pass ? "PASS" : "FAIL") << " [13] Cora 10 clients, 100 rounds (non-gating): FedSheafHN " << fmt(f)
            << ", FedAvg " << fmt(a) << ", " << fmt(seconds_since(t0), 1) << " s" << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--allow-fail" && i + 1 < argc) {
      allowed.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--allow-fail N]...\n";
      return 2;
    }
  }
  try {
    criterion_reduction();
    criteria_coboundary_and_psd();
    criterion_gradients();
    criterion_frozen();
    criteria_fixture();
    criterion_new_clients();
    criterion_reproducible();
    criterion_cora();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 2;
  }
  std::cout << (failures == 0 ? "all gating criteria passed" : std::to_string(failures) + " gating criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
