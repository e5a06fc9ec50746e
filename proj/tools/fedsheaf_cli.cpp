// fedsheaf: run experiments, add clients to a trained server, and collect
// convergence curves.

#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "fedsheaf/checkpoint.hpp"
#include "fedsheaf/config.hpp"
#include "fedsheaf/metrics.hpp"
#include "fedsheaf/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace fedsheaf;

namespace {

std::size_t resolve_threads(std::size_t configured) {
  std::size_t t = configured == 0 ? static_cast<std::size_t>(omp_get_max_threads()) : configured;
  if (const char* env = std::getenv("FSHN_THREADS"); env && *env) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (*end != '\0' || cap < 1) throw std::invalid_argument("FSHN_THREADS must be a positive integer");
    t = std::min(t, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(1, t);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
}

// Rows of an existing CSV with round < `before`, without the header. Used
// when resuming so the output covers the whole run.
std::string rows_before(const fs::path& path, std::size_t before) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "";
  std::string line, out;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoul(line.substr(0, line.find(','))) < before) out += line + "\n";
  }
  return out;
}

std::string with_prefix(const std::string& csv, const std::string& prefix_rows) {
  const auto nl = csv.find('\n');
  return csv.substr(0, nl + 1) + prefix_rows + csv.substr(nl + 1);
}

RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed, const std::string& method,
                      const std::string& out) {
  RunConfig cfg = parse_config(path);
  if (seed) set_seed(cfg, *seed);
  if (!method.empty()) set_method(cfg, method);
  if (!out.empty()) cfg.out_dir = out;
  cfg.fed.threads = resolve_threads(cfg.threads);
  return cfg;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& method,
            const std::string& out, const std::string& resume) {
  RunConfig cfg = load_config(config_path, seed, method, out);
  fs::create_directories(cfg.out_dir);
  const auto start = std::chrono::steady_clock::now();
  ShardSet shards = load_shards(cfg);
  const std::size_t n = shards.trained.size();

  std::vector<RoundReport> reports;
  std::size_t first_round = 0;
  if (cfg.method == Method::local) {
    reports = run_local_only(std::move(shards.trained), cfg.fed);
  } else if (cfg.method == Method::fedavg) {
    reports = run_fedavg(std::move(shards.trained), cfg.fed);
  } else {
    FedSheafHN runner(std::move(shards.trained), cfg.fed);
    if (!resume.empty()) {
      runner.restore(read_checkpoint(resume));
      first_round = runner.server().round;
    }
    const std::size_t interval = cfg.checkpoint_interval ? cfg.checkpoint_interval : cfg.fed.refresh_interval;
    const fs::path ckpt = cfg.out_dir / "checkpoint.fshn";
    while (runner.server().round < cfg.fed.rounds) {
      reports.push_back(runner.run_round());
      const auto done = runner.server().round;
      if (done % interval == 0 || done == cfg.fed.rounds) write_checkpoint(ckpt, runner.snapshot());
      std::cerr << "round " << reports.back().round << "  federated accuracy "
                << format_number(reports.back().federated_accuracy) << "\n";
    }
    std::ostringstream server;
    write_server_csv(server, reports);
    write_text(cfg.out_dir / "server.csv", with_prefix(server.str(), rows_before(cfg.out_dir / "server.csv", first_round)));
  }

  std::ostringstream metrics;
  write_metrics_csv(metrics, reports);
  write_text(cfg.out_dir / "metrics.csv",
             with_prefix(metrics.str(), rows_before(cfg.out_dir / "metrics.csv", first_round)));

  SummaryInfo info;
  info.method = method_name(cfg);
  info.seed = cfg.fed.seed;
  info.num_clients = n;
  info.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(cfg.out_dir / "summary.json", summary_json(info, reports));
  if (!reports.empty()) {
    std::cout << info.method << ": federated accuracy " << format_number(reports.back().federated_accuracy)
              << " (std " << format_number(reports.back().accuracy_std) << ") after " << reports.size()
              << " rounds\n";
  }
  return 0;
}

int cmd_new_clients(const std::string& checkpoint, const std::string& config_path, std::optional<std::uint64_t> seed,
                    const std::string& out) {
  RunConfig cfg = load_config(config_path, seed, "", out);
  if (cfg.method != Method::fedsheafhn && cfg.method != Method::ablation) {
    throw std::invalid_argument("new-clients needs a fedsheafhn or ablation run");
  }
  if (cfg.holdout == 0) throw std::invalid_argument("new_clients.holdout must be >= 1 for new-clients");
  ShardSet shards = load_shards(cfg);
  FedSheafHN runner(std::move(shards.trained), cfg.fed);
  runner.restore(read_checkpoint(checkpoint));

  double trained = 0.0;
  for (const auto& c : runner.clients()) trained += c.evaluate(c.shard().test);
  trained /= static_cast<double>(runner.num_clients());

  std::vector<int> ids;
  for (const auto& s : shards.held_out) ids.push_back(s.client_id);
  const NewClientResult res = runner.add_new_clients(std::move(shards.held_out));

  nlohmann::ordered_json j;
  j["trained_client_mean_accuracy"] = trained;
  j["new_client_mean_accuracy"] = res.mean_accuracy;
  auto& per = j["new_clients"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) per.push_back({{"client_id", ids[i]}, {"accuracy", res.test_accuracy[i]}});
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "new_clients.json", j.dump(2) + "\n");
  std::cout << "new clients: mean accuracy " << format_number(res.mean_accuracy) << " (trained clients "
            << format_number(trained) << ")\n";
  return 0;
}

int cmd_emit_convergence(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<std::pair<std::string, fs::path>> parsed;
  for (const auto& in : inputs) {
    const auto eq = in.find('=');
    if (eq != std::string::npos) {
      parsed.emplace_back(in.substr(0, eq), in.substr(eq + 1));
    } else {
      const fs::path p(in);
      const std::string parent = p.parent_path().filename().string();
      parsed.emplace_back(inputs.size() == 1 || parent.empty() ? "federated_accuracy" : parent, p);
    }
  }
  emit_convergence(parsed, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized subgraph federated learning with sheaf diffusion and a hypernetwork"};
  app.require_subcommand(1);

  std::string config_path, method, out, resume, checkpoint;
  std::uint64_t seed_value = 0;
  auto* run = app.add_subcommand("run", "Train with one method and write metrics.csv, summary.json");
  run->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", seed_value, "Override run.seed");
  run->add_option("--method", method, "fedsheafhn | local | fedavg | ablation:<variant>");
  run->add_option("--out", out, "Output directory");
  run->add_option("--resume", resume, "Continue from a checkpoint written by an earlier run")
      ->check(CLI::ExistingFile);

  auto* fresh = app.add_subcommand("new-clients", "Add held-out clients to a trained server");
  fresh->add_option("--checkpoint", checkpoint, "Checkpoint from a run")->required()->check(CLI::ExistingFile);
  fresh->add_option("--config", config_path, "Config file used for the run")->required()->check(CLI::ExistingFile);
  auto* fresh_seed_opt = fresh->add_option("--seed", seed_value, "Seed the run used, if overridden there");
  fresh->add_option("--out", out, "Output directory");

  std::vector<std::string> inputs;
  std::string conv_out;
  auto* conv = app.add_subcommand("emit-convergence", "Federated accuracy per round, one column per input");
  conv->add_option("--in", inputs, "metrics.csv, optionally as label=path; repeatable")->required();
  conv->add_option("--out", conv_out, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);
  std::optional<std::uint64_t> seed;
  if (*seed_opt || *fresh_seed_opt) seed = seed_value;
  try {
    if (*run) return cmd_run(config_path, seed, method, out, resume);
    if (*fresh) return cmd_new_clients(checkpoint, config_path, seed, out);
    if (*conv) return cmd_emit_convergence(inputs, conv_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
