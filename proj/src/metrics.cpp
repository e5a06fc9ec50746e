#include "fedsheaf/metrics.hpp"

#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace fedsheaf {

namespace {

struct SplitValues {
  const char* name;
  double ClientMetrics::*accuracy;
  double ClientMetrics::*loss;
};

constexpr SplitValues kSplits[] = {
    {"train", &ClientMetrics::train_accuracy, &ClientMetrics::train_loss},
    {"val", &ClientMetrics::val_accuracy, &ClientMetrics::val_loss},
    {"test", &ClientMetrics::test_accuracy, &ClientMetrics::test_loss},
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MetricsError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_metrics_csv(std::ostream& out, const std::vector<RoundReport>& reports) {
  out << "round,client_id,split,accuracy,loss\n";
  for (const auto& r : reports) {
    for (const auto& c : r.clients) {
      for (const auto& s : kSplits) {
        out << r.round << ',' << c.client_id << ',' << s.name << ',' << format_number(c.*s.accuracy) << ','
            << format_number(c.*s.loss) << '\n';
      }
    }
    if (r.clients.empty()) continue;
    const auto n = static_cast<double>(r.clients.size());
    for (const auto& s : kSplits) {
      double acc = 0.0, loss = 0.0;
      for (const auto& c : r.clients) {
        acc += c.*s.accuracy;
        loss += c.*s.loss;
      }
      out << r.round << ",-1," << s.name << ',' << format_number(acc / n) << ',' << format_number(loss / n) << '\n';
    }
  }
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<RoundReport>& reports) {
  auto out = open_out(path);
  write_metrics_csv(out, reports);
}

void write_server_csv(std::ostream& out, const std::vector<RoundReport>& reports) {
  out << "round,surrogate_loss,sheaf_grad_norm,hn_grad_norm,grad_norm_sq\n";
  for (const auto& r : reports) {
    out << r.round << ',' << format_number(r.surrogate_loss) << ',' << format_number(r.sheaf_grad_norm) << ','
        << format_number(r.hn_grad_norm) << ',' << format_number(r.server_grad_norm_sq()) << '\n';
  }
}

std::string summary_json(const SummaryInfo& info, const std::vector<RoundReport>& reports) {
  nlohmann::ordered_json j;
  j["method"] = info.method;
  j["seed"] = info.seed;
  j["num_clients"] = info.num_clients;
  j["rounds"] = reports.size();
  if (!reports.empty()) {
    const auto& last = reports.back();
    j["federated_accuracy"] = last.federated_accuracy;
    j["accuracy_std"] = last.accuracy_std;
    std::size_t best = 0;
    for (std::size_t i = 1; i < reports.size(); ++i)
      if (reports[i].federated_val_accuracy > reports[best].federated_val_accuracy) best = i;
    j["best_val_round"] = reports[best].round;
    j["best_val_federated_accuracy"] = reports[best].federated_accuracy;
    auto& per = j["client_test_accuracy"] = nlohmann::ordered_json::array();
    for (const auto& c : last.clients) per.push_back({{"client_id", c.client_id}, {"accuracy", c.test_accuracy}});
  } else {
    j["federated_accuracy"] = nullptr;
  }
  j["total_seconds"] = info.total_seconds;
  return j.dump(2) + "\n";
}

std::map<std::size_t, double> read_federated_accuracy(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw MetricsError("metrics: empty input");
  if (line != "round,client_id,split,accuracy,loss") throw MetricsError("metrics: unexpected header '" + line + "'");
  std::map<std::size_t, double> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw MetricsError("metrics: line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) + " fields");
    if (cells[1] != "-1" || cells[2] != "test") continue;
    try {
      out[std::stoul(cells[0])] = std::stod(cells[3]);
    } catch (const std::exception&) {
      throw MetricsError("metrics: line " + std::to_string(lineno) + " is malformed");
    }
  }
  if (out.empty()) throw MetricsError("metrics: no aggregate rows");
  return out;
}

std::map<std::size_t, double> read_federated_accuracy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MetricsError("cannot open " + path.string());
  try {
    return read_federated_accuracy(in);
  } catch (const MetricsError& e) {
    throw MetricsError(path.string() + ": " + e.what());
  }
}

void emit_convergence(const std::vector<std::pair<std::string, std::map<std::size_t, double>>>& series,
                      std::ostream& out) {
  if (series.empty()) throw MetricsError("emit_convergence: no inputs");
  std::set<std::size_t> rounds;
  out << "round";
  for (const auto& [label, values] : series) {
    if (values.empty()) throw MetricsError("emit_convergence: '" + label + "' has no rounds");
    out << ',' << label;
    for (const auto& kv : values) rounds.insert(kv.first);
  }
  out << '\n';
  for (std::size_t r : rounds) {
    out << r;
    for (const auto& [label, values] : series) {
      out << ',';
      if (auto it = values.find(r); it != values.end()) out << format_number(it->second);
    }
    out << '\n';
  }
}

void emit_convergence(const std::vector<std::pair<std::string, std::filesystem::path>>& inputs,
                      const std::filesystem::path& out) {
  std::vector<std::pair<std::string, std::map<std::size_t, double>>> series;
  for (const auto& [label, path] : inputs) series.emplace_back(label, read_federated_accuracy(path));
  std::ostringstream buf;
  emit_convergence(series, buf);
  auto file = open_out(out);
  file << buf.str();
}

}  // namespace fedsheaf
