#pragma once

// Metric persistence.
//
// metrics.csv: round,client_id,split,accuracy,loss
//   one row per (round, client, split) for split in {train, val, test}, then
//   one aggregate row per (round, split) with client_id = -1 holding the mean
//   over clients. Header always present, LF line endings.
// server.csv: round,surrogate_loss,sheaf_grad_norm,hn_grad_norm,grad_norm_sq

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedsheaf/orchestrator.hpp"

namespace fedsheaf {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_metrics_csv(std::ostream& out, const std::vector<RoundReport>& reports);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<RoundReport>& reports);

void write_server_csv(std::ostream& out, const std::vector<RoundReport>& reports);

/// Formats a value the way every CSV writer here does.
std::string format_number(double v);

struct SummaryInfo {
  std::string method;
  std::uint64_t seed = 0;
  std::size_t num_clients = 0;
  double total_seconds = 0.0;
};

/// JSON summary of a run: final federated accuracy, std, per-client test
/// accuracy, and the best validation round.
std::string summary_json(const SummaryInfo& info, const std::vector<RoundReport>& reports);

/// Federated test accuracy per round, read from the aggregate rows of a
/// metrics.csv.
std::map<std::size_t, double> read_federated_accuracy(std::istream& in);
std::map<std::size_t, double> read_federated_accuracy(const std::filesystem::path& path);

/// Writes "round,<label>..." with one row per round seen in any input. Inputs
/// missing a round leave the cell empty. Throws MetricsError on an input
/// without aggregate rows.
void emit_convergence(const std::vector<std::pair<std::string, std::filesystem::path>>& inputs,
                      const std::filesystem::path& out);
void emit_convergence(const std::vector<std::pair<std::string, std::map<std::size_t, double>>>& series,
                      std::ostream& out);

}  // namespace fedsheaf
