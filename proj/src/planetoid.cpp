#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "fedsheaf/data.hpp"

namespace fedsheaf {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("missing file: " + p.string());
  return in;
}

double parse_double(const std::string& tok, const std::filesystem::path& file, std::size_t line) {
  double v = 0.0;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError(file.string() + ":" + std::to_string(line) + ": malformed feature '" + tok + "'");
  }
  return v;
}

}  // namespace

PlanetoidDataset read_planetoid(const std::filesystem::path& dir) {
  const auto nodes_path = dir / "nodes.txt";
  const auto edges_path = dir / "edges.txt";
  const auto classes_path = dir / "classes.txt";

  PlanetoidDataset ds;
  std::map<std::string, int> class_index;
  const bool fixed_classes = std::filesystem::exists(classes_path);
  if (fixed_classes) {
    auto in = open_or_throw(classes_path);
    std::string line;
    while (std::getline(in, line)) {
      auto toks = split_ws(line);
      if (toks.empty()) continue;
      if (toks.size() != 1) throw DataError(classes_path.string() + ": one label per line expected");
      if (class_index.emplace(toks[0], static_cast<int>(ds.class_names.size())).second) {
        ds.class_names.push_back(toks[0]);
      }
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  std::unordered_map<std::string, std::size_t> id_index;
  std::size_t feature_dim = 0;
  {
    auto in = open_or_throw(nodes_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto toks = split_ws(line);
      if (toks.empty()) continue;
      if (toks.size() < 3) {
        throw DataError(nodes_path.string() + ":" + std::to_string(lineno) +
                        ": expected '<id> <features...> <label>'");
      }
      const std::size_t f = toks.size() - 2;
      if (rows.empty()) feature_dim = f;
      if (f != feature_dim) {
        throw DataError(nodes_path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(feature_dim) + " features, got " + std::to_string(f));
      }
      if (!id_index.emplace(toks[0], rows.size()).second) {
        throw DataError(nodes_path.string() + ":" + std::to_string(lineno) + ": duplicate node id '" +
                        toks[0] + "'");
      }
      std::vector<double> feats(f);
      for (std::size_t j = 0; j < f; ++j) feats[j] = parse_double(toks[j + 1], nodes_path, lineno);
      rows.push_back(std::move(feats));
      raw_labels.push_back(toks.back());
      ds.node_ids.push_back(toks[0]);
    }
  }
  if (rows.empty()) throw DataError(nodes_path.string() + ": no nodes");

  if (!fixed_classes) {
    std::set<std::string> uniq(raw_labels.begin(), raw_labels.end());
    for (const auto& name : uniq) {
      class_index.emplace(name, static_cast<int>(ds.class_names.size()));
      ds.class_names.push_back(name);
    }
  }
  std::vector<int> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto it = class_index.find(raw_labels[i]);
    if (it == class_index.end()) {
      throw DataError(nodes_path.string() + ": unknown label '" + raw_labels[i] + "' for node '" +
                      ds.node_ids[i] + "'");
    }
    labels[i] = it->second;
  }

  std::vector<Edge> edges;
  {
    auto in = open_or_throw(edges_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto toks = split_ws(line);
      if (toks.empty()) continue;
      if (toks.size() != 2) {
        throw DataError(edges_path.string() + ":" + std::to_string(lineno) + ": expected '<id> <id>'");
      }
      auto a = id_index.find(toks[0]);
      auto b = id_index.find(toks[1]);
      if (a == id_index.end() || b == id_index.end()) {
        throw DataError(edges_path.string() + ":" + std::to_string(lineno) +
                        ": dangling edge endpoint '" + (a == id_index.end() ? toks[0] : toks[1]) + "'");
      }
      edges.push_back({a->second, b->second});
      ++ds.edge_lines;
    }
  }

  Tensor features = Tensor::matrix(rows.size(), feature_dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < feature_dim; ++j) features(i, j) = rows[i][j];
  ds.graph = Graph(rows.size(), std::move(edges), std::move(features), std::move(labels),
                   ds.class_names.size());
  return ds;
}

Graph load_planetoid(const std::filesystem::path& dir) { return read_planetoid(dir).graph; }

}  // namespace fedsheaf
