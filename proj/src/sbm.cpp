#include <random>

#include "fedsheaf/data.hpp"
#include "fedsheaf/random.hpp"

namespace fedsheaf {

Graph sbm_generate(const SbmParams& params) {
  if (params.blocks.empty()) throw std::invalid_argument("sbm: no blocks");
  for (std::size_t b : params.blocks) {
    if (b == 0) throw std::invalid_argument("sbm: empty block");
  }
  if (!(0.0 <= params.p_out && params.p_out <= params.p_in && params.p_in <= 1.0)) {
    throw std::invalid_argument("sbm: require 0 <= p_out <= p_in <= 1");
  }
  if (params.features == 0) throw std::invalid_argument("sbm: feature dimension must be positive");

  std::vector<int> labels;
  for (std::size_t b = 0; b < params.blocks.size(); ++b)
    labels.insert(labels.end(), params.blocks[b], static_cast<int>(b));
  const std::size_t n = labels.size();

  Rng edge_rng = make_rng(params.seed, {tag(Stream::sbm), 0});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = labels[i] == labels[j] ? params.p_in : params.p_out;
      if (unit(edge_rng) < p) edges.push_back({i, j});
    }
  }

  Rng feat_rng = make_rng(params.seed, {tag(Stream::sbm), 1});
  Tensor features = normal_tensor({n, params.features}, params.feature_noise, feat_rng);
  for (std::size_t i = 0; i < n; ++i) {
    features(i, static_cast<std::size_t>(labels[i]) % params.features) += params.feature_signal;
  }
  return Graph(n, std::move(edges), std::move(features), std::move(labels), params.blocks.size());
}

}  // namespace fedsheaf
