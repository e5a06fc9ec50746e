#include "fedsheaf/attack.hpp"

#include <cmath>
#include <stdexcept>

#include "fedsheaf/random.hpp"

namespace fedsheaf {

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "same_value") return AttackKind::same_value;
  if (name == "gaussian") return AttackKind::gaussian;
  throw std::invalid_argument("unknown attack kind '" + name + "'");
}

std::string to_string(AttackKind kind) {
  return kind == AttackKind::same_value ? "same_value" : "gaussian";
}

std::size_t malicious_count(std::size_t num_clients, double ratio) {
  // Small epsilon so ratios like 0.2 * 10 land on 2 rather than 1.9999...
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(num_clients) + 1e-9));
}

Tensor inject_malicious(const Tensor& embeddings, double ratio, AttackKind kind, double tau,
                        std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("inject_malicious: ratio must be in [0, 1]");
  if (tau < 0.0) throw std::invalid_argument("inject_malicious: tau must be >= 0");
  Tensor out = embeddings;
  const std::size_t n = out.rows(), h = out.cols();
  const std::size_t count = malicious_count(n, ratio);
  Rng rng = make_rng(seed, {tag(Stream::attack)});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    if (kind == AttackKind::same_value) {
      const double a = tau * normal(rng);
      for (std::size_t j = 0; j < h; ++j) out(i, j) = a;
    } else {
      for (std::size_t j = 0; j < h; ++j) out(i, j) = tau * normal(rng);
    }
  }
  return out;
}

}  // namespace fedsheaf
