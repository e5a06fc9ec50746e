#pragma once

#include <cstdint>
#include <string>

#include "fedsheaf/tensor.hpp"

namespace fedsheaf {

enum class AttackKind { same_value, gaussian };

AttackKind parse_attack_kind(const std::string& name);
std::string to_string(AttackKind kind);

struct AttackSpec {
  double ratio = 0.0;  // fraction of clients that are malicious
  AttackKind kind = AttackKind::same_value;
  double tau = 1.0;
};

/// Replaces the first floor(ratio * N) rows of `embeddings`:
///   same_value: a * 1 with a ~ N(0, tau^2), one draw per row
///   gaussian:   N(0, tau^2 I)
Tensor inject_malicious(const Tensor& embeddings, double ratio, AttackKind kind, double tau,
                        std::uint64_t seed);

std::size_t malicious_count(std::size_t num_clients, double ratio);

}  // namespace fedsheaf
