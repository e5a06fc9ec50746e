#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "fedsheaf/tensor.hpp"

namespace fedsheaf {

using Rng = std::mt19937_64;

/// Derives an independent generator for a named stream (e.g. {seed, round,
/// client, purpose}) so no generator state has to be carried between rounds.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  for (std::uint64_t s : stream) h = mix(h ^ mix(s));
  return Rng(h);
}

/// Stream tags used with make_rng.
enum class Stream : std::uint64_t {
  client_init = 1,
  split = 2,
  dropout = 3,
  server_init = 4,
  attack = 5,
  partition = 6,
  sbm = 7,
  hn_dropout = 8,
};

inline std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

inline Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

inline Tensor normal_tensor(std::vector<std::size_t> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * dist(rng);
  return t;
}

}  // namespace fedsheaf
