#pragma once

// Binary checkpoint container.
//
// Layout (all integers and floats little-endian):
//   "FSHN1"                    5 magic bytes; the trailing 1 is the format version
//   u64 record_count
//   per record:
//     u32 name_length, name bytes (UTF-8)
//     u32 rank, u64 dims[rank]
//     f64 values[product(dims)]
// Records are written in name order.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "fedsheaf/tensor.hpp"

namespace fedsheaf {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::map<std::string, Tensor> records;

  void put(const std::string& name, Tensor t) { records.insert_or_assign(name, std::move(t)); }
  void put_scalar(const std::string& name, double v) { put(name, Tensor({1}, v)); }
  const Tensor& get(const std::string& name) const;
  double get_scalar(const std::string& name) const { return get(name)[0]; }
  bool has(const std::string& name) const { return records.count(name) != 0; }
};

inline constexpr char kCheckpointMagic[5] = {'F', 'S', 'H', 'N', '1'};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace fedsheaf
