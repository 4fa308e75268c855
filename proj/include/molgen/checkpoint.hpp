#pragma once

#include <string>
#include <utility>
#include <vector>

#include "molgen/layers.hpp"
#include "molgen/tensor.hpp"

namespace molgen {

// Named-tensor archive with a free-form JSON metadata blob. Binary layout
// (little endian): "MGCK" | u8 version | u64 meta_len | meta bytes |
// u64 tensor count | per tensor: u64 name_len, name, u32 rank, i64 dims,
// f64 values.
struct Checkpoint {
  std::string meta_json = "{}";
  std::vector<std::pair<std::string, Tensor>> tensors;

  void put(const std::string& name, Tensor t);
  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies every param into / out of the archive under its own name. Loading is
// strict: a missing name or shape mismatch raises.
void store_params(Checkpoint& ck, const std::vector<ParamRef>& params);
void load_params(const Checkpoint& ck, const std::vector<ParamRef>& params);

}  // namespace molgen
