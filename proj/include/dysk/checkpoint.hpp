#pragma once

#include "dysk/param_store.hpp"
#include "dysk/tensor.hpp"

#include <string>
#include <vector>

namespace dysk {

// Binary tensor container: magic "DYSK", u32 format version, then repeated
// records {u32 name length, name bytes, u32 rank, u32 extents, f64 payload},
// all little-endian. Round-trips bit-exactly.

constexpr std::uint32_t kContainerVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  Array data;
};

void write_container(const std::string& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_container(const std::string& path);

// Checkpoint = container holding every parameter in store order.
void save_checkpoint(const std::string& path, const ParamStore& params);
// Loads values into existing parameters; names and shapes must match.
void load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace dysk
