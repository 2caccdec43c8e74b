#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moedr/tensor.hpp"

namespace moedr {

// Binary tensor container ("MOET"): magic, u16 version, u32 entry count,
// then per entry a length-prefixed UTF-8 name, u8 dtype code (1 = f64),
// u32 rank, u64 dims, and raw little-endian f64 data. Round trips are
// bit-exact.
struct ContainerEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

class TensorContainer {
 public:
  void add(std::string name, Shape shape, std::vector<double> data);
  void add(const std::string& name, const Tensor& t) { add(name, t.shape(), t.values()); }

  bool contains(const std::string& name) const;
  const ContainerEntry& at(const std::string& name) const;  // throws if missing
  const std::vector<ContainerEntry>& entries() const { return entries_; }

  void write(const std::string& path) const;
  static TensorContainer read(const std::string& path);

 private:
  std::vector<ContainerEntry> entries_;  // insertion-ordered
};

// Overwrites each parameter from the container entry `prefix + name`;
// reports missing tensors and shape mismatches by name.
void load_parameters(std::vector<Parameter>& params, const TensorContainer& c,
                     const std::string& prefix = "");
void save_parameters(const std::vector<Parameter>& params, TensorContainer& c,
                     const std::string& prefix = "");

}  // namespace moedr
