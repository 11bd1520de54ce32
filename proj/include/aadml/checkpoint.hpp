#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aadml/tensor.hpp"

namespace aadml {

struct NamedTensor {
  std::string name;
  Tensor value;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned little-endian container: magic "AADM", u32 version, then one
// record per tensor (u16 name length, name bytes, u8 rank, u32 extents,
// float64 payload). Record order is preserved, so save(load(x)) == x.
void write_checkpoint(const std::string& path, std::uint32_t version,
                      const std::vector<NamedTensor>& tensors);

struct CheckpointFile {
  std::uint32_t version = 0;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
  const Tensor& require(const std::string& name) const;
};

CheckpointFile read_checkpoint(const std::string& path);

}  // namespace aadml
