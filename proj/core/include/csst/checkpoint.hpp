#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "csst/params.hpp"

namespace csst {

/// Binary parameter container.
///
/// Layout (all integers little-endian):
///   "CSSTCKPT"  u32 version  u64 config_hash
///   u32 len + bytes   RNG state (text form of std::mt19937_64)
///   u32 len + bytes   metadata (UTF-8 JSON describing the model)
///   u32 n_tensors, then per tensor:
///     u32 len + name bytes, u32 rank, u64 dims[rank], f64 payload[prod(dims)]
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ParamStore params;
  std::uint64_t config_hash = 0;
  std::string rng_state;
  std::string metadata;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// 64-bit FNV-1a of a byte string.
std::uint64_t fnv1a64(std::string_view bytes);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace csst
