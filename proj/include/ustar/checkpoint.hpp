#pragma once

// Binary checkpoint container, all integers little-endian:
//
//   "USTAR01"                 7-byte magic
//   u64 config digest
//   u32 n, n bytes            metadata (JSON text: head hyperparameters etc.)
//   u8  scalar size           4 or 8
//   u32 blob count
//   per blob: u32 name length, name, u32 rank, rank x u64 dims, raw values
//
// Values are stored as raw IEEE bits, so a save/load cycle is bit-exact.

#include <cstdint>
#include <filesystem>
#include <string>

#include "ustar/nn.hpp"

namespace ustar {

inline constexpr char kCheckpointMagic[] = "USTAR01";

struct CheckpointHeader {
  std::uint64_t config_digest = 0;
  std::string metadata;
  std::uint8_t scalar_size = 0;
};

template <typename T>
std::string encode_checkpoint(const nn::ParameterStore<T>& store, std::uint64_t config_digest,
                              const std::string& metadata);

/// Copies every blob into the same-named parameter of `store`. Throws
/// std::invalid_argument on a bad magic, scalar width, missing or extra
/// parameter, or shape mismatch.
template <typename T>
CheckpointHeader decode_checkpoint(const std::string& bytes, nn::ParameterStore<T>& store);

CheckpointHeader decode_checkpoint_header(const std::string& bytes);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nn::ParameterStore<T>& store,
                     std::uint64_t config_digest, const std::string& metadata);
template <typename T>
CheckpointHeader load_checkpoint(const std::filesystem::path& path, nn::ParameterStore<T>& store);
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

}  // namespace ustar
