#pragma once

// Binary checkpoint layout (all little-endian):
//
//   8 bytes   magic "ATGCKPT\0"
//   uint32    format version (1)
//   int32[12] architecture fields, in Architecture::fields() order
//   uint64    FNV-1a fingerprint of the tensor layout (names and shapes)
//   uint64    parameter count
//   float32[] parameters, tensors in declaration order

#include <cstdint>
#include <filesystem>
#include <string>

#include "atg/policynet.hpp"

namespace atg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t architecture_fingerprint(const Architecture& arch);

std::string checkpoint_bytes(const NetParams<float>& params);
NetParams<float> checkpoint_from_bytes(std::string_view bytes);

void save_checkpoint(const NetParams<float>& params, const std::filesystem::path& path);
NetParams<float> load_checkpoint(const std::filesystem::path& path);
// Throws IoError when the file was written for a different architecture.
NetParams<float> load_checkpoint(const std::filesystem::path& path, const Architecture& expected);

}  // namespace atg
