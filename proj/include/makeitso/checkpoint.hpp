#pragma once

// Portable generator checkpoint (.misockpt):
//   8 bytes  magic "MISOCKPT"
//   u32 LE   format version
//   u64 LE   header length in bytes
//   header   JSON {format_version, arch_hash, config, arrays: [{name, shape, byte_offset, count}], payload_bytes}
//   payload  little-endian float32 values, arrays back to back in manifest order

#include "makeitso/generator.hpp"

#include <filesystem>
#include <string>

namespace makeitso {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const GeneratorParams<float>& params, const std::filesystem::path& path);

// Throws FormatError on a truncated or inconsistent file. When `expected_hash`
// is non-empty a mismatching file raises IncompatibleArchitecture.
GeneratorParams<float> load_checkpoint(const std::filesystem::path& path, const std::string& expected_hash = {});

std::string encode_checkpoint(const GeneratorParams<float>& params);
GeneratorParams<float> decode_checkpoint(const std::string& bytes, const std::string& expected_hash = {});

}  // namespace makeitso
