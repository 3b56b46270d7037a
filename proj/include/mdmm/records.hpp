#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mdmm {

inline constexpr const char* kSchemaVersion = "mdmm-lab/1";

// Locale-independent formatting: '.' decimal point, shortest round-trip
// representation, no grouping.
std::string format_double(double value);

// 64-bit FNV-1a, used both for per-run seed derivation and MANIFEST
// content hashes.
std::uint64_t fnv1a(std::string_view data);
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view label);

// Write-temp-then-rename; the destination never holds partial content.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace mdmm
