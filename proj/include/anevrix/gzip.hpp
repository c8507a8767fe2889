#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace anevrix::gzip {

// True when the buffer starts with the gzip magic bytes 0x1F 0x8B.
bool is_gzip(std::span<const std::uint8_t> bytes);

// Decompresses one or more concatenated gzip members.
std::vector<std::uint8_t> decompress(std::span<const std::uint8_t> bytes);

// Single gzip member, zero mtime, so output is deterministic.
std::vector<std::uint8_t> compress(std::span<const std::uint8_t> bytes, int level = 6);

}  // namespace anevrix::gzip
