#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace xavdt {

using Sha256 = std::array<uint8_t, 32>;

Sha256 sha256(std::string_view bytes);
std::string hex(const uint8_t* bytes, size_t n);
inline std::string hex(const Sha256& h) { return hex(h.data(), h.size()); }

// 64-bit FNV-1a, used as the payload checksum in feature/checkpoint files.
uint64_t fnv1a64(const void* data, size_t n);

}  // namespace xavdt
