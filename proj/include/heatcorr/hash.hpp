#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>

#include "heatcorr/types.hpp"

namespace heatcorr {

// FNV-1a, 64 bit.
constexpr ContentHash kFnvOffset = 0xcbf29ce484222325ULL;

constexpr ContentHash fnv1a(std::span<const std::byte> bytes, ContentHash h = kFnvOffset) {
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint8_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline ContentHash fnv1a(std::string_view s, ContentHash h = kFnvOffset) {
  return fnv1a(std::as_bytes(std::span(s.data(), s.size())), h);
}

ContentHash hash_file(const std::filesystem::path& path);

/// SplitMix64 finalizer; derives independent per-iteration seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace heatcorr
