#pragma once

#include <cstdint>
#include <string_view>

namespace posbias {

/// 64-bit FNV-1a. Stable across platforms; used for seeding and manifests.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL) noexcept
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace posbias
