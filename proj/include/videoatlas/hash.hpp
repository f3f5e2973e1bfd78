#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>

namespace atlas {

// Stable 64-bit hashing. std::hash is implementation-defined, and the episode
// log, the cache simulator and the report files all need hashes that are
// identical across platforms and runs.

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h = kFnvOffset) {
    for (auto b : bytes) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
    return fnv1a({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}, h);
}

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return mix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

/// Word-at-a-time hash for large pixel runs; byte order is little-endian on
/// every platform we build for.
inline std::uint64_t hash_bytes_fast(const std::uint8_t* p, std::size_t n, std::uint64_t h) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        std::uint64_t w;
        std::memcpy(&w, p + i, 8);
        h = (h ^ w) * 0x9fb21c651e98df25ULL;
        h ^= h >> 29;
    }
    for (; i < n; ++i) {
        h = (h ^ p[i]) * kFnvPrime;
    }
    return h;
}

inline std::uint64_t hash_double(std::uint64_t seed, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    return hash_combine(seed, bits);
}

std::string to_hex(std::uint64_t h);

}  // namespace atlas
