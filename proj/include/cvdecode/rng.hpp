#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace cvdecode {

/// 64-bit FNV-1a. Used both for file checksums and for deriving per-stage
/// seeds from the run seed.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

/// splitmix64 finalizer; spreads low-entropy inputs over the full 64 bits.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive a stage seed from the run seed. Every source of randomness in the
/// toolkit is seeded through this: seed -> fnv1a(stage name) -> mix with any
/// integer qualifiers (fold id, config id, ...). Stages can therefore be
/// rerun independently with identical streams.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view stage,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = fnv1a64(stage);
    h = mix64(h ^ run_seed);
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

/// Hex string form used in manifests.
inline std::string checksum_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

}  // namespace cvdecode
