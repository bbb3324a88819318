#pragma once

#include <cstdint>
#include <random>

namespace volterra {

// splitmix64: the standard 64-bit finalizer-style generator step.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Counter-based seed derivation: the seed for a (path, stream) pair depends
// only on the inputs, never on worker count or scheduling order.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter) {
    return splitmix64(base + 0x9E3779B97F4A7C15ull * (counter + 1));
}

// Fixed stream tags so the driver and the volatility subordinator of one path
// consume independent substreams.
enum class SeedStream : std::uint64_t {
    Driver = 0x01,
    Volatility = 0x02,
    Auxiliary = 0x03,
};

inline std::uint64_t substream_seed(std::uint64_t path_seed, SeedStream s) {
    return splitmix64(path_seed ^ (static_cast<std::uint64_t>(s) * 0xD1B54A32D192ED03ull));
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

}  // namespace volterra
