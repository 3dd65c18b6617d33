#pragma once

#include <cstdint>
#include <random>

namespace catgen {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic per-task seed derivation so parallel and serial execution
// consume independent, reproducible streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master ^ (0x9e3779b97f4a7c15ULL + (stream << 1));
    std::uint64_t a = splitmix64(s);
    std::uint64_t b = splitmix64(s);
    return a ^ (b >> 1);
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t stream) {
    return std::mt19937_64(derive_seed(master, stream));
}

// Fixed stream tags, one per independent source of randomness.
namespace stream {
inline constexpr std::uint64_t kFolds = 0x01;
inline constexpr std::uint64_t kSuperLearner = 0x02;
inline constexpr std::uint64_t kForest = 0x03;
inline constexpr std::uint64_t kBandwidthCv = 0x04;
inline constexpr std::uint64_t kReplicate = 0x05;
inline constexpr std::uint64_t kTruthShard = 0x06;
inline constexpr std::uint64_t kDgpCovariates = 0x07;
inline constexpr std::uint64_t kDgpSelection = 0x08;
inline constexpr std::uint64_t kDgpTreatment = 0x09;
inline constexpr std::uint64_t kDgpOutcome = 0x0a;
inline constexpr std::uint64_t kCalibration = 0x0b;
} // namespace stream

} // namespace catgen
