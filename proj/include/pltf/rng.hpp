#pragma once

#include <cstdint>
#include <random>

namespace pltf {

using Engine = std::mt19937_64;

/// splitmix64-style mixer for deriving independent stream seeds from a base
/// seed and salts (restart number, grid cell, ...). Pure function, so
/// derived streams do not depend on enumeration order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t s1,
                              std::uint64_t s2) {
    return mix_seed(mix_seed(seed, s1), s2);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t s1,
                              std::uint64_t s2, std::uint64_t s3) {
    return mix_seed(mix_seed(seed, s1, s2), s3);
}

/// Gamma draw in (shape, scale) parameterization, floored away from 0 so a
/// deep-underflow sample cannot produce an exactly zero factor entry.
inline double draw_gamma(Engine& eng, double shape, double scale) {
    std::gamma_distribution<double> dist(shape, scale);
    double v = dist(eng);
    return v > 1e-300 ? v : 1e-300;
}

inline double draw_poisson(Engine& eng, double mean) {
    if (mean <= 0.0) return 0.0;
    std::poisson_distribution<long long> dist(mean);
    return static_cast<double>(dist(eng));
}

} // namespace pltf
