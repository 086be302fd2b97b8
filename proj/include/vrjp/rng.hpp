#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vrjp {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to fan a master seed out to independent streams.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Counter-based seed derivation: the seed of task `index` in stream `stream`
/// depends only on (master, stream, index), never on scheduling order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    return mix64(mix64(master ^ mix64(stream)) + index);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream = 0, std::uint64_t index = 0) {
    return Rng{derive_seed(master, stream, index)};
}

// The distributions below are written out so that streams are identical
// across standard library implementations.

/// Uniform on [0, 1) with 53 random bits.
template <typename Gen>
double uniform01(Gen& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Uniform on (0, 1].
template <typename Gen>
double uniform_open0(Gen& gen) {
    return 1.0 - uniform01(gen);
}

/// Uniform on the open interval (0, 1).
template <typename Gen>
double uniform_open(Gen& gen) {
    return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
}

template <typename Gen>
double exponential(Gen& gen, double rate) {
    return -std::log(uniform_open(gen)) / rate;
}

/// Standard normal by Marsaglia's polar method (one value per call).
template <typename Gen>
double standard_normal(Gen& gen) {
    double x, y, s;
    do {
        x = 2.0 * uniform01(gen) - 1.0;
        y = 2.0 * uniform01(gen) - 1.0;
        s = x * x + y * y;
    } while (s >= 1.0 || s == 0.0);
    return x * std::sqrt(-2.0 * std::log(s) / s);
}

template <typename Gen>
std::size_t uniform_index(Gen& gen, std::size_t n) {
    return static_cast<std::size_t>(uniform01(gen) * static_cast<double>(n));
}

/// Number of failures before the first success of a Bernoulli(p) sequence.
template <typename Gen>
std::uint64_t geometric_skip(Gen& gen, double p) {
    if (p >= 1.0) return 0;
    const double u = uniform_open0(gen);
    const double k = std::floor(std::log(u) / std::log1p(-p));
    return k > 1e18 ? std::uint64_t{1000000000000000000ULL} : static_cast<std::uint64_t>(k);
}

}  // namespace vrjp
