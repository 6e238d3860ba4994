#pragma once

#include "matkernels.hpp"

#include <cstdint>
#include <random>

namespace stiffkalman
{
using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent seeds from a key tuple.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
}

enum class Stream : std::uint64_t
{
        TruthPath = 1,
        TruthInitialState = 2,
        MeasurementNoise = 3
};

// The stream for (base_seed, run, kind) depends on nothing else, in
// particular not on the stiffness parameter or on which filters run.
inline Rng make_stream(const std::uint64_t base_seed, const std::uint64_t run, const Stream kind)
{
        const std::uint64_t s = mix64(mix64(mix64(base_seed) ^ run) ^ static_cast<std::uint64_t>(kind));
        std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
        return Rng(seq);
}

inline Vector standard_normal(Rng& rng, const Eigen::Index n)
{
        std::normal_distribution<double> nd;
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i)
        {
                v(i) = nd(rng);
        }
        return v;
}
}
