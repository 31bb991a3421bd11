#pragma once

/// \file random.hpp
/// Seed derivation and Gaussian streams. Every stochastic result is a
/// function of a master seed: independent streams are obtained by hashing
/// (master, stream index) with splitmix64, then feeding a mt19937_64.

#include <boost/random/normal_distribution.hpp>

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sphlev {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Counter-based split: derive_seed(m, {a, b}) is a fixed function of its inputs.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(master);
    for (const auto p : path) s = splitmix64(s ^ splitmix64(p + 0x632BE59BD9B4E019ULL));
    return s;
}

/// Standard normal draws from a dedicated engine. Boost's ziggurat sampler is
/// used because it is portable across standard libraries and about twice as
/// fast as std::normal_distribution.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}
    double operator()() { return normal_(engine_); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace sphlev
