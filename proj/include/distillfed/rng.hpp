#pragma once

#include <cstdint>
#include <random>

namespace distillfed {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent seed stream from (seed, word, word, ...).
// Every consumer of a run seed goes through this with its own tag so that
// unrelated draws never share a stream.
template <typename... Words>
std::uint64_t derive_seed(std::uint64_t seed, Words... words) {
    ((seed = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(words)))), ...);
    return seed;
}

// Stream tags. Values are arbitrary but fixed: changing them changes every
// seeded artifact.
enum SeedTag : std::uint64_t {
    kSeedData = 0x01,
    kSeedSplit = 0x02,
    kSeedPartition = 0x03,
    kSeedModelInit = 0x04,
    kSeedServerTrain = 0x05,
    kSeedClientDistill = 0x06,
    kSeedClientTrain = 0x07,
    kSeedStraggler = 0x08,
    kSeedSupportInit = 0x09,
    kSeedDistillStep = 0x0a,
    kSeedGmm = 0x0b,
};

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

// Samples an index in [0, weights.size()) with probability proportional to
// weights[i]. Hand-rolled so the draw is identical on every stdlib.
template <typename Rng>
std::size_t sample_weighted(Rng& rng, const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) {
        std::uniform_int_distribution<std::size_t> uni(0, weights.size() - 1);
        return uni(rng);
    }
    std::uniform_real_distribution<double> uni(0.0, total);
    const double u = uni(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return i;
    }
    return weights.size() - 1;
}

}  // namespace distillfed
