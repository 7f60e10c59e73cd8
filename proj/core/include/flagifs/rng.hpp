#pragma once

#include "flagifs/types.hpp"

#include <cstdint>

namespace flagifs {

/// Counter-based splittable generator. Output i of stream s under seed k is
/// splitmix64(key(k, s) + (i + 1) * golden), so any draw can be recomputed
/// from (seed, stream, counter) alone and substreams never overlap in
/// practice. The name is written into every report.
class CounterRng {
public:
    static constexpr const char* kAlgorithm = "splitmix64-counter";

    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Standard normal via Box-Muller.
    double normal();

    /// Independent generator for a labelled substream.
    CounterRng split(std::uint64_t substream) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix).
Mat random_orthogonal(CounterRng& rng, int d);
Mat random_gaussian(CounterRng& rng, int rows, int cols);

}  // namespace flagifs
