#ifndef CELLCONTRAST_RNG_HPP
#define CELLCONTRAST_RNG_HPP

#include <cstdint>
#include <initializer_list>

namespace cellcontrast {

/// Hashes a sequence of integers into one 64-bit stream key.
std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts);

/**
 * Counter-based random stream: output k is a bijective mix of `key + k * gamma`.
 *
 * Streams keyed by (seed, cell, epoch, view) are independent of the order in
 * which workers consume them. All draws are computed with plain integer and
 * IEEE arithmetic so they do not depend on the standard library's distributions.
 */
class Stream {
public:
    explicit Stream(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller.
    double normal();

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}

#endif
