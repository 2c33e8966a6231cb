#pragma once

#include <cstdint>

namespace npole {

/// Counter-based 64-bit generator (SplitMix64 finalizer over a Weyl counter).
/// Output depends only on (seed, draw index), so streams are identical on
/// every platform and compiler.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform in (0, 1].
    double uniform_open_left() { return 1.0 - uniform(); }

    double exponential(double rate);

    double normal();

    std::uint64_t draws() const { return counter_; }

    /// Independent child stream; used for per-trial seeding.
    static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace npole
