#include "npole/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace npole {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t CounterRng::next_u64() {
    ++counter_;
    return mix(seed_ + counter_ * kGolden);
}

double CounterRng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::exponential(double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate)) {
        throw std::invalid_argument("exponential rate must be positive and finite");
    }
    return -std::log(uniform_open_left()) / rate;
}

double CounterRng::normal() {
    const double u1 = uniform_open_left();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix(mix(seed) ^ (stream + 1) * kGolden);
}

}  // namespace npole
