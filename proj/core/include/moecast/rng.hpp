#pragma once

#include <cstdint>
#include <random>

namespace moecast {

// Seeded RNG wrapper. All stochastic choices in the library flow through
// one of these so that a run is reproducible from its seed alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }

    double normal(double mean = 0.0, double std = 1.0) {
        return std::normal_distribution<double>(mean, std)(gen_);
    }

    // Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

} // namespace moecast
