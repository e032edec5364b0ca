#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "morphrl/common.hpp"

namespace morphrl {

// Counter-based splittable generator (splitmix64 core). Every stream is a
// (key, counter) pair, so state serializes to two u64 and child streams are
// derived by label instead of by draw order. Adding a morphology never
// shifts the draws of another stream.
class SplitRng {
public:
    SplitRng() : SplitRng(0) {}
    explicit SplitRng(std::uint64_t key) : key_(key), counter_(0) {}

    SplitRng fork(std::string_view label) const {
        return SplitRng(mix(key_ ^ fnv1a(label)));
    }
    SplitRng fork(std::string_view label, std::uint64_t index) const {
        return SplitRng(mix(mix(key_ ^ fnv1a(label)) + index));
    }

    std::uint64_t next_u64() {
        counter_ += 0x9E3779B97F4A7C15ULL;
        return mix(key_ + counter_);
    }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Box-Muller, one value per call; nothing carries over between calls.
    double normal() {
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

    // Unbiased enough for batch index sampling (Lemire multiply-shift).
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }
    void restore(std::uint64_t key, std::uint64_t counter) {
        key_ = key;
        counter_ = counter;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace morphrl
