#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace docnn {

// Seeded stream over std::mt19937_64. Uniform, normal and bounded draws are
// derived from raw 64-bit outputs here rather than through <random>
// distributions, whose output is implementation-defined.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    // Independent stream for a (seed, purpose) pair, mixed through splitmix64.
    static RngStream derive(std::uint64_t seed, std::uint64_t purpose);

    std::uint64_t next() { return engine_(); }
    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Box-Muller, one value per call.
    double normal();
    // Uniform integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n);

    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace docnn
