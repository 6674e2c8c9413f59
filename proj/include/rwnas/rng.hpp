#ifndef RWNAS_RNG_HPP
#define RWNAS_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace rwnas {

// 64-bit FNV-1a. Used for genome strings and weight fingerprints.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const void* data, std::size_t len) {
    return fnv1a(std::string_view(static_cast<const char*>(data), len));
}

// splitmix64 finalizer; used to derive independent seeds from a base seed.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return mix64(base ^ mix64(stream));
}

// mt19937_64 with hand-rolled distribution mappings. The std:: distributions
// are implementation-defined, so outputs would not be stable across standard
// libraries; the raw engine sequence is fully specified.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1) with 53-bit resolution
    double next_unit() { return (next_u64() >> 11) * 0x1.0p-53; }

    // unbiased uniform in [0, n) via rejection
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // uniform integer in [lo, hi] inclusive
    int next_int(int lo, int hi) {
        return lo + static_cast<int>(bounded(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    bool next_bool() { return (next_u64() >> 63) != 0; }

    float uniform(float lo, float hi) {
        return lo + static_cast<float>(next_unit()) * (hi - lo);
    }

    // Box-Muller; one value per call, the pair's second half is discarded to
    // keep the consumption pattern independent of call parity.
    double normal(double mean, double stddev) {
        double u1 = next_unit();
        double u2 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586477 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = bounded(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace rwnas

#endif  // RWNAS_RNG_HPP
