#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace nametune {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace detail

// Combines a base seed with a stream/content tag into a fresh seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return detail::splitmix64(detail::splitmix64(a) ^ (b + 0x9E3779B97F4A7C15ULL));
}

// PCG32 (O'Neill). Fixed algorithm so streams are identical across
// platforms; std:: engines and distributions are never used.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed) {
        state_ = 0u;
        inc_ = (detail::splitmix64(seed ^ 0xDA3E39CB94B95BDBULL) << 1u) | 1u;
        next_u32();
        state_ += detail::splitmix64(seed);
        next_u32();
    }

    static constexpr const char* algorithm = "pcg32";

    std::uint64_t seed() const { return seed_; }

    std::uint32_t next_u32() {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        const std::uint64_t lo = next_u32();
        return (hi << 32) | lo;
    }

    // [0, 1), 53 random mantissa bits
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Box-Muller; consumes exactly two uniforms per call
    double normal(double mean = 0.0, double stddev = 1.0) {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double z = r * std::cos(6.283185307179586476925286766559 * u2);
        return mean + stddev * z;
    }

    // Unbiased [0, bound) via rejection
    std::uint32_t uniform_int(std::uint32_t bound) {
        if (bound <= 1) return 0;
        const std::uint32_t threshold = (-bound) % bound;
        for (;;) {
            const std::uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = uniform_int(static_cast<std::uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derives an independent child stream; the parent state is untouched.
    SeededRng fork(std::uint64_t stream) const { return SeededRng(mix_seed(seed_, stream)); }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    std::uint64_t inc_;
};

// FNV-1a, used for content-addressed seeds and file/weight digests.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xCBF29CE484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

}  // namespace nametune
