#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace xlaug {

// SplitMix64. Self-contained so that seeded results are bit-identical across
// platforms and standard libraries; std:: distributions are not portable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    // Uniform real in [0, 1) with 53 bits of precision.
    double real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform real in [lo, hi).
    double real(double lo, double hi) { return lo + (hi - lo) * real(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), ascending (selection sampling), so the
    // caller keeps the original relative order for free.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        if (k > n) k = n;
        std::vector<std::size_t> out;
        out.reserve(k);
        std::size_t need = k;
        for (std::size_t i = 0; i < n && need > 0; ++i) {
            if (below(n - i) < need) {
                out.push_back(i);
                --need;
            }
        }
        return out;
    }

private:
    std::uint64_t state_;
};

// Derives an independent stream seed from a base seed and salt values.
inline std::uint64_t mix_seed(std::uint64_t seed) {
    Rng r(seed);
    return r.next_u64();
}

template <typename... Rest>
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt, Rest... rest) {
    Rng r(seed ^ (salt + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2)));
    return mix_seed(r.next_u64(), rest...);
}

}  // namespace xlaug
