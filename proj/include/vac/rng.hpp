#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vac {

// splitmix64 finalizer; used to derive independent streams from (seed, tags).
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ mix64(a + 0x1000000001ull));
    h = mix64(h ^ mix64(b + 0x2000000003ull));
    h = mix64(h ^ mix64(c + 0x3000000005ull));
    return h;
}

// Deterministic RNG. mt19937_64 output is pinned by the standard; the uniform
// and normal transforms below are our own so streams are bit-stable across
// platforms (std::*_distribution is implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller, pair cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    // [0, n) without modulo bias
    std::uint64_t integer(std::uint64_t n) {
        const std::uint64_t lim = std::uint64_t(-1) - std::uint64_t(-1) % n;
        std::uint64_t x = 0;
        do {
            x = gen_();
        } while (x >= lim);
        return x % n;
    }

    std::uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// In-place Fisher-Yates; std::shuffle is not seed-stable across libraries.
template <class V>
void deterministic_shuffle(V& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.integer(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace vac
