#pragma once

// Shared basics: vector aliases, contract checking, deterministic RNG.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace voisim {

using Vec = std::vector<double>;

// Thrown when a caller violates a documented precondition (dimension
// mismatch, invalid probability row, malformed input file, ...).
struct contract_violation : std::logic_error {
    explicit contract_violation(const std::string& what) : std::logic_error(what) {}
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw contract_violation(what);
}

inline Vec concat(const Vec& a, const Vec& b) {
    Vec out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent seed for a named substream. Keeps paired rollouts aligned:
// consumers that draw from different substreams cannot desynchronize each
// other's sequences.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    return splitmix64(seed * 0x9e3779b97f4a7c15ULL + stream + 1);
}

// mt19937_64 with hand-rolled output transforms. std::*_distribution is
// implementation-defined, so identical (seed, call sequence) would not give
// identical streams across standard libraries; these transforms do.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : gen_(splitmix64(seed)) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    uint64_t randint(uint64_t n) {
        require(n > 0, "Rng::randint: n must be positive");
        uint64_t bound = (~uint64_t{0}) - (~uint64_t{0}) % n;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= bound);
        return x % n;
    }

    // Box-Muller (cosine branch only) to stay stdlib-independent.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential(double rate = 1.0) {
        require(rate > 0, "Rng::exponential: rate must be positive");
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return -std::log(u) / rate;
    }

    // Index draw from an explicit probability vector (sums to ~1).
    size_t categorical(const Vec& probs) {
        double u = uniform();
        double acc = 0.0;
        for (size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return probs.size() - 1;
    }

  private:
    std::mt19937_64 gen_;
};

inline double clamp(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

}  // namespace voisim
