#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace ecgen {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic stream derivation: independent child seeds from (seed, stream).
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

// Seeded RNG with bit-reproducible draws. All sampling in the project goes
// through this class; std::distributions are avoided because their output is
// implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform in (0,1): never returns an exact endpoint (safe for logit/log).
    double uniform_open01() {
        double u = uniform();
        return u > 0.0 ? u : 0x1.0p-53;
    }

    // Standard normal via Box-Muller (no cached spare; stateless per call).
    double normal() {
        double u1 = uniform_open01();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    void fill_normal(std::span<double> out, double std_dev = 1.0) {
        for (double& v : out) v = normal() * std_dev;
    }

    // Deterministic Fisher-Yates shuffle of indices.
    template <class T>
    void shuffle(std::span<T> v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace ecgen
